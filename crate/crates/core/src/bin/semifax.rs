fn main() {
    std::process::exit(semifax::cli::run(std::env::args_os()));
}
