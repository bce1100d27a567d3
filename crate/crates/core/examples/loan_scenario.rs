//! Generate the synthetic loan data, split it and write it back out as CSV.

use semifax::data::{class_summary, gen_loan_scenario, split, write_csv, SplitSpec};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    println!("{} rows, classes {:?}", data.len(), class_summary(&data));

    let (train, test) = split(&data, SplitSpec { seed: 7, test_fraction: 0.25 })?;
    println!("train {} / test {}", train.len(), test.len());

    // raw units come back out when decoding
    println!("first row: {:?}", data.decode_row(&data.rows[0]));

    let mut out = Vec::new();
    write_csv(&test.subset(&[0, 1, 2]), &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
