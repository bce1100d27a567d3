//! Mann-Kendall trends of a few short sequences.

use semifax::trend::{mann_kendall, passes_weakening};

fn main() -> semifax::Result<()> {
    let series: [(&str, Vec<f64>); 4] = [
        ("rising", (0..12).map(f64::from).collect()),
        ("falling", (0..12).map(|i| -f64::from(i)).collect()),
        ("ties", vec![1.0, 1.0, 2.0, 2.0, 1.0, 3.0, 3.0, 4.0]),
        ("noisy fall", vec![0.5, 0.45, 0.47, 0.3, 0.31, 0.2, 0.1, 0.12, 0.05, 0.0]),
    ];
    for (name, s) in &series {
        let t = mann_kendall(s)?;
        println!(
            "{name:<10} S {:>4} tau {:>6.3} {:?}, weakening at -0.3: {}",
            t.s_statistic,
            t.tau,
            t.direction,
            passes_weakening(&t, -0.3)?
        );
    }
    Ok(())
}
