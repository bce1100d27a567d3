//! Benchmark ISF against the baselines on a few diabetes test queries.
//! Pass the query count as the first argument (default 10).

use semifax::attribution::{AttributionConfig, BackgroundSet};
use semifax::bench::{run_bench, BenchConfig};
use semifax::data::{load_csv, split, SplitSpec};
use semifax::density::fit_copula;
use semifax::isf::Context;
use semifax::models::{fit_forest, ForestParams};

fn main() -> semifax::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let data = load_csv(&dir.join("diabetes.csv"), &dir.join("diabetes.schema.json"))?;
    let (train, test) = split(&data, SplitSpec { seed: 7, test_fraction: 0.25 })?;
    let forest = fit_forest(&train, ForestParams { seed: 7, ..ForestParams::default() })?;
    let copula = fit_copula(&train)?;
    let background = BackgroundSet::sample(&train, 64, 7)?;
    let ctx = Context {
        schema: &train.schema,
        model: &forest,
        copula: &copula,
        background: &background,
        train: &train,
        attribution: AttributionConfig::default(),
    };

    let report = run_bench(&ctx, &test.rows[..n.min(test.len())], &BenchConfig { seed: 7, ..BenchConfig::default() })?;
    println!("{:<14} {:>6} {:>8} {:>9} {:>7}", "method", "found", "seesaw%", "sparsity", "trust");
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
    for a in &report.aggregates {
        println!(
            "{:<14} {:>6} {:>8} {:>9} {:>7}",
            a.method,
            a.found,
            f(a.seesaw),
            f(a.sparsity),
            f(a.trustworthiness)
        );
    }
    Ok(())
}
