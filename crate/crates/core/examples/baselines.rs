//! Run the four baselines on one loan query and pick the ensemble winner.

use semifax::baselines::{ensemble_best, run_all, BaselineConfig};
use semifax::data::{gen_loan_scenario, RawValue};
use semifax::evaluation::score;
use semifax::models::{fit_forest, ForestParams, ProbabilityModel};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    let forest = fit_forest(&data, ForestParams { seed: 7, ..ForestParams::default() })?;
    let q = data.encode_row(&[RawValue::Number(20.0), RawValue::Number(550.0)])?;
    let class = forest.class_of(&q);

    let results = run_all(&q, &data, &forest, &BaselineConfig::default())?;
    let mut scored = Vec::new();
    for r in &results {
        let s = score(&q, &r.x_sf, &data, class)?;
        println!("{:<13} {:?} sparsity {:.2} trust {:.2}", r.method, data.decode_row(&r.x_sf), s.sparsity, s.trustworthiness);
        scored.push((r.method, s));
    }
    if let Some(i) = ensemble_best(&scored, false) {
        println!("ensemble picks {}", scored[i].0);
    }
    Ok(())
}
