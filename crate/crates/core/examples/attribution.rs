//! Shapley values, the interaction matrix and pure main effects for one
//! loan applicant.

use semifax::attribution::{interaction_matrix, main_effects, shapley_values, AttributionConfig, BackgroundSet};
use semifax::data::{gen_loan_scenario, RawValue};
use semifax::models::{fit_forest, ForestParams};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    let forest = fit_forest(&data, ForestParams { seed: 7, ..ForestParams::default() })?;
    let bg = BackgroundSet::sample(&data, 64, 7)?;
    let cfg = AttributionConfig::default();

    let q = data.encode_row(&[RawValue::Number(20.0), RawValue::Number(550.0)])?;
    let phi = shapley_values(&forest, &q, &bg, &cfg)?;
    println!("f(x) {:.3}  base {:.3}", phi.fx, phi.base_value);
    println!("shapley      {:?}", phi.values);
    println!("sum + base   {:.6}", phi.values.iter().sum::<f64>() + phi.base_value);

    let m = interaction_matrix(&forest, &q, &bg, &cfg)?;
    println!("interactions {m:?}");
    println!("main effects {:?}", main_effects(&forest, &q, &bg, &cfg)?.values);
    Ok(())
}
