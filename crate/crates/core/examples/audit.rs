//! Audit hand-made semi-factuals for the seesaw pattern.

use semifax::attribution::{AttributionConfig, BackgroundSet};
use semifax::data::{gen_loan_scenario, RawValue};
use semifax::density::fit_copula;
use semifax::evaluation::{audit_seesaw, SeesawThresholds};
use semifax::isf::Context;
use semifax::models::{fit_forest, ForestParams};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    let forest = fit_forest(&data, ForestParams { seed: 7, ..ForestParams::default() })?;
    let copula = fit_copula(&data)?;
    let background = BackgroundSet::sample(&data, 64, 7)?;
    let ctx = Context {
        schema: &data.schema,
        model: &forest,
        copula: &copula,
        background: &background,
        train: &data,
        attribution: AttributionConfig::default(),
    };
    let row = |loan: f64, credit: f64| data.encode_row(&[RawValue::Number(loan), RawValue::Number(credit)]);
    let q = row(20.0, 550.0)?;

    // a bigger loan alone versus a bigger loan with a better credit score
    for (loan, credit) in [(60.0, 550.0), (65.0, 700.0), (40.0, 560.0)] {
        match audit_seesaw(&ctx, &q, &row(loan, credit)?, 10, &SeesawThresholds::default()) {
            Ok(v) => println!(
                "({loan}, {credit}): seesaw {} key tau {:.2} hidden tau {:.2}",
                v.has_seesaw, v.tau_key, v.tau_best_hidden
            ),
            Err(e) => println!("({loan}, {credit}): {e}"),
        }
    }
    Ok(())
}
