//! Explain the loan applicant (20k, credit 550) end to end and print the
//! attribution trace behind the explanation.

use semifax::attribution::{AttributionConfig, BackgroundSet};
use semifax::data::{gen_loan_scenario, split, RawValue, SplitSpec};
use semifax::density::fit_copula;
use semifax::isf::{explain, Context, IsfConfig};
use semifax::models::{fit_forest, ForestParams};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    let (train, _) = split(&data, SplitSpec { seed: 7, test_fraction: 0.25 })?;
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

    let q = train.encode_row(&[RawValue::Number(20.0), RawValue::Number(550.0)])?;
    let outcome = explain(&ctx, &q, &IsfConfig::default())?;
    let Some(e) = outcome.explanation() else {
        println!("no explanation: {:?}", outcome.diagnostics());
        return Ok(());
    };
    let name = |j: usize| train.schema[j].name.as_str();
    println!("query     {:?}", train.decode_row(&e.query));
    println!("semi-fact {:?}", train.decode_row(&e.x_sf));
    println!(
        "key {} (tau {:.2}), hidden {} (tau {:.2})",
        name(e.key_feature),
        e.tau_key,
        name(e.hidden_feature),
        e.tau_hidden
    );
    println!("main effects along the path, oriented to class {}:", e.query_class);
    for (p, row) in e.path.points.iter().zip(&e.trace.effects) {
        println!("  {:?} -> {:?}", train.decode_row(p), row);
    }
    println!("metrics {:?}", e.metrics);
    Ok(())
}
