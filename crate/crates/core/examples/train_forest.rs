//! Fit the bagged CART forest on the public diabetes data and score it.

use semifax::data::{load_csv, split, SplitSpec};
use semifax::models::{fit_forest, ForestParams, ProbabilityModel};

fn main() -> semifax::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let data = load_csv(&dir.join("diabetes.csv"), &dir.join("diabetes.schema.json"))?;
    let (train, test) = split(&data, SplitSpec { seed: 7, test_fraction: 0.25 })?;

    for n_trees in [10, 50, 100] {
        let forest = fit_forest(&train, ForestParams { n_trees, seed: 7, ..ForestParams::default() })?;
        println!(
            "{n_trees:>3} trees: train {:.3} test {:.3}",
            forest.accuracy(&train),
            forest.accuracy(&test)
        );
    }

    let forest = fit_forest(&train, ForestParams { seed: 7, ..ForestParams::default() })?;
    let q = &test.rows[0];
    println!("p(class 1) for the first test row: {:.3}", forest.proba1(q));
    Ok(())
}
