//! NSGA-II on two problems: Schaffer's (x², (x-2)²) and a constrained
//! variant that forbids x in (0.5, 1.5).

use semifax::moo::{evolve, is_mutually_non_dominated, Evaluation, MooConfig, Problem};

struct Schaffer {
    gap: bool,
}

impl Problem for Schaffer {
    fn n_vars(&self) -> usize {
        1
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-5.0, 5.0)]
    }

    fn evaluate(&self, g: &[f64]) -> Evaluation {
        let x = g[0];
        let violation = if self.gap { (0.5 - (x - 1.0).abs()).max(0.0) } else { 0.0 };
        Evaluation {
            objectives: [x * x, (x - 2.0).powi(2)],
            violation,
        }
    }
}

fn main() -> semifax::Result<()> {
    let cfg = MooConfig { seed: 3, ..MooConfig::default() };
    for gap in [false, true] {
        let r = evolve(&Schaffer { gap }, &cfg, &[false])?;
        let xs: Vec<f64> = r.front.iter().map(|c| c.genome[0]).collect();
        println!(
            "gap {gap}: {} points, x in [{:.3}, {:.3}], non-dominated {}, {} evaluations",
            xs.len(),
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            is_mutually_non_dominated(&r.front),
            r.evaluations
        );
    }
    Ok(())
}
