//! Explanation metrics and the seesaw audit.
//!
//! All distances are Euclidean in the encoded space. Lower is better for
//! distance, plausibility and robustness; higher is better for sparsity and
//! trustworthiness.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::attribution::Attributable;
use crate::data::Dataset;
use crate::isf::{build_path, trace_path, Context};
use crate::rng;
use crate::{Error, Result};

/// Floor on the trustworthiness denominator.
pub const TRUST_FLOOR: f64 = 1e-9;
/// Cap on trustworthiness when the point sits on a query-class row.
pub const TRUST_CAP: f64 = 1e6;
/// Per-feature changes at or below this are not counted by sparsity.
pub const CHANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationScores {
    pub distance: f64,
    pub sparsity: f64,
    pub plausibility: f64,
    pub trustworthiness: f64,
    /// Only filled in when explicitly measured; it re-runs the explainer.
    pub robustness: Option<f64>,
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn metric_distance(q: &[f64], x: &[f64]) -> Result<f64> {
    check_dims(q, x)?;
    Ok(euclid(q, x))
}

/// Number of features that differ by more than [`CHANGE_TOL`].
pub fn changed_features(q: &[f64], x: &[f64]) -> usize {
    q.iter().zip(x).filter(|(a, b)| (*a - *b).abs() > CHANGE_TOL).count()
}

/// `1 / (number of changed features)`.
pub fn metric_sparsity(q: &[f64], x: &[f64]) -> Result<f64> {
    check_dims(q, x)?;
    match changed_features(q, x) {
        0 => Err(Error::invalid("sparsity is undefined when nothing changed")),
        n => Ok(1.0 / n as f64),
    }
}

/// Distance to the nearest training row.
pub fn metric_plausibility(x: &[f64], train: &Dataset) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    Ok(train.rows.iter().map(|r| euclid(r, x)).fold(f64::INFINITY, f64::min))
}

/// Distance to the nearest other-class row over distance to the nearest
/// query-class row, with classes taken from the training labels.
pub fn metric_trustworthiness(x: &[f64], train: &Dataset, query_class: u8) -> Result<f64> {
    let mut d_q = f64::INFINITY;
    let mut d_cf = f64::INFINITY;
    for (r, &l) in train.rows.iter().zip(&train.labels) {
        let d = euclid(r, x);
        if l == query_class {
            d_q = d_q.min(d);
        } else {
            d_cf = d_cf.min(d);
        }
    }
    if !d_q.is_finite() || !d_cf.is_finite() {
        return Err(Error::SingleClass);
    }
    Ok((d_cf / d_q.max(TRUST_FLOOR)).min(TRUST_CAP))
}

/// Outcome of a robustness probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub value: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Largest ratio `‖E(q) − E(x)‖ / ‖q − x‖` over `n_perturb` points drawn
/// uniformly from the ball of `radius` around `q` (clipped to the unit cube).
/// Perturbations the explainer cannot handle are skipped and counted.
pub fn metric_robustness<E>(explainer: E, q: &[f64], radius: f64, n_perturb: usize, seed: u64) -> Result<Robustness>
where
    E: Fn(&[f64]) -> Option<Vec<f64>>,
{
    if n_perturb == 0 {
        return Err(Error::invalid("n_perturb must be positive"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let base = explainer(q).ok_or_else(|| Error::invalid("explainer failed on the query itself"))?;
    let mut rng = rng::stream(seed);
    let normal = Normal::standard();
    let d = q.len();
    let mut worst: f64 = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    for _ in 0..n_perturb {
        let dir: Vec<f64> = (0..d)
            .map(|_| normal.inverse_cdf(rng.random_range(f64::EPSILON..1.0)))
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        let x: Vec<f64> = q.iter().zip(&dir).map(|(v, u)| (v + r * u / norm).clamp(0.0, 1.0)).collect();
        let step = euclid(q, &x);
        if step == 0.0 {
            skipped += 1;
            continue;
        }
        match explainer(&x) {
            Some(e) => {
                worst = worst.max(euclid(&base, &e) / step);
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(Robustness {
        value: worst,
        evaluated,
        skipped,
    })
}

/// Distance, sparsity, plausibility and trustworthiness of `x` for `q`.
pub fn score(q: &[f64], x: &[f64], train: &Dataset, query_class: u8) -> Result<EvaluationScores> {
    Ok(EvaluationScores {
        distance: metric_distance(q, x)?,
        sparsity: metric_sparsity(q, x)?,
        plausibility: metric_plausibility(x, train)?,
        trustworthiness: metric_trustworthiness(x, train, query_class)?,
        robustness: None,
    })
}

/// Thresholds of the seesaw pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesawThresholds {
    /// The key's trend must be at or below this.
    pub key_max: f64,
    /// Some other feature's trend must be at or above this.
    pub hidden_min: f64,
}

impl Default for SeesawThresholds {
    fn default() -> Self {
        SeesawThresholds {
            key_max: -0.3,
            hidden_min: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesawVerdict {
    pub has_seesaw: bool,
    pub key_index: usize,
    pub tau_key: f64,
    pub tau_best_hidden: f64,
    pub hidden_index: usize,
}

/// Verdict from per-feature trends; the hidden feature is the largest trend
/// among the others, ties to the lowest index.
pub fn verdict_from_taus(taus: &[f64], key: usize, th: &SeesawThresholds) -> Result<SeesawVerdict> {
    if taus.len() < 2 {
        return Err(Error::NoHiddenFeature);
    }
    if key >= taus.len() {
        return Err(Error::invalid(format!("key index {key} out of range")));
    }
    let mut hidden = usize::MAX;
    for j in (0..taus.len()).filter(|&j| j != key) {
        if hidden == usize::MAX || taus[j] > taus[hidden] {
            hidden = j;
        }
    }
    let tau_key = taus[key];
    let tau_best_hidden = taus[hidden];
    Ok(SeesawVerdict {
        has_seesaw: tau_key <= th.key_max && tau_best_hidden >= th.hidden_min,
        key_index: key,
        tau_key,
        tau_best_hidden,
        hidden_index: hidden,
    })
}

/// Feature with the largest absolute change, ties to the lowest index.
pub fn largest_change(q: &[f64], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (a, b)) in q.iter().zip(x).enumerate() {
        let d = (a - b).abs();
        if d > CHANGE_TOL && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

/// Seesaw check of an arbitrary semi-factual: the key is the feature that
/// changed most, and main effects are traced along the straight path.
pub fn audit_seesaw<M: Attributable + ?Sized>(
    ctx: &Context<'_, M>,
    q: &[f64],
    x_sf: &[f64],
    steps: usize,
    th: &SeesawThresholds,
) -> Result<SeesawVerdict> {
    ctx.check_point(q)?;
    ctx.check_point(x_sf)?;
    let q_class = ctx.model.class_of(q);
    if ctx.model.class_of(x_sf) != q_class {
        return Err(Error::ClassMismatch);
    }
    let key = largest_change(q, x_sf).ok_or_else(|| Error::invalid("semi-factual equals the query"))?;
    let path = build_path(q, x_sf, steps)?;
    let trace = trace_path(ctx, &path, q_class)?;
    let taus: Vec<f64> = trace.trends.iter().map(|t| t.tau).collect();
    verdict_from_taus(&taus, key, th)
}

/// Share of verdicts with the pattern, in percent.
pub fn prevalence(verdicts: &[SeesawVerdict]) -> Option<f64> {
    if verdicts.is_empty() {
        return None;
    }
    Some(100.0 * verdicts.iter().filter(|v| v.has_seesaw).count() as f64 / verdicts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;
    use proptest::prelude::*;

    fn train(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
        let d = rows[0].len();
        let schema = (0..d).map(|j| FeatureSchema::numeric(&format!("f{j}"), 0.0, 1.0)).collect();
        Dataset::new("t", schema, rows, labels).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(metric_distance(&[0.2, 0.2], &[0.2, 0.2]).unwrap(), 0.0);
        assert_eq!(metric_distance(&[0.0, 0.5], &[1.0, 0.5]).unwrap(), 1.0);
        assert!((metric_distance(&[0.0, 0.0], &[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-15);
        assert!(metric_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(metric_sparsity(&[0.1, 0.2, 0.3, 0.4], &[0.5, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(metric_sparsity(&[0.1, 0.2, 0.3, 0.4], &[0.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!(metric_sparsity(&[0.1, 0.2], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn plausibility_examples() {
        let t = train(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1]);
        assert_eq!(metric_plausibility(&[1.0, 1.0], &t).unwrap(), 0.0);
        assert_eq!(metric_plausibility(&[0.5, 0.0], &train(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0, 1])).unwrap(), 0.5);
        let one = train(vec![vec![0.0, 0.0]], vec![0]);
        assert!((metric_plausibility(&[0.3, 0.4], &one).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trust_examples() {
        let t = train(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        assert_eq!(metric_trustworthiness(&[0.5], &t, 0).unwrap(), 1.0);
        let t2 = train(vec![vec![0.0], vec![0.3]], vec![1, 0]);
        // d(CF) = 0.2 to class 1 at 0, d(Q) = 0.1 to class 0 at 0.3
        assert!((metric_trustworthiness(&[0.2], &t2, 0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(metric_trustworthiness(&[1.0], &t, 1).unwrap(), TRUST_CAP);
        assert!(metric_trustworthiness(&[0.5], &train(vec![vec![0.0]], vec![1]), 1).is_err());
    }

    #[test]
    fn robustness_examples() {
        let q = [0.5, 0.5];
        let constant = metric_robustness(|_: &[f64]| Some(vec![0.1, 0.9]), &q, 0.05, 10, 1).unwrap();
        assert_eq!(constant.value, 0.0);
        let identity = metric_robustness(|x: &[f64]| Some(x.to_vec()), &q, 0.05, 10, 1).unwrap();
        assert!((identity.value - 1.0).abs() < 1e-12);
        assert_eq!(identity.evaluated, 10);
        assert!(metric_robustness(|x: &[f64]| Some(x.to_vec()), &q, 0.05, 0, 1).is_err());
        let flaky = metric_robustness(|x: &[f64]| (x[0] <= 0.5).then(|| x.to_vec()), &q, 0.05, 20, 2).unwrap();
        assert_eq!(flaky.evaluated + flaky.skipped, 20);
        assert!(flaky.skipped > 0);
    }

    #[test]
    fn verdict_examples() {
        let th = SeesawThresholds::default();
        let v = verdict_from_taus(&[-0.5, 0.6, 0.1], 0, &th).unwrap();
        assert!(v.has_seesaw);
        assert_eq!(v.hidden_index, 1);
        assert!(!verdict_from_taus(&[-0.1, 0.9], 0, &th).unwrap().has_seesaw);
        assert!(!verdict_from_taus(&[-0.9, 0.0, -0.2], 0, &th).unwrap().has_seesaw);
        assert!(verdict_from_taus(&[-0.9], 0, &th).is_err());
        // boundaries are inclusive
        assert!(verdict_from_taus(&[-0.3, 0.3], 0, &th).unwrap().has_seesaw);
    }

    #[test]
    fn largest_change_ties_to_lowest_index() {
        assert_eq!(largest_change(&[0.0, 0.0, 0.0], &[0.2, -0.2, 0.1]), Some(0));
        assert_eq!(largest_change(&[0.0, 0.0], &[0.0, 0.0]), None);
    }

    #[test]
    fn prevalence_arithmetic() {
        let th = SeesawThresholds::default();
        let yes = verdict_from_taus(&[-0.5, 0.5], 0, &th).unwrap();
        let no = verdict_from_taus(&[0.5, 0.5], 0, &th).unwrap();
        let mut v = vec![yes; 9];
        v.push(no);
        assert_eq!(prevalence(&v), Some(90.0));
        assert_eq!(prevalence(&[]), None);
    }

    fn point() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, 4)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            let ab = metric_distance(&a, &b).unwrap();
            let bc = metric_distance(&b, &c).unwrap();
            let ac = metric_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, metric_distance(&b, &a).unwrap());
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn sparsity_is_a_unit_fraction(a in point(), mask in proptest::collection::vec(any::<bool>(), 4)) {
            prop_assume!(mask.iter().any(|m| *m));
            let b: Vec<f64> = a.iter().zip(&mask).map(|(v, m)| if *m { v + 1.0 } else { *v }).collect();
            let s = metric_sparsity(&a, &b).unwrap();
            let n = mask.iter().filter(|m| **m).count();
            prop_assert_eq!(s, 1.0 / n as f64);
        }

        #[test]
        fn trust_above_one_iff_closer_to_own_class(x in proptest::collection::vec(0.0f64..1.0, 2)) {
            let t = train(
                vec![vec![0.1, 0.2], vec![0.8, 0.7], vec![0.4, 0.9], vec![0.6, 0.1]],
                vec![0, 1, 0, 1],
            );
            let own = t.rows.iter().zip(&t.labels).filter(|(_, l)| **l == 0).map(|(r, _)| euclid(r, &x)).fold(f64::INFINITY, f64::min);
            let other = t.rows.iter().zip(&t.labels).filter(|(_, l)| **l == 1).map(|(r, _)| euclid(r, &x)).fold(f64::INFINITY, f64::min);
            let trust = metric_trustworthiness(&x, &t, 0).unwrap();
            prop_assert_eq!(trust > 1.0, own < other);
        }
    }
}
