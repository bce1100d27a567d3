use serde::{Deserialize, Serialize};

use super::ProbabilityModel;
use crate::{Error, Result};

/// L2-regularized logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Mean cross-entropy plus `l2 / 2 * |w|^2`.
    pub fn loss(&self, rows: &[Vec<f64>], labels: &[u8]) -> f64 {
        let n = rows.len() as f64;
        let ce: f64 = rows
            .iter()
            .zip(labels)
            .map(|(x, &y)| {
                let z = self.logit(x);
                // log(1 + e^z) - y z, computed stably
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - y as f64 * z
            })
            .sum::<f64>()
            / n;
        ce + 0.5 * self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn step(&mut self, rows: &[Vec<f64>], labels: &[u8], lr: f64) {
        let n = rows.len() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let r = sigmoid(self.logit(x)) - y as f64;
            gb += r;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        for (w, g) in self.weights.iter_mut().zip(&gw) {
            *w -= lr * (g / n + self.l2 * *w);
        }
        self.bias -= lr * gb / n;
    }
}

impl ProbabilityModel for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn proba1(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// Full-batch gradient descent from the zero vector.
pub fn fit_logistic(
    rows: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
    iters: usize,
    step: f64,
) -> Result<LogisticModel> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::invalid("logistic fit needs matching, nonempty rows and labels"));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::SingleClass);
    }
    if iters == 0 {
        return Err(Error::invalid("logistic fit needs at least one iteration"));
    }
    if l2 < 0.0 {
        return Err(Error::invalid("negative l2 penalty"));
    }
    let mut m = LogisticModel {
        weights: vec![0.0; rows[0].len()],
        bias: 0.0,
        l2,
    };
    for _ in 0..iters {
        m.step(rows, labels, step);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_line_is_fit() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { 0.1 } else { 0.9 }]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        // threshold oracle: 0.5 separates the two groups
        assert!(rows.iter().zip(&labels).all(|(r, &l)| u8::from(r[0] > 0.5) == l));
        let m = fit_logistic(&rows, &labels, 0.0, 2000, 1.0).unwrap();
        let acc = rows.iter().zip(&labels).filter(|(r, &l)| m.class_of(r) == l).count();
        assert_eq!(acc, 20);
    }

    #[test]
    fn zero_features_learn_prior_log_odds() {
        let rows = vec![vec![0.0, 0.0]; 10];
        let labels = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let m = fit_logistic(&rows, &labels, 0.1, 5000, 1.0).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        // gradient of a bias-only model vanishes at logit(prior)
        let prior: f64 = 0.3;
        assert!((m.bias - (prior / (1.0 - prior)).ln()).abs() < 1e-6);
    }

    #[test]
    fn zero_step_leaves_initialization() {
        let rows = vec![vec![0.2], vec![0.8]];
        let m = fit_logistic(&rows, &[0, 1], 0.0, 10, 0.0).unwrap();
        assert_eq!(m.weights, vec![0.0]);
        assert_eq!(m.bias, 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            fit_logistic(&[vec![0.1], vec![0.2]], &[1, 1], 0.0, 10, 0.1),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn loss_does_not_increase_with_small_steps() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 0.5 * r[1] > 0.7)).collect();
        let mut m = LogisticModel {
            weights: vec![0.0; 2],
            bias: 0.0,
            l2: 0.01,
        };
        let mut last = m.loss(&rows, &labels);
        for _ in 0..500 {
            m.step(&rows, &labels, 0.01);
            let now = m.loss(&rows, &labels);
            assert!(now <= last + 1e-15);
            last = now;
        }
    }
}
