//! Prediction models: the bagged CART forest used as the classifier under
//! explanation, and the logistic surrogate used by the Local-Region baseline.

mod forest;
mod logistic;

pub use forest::{fit_forest, ForestParams, Node, Tree, TreeEnsemble};
pub(crate) use forest::leaf_value as leaf_value_of;
pub use logistic::{fit_logistic, LogisticModel};

/// Anything that yields a class-1 probability for an encoded row.
pub trait ProbabilityModel: Sync {
    fn n_features(&self) -> usize;

    /// Class-1 probability. Callers guarantee `x.len() == n_features()`.
    fn proba1(&self, x: &[f64]) -> f64;

    /// Hard prediction, ties going to class 0.
    fn class_of(&self, x: &[f64]) -> u8 {
        let p1 = self.proba1(x);
        u8::from(p1 > 1.0 - p1)
    }
}

/// Wraps a closure as a model. Mostly useful for tests and examples.
pub struct FnModel<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ProbabilityModel for FnModel<F> {
    fn n_features(&self) -> usize {
        self.d
    }

    fn proba1(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
