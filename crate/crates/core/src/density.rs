//! Gaussian copula density over the encoded feature space and the
//! plausibility band on its log-density.
//!
//! Each marginal is a piecewise-linear empirical CDF through mid-rank knots
//! `u = rank / (N + 1)`; its derivative is the marginal density. The copula
//! couples the normal scores `z = Φ⁻¹(u)` through a shrunk correlation
//! matrix. The band is `[μ − θσ, μ + θσ]` where `μ` and `σ` are the mean and
//! standard deviation of the training rows' own log-densities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::{Error, Result};

/// Shrinkage toward the identity applied to the normal-score correlation.
pub const SHRINKAGE: f64 = 1e-3;
/// Floor on marginal densities, so the log-density stays finite.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Interpolated empirical CDF of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    /// Sorted unique training values.
    pub knots: Vec<f64>,
    /// Mid-rank CDF value at each knot.
    pub cdf: Vec<f64>,
    /// `1 / (N + 1)`; CDF values are clamped to `[eps_u, 1 − eps_u]`.
    pub eps_u: f64,
}

impl Marginal {
    fn fit(values: &[f64]) -> Option<Marginal> {
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut knots = Vec::new();
        let mut cdf = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && sorted[end] == sorted[start] {
                end += 1;
            }
            // 1-based ranks start+1..=end, averaged
            let rank = (start + 1 + end) as f64 / 2.0;
            knots.push(sorted[start]);
            cdf.push(rank / (n + 1) as f64);
            start = end;
        }
        if knots.len() < 2 {
            return None;
        }
        Some(Marginal {
            knots,
            cdf,
            eps_u: 1.0 / (n + 1) as f64,
        })
    }

    /// Index of the segment `[knots[i], knots[i+1]]` holding `v`, if inside.
    fn segment(&self, v: f64) -> Option<usize> {
        let k = &self.knots;
        if v < k[0] || v > k[k.len() - 1] {
            return None;
        }
        let i = k.partition_point(|&t| t <= v);
        Some(i.saturating_sub(1).min(k.len() - 2))
    }

    pub fn cdf_at(&self, v: f64) -> f64 {
        let u = match self.segment(v) {
            None if v < self.knots[0] => self.eps_u,
            None => 1.0 - self.eps_u,
            Some(i) => {
                let (x0, x1) = (self.knots[i], self.knots[i + 1]);
                let (u0, u1) = (self.cdf[i], self.cdf[i + 1]);
                u0 + (u1 - u0) * (v - x0) / (x1 - x0)
            }
        };
        u.clamp(self.eps_u, 1.0 - self.eps_u)
    }

    /// Slope of the interpolated CDF at `v`, floored at [`DENSITY_FLOOR`].
    pub fn density_at(&self, v: f64) -> f64 {
        match self.segment(v) {
            None => DENSITY_FLOOR,
            Some(i) => {
                let slope = (self.cdf[i + 1] - self.cdf[i]) / (self.knots[i + 1] - self.knots[i]);
                slope.max(DENSITY_FLOOR)
            }
        }
    }
}

/// Gaussian copula with a fixed correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCopula {
    pub correlation: Vec<Vec<f64>>,
    log_det: f64,
    /// `R⁻¹ − I`.
    precision_minus_identity: Vec<Vec<f64>>,
}

impl GaussianCopula {
    pub fn new(correlation: Vec<Vec<f64>>) -> Result<Self> {
        let d = correlation.len();
        if d == 0 || correlation.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("correlation matrix must be square and nonempty"));
        }
        let r = DMatrix::from_fn(d, d, |i, j| correlation[i][j]);
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("correlation matrix is not positive definite"))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision_minus_identity = (0..d)
            .map(|i| (0..d).map(|j| inv[(i, j)] - if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(GaussianCopula {
            correlation,
            log_det,
            precision_minus_identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.correlation.len()
    }

    /// `log c = −½ log|R| − ½ zᵀ(R⁻¹ − I)z` at normal scores `z`.
    pub fn log_density_z(&self, z: &[f64]) -> f64 {
        let mut q = 0.0;
        for (i, row) in self.precision_minus_identity.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                q += z[i] * a * z[j];
            }
        }
        -0.5 * self.log_det - 0.5 * q
    }
}

/// Joint density model: empirical marginals coupled by a Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub marginals: Vec<Marginal>,
    pub copula: GaussianCopula,
    pub log_pdf_mean: f64,
    pub log_pdf_std: f64,
}

fn normal() -> Normal {
    Normal::standard()
}

/// Fit marginals, normal-score correlation and the training log-density
/// statistics. Rows are sorted first, so the fit ignores row order.
pub fn fit_copula(train: &Dataset) -> Result<CopulaModel> {
    let d = train.n_features();
    let n = train.len();
    if n < d + 2 {
        return Err(Error::invalid(format!("copula needs at least {} rows, got {n}", d + 2)));
    }
    let mut rows = train.rows.clone();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut marginals = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = Marginal::fit(&col).ok_or_else(|| Error::ConstantFeature(train.schema[j].name.clone()))?;
        marginals.push(m);
    }
    let nd = normal();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| nd.inverse_cdf(marginals[j].cdf_at(r[j]))).collect())
        .collect();
    let mean: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &z {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let corr: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let rho = cov[i][j] / (cov[i][i] * cov[j][j]).sqrt();
                        (1.0 - SHRINKAGE) * rho
                    }
                })
                .collect()
        })
        .collect();
    let mut model = CopulaModel {
        marginals,
        copula: GaussianCopula::new(corr)?,
        log_pdf_mean: 0.0,
        log_pdf_std: 0.0,
    };
    let lps: Vec<f64> = rows.iter().map(|r| model.log_pdf_unchecked(r)).collect();
    let mu = lps.iter().sum::<f64>() / n as f64;
    let var = lps.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
    model.log_pdf_mean = mu;
    model.log_pdf_std = var.sqrt();
    Ok(model)
}

impl CopulaModel {
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Copula term `log c(u)` at `x`.
    pub fn log_copula_term(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.copula.log_density_z(&self.normal_scores(x)))
    }

    /// Sum of marginal log-densities at `x`.
    pub fn log_marginal_term(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.marginals.iter().zip(x).map(|(m, &v)| m.density_at(v).ln()).sum())
    }

    /// Joint log-density: copula term plus marginal log-densities.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.log_pdf_unchecked(x))
    }

    fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let marg: f64 = self.marginals.iter().zip(x).map(|(m, &v)| m.density_at(v).ln()).sum();
        self.copula.log_density_z(&self.normal_scores(x)) + marg
    }

    fn normal_scores(&self, x: &[f64]) -> Vec<f64> {
        let nd = normal();
        self.marginals.iter().zip(x).map(|(m, &v)| nd.inverse_cdf(m.cdf_at(v))).collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density query".into()));
        }
        Ok(())
    }
}

/// Closed interval `[μ − θσ, μ + θσ]` on the joint log-density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityBand {
    pub theta: f64,
    pub delta: f64,
    pub low: f64,
    pub high: f64,
}

impl PlausibilityBand {
    pub fn new(model: &CopulaModel, theta: f64) -> Result<Self> {
        Self::from_stats(model.log_pdf_mean, model.log_pdf_std, theta)
    }

    pub fn from_stats(mean: f64, std: f64, theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid(format!("theta must be positive, got {theta}")));
        }
        let delta = theta * std;
        Ok(PlausibilityBand {
            theta,
            delta,
            low: mean - delta,
            high: mean + delta,
        })
    }

    /// Distance from `log_pdf` to the band, zero inside it.
    pub fn violation(&self, log_pdf: f64) -> f64 {
        if log_pdf < self.low {
            self.low - log_pdf
        } else if log_pdf > self.high {
            log_pdf - self.high
        } else {
            0.0
        }
    }
}

/// Plausibility constraint: zero when `x` sits inside the band.
pub fn g2_violation(model: &CopulaModel, band: &PlausibilityBand, x: &[f64]) -> Result<f64> {
    Ok(band.violation(model.log_pdf(x)?))
}
