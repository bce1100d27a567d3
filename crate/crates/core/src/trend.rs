//! Trend strength of a sequence: the Mann-Kendall S statistic and Kendall's
//! tau-b against the time index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub tau: f64,
    pub s_statistic: i64,
    pub n: usize,
    pub direction: Direction,
    /// Last value minus first value.
    pub net_change: f64,
}

/// Mann-Kendall S and tie-corrected tau-b of `seq` against its index.
///
/// A sequence made entirely of ties has an undefined tau-b; it is reported
/// as `0` with no direction.
pub fn mann_kendall(seq: &[f64]) -> Result<TrendResult> {
    let n = seq.len();
    if n < 3 {
        return Err(Error::invalid(format!("trend needs at least 3 points, got {n}")));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trend sequence".into()));
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match seq[j].partial_cmp(&seq[i]) {
                Some(Ordering::Greater) => 1,
                Some(Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    // tied pairs in the values, from tie-group sizes
    let mut sorted = seq.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tied: i64 = 0;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tied += run * (run - 1) / 2;
            run = 1;
        }
    }
    tied += run * (run - 1) / 2;

    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 * (n0 - tied)) as f64).sqrt();
    let tau = if denom == 0.0 { 0.0 } else { s as f64 / denom };
    let direction = if tau > 0.0 {
        Direction::Increasing
    } else if tau < 0.0 {
        Direction::Decreasing
    } else {
        Direction::None
    };
    Ok(TrendResult {
        tau,
        s_statistic: s,
        n,
        direction,
        net_change: seq[n - 1] - seq[0],
    })
}

/// True when the trend weakens strictly past `epsilon` (`tau < epsilon`).
pub fn passes_weakening(t: &TrendResult, epsilon: f64) -> Result<bool> {
    if epsilon >= 0.0 || epsilon.is_nan() {
        return Err(Error::invalid(format!("epsilon must be negative, got {epsilon}")));
    }
    Ok(t.tau < epsilon)
}
