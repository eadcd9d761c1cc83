use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `N(ε, δ₁) = ⌈(2Γ²/ε²) · ln(2Γ/δ₁)⌉`.
///
/// Accepts `0 < δ₁ < 2Γ` (the range where the log term is positive).
pub fn sample_threshold(eps: f64, delta1: f64, gamma: usize) -> Result<u64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let g = gamma as f64;
    if !(delta1 > 0.0 && delta1 < 2.0 * g) {
        return Err(Error::InvalidArgument(format!(
            "delta1 = {delta1} outside (0, {})",
            2.0 * g
        )));
    }
    let x = 2.0 * g * g / (eps * eps) * (2.0 * g / delta1).ln();
    let snapped = x.round();
    let n = if (x - snapped).abs() <= 1e-9 * snapped.max(1.0) {
        snapped
    } else {
        x.ceil()
    };
    Ok(n.max(1.0) as u64)
}

/// `Σ_y |p_y − q_y|`.
pub fn l1_diff(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Confidence parameters and the count threshold derived from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub eps: f64,
    pub delta1: f64,
    pub c2: f64,
    /// Minimum count for a realization to be trusted.
    #[serde(rename = "N")]
    pub n: u64,
}

impl Thresholds {
    /// Validates `ε > 0`, `0 < δ₁ < 1`, `C₂ ≥ 0` and derives `N`.
    pub fn new(eps: f64, delta1: f64, c2: f64, gamma: usize) -> Result<Self> {
        if !(delta1 > 0.0 && delta1 < 1.0) {
            return Err(Error::InvalidArgument(format!("delta1 = {delta1} outside (0, 1)")));
        }
        if !(c2 >= 0.0) || !c2.is_finite() {
            return Err(Error::InvalidArgument(format!("c2 = {c2} must be >= 0")));
        }
        Ok(Thresholds {
            eps,
            delta1,
            c2,
            n: sample_threshold(eps, delta1, gamma)?,
        })
    }

    /// Replace the derived count threshold with an explicit one.
    pub fn with_min_count(mut self, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        self.n = n;
        Ok(self)
    }

    /// Gain a candidate must exceed to be added.
    pub fn acceptance_gain(&self) -> f64 {
        self.c2 + 2.0 * self.eps
    }
}
