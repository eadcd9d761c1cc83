use serde::{Deserialize, Serialize};

use super::serde_inf;
use crate::{Error, Result};

/// Inputs to the finite-sample evaluation bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eps: f64,
    pub delta1: f64,
    pub horizon: usize,
    pub n_vars: usize,
    /// `max |Φᵢ|`.
    pub m: usize,
    pub c2: f64,
    pub c3: f64,
    #[serde(with = "serde_inf::vec")]
    pub psi: Vec<f64>,
    pub n_actions: usize,
    pub gamma: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    /// `(4m + 1)ε + mC₂ + m²C₃`.
    pub eps_star: f64,
    /// `AΓ^m Σᵢ ψᵢ δ₁`.
    #[serde(with = "serde_inf")]
    pub delta_star: f64,
    /// `T Σᵢ ψᵢ AΓ^m δ₁`.
    #[serde(with = "serde_inf")]
    pub delta_star_appendix: f64,
    /// `δ*_appendix · T + ε* D T²`.
    #[serde(with = "serde_inf")]
    pub value_bound: f64,
    /// `T² (δ* + ε* D)`.
    #[serde(with = "serde_inf")]
    pub value_bound_main: f64,
    /// `1 − 2AD(m + 2)(D + 1 − m)Γ^{m+1}δ₁`, not clamped.
    pub confidence: f64,
}

/// Evaluates the closed forms. Infinite `ψᵢ` propagate to infinite `δ*`
/// and bounds unless `δ₁ = 0`, in which case `δ* = 0`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<Theorem1Bound> {
    let BoundInputs {
        eps,
        delta1,
        horizon,
        n_vars,
        m,
        c2,
        c3,
        ref psi,
        n_actions,
        gamma,
    } = *inputs;
    let finite_nonneg = |x: f64| x >= 0.0 && x.is_finite();
    if !(finite_nonneg(eps) && finite_nonneg(delta1) && finite_nonneg(c2) && finite_nonneg(c3)) {
        return Err(Error::InvalidArgument("eps, delta1, c2, c3 must be finite and >= 0".into()));
    }
    if m > n_vars {
        return Err(Error::InvalidArgument(format!("m = {m} exceeds D = {n_vars}")));
    }
    if psi.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument("psi entries must be >= 0".into()));
    }
    let (m_f, d_f, t_f, a_f, g_f) = (m as f64, n_vars as f64, horizon as f64, n_actions as f64, gamma as f64);
    let eps_star = (4.0 * m_f + 1.0) * eps + m_f * c2 + m_f * m_f * c3;
    let psi_sum: f64 = psi.iter().sum();
    let delta_star = if delta1 == 0.0 {
        0.0
    } else {
        a_f * g_f.powi(m as i32) * psi_sum * delta1
    };
    let delta_star_appendix = if delta1 == 0.0 {
        0.0
    } else {
        t_f * psi_sum * a_f * g_f.powi(m as i32) * delta1
    };
    let value_bound = delta_star_appendix * t_f + eps_star * d_f * t_f * t_f;
    let value_bound_main = t_f * t_f * (delta_star + eps_star * d_f);
    let confidence = 1.0 - 2.0 * a_f * d_f * (m_f + 2.0) * (d_f + 1.0 - m_f) * g_f.powi(m as i32 + 1) * delta1;
    Ok(Theorem1Bound {
        eps_star,
        delta_star,
        delta_star_appendix,
        value_bound,
        value_bound_main,
        confidence,
    })
}
