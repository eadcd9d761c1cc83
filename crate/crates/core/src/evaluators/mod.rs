//! Target-policy value estimates from batch data.

mod cis;
mod flat;
mod mfmc;
mod model_based;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cis::evaluate_cis;
pub use flat::{evaluate_flat, FlatModel};
pub use mfmc::{evaluate_mfmc, MfmcOptions};
pub use model_based::{evaluate_known_structure, evaluate_model_based};

use crate::fmdp::{exact_value, monte_carlo_value, Action, FactoredMdp, Policy};
use crate::rng::{self, derive_seed, Rng};
use crate::{Error, Result};

/// One value estimate plus method-specific diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub method: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Rollouts, artificial trajectories or logged trajectories used.
    pub n: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EvalResult {
    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

/// `|estimate − truth| / |truth|`.
pub fn normalized_error(estimate: f64, truth: f64) -> Result<f64> {
    if !(truth.abs() > 1e-12) {
        return Err(Error::UndefinedMetric(truth));
    }
    Ok((estimate - truth).abs() / truth.abs())
}

/// Ground-truth value of `policy`: exact where the state space is
/// enumerable, otherwise a Monte-Carlo reference. Returns `(value, stderr)`.
pub fn reference_value(mdp: &FactoredMdp, policy: &Policy, mc_rollouts: usize, seed: u64) -> Result<(f64, f64)> {
    match exact_value(mdp, policy) {
        Ok(v) => Ok((v, 0.0)),
        Err(e) if e.is_refusal() => {
            let mc = monte_carlo_value(mdp, policy, mc_rollouts, seed)?;
            Ok((mc.mean, mc.stderr))
        }
        Err(e) => Err(e),
    }
}

/// A generative model with the induced-MDP contract: `step_into` returns
/// `false` outside the known set.
pub(crate) trait Simulator: Sync {
    fn n_vars(&self) -> usize;
    fn sample_initial(&self, rng: &mut Rng, out: &mut [u8]) -> bool;
    fn step_into(&self, s: &[u8], a: Action, rng: &mut Rng, out: &mut [u8]) -> bool;
}

struct Rollouts {
    returns: Vec<f64>,
    fallback_steps: Vec<Option<usize>>,
}

/// Rollout `k` uses `derive_seed(seed, [k])`. The first step leaving the
/// known set pays 0 and ends the rollout's reward stream (self-loop, zero
/// reward for the remaining horizon).
fn simulate(sim: &dyn Simulator, mdp: &FactoredMdp, policy: &Policy, n_rollouts: usize, seed: u64) -> Rollouts {
    let horizon = mdp.horizon();
    let d = sim.n_vars();
    let (returns, fallback_steps) = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::seeded(derive_seed(seed, &[k]));
            let mut s = vec![0u8; d];
            let mut next = vec![0u8; d];
            if !sim.sample_initial(&mut rng, &mut s) {
                return (0.0, Some(0));
            }
            let mut total = 0.0;
            for t in 0..horizon {
                let a = policy.sample(&s, &mut rng);
                if !sim.step_into(&s, a, &mut rng, &mut next) {
                    return (total, Some(t));
                }
                total += mdp.reward(&s, a);
                std::mem::swap(&mut s, &mut next);
            }
            (total, None)
        })
        .unzip();
    Rollouts {
        returns,
        fallback_steps,
    }
}

fn rollout_result(method: &str, sim: &dyn Simulator, mdp: &FactoredMdp, policy: &Policy, n_rollouts: usize, seed: u64) -> Result<EvalResult> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    policy.check_compatible(mdp.n_vars(), mdp.gamma(), mdp.n_actions())?;
    let r = simulate(sim, mdp, policy, n_rollouts, seed);
    let est = crate::fmdp::McEstimate::from_samples(&r.returns);
    let hits: Vec<usize> = r.fallback_steps.iter().flatten().copied().collect();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("fallback_rate".into(), hits.len() as f64 / n_rollouts as f64);
    if !hits.is_empty() {
        diagnostics.insert(
            "mean_fallback_step".into(),
            hits.iter().sum::<usize>() as f64 / hits.len() as f64,
        );
    }
    Ok(EvalResult {
        method: method.to_string(),
        estimate: est.mean,
        stderr: est.stderr,
        n: n_rollouts,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_error_examples() {
        assert_eq!(normalized_error(3.0, 3.0).unwrap(), 0.0);
        assert!((normalized_error(9.0, 10.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((normalized_error(-1.0, -2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(normalized_error(1.0, 0.0), Err(Error::UndefinedMetric(_))));
        assert!(normalized_error(1.0, 1e-13).is_err());
    }

    #[test]
    fn reference_falls_back_to_monte_carlo() {
        let m = crate::domains::random_fmdp(20, 2, 2, 3).unwrap().with_horizon(5);
        let (v, se) = reference_value(&m, &Policy::uniform(2), 2000, 1).unwrap();
        assert!(v > 0.0 && se > 0.0);
        let small = crate::domains::copy_chain(3, 2, 2).unwrap();
        let (v, se) = reference_value(&small, &Policy::uniform(2), 10, 1).unwrap();
        assert!((v - 25.0).abs() < 1e-9 && se == 0.0);
    }
}
