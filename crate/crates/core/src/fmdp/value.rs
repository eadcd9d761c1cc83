use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FactoredMdp, Policy, State};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// Guard on `Γ^D` for anything that enumerates the flat state space.
pub const MAX_ENUMERABLE_STATES: usize = 1 << 16;

/// Limit on stored `(s, a, s')` support entries.
const MAX_SUPPORT_ENTRIES: usize = 1 << 25;

/// The flat transition law `P(s' | s, a)` in compressed sparse rows.
#[derive(Clone, Debug)]
pub struct FlatDynamics {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_vars: usize,
    pub gamma: usize,
    /// `n_states × D` decoded states.
    states: Vec<u8>,
    /// Row `s * A + a` spans `offsets[row]..offsets[row + 1]`.
    offsets: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
    /// `R(s, a)` at `s * A + a`.
    rewards: Vec<f64>,
}

impl FlatDynamics {
    pub fn build(mdp: &FactoredMdp) -> Result<Self> {
        let n_states = mdp
            .flat_size()
            .filter(|&n| n <= MAX_ENUMERABLE_STATES)
            .ok_or(Error::TooLarge {
                what: "flat state space",
                size: (mdp.gamma() as u128).saturating_pow(mdp.n_vars() as u32),
                limit: MAX_ENUMERABLE_STATES as u128,
            })?;
        let (d, g, na) = (mdp.n_vars(), mdp.gamma(), mdp.n_actions());
        let mut states = Vec::with_capacity(n_states * d);
        for idx in 0..n_states {
            states.extend(State::from_flat(idx, d, g).0);
        }
        let mut offsets = Vec::with_capacity(n_states * na + 1);
        offsets.push(0);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        let mut rewards = Vec::with_capacity(n_states * na);
        let mut frontier: Vec<(u32, f64)> = Vec::new();
        let mut scratch: Vec<(u32, f64)> = Vec::new();
        for s in 0..n_states {
            let sv = &states[s * d..(s + 1) * d];
            for a in 0..na {
                frontier.clear();
                frontier.push((0, 1.0));
                for i in 0..d {
                    let row = mdp.next_var_dist(i, sv, a);
                    scratch.clear();
                    for &(idx, p) in &frontier {
                        for (y, &q) in row.iter().enumerate() {
                            if q > 0.0 {
                                scratch.push((idx * g as u32 + y as u32, p * q));
                            }
                        }
                    }
                    std::mem::swap(&mut frontier, &mut scratch);
                }
                if next.len() + frontier.len() > MAX_SUPPORT_ENTRIES {
                    return Err(Error::TooLarge {
                        what: "flat transition support",
                        size: (next.len() + frontier.len()) as u128,
                        limit: MAX_SUPPORT_ENTRIES as u128,
                    });
                }
                for &(idx, p) in &frontier {
                    next.push(idx);
                    prob.push(p);
                }
                offsets.push(next.len());
                rewards.push(mdp.reward(sv, a));
            }
        }
        Ok(FlatDynamics {
            n_states,
            n_actions: na,
            n_vars: d,
            gamma: g,
            states,
            offsets,
            next,
            prob,
            rewards,
        })
    }

    #[inline]
    pub fn state(&self, s: usize) -> &[u8] {
        &self.states[s * self.n_vars..(s + 1) * self.n_vars]
    }

    /// `(s', P(s' | s, a))` pairs with positive probability.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = s * self.n_actions + a;
        let span = self.offsets[row]..self.offsets[row + 1];
        self.next[span.clone()]
            .iter()
            .zip(&self.prob[span])
            .map(|(&n, &p)| (n as usize, p))
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// `π(a | s)` for every flat state, row-major `[s][a]`.
    pub fn policy_matrix(&self, policy: &Policy) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states * self.n_actions];
        for (s, row) in out.chunks_mut(self.n_actions).enumerate() {
            policy.action_probs(self.state(s), row);
        }
        out
    }

    /// `R(s, a) + Σ_{s'} P(s' | s, a) v(s')`.
    #[inline]
    pub fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.reward(s, a) + self.successors(s, a).map(|(n, p)| p * v[n]).sum::<f64>()
    }

    /// Initial distribution as a dense vector.
    pub fn initial_vector(&self, mdp: &FactoredMdp) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| mdp.rho().prob(self.state(s), self.gamma))
            .collect()
    }

    /// `V_0` of `policy` over `horizon` steps.
    pub fn policy_values(&self, policy: &Policy, horizon: usize) -> Vec<f64> {
        let pi = self.policy_matrix(policy);
        let mut v = vec![0.0; self.n_states];
        let mut v_next = vec![0.0; self.n_states];
        for _ in 0..horizon {
            std::mem::swap(&mut v, &mut v_next);
            for (s, out) in v.iter_mut().enumerate() {
                *out = (0..self.n_actions)
                    .map(|a| {
                        let p = pi[s * self.n_actions + a];
                        if p == 0.0 {
                            0.0
                        } else {
                            p * self.backup(s, a, &v_next)
                        }
                    })
                    .sum();
            }
        }
        v
    }
}

/// `ν^π = ρᵀ V^π_0` by backward induction over the flat state space.
pub fn exact_value(mdp: &FactoredMdp, policy: &Policy) -> Result<f64> {
    policy.check_compatible(mdp.n_vars(), mdp.gamma(), mdp.n_actions())?;
    let flat = FlatDynamics::build(mdp)?;
    let v = flat.policy_values(policy, mdp.horizon());
    let rho = flat.initial_vector(mdp);
    Ok(rho.iter().zip(&v).map(|(p, x)| p * x).sum())
}

/// Monte-Carlo estimate of a value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// Mean and `sample-std / √n` of a slice of returns.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return McEstimate { mean: 0.0, stderr: 0.0, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate { mean, stderr, n }
    }
}

fn rollout_return(mdp: &FactoredMdp, policy: &Policy, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let mut s = mdp.sample_initial(&mut rng).0;
    let mut next = vec![0u8; s.len()];
    let mut total = 0.0;
    for _ in 0..mdp.horizon() {
        let a = policy.sample(&s, &mut rng);
        total += mdp.step_into(&s, a, &mut rng, &mut next);
        std::mem::swap(&mut s, &mut next);
    }
    total
}

/// Mean return over `n_rollouts` independent rollouts; rollout `k` uses seed
/// `derive_seed(seed, [k])`.
pub fn monte_carlo_value(mdp: &FactoredMdp, policy: &Policy, n_rollouts: usize, seed: u64) -> Result<McEstimate> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    policy.check_compatible(mdp.n_vars(), mdp.gamma(), mdp.n_actions())?;
    let returns: Vec<f64> = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|k| rollout_return(mdp, policy, derive_seed(seed, &[k])))
        .collect();
    Ok(McEstimate::from_samples(&returns))
}
