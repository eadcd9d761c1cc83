use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_distribution, checked_pow, realization_rank, sample_categorical, Action};
use crate::rng::Rng;
use crate::{Error, Result};

/// A Markov policy mapping states to action distributions.
///
/// `Tabular` policies read only the variables in `scope`; with the full
/// variable list as scope they are ordinary state-tabular policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Uniform {
        n_actions: usize,
    },
    Tabular {
        n_actions: usize,
        gamma: usize,
        scope: Vec<usize>,
        /// Flattened `[scope rank][action]`.
        probs: Vec<f64>,
    },
    EpsilonFloored {
        base: Box<Policy>,
        eps: f64,
    },
}

impl Policy {
    pub fn uniform(n_actions: usize) -> Self {
        Policy::Uniform { n_actions }
    }

    pub fn tabular(n_actions: usize, gamma: usize, scope: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let rows = checked_pow(gamma, scope.len())
            .ok_or_else(|| Error::InvalidArgument("policy scope too large".into()))?;
        if n_actions == 0 || probs.len() != rows * n_actions {
            return Err(Error::InvalidArgument(format!(
                "tabular policy needs {} probabilities, got {}",
                rows * n_actions,
                probs.len()
            )));
        }
        for (r, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(row, &format!("policy row {r}"))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        Ok(Policy::Tabular {
            n_actions,
            gamma,
            scope,
            probs,
        })
    }

    /// Deterministic policy choosing `actions[rank(s(scope))]`.
    pub fn deterministic(n_actions: usize, gamma: usize, scope: Vec<usize>, actions: &[Action]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (r, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} >= {n_actions}")));
            }
            probs[r * n_actions + a] = 1.0;
        }
        Policy::tabular(n_actions, gamma, scope, probs)
    }

    /// Always plays `action`.
    pub fn constant(n_actions: usize, gamma: usize, action: Action) -> Result<Self> {
        Policy::deterministic(n_actions, gamma, vec![], &[action])
    }

    /// `(1 − eps)·self + eps·uniform`.
    pub fn epsilon_floor(self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("eps = {eps} outside [0, 1]")));
        }
        Ok(Policy::EpsilonFloored {
            base: Box::new(self),
            eps,
        })
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Policy::Uniform { n_actions } | Policy::Tabular { n_actions, .. } => *n_actions,
            Policy::EpsilonFloored { base, .. } => base.n_actions(),
        }
    }

    /// `π(a | s)`.
    pub fn action_prob(&self, s: &[u8], a: Action) -> f64 {
        match self {
            Policy::Uniform { n_actions } => 1.0 / *n_actions as f64,
            Policy::Tabular {
                n_actions,
                gamma,
                scope,
                probs,
            } => probs[realization_rank(s, scope, *gamma) * n_actions + a],
            Policy::EpsilonFloored { base, eps } => {
                (1.0 - eps) * base.action_prob(s, a) + eps / base.n_actions() as f64
            }
        }
    }

    /// Write `π(· | s)` into `out` (length `A`).
    pub fn action_probs(&self, s: &[u8], out: &mut [f64]) {
        match self {
            Policy::Uniform { n_actions } => out.fill(1.0 / *n_actions as f64),
            Policy::Tabular {
                n_actions,
                gamma,
                scope,
                probs,
            } => {
                let r = realization_rank(s, scope, *gamma);
                out.copy_from_slice(&probs[r * n_actions..(r + 1) * n_actions]);
            }
            Policy::EpsilonFloored { base, eps } => {
                base.action_probs(s, out);
                let floor = eps / out.len() as f64;
                for p in out.iter_mut() {
                    *p = (1.0 - eps) * *p + floor;
                }
            }
        }
    }

    pub fn sample(&self, s: &[u8], rng: &mut Rng) -> Action {
        match self {
            Policy::Uniform { n_actions } => rng.gen_range(0..*n_actions),
            Policy::Tabular {
                n_actions,
                gamma,
                scope,
                probs,
            } => {
                let r = realization_rank(s, scope, *gamma);
                sample_categorical(&probs[r * n_actions..(r + 1) * n_actions], rng)
            }
            Policy::EpsilonFloored { base, eps } => {
                if rng.gen::<f64>() < *eps {
                    rng.gen_range(0..base.n_actions())
                } else {
                    base.sample(s, rng)
                }
            }
        }
    }

    /// Checks that the policy can act in states with `n_vars` variables
    /// over `gamma` symbols.
    pub fn check_compatible(&self, n_vars: usize, gamma: usize, n_actions: usize) -> Result<()> {
        if self.n_actions() != n_actions {
            return Err(Error::SignatureMismatch(format!(
                "policy has {} actions, model has {n_actions}",
                self.n_actions()
            )));
        }
        match self {
            Policy::Tabular { gamma: g, scope, .. } if *g != gamma || scope.iter().any(|&j| j >= n_vars) => {
                Err(Error::SignatureMismatch("policy scope does not fit the model".into()))
            }
            Policy::EpsilonFloored { base, .. } => base.check_compatible(n_vars, gamma, n_actions),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn floor_arithmetic() {
        let p = Policy::constant(4, 2, 1).unwrap().epsilon_floor(0.05).unwrap();
        let s = [0u8];
        assert!((p.action_prob(&s, 1) - 0.9625).abs() < 1e-12);
        for a in [0, 2, 3] {
            assert!((p.action_prob(&s, a) - 0.0125).abs() < 1e-12);
        }
        let mut out = [0.0; 4];
        p.action_probs(&s, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_extremes() {
        let base = Policy::deterministic(3, 2, vec![0], &[2, 0]).unwrap();
        let same = base.clone().epsilon_floor(0.0).unwrap();
        let unif = base.clone().epsilon_floor(1.0).unwrap();
        for x in 0..2u8 {
            for a in 0..3 {
                assert_eq!(same.action_prob(&[x], a), base.action_prob(&[x], a));
                assert!((unif.action_prob(&[x], a) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!(base.clone().epsilon_floor(-0.1).is_err());
        assert!(base.epsilon_floor(1.5).is_err());
    }

    #[test]
    fn sampling_matches_probabilities() {
        let p = Policy::constant(2, 2, 0).unwrap().epsilon_floor(0.3).unwrap();
        let mut r = rng::seeded(5);
        let n = 200_000;
        let zeros = (0..n).filter(|_| p.sample(&[0], &mut r) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.85).abs() < 0.005);
    }

    #[test]
    fn tabular_validation() {
        assert!(Policy::tabular(2, 2, vec![0], vec![0.5, 0.5, 1.0]).is_err());
        assert!(Policy::tabular(2, 2, vec![0], vec![0.5, 0.6, 1.0, 0.0]).is_err());
        assert!(Policy::deterministic(2, 2, vec![], &[3]).is_err());
    }
}
