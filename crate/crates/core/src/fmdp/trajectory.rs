use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Action, FactoredMdp, Policy, State};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// A length-`T` sequence of `(state, action, reward)` plus the state reached
/// after the last step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDoc", into = "TrajectoryDoc")]
pub struct Trajectory {
    n_vars: usize,
    /// `(T + 1) × D` symbols, row `t` is `s_t`.
    states: Vec<u8>,
    actions: Vec<Action>,
    rewards: Vec<f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct StepDoc {
    state: Vec<u8>,
    action: Action,
    reward: f64,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryDoc {
    seed: u64,
    steps: Vec<StepDoc>,
    final_state: Vec<u8>,
}

impl From<Trajectory> for TrajectoryDoc {
    fn from(t: Trajectory) -> Self {
        TrajectoryDoc {
            seed: t.seed,
            steps: t
                .steps()
                .map(|(s, action, reward)| StepDoc {
                    state: s.to_vec(),
                    action,
                    reward,
                })
                .collect(),
            final_state: t.final_state().to_vec(),
        }
    }
}

impl TryFrom<TrajectoryDoc> for Trajectory {
    type Error = Error;

    fn try_from(doc: TrajectoryDoc) -> Result<Self> {
        let n_vars = doc.final_state.len();
        let mut t = Trajectory::start(n_vars, doc.seed);
        t.states.clear();
        for step in doc.steps {
            if step.state.len() != n_vars {
                return Err(Error::InvalidArgument("ragged trajectory states".into()));
            }
            if !(0.0..=1.0).contains(&step.reward) {
                return Err(Error::InvalidArgument(format!("reward {} outside [0, 1]", step.reward)));
            }
            t.states.extend(step.state);
            t.actions.push(step.action);
            t.rewards.push(step.reward);
        }
        t.states.extend(doc.final_state);
        Ok(t)
    }
}

impl Trajectory {
    fn start(n_vars: usize, seed: u64) -> Self {
        Trajectory {
            n_vars,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            seed,
        }
    }

    /// Builds a trajectory from explicit parts; `states` must have one more
    /// entry than `actions`.
    pub fn from_parts(states: &[State], actions: Vec<Action>, rewards: Vec<f64>, seed: u64) -> Result<Self> {
        if states.len() != actions.len() + 1 || actions.len() != rewards.len() {
            return Err(Error::InvalidArgument(
                "trajectory needs T+1 states and T actions/rewards".into(),
            ));
        }
        let n_vars = states[0].len();
        if states.iter().any(|s| s.len() != n_vars) {
            return Err(Error::InvalidArgument("ragged trajectory states".into()));
        }
        Ok(Trajectory {
            n_vars,
            states: states.iter().flat_map(|s| s.0.iter().copied()).collect(),
            actions,
            rewards,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// `s_t` for `t` in `0..=T`.
    #[inline]
    pub fn state(&self, t: usize) -> &[u8] {
        &self.states[t * self.n_vars..(t + 1) * self.n_vars]
    }

    pub fn final_state(&self) -> &[u8] {
        self.state(self.len())
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn steps(&self) -> impl Iterator<Item = (&[u8], Action, f64)> + '_ {
        (0..self.len()).map(move |t| (self.state(t), self.actions[t], self.rewards[t]))
    }

    /// `(s_t, a_t, r_t, s_{t+1})` for every step.
    pub fn transitions(&self) -> impl Iterator<Item = (&[u8], Action, f64, &[u8])> + '_ {
        (0..self.len()).map(move |t| (self.state(t), self.actions[t], self.rewards[t], self.state(t + 1)))
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Roll out `policy` on `mdp` for `mdp.horizon()` steps with generator `seed`.
pub fn sample_trajectory(mdp: &FactoredMdp, policy: &Policy, seed: u64) -> Trajectory {
    let d = mdp.n_vars();
    let horizon = mdp.horizon();
    let mut rng = rng::seeded(seed);
    let mut t = Trajectory::start(d, seed);
    t.states.reserve((horizon + 1) * d);
    t.states.extend(mdp.sample_initial(&mut rng).0);
    let mut next = vec![0u8; d];
    for step in 0..horizon {
        let s = &t.states[step * d..(step + 1) * d];
        let a = policy.sample(s, &mut rng);
        let r = mdp.step_into(s, a, &mut rng, &mut next);
        t.actions.push(a);
        t.rewards.push(r);
        t.states.extend_from_slice(&next);
    }
    t
}

/// `H` logged trajectories with signature metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub n_vars: usize,
    pub gamma: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryBatch {
    pub fn new(n_vars: usize, gamma: usize, n_actions: usize, horizon: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        for (k, t) in trajectories.iter().enumerate() {
            if t.len() != horizon || t.n_vars != n_vars {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {k} has length {} and {} variables; batch expects {horizon} and {n_vars}",
                    t.len(),
                    t.n_vars
                )));
            }
            if t.states.iter().any(|&x| x as usize >= gamma) || t.actions.iter().any(|&a| a >= n_actions) {
                return Err(Error::InvalidArgument(format!("trajectory {k} leaves the model signature")));
            }
        }
        Ok(TrajectoryBatch {
            n_vars,
            gamma,
            n_actions,
            horizon,
            trajectories,
        })
    }

    pub fn empty_like(mdp: &FactoredMdp) -> Self {
        TrajectoryBatch {
            n_vars: mdp.n_vars(),
            gamma: mdp.gamma(),
            n_actions: mdp.n_actions(),
            horizon: mdp.horizon(),
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&[u8], Action, f64, &[u8])> + '_ {
        self.trajectories.iter().flat_map(Trajectory::transitions)
    }

    pub fn initial_states(&self) -> Vec<State> {
        self.trajectories.iter().map(|t| State(t.state(0).to_vec())).collect()
    }

    pub fn check_matches(&self, mdp: &FactoredMdp) -> Result<()> {
        if self.n_vars != mdp.n_vars() || self.gamma != mdp.gamma() || self.n_actions != mdp.n_actions() {
            return Err(Error::SignatureMismatch(format!(
                "batch (D={}, Γ={}, A={}) vs model (D={}, Γ={}, A={})",
                self.n_vars,
                self.gamma,
                self.n_actions,
                mdp.n_vars(),
                mdp.gamma(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    /// SHA-256 over the logged symbols, actions and rewards.
    pub fn data_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.n_vars, self.gamma, self.n_actions, self.horizon, self.len()] {
            h.update((v as u64).to_le_bytes());
        }
        for t in &self.trajectories {
            h.update(&t.states);
            for &a in &t.actions {
                h.update((a as u64).to_le_bytes());
            }
            for &r in &t.rewards {
                h.update(r.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sample `h` trajectories; trajectory `k` uses seed `derive_seed(seed, [k])`,
/// so a batch of size `h` is a prefix of any larger batch with the same seed.
pub fn sample_batch(mdp: &FactoredMdp, policy: &Policy, h: usize, seed: u64) -> Result<TrajectoryBatch> {
    policy.check_compatible(mdp.n_vars(), mdp.gamma(), mdp.n_actions())?;
    let trajectories = (0..h as u64)
        .into_par_iter()
        .map(|k| sample_trajectory(mdp, policy, derive_seed(seed, &[k])))
        .collect();
    Ok(TrajectoryBatch {
        n_vars: mdp.n_vars(),
        gamma: mdp.gamma(),
        n_actions: mdp.n_actions(),
        horizon: mdp.horizon(),
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;

    #[test]
    fn zero_horizon_is_empty() {
        let mdp = domains::copy_chain(3, 2, 2).unwrap().with_horizon(0);
        let t = sample_trajectory(&mdp, &Policy::uniform(2), 1);
        assert!(t.is_empty());
        assert_eq!(t.final_state().len(), 3);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mdp = domains::random_fmdp(5, 2, 3, 9).unwrap().with_horizon(20);
        let p = Policy::uniform(3);
        assert_eq!(sample_trajectory(&mdp, &p, 42), sample_trajectory(&mdp, &p, 42));
        assert_ne!(sample_trajectory(&mdp, &p, 42), sample_trajectory(&mdp, &p, 43));
    }

    #[test]
    fn deterministic_model_and_policy_ignore_seed() {
        let mut mdp = domains::copy_chain(3, 2, 2).unwrap().with_horizon(6);
        // Pin the initial state so only the dynamics matter.
        mdp = FactoredMdp::new(
            3,
            2,
            2,
            6,
            mdp.parents().to_vec(),
            (0..3).map(|i| mdp.cpt(i).to_vec()).collect(),
            mdp.reward_fn().clone(),
            crate::InitialDist::Product {
                marginals: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        )
        .unwrap();
        let p = Policy::constant(2, 2, 1).unwrap();
        let a = sample_trajectory(&mdp, &p, 1);
        let b = sample_trajectory(&mdp, &p, 999);
        assert_eq!(a.states, b.states);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.rewards, b.rewards);
    }

    #[test]
    fn batch_prefix_and_json_round_trip() {
        let mdp = domains::random_fmdp(4, 2, 2, 3).unwrap().with_horizon(5);
        let p = Policy::uniform(2);
        let small = sample_batch(&mdp, &p, 3, 7).unwrap();
        let big = sample_batch(&mdp, &p, 6, 7).unwrap();
        assert_eq!(small.trajectories[..], big.trajectories[..3]);
        let text = serde_json::to_string(&small).unwrap();
        let back: TrajectoryBatch = serde_json::from_str(&text).unwrap();
        assert_eq!(back, small);
        assert_eq!(back.data_hash(), small.data_hash());
        assert_ne!(big.data_hash(), small.data_hash());
    }

    #[test]
    fn batch_rejects_wrong_lengths() {
        let mdp = domains::random_fmdp(4, 2, 2, 3).unwrap().with_horizon(5);
        let b = sample_batch(&mdp, &Policy::uniform(2), 2, 7).unwrap();
        assert!(TrajectoryBatch::new(4, 2, 2, 6, b.trajectories.clone()).is_err());
        assert!(TrajectoryBatch::new(4, 2, 2, 5, b.trajectories).is_ok());
    }
}
