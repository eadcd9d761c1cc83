use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;

use super::{rollout_result, EvalResult, Simulator};
use crate::fmdp::{checked_pow, flat_index, Action, FactoredMdp, Policy, State, TrajectoryBatch, MAX_ENUMERABLE_STATES};
use crate::rng::Rng;
use crate::{Error, Result};

/// Tabular empirical model `P̂(s' | s, a)` over flat state indices. Every
/// observed `(s, a)` is known; anything else triggers the fallback.
#[derive(Clone, Debug)]
pub struct FlatModel {
    n_vars: usize,
    gamma: usize,
    n_actions: usize,
    /// `(s · A + a) → (cumulative counts, successor states)`.
    rows: HashMap<usize, (Vec<u64>, Vec<State>)>,
    initial: Vec<State>,
}

impl FlatModel {
    /// Refuses when `Γ^D` exceeds the enumeration guard.
    pub fn build(batch: &TrajectoryBatch) -> Result<Self> {
        let size = checked_pow(batch.gamma, batch.n_vars);
        if size.is_none_or(|s| s > MAX_ENUMERABLE_STATES) {
            return Err(Error::TooLarge {
                what: "flat state space",
                size: (batch.gamma as u128).saturating_pow(batch.n_vars as u32),
                limit: MAX_ENUMERABLE_STATES as u128,
            });
        }
        let mut tallies: HashMap<usize, BTreeMap<usize, u64>> = HashMap::new();
        for (x, a, _, y) in batch.transitions() {
            let key = flat_index(x, batch.gamma) * batch.n_actions + a;
            *tallies.entry(key).or_default().entry(flat_index(y, batch.gamma)).or_insert(0) += 1;
        }
        let rows = tallies
            .into_iter()
            .map(|(key, succ)| {
                let mut cum = Vec::with_capacity(succ.len());
                let mut states = Vec::with_capacity(succ.len());
                let mut acc = 0;
                for (idx, c) in succ {
                    acc += c;
                    cum.push(acc);
                    states.push(State::from_flat(idx, batch.n_vars, batch.gamma));
                }
                (key, (cum, states))
            })
            .collect();
        Ok(FlatModel {
            n_vars: batch.n_vars,
            gamma: batch.gamma,
            n_actions: batch.n_actions,
            rows,
            initial: batch.initial_states(),
        })
    }

    /// Number of distinct observed `(s, a)` pairs.
    pub fn n_known(&self) -> usize {
        self.rows.len()
    }
}

impl Simulator for FlatModel {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn sample_initial(&self, rng: &mut Rng, out: &mut [u8]) -> bool {
        if self.initial.is_empty() {
            return false;
        }
        out.copy_from_slice(&self.initial[rng.gen_range(0..self.initial.len())].0);
        true
    }

    fn step_into(&self, s: &[u8], a: Action, rng: &mut Rng, out: &mut [u8]) -> bool {
        let key = flat_index(s, self.gamma) * self.n_actions + a;
        let Some((cum, states)) = self.rows.get(&key) else {
            return false;
        };
        let u = rng.gen_range(0..*cum.last().unwrap());
        let k = cum.partition_point(|&c| c <= u);
        out.copy_from_slice(&states[k].0);
        true
    }
}

/// Tabular baseline: empirical flat model plus the same fallback contract.
pub fn evaluate_flat(batch: &TrajectoryBatch, mdp: &FactoredMdp, target: &Policy, n_rollouts: usize, seed: u64) -> Result<EvalResult> {
    batch.check_matches(mdp)?;
    let model = FlatModel::build(batch)?;
    let mut r = rollout_result("flat", &model, mdp, target, n_rollouts, seed)?;
    r.diagnostics.insert("known_pairs".into(), model.n_known() as f64);
    Ok(r)
}
