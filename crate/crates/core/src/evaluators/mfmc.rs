use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng as _;

use super::EvalResult;
use crate::fmdp::{McEstimate, Policy, TrajectoryBatch};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfmcOptions {
    /// Neighbours considered per stitch.
    pub k: usize,
    /// Artificial trajectories to build; `None` means one per logged trajectory.
    pub n_artificial: Option<usize>,
}

impl Default for MfmcOptions {
    fn default() -> Self {
        MfmcOptions { k: 1, n_artificial: None }
    }
}

/// Bit-packing of states into a `u128` for fast Hamming distances.
#[derive(Clone, Copy)]
struct Packing {
    bits: u32,
    low: u128,
}

impl Packing {
    fn new(n_vars: usize, gamma: usize) -> Option<Self> {
        let bits = usize::BITS - (gamma - 1).leading_zeros();
        if bits as usize * n_vars > 128 {
            return None;
        }
        let low = (0..n_vars).fold(0u128, |acc, i| acc | 1u128 << (i as u32 * bits));
        Some(Packing { bits, low })
    }

    fn pack(&self, s: &[u8]) -> u128 {
        s.iter()
            .enumerate()
            .fold(0u128, |acc, (i, &x)| acc | (x as u128) << (i as u32 * self.bits))
    }

    /// Number of fields that differ.
    fn hamming(&self, a: u128, b: u128) -> u32 {
        let mut x = a ^ b;
        let mut fold = x;
        for _ in 1..self.bits {
            x >>= 1;
            fold |= x;
        }
        (fold & self.low).count_ones()
    }
}

struct Bucket {
    state: Vec<u8>,
    packed: u128,
    /// Unused transition indices, ascending.
    items: VecDeque<usize>,
}

/// Unused transitions of one action grouped by source state.
#[derive(Default)]
struct Pool {
    buckets: Vec<Bucket>,
    by_state: HashMap<Vec<u8>, usize>,
}

impl Pool {
    fn insert(&mut self, state: &[u8], packed: u128, idx: usize) {
        let slot = *self.by_state.entry(state.to_vec()).or_insert_with(|| {
            self.buckets.push(Bucket {
                state: state.to_vec(),
                packed,
                items: VecDeque::new(),
            });
            self.buckets.len() - 1
        });
        self.buckets[slot].items.push_back(idx);
    }

    fn remove(&mut self, bucket: usize, pos: usize) -> usize {
        let idx = self.buckets[bucket].items.remove(pos).unwrap();
        if self.buckets[bucket].items.is_empty() {
            let gone = self.buckets.swap_remove(bucket);
            self.by_state.remove(&gone.state);
            if bucket < self.buckets.len() {
                let moved = self.buckets[bucket].state.clone();
                self.by_state.insert(moved, bucket);
            }
        }
        idx
    }
}

struct Transition {
    reward: f64,
    next: Vec<u8>,
}

/// Model-free Monte Carlo: stitch logged one-step transitions into
/// artificial target-policy trajectories. Transitions are matched by
/// Hamming distance with equal actions and consumed without replacement
/// across the whole build.
pub fn evaluate_mfmc(batch: &TrajectoryBatch, target: &Policy, options: MfmcOptions, seed: u64) -> Result<EvalResult> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("MFMC needs a nonempty batch".into()));
    }
    if options.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    target.check_compatible(batch.n_vars, batch.gamma, batch.n_actions)?;
    let packing = Packing::new(batch.n_vars, batch.gamma);
    let distance = |a: &Bucket, s: &[u8], ps: u128| -> u32 {
        match packing {
            Some(p) => p.hamming(a.packed, ps),
            None => a.state.iter().zip(s).filter(|(x, y)| x != y).count() as u32,
        }
    };
    let pack = |s: &[u8]| packing.map_or(0, |p| p.pack(s));

    let mut pools: Vec<Pool> = (0..batch.n_actions).map(|_| Pool::default()).collect();
    let mut transitions = Vec::with_capacity(batch.n_transitions());
    for (x, a, r, y) in batch.transitions() {
        pools[a].insert(x, pack(x), transitions.len());
        transitions.push(Transition {
            reward: r,
            next: y.to_vec(),
        });
    }
    let initial = batch.initial_states();
    let n_art = options.n_artificial.unwrap_or(batch.len());
    let mut rng = rng::seeded(seed);
    let mut returns = Vec::with_capacity(n_art);
    let mut truncated = 0usize;
    let mut dist_sum = 0u64;
    let mut stitches = 0usize;
    let mut consumed = vec![false; transitions.len()];

    for _ in 0..n_art {
        let mut s = initial[rng.gen_range(0..initial.len())].0.clone();
        let mut total = 0.0;
        for _ in 0..batch.horizon {
            let a = target.sample(&s, &mut rng);
            let pool = &mut pools[a];
            if pool.buckets.is_empty() {
                truncated += 1;
                break;
            }
            let ps = pack(&s);
            // (bucket, position in bucket, distance) of the chosen transition.
            let (bucket, pos, dist) = if let (1, Some(&b)) = (options.k, pool.by_state.get(&s)) {
                (b, 0, 0)
            } else {
                let mut ranked: Vec<(u32, usize)> = pool
                    .buckets
                    .iter()
                    .enumerate()
                    .map(|(b, bk)| (distance(bk, &s, ps), b))
                    .collect();
                ranked.sort_unstable_by_key(|&(d, b)| (d, pool.buckets[b].items[0]));
                // k nearest by (distance, transition index).
                let mut cands: Vec<(u32, usize, usize, usize)> = Vec::new();
                let mut cutoff = u32::MAX;
                for &(d, b) in &ranked {
                    if d > cutoff {
                        break;
                    }
                    for (p, &idx) in pool.buckets[b].items.iter().enumerate() {
                        cands.push((d, idx, b, p));
                    }
                    if cands.len() >= options.k {
                        cutoff = d;
                    }
                }
                cands.sort_unstable();
                cands.truncate(options.k);
                let (d, _, b, p) = cands[rng.gen_range(0..cands.len())];
                (b, p, d)
            };
            let idx = pool.remove(bucket, pos);
            debug_assert!(!consumed[idx]);
            consumed[idx] = true;
            dist_sum += dist as u64;
            stitches += 1;
            total += transitions[idx].reward;
            s.clone_from(&transitions[idx].next);
        }
        returns.push(total);
    }
    let est = McEstimate::from_samples(&returns);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("truncation_rate".into(), truncated as f64 / n_art.max(1) as f64);
    diagnostics.insert(
        "mean_distance".into(),
        if stitches > 0 { dist_sum as f64 / stitches as f64 } else { 0.0 },
    );
    diagnostics.insert("consumed".into(), stitches as f64);
    Ok(EvalResult {
        method: "mfmc".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n: n_art,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, make_taxi};
    use crate::fmdp::{sample_batch, FactoredMdp, InitialDist, Reward};

    #[test]
    fn hamming_on_packed_states() {
        let p = Packing::new(4, 5).unwrap();
        assert_eq!(p.bits, 3);
        let a = p.pack(&[0, 4, 2, 1]);
        let b = p.pack(&[0, 3, 2, 0]);
        assert_eq!(p.hamming(a, b), 2);
        assert_eq!(p.hamming(a, a), 0);
        assert!(Packing::new(20, 2).is_some());
        assert!(Packing::new(40, 16).is_none());
    }

    #[test]
    fn on_policy_deterministic_data_is_replayed() {
        let m = copy_chain(3, 2, 2).unwrap().with_horizon(10);
        let target = Policy::constant(2, 2, 1).unwrap();
        for seed in 0..4 {
            let b = sample_batch(&m, &target, 1, seed).unwrap();
            let r = evaluate_mfmc(&b, &target, MfmcOptions::default(), 9).unwrap();
            assert_eq!(r.diagnostic("mean_distance"), Some(0.0));
            assert_eq!(r.diagnostic("truncation_rate"), Some(0.0));
            assert_eq!(r.diagnostic("consumed"), Some(10.0));
            assert_eq!(r.estimate, b.trajectories[0].total_reward());
        }
    }

    #[test]
    fn zero_reward_gives_zero() {
        let base = copy_chain(3, 2, 2).unwrap();
        let m = FactoredMdp::new(
            3,
            2,
            2,
            5,
            base.parents().to_vec(),
            (0..3).map(|i| base.cpt(i).to_vec()).collect(),
            Reward::Constant { value: 0.0 },
            InitialDist::uniform_product(3, 2),
        )
        .unwrap();
        let b = sample_batch(&m, &Policy::uniform(2), 20, 0).unwrap();
        let r = evaluate_mfmc(&b, &Policy::uniform(2), MfmcOptions { k: 3, n_artificial: Some(10) }, 0).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn transitions_used_at_most_once() {
        let m = make_taxi().with_horizon(20);
        let b = sample_batch(&m, &Policy::uniform(6), 10, 4).unwrap();
        let r = evaluate_mfmc(&b, &Policy::uniform(6), MfmcOptions { k: 2, n_artificial: Some(30) }, 1).unwrap();
        assert!(r.diagnostic("consumed").unwrap() <= 200.0);
        assert!(r.diagnostic("truncation_rate").unwrap() > 0.0);
        assert!(evaluate_mfmc(&TrajectoryBatch::empty_like(&m), &Policy::uniform(6), MfmcOptions::default(), 0).is_err());
    }
}
