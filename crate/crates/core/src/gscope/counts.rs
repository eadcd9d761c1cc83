use std::collections::HashMap;

use crate::fmdp::{checked_pow, realization_rank, Action, TrajectoryBatch};
use crate::{Error, Result};

/// Dense tables up to this many cells; hash maps beyond.
const DENSE_LIMIT: usize = 1 << 20;

#[derive(Clone, Debug)]
enum Table {
    Dense(Vec<u64>),
    Sparse(HashMap<usize, Vec<u64>>),
}

/// Tallies `n(y, v, a)` for one target variable and an ordered candidate
/// scope `Ψ`, over every transition in a batch. Rows are keyed by
/// `rank(v) · A + a`.
#[derive(Clone, Debug)]
pub struct CountStore {
    target: usize,
    scope: Vec<usize>,
    gamma: usize,
    n_actions: usize,
    n_realizations: usize,
    total: u64,
    table: Table,
}

impl CountStore {
    /// Count `(X_t(scope), a_t, X_{t+1}(target))` over all trajectories.
    pub fn from_batch(batch: &TrajectoryBatch, target: usize, scope: &[usize]) -> Result<Self> {
        let (g, na) = (batch.gamma, batch.n_actions);
        if target >= batch.n_vars || scope.iter().any(|&j| j >= batch.n_vars) {
            return Err(Error::InvalidArgument(format!(
                "variable index out of range for D = {}",
                batch.n_vars
            )));
        }
        let n_realizations = checked_pow(g, scope.len()).ok_or(Error::TooLarge {
            what: "parent realizations",
            size: u128::MAX,
            limit: usize::MAX as u128,
        })?;
        let cells = n_realizations
            .checked_mul(na)
            .and_then(|x| x.checked_mul(g))
            .unwrap_or(usize::MAX);
        let mut store = CountStore {
            target,
            scope: scope.to_vec(),
            gamma: g,
            n_actions: na,
            n_realizations,
            total: 0,
            table: if cells <= DENSE_LIMIT {
                Table::Dense(vec![0; cells])
            } else {
                Table::Sparse(HashMap::new())
            },
        };
        for (x, a, _, y) in batch.transitions() {
            let key = realization_rank(x, scope, g) * na + a;
            let yv = y[target] as usize;
            match &mut store.table {
                Table::Dense(v) => v[key * g + yv] += 1,
                Table::Sparse(m) => m.entry(key).or_insert_with(|| vec![0; g])[yv] += 1,
            }
            store.total += 1;
        }
        Ok(store)
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_realizations(&self) -> usize {
        self.n_realizations
    }

    /// `Σ_{v,a} n(v, a)`: the number of transitions counted.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Rank of a realization given in scope order.
    pub fn rank_of(&self, v: &[u8]) -> usize {
        v.iter().fold(0, |acc, &x| acc * self.gamma + x as usize)
    }

    /// `n(·, v, a)`, or `None` if never observed.
    pub fn row(&self, rank: usize, a: Action) -> Option<&[u64]> {
        let key = rank * self.n_actions + a;
        match &self.table {
            Table::Dense(v) => {
                let row = &v[key * self.gamma..(key + 1) * self.gamma];
                row.iter().any(|&c| c > 0).then_some(row)
            }
            Table::Sparse(m) => m.get(&key).map(Vec::as_slice),
        }
    }

    /// `n(v, a)`.
    pub fn n(&self, rank: usize, a: Action) -> u64 {
        self.row(rank, a).map_or(0, |r| r.iter().sum())
    }

    /// `n(y, v, a)`.
    pub fn n_y(&self, y: usize, rank: usize, a: Action) -> u64 {
        self.row(rank, a).map_or(0, |r| r[y])
    }

    /// Observed rows as `(rank, a, counts)`, ascending by `(rank, a)`.
    pub fn rows(&self) -> Vec<(usize, Action, &[u64])> {
        let (g, na) = (self.gamma, self.n_actions);
        match &self.table {
            Table::Dense(v) => v
                .chunks_exact(g)
                .enumerate()
                .filter(|(_, row)| row.iter().any(|&c| c > 0))
                .map(|(key, row)| (key / na, key % na, row))
                .collect(),
            Table::Sparse(m) => {
                let mut keys: Vec<usize> = m.keys().copied().collect();
                keys.sort_unstable();
                keys.into_iter()
                    .map(|key| (key / na, key % na, m[&key].as_slice()))
                    .collect()
            }
        }
    }

    /// `P̂(Y(target) | X(scope) = v, a)` by rank.
    pub fn cpt_at(&self, rank: usize, a: Action) -> Result<Vec<f64>> {
        match self.row(rank, a) {
            Some(row) => Ok(normalize(row)),
            None => Err(Error::Unobserved {
                var: self.target,
                rank,
                action: a,
            }),
        }
    }
}

pub(crate) fn normalize(row: &[u64]) -> Vec<f64> {
    let n: u64 = row.iter().sum();
    row.iter().map(|&c| c as f64 / n as f64).collect()
}

/// `P̂(y | v, a) = n(y, v, a) / n(v, a)` for a realization `v` in scope order.
/// Errors when `n(v, a) = 0`.
pub fn empirical_cpt(counts: &CountStore, v: &[u8], a: Action) -> Result<Vec<f64>> {
    if v.len() != counts.scope.len() || v.iter().any(|&x| x as usize >= counts.gamma) || a >= counts.n_actions {
        return Err(Error::InvalidArgument(format!(
            "realization {v:?} / action {a} does not fit the count table"
        )));
    }
    counts.cpt_at(counts.rank_of(v), a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmdp::{State, Trajectory};

    fn batch_from(pairs: &[([u8; 2], usize, [u8; 2])]) -> TrajectoryBatch {
        let ts = pairs
            .iter()
            .map(|(x, a, y)| {
                Trajectory::from_parts(&[State(x.to_vec()), State(y.to_vec())], vec![*a], vec![0.0], 0).unwrap()
            })
            .collect();
        TrajectoryBatch::new(2, 2, 2, 1, ts).unwrap()
    }

    #[test]
    fn three_to_one() {
        let b = batch_from(&[
            ([1, 0], 0, [0, 0]),
            ([1, 1], 0, [0, 0]),
            ([1, 0], 0, [0, 1]),
            ([1, 0], 0, [1, 0]),
            ([0, 0], 1, [1, 1]),
        ]);
        let c = CountStore::from_batch(&b, 0, &[0]).unwrap();
        assert_eq!(empirical_cpt(&c, &[1], 0).unwrap(), vec![0.75, 0.25]);
        assert_eq!(empirical_cpt(&c, &[0], 1).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(empirical_cpt(&c, &[0], 0), Err(Error::Unobserved { .. })));
        assert_eq!(c.total(), 5);
        assert_eq!(c.n(1, 0), 4);
        assert_eq!(c.n_y(0, 1, 0), 3);
    }

    #[test]
    fn point_mass() {
        let b = batch_from(&[([0, 1], 1, [0, 1]); 5]);
        let c = CountStore::from_batch(&b, 1, &[1, 0]).unwrap();
        assert_eq!(empirical_cpt(&c, &[1, 0], 1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(c.rows().len(), 1);
    }

    #[test]
    fn empty_scope_counts_everything() {
        let b = batch_from(&[([0, 1], 1, [0, 1]), ([1, 1], 0, [1, 1])]);
        let c = CountStore::from_batch(&b, 0, &[]).unwrap();
        assert_eq!(c.n(0, 0) + c.n(0, 1), 2);
        assert_eq!(c.rank_of(&[]), 0);
    }
}
