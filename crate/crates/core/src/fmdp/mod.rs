//! Factored MDP data model and dynamics.
//!
//! States are length-`D` vectors of symbols in `0..Γ`. Each next-state
//! variable `i` is drawn independently from a conditional probability table
//! indexed by the realization of its parent set `Φᵢ` and the action.
//!
//! Realizations are ranked mixed-radix with the first listed index most
//! significant; that rank is the row index of every CPT, count table and
//! serialized key in the crate.

mod io;
mod policy;
mod trajectory;
mod value;

pub use io::FmdpDocument;
pub use policy::Policy;
pub use trajectory::{sample_batch, sample_trajectory, Trajectory, TrajectoryBatch};
pub use value::{exact_value, monte_carlo_value, FlatDynamics, McEstimate, MAX_ENUMERABLE_STATES};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

pub type Action = usize;

/// Normalization tolerance used for every probability vector.
pub const PROB_TOL: f64 = 1e-9;

/// A full factored state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<u8>);

impl State {
    pub fn new(values: Vec<u8>) -> Self {
        State(values)
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Decode a flat index (first variable most significant).
    pub fn from_flat(mut index: usize, n_vars: usize, gamma: usize) -> Self {
        let mut v = vec![0u8; n_vars];
        for slot in v.iter_mut().rev() {
            *slot = (index % gamma) as u8;
            index /= gamma;
        }
        State(v)
    }
}

/// Mixed-radix rank of `values` restricted to `scope`, first scope entry most
/// significant.
#[inline]
pub fn realization_rank(values: &[u8], scope: &[usize], gamma: usize) -> usize {
    scope
        .iter()
        .fold(0usize, |acc, &j| acc * gamma + values[j] as usize)
}

/// Flat index of a full state.
#[inline]
pub fn flat_index(values: &[u8], gamma: usize) -> usize {
    values.iter().fold(0usize, |acc, &x| acc * gamma + x as usize)
}

/// Inverse of [`realization_rank`]: the symbol values of a rank, in scope order.
pub fn realization_values(mut rank: usize, len: usize, gamma: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    for slot in v.iter_mut().rev() {
        *slot = (rank % gamma) as u8;
        rank /= gamma;
    }
    v
}

/// `gamma^exp`, or `None` on overflow.
pub fn checked_pow(gamma: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(gamma))
}

/// Known reward function `R(s, a)` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Reward {
    Constant { value: f64 },
    /// 1 when `X(var) == value`, else 0.
    Indicator { var: usize, value: u8 },
    /// 1 when `X(var) == a`, else 0.
    ActionMatch { var: usize },
    /// Explicit table indexed `[flat state][action]`.
    Table { values: Vec<f64> },
}

impl Reward {
    #[inline]
    pub fn eval(&self, s: &[u8], a: Action, gamma: usize, n_actions: usize) -> f64 {
        match self {
            Reward::Constant { value } => *value,
            Reward::Indicator { var, value } => (s[*var] == *value) as u8 as f64,
            Reward::ActionMatch { var } => (s[*var] as usize == a) as u8 as f64,
            Reward::Table { values } => values[flat_index(s, gamma) * n_actions + a],
        }
    }
}

/// Initial-state distribution `ρ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum InitialDist {
    /// Independent per-variable marginals.
    Product { marginals: Vec<Vec<f64>> },
    /// Explicit distribution over flat state indices.
    Table { probs: Vec<f64> },
}

impl InitialDist {
    pub fn uniform_product(n_vars: usize, gamma: usize) -> Self {
        InitialDist::Product {
            marginals: vec![vec![1.0 / gamma as f64; gamma]; n_vars],
        }
    }

    pub fn sample_into(&self, gamma: usize, rng: &mut Rng, out: &mut [u8]) {
        match self {
            InitialDist::Product { marginals } => {
                for (slot, m) in out.iter_mut().zip(marginals) {
                    *slot = sample_categorical(m, rng) as u8;
                }
            }
            InitialDist::Table { probs } => {
                let mut idx = sample_categorical(probs, rng);
                for slot in out.iter_mut().rev() {
                    *slot = (idx % gamma) as u8;
                    idx /= gamma;
                }
            }
        }
    }

    /// Probability of a full state.
    pub fn prob(&self, s: &[u8], gamma: usize) -> f64 {
        match self {
            InitialDist::Product { marginals } => marginals
                .iter()
                .zip(s)
                .map(|(m, &x)| m[x as usize])
                .product(),
            InitialDist::Table { probs } => probs[flat_index(s, gamma)],
        }
    }
}

/// Draw an index from a probability vector.
#[inline]
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidModel(format!("{what}: negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {s}, expected 1")));
    }
    Ok(())
}

/// A factored MDP with uniform variable domain `0..gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FmdpDocument", into = "FmdpDocument")]
pub struct FactoredMdp {
    n_vars: usize,
    gamma: usize,
    n_actions: usize,
    horizon: usize,
    parents: Vec<Vec<usize>>,
    /// Per variable, flattened `[rank][action][y]`.
    cpts: Vec<Vec<f64>>,
    reward: Reward,
    rho: InitialDist,
}

impl FactoredMdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_vars: usize,
        gamma: usize,
        n_actions: usize,
        horizon: usize,
        parents: Vec<Vec<usize>>,
        cpts: Vec<Vec<f64>>,
        reward: Reward,
        rho: InitialDist,
    ) -> Result<Self> {
        let mdp = FactoredMdp {
            n_vars,
            gamma,
            n_actions,
            horizon,
            parents,
            cpts,
            reward,
            rho,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (d, g, na) = (self.n_vars, self.gamma, self.n_actions);
        if d == 0 {
            return Err(Error::InvalidModel("D must be at least 1".into()));
        }
        if !(2..=255).contains(&g) {
            return Err(Error::InvalidModel(format!("gamma = {g} outside 2..=255")));
        }
        if na == 0 {
            return Err(Error::InvalidModel("at least one action required".into()));
        }
        if self.parents.len() != d || self.cpts.len() != d {
            return Err(Error::InvalidModel(format!(
                "expected {d} parent sets and CPTs, got {} and {}",
                self.parents.len(),
                self.cpts.len()
            )));
        }
        for (i, ps) in self.parents.iter().enumerate() {
            if ps.windows(2).any(|w| w[0] >= w[1]) || ps.iter().any(|&p| p >= d) {
                return Err(Error::InvalidModel(format!(
                    "parents of {i} must be sorted, distinct and < D: {ps:?}"
                )));
            }
            let rows = checked_pow(g, ps.len())
                .and_then(|r| r.checked_mul(na * g))
                .ok_or_else(|| Error::InvalidModel(format!("CPT of {i} too large")))?;
            if self.cpts[i].len() != rows {
                return Err(Error::InvalidModel(format!(
                    "CPT of {i} has {} entries, expected {rows}",
                    self.cpts[i].len()
                )));
            }
            for (r, row) in self.cpts[i].chunks(g).enumerate() {
                check_distribution(row, &format!("CPT {i} row {r}"))?;
            }
        }
        match &self.reward {
            Reward::Constant { value } => check_unit(*value)?,
            Reward::Indicator { var, value } => {
                if *var >= d || *value as usize >= g {
                    return Err(Error::InvalidModel("indicator reward out of range".into()));
                }
            }
            Reward::ActionMatch { var } => {
                if *var >= d {
                    return Err(Error::InvalidModel("action-match reward var out of range".into()));
                }
            }
            Reward::Table { values } => {
                let n = self
                    .flat_size()
                    .ok_or_else(|| Error::InvalidModel("reward table on huge state space".into()))?;
                if values.len() != n * na {
                    return Err(Error::InvalidModel(format!(
                        "reward table has {} entries, expected {}",
                        values.len(),
                        n * na
                    )));
                }
                for &v in values {
                    check_unit(v)?;
                }
            }
        }
        match &self.rho {
            InitialDist::Product { marginals } => {
                if marginals.len() != d || marginals.iter().any(|m| m.len() != g) {
                    return Err(Error::InvalidModel("rho marginals have wrong shape".into()));
                }
                for (i, m) in marginals.iter().enumerate() {
                    check_distribution(m, &format!("rho marginal {i}"))?;
                }
            }
            InitialDist::Table { probs } => {
                if Some(probs.len()) != self.flat_size() {
                    return Err(Error::InvalidModel("rho table has wrong length".into()));
                }
                check_distribution(probs, "rho table")?;
            }
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn parents(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn reward_fn(&self) -> &Reward {
        &self.reward
    }

    pub fn rho(&self) -> &InitialDist {
        &self.rho
    }

    /// Flattened `[rank][action][y]` table of variable `i`.
    pub fn cpt(&self, i: usize) -> &[f64] {
        &self.cpts[i]
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// `Γ^D`, or `None` if it overflows.
    pub fn flat_size(&self) -> Option<usize> {
        checked_pow(self.gamma, self.n_vars)
    }

    #[inline]
    pub fn cpt_row(&self, i: usize, rank: usize, a: Action) -> &[f64] {
        let g = self.gamma;
        let off = (rank * self.n_actions + a) * g;
        &self.cpts[i][off..off + g]
    }

    /// `Pr(Y(i) = · | X = s, a)`.
    #[inline]
    pub fn next_var_dist(&self, i: usize, s: &[u8], a: Action) -> &[f64] {
        self.cpt_row(i, realization_rank(s, &self.parents[i], self.gamma), a)
    }

    #[inline]
    pub fn reward(&self, s: &[u8], a: Action) -> f64 {
        self.reward.eval(s, a, self.gamma, self.n_actions)
    }

    pub fn is_valid_state(&self, s: &[u8]) -> bool {
        s.len() == self.n_vars && s.iter().all(|&x| (x as usize) < self.gamma)
    }

    /// Sample the next state into `out` and return `R(s, a)`.
    #[inline]
    pub fn step_into(&self, s: &[u8], a: Action, rng: &mut Rng, out: &mut [u8]) -> f64 {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = sample_categorical(self.next_var_dist(i, s, a), rng) as u8;
        }
        self.reward(s, a)
    }

    /// One transition: each next-state variable drawn from its CPT row.
    pub fn step(&self, s: &State, a: Action, rng: &mut Rng) -> Result<(State, f64)> {
        if !self.is_valid_state(&s.0) {
            return Err(Error::InvalidArgument(format!("invalid state {:?}", s.0)));
        }
        if a >= self.n_actions {
            return Err(Error::InvalidArgument(format!("action {a} >= A = {}", self.n_actions)));
        }
        let mut next = vec![0u8; self.n_vars];
        let r = self.step_into(&s.0, a, rng, &mut next);
        Ok((State(next), r))
    }

    /// Exact `Pr(Y = y | X = s, a)` as a product of CPT entries.
    pub fn transition_prob(&self, s: &[u8], a: Action, y: &[u8]) -> f64 {
        (0..self.n_vars)
            .map(|i| self.next_var_dist(i, s, a)[y[i] as usize])
            .product()
    }

    pub fn sample_initial(&self, rng: &mut Rng) -> State {
        let mut s = vec![0u8; self.n_vars];
        self.rho.sample_into(self.gamma, rng, &mut s);
        State(s)
    }

    /// The same process with variables relabelled: new variable `k` is old
    /// variable `perm[k]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let d = self.n_vars;
        let mut seen = vec![false; d];
        if perm.len() != d || perm.iter().any(|&p| p >= d || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let mut inv = vec![0; d];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let g = self.gamma;
        let na = self.n_actions;
        let mut parents = Vec::with_capacity(d);
        let mut cpts = Vec::with_capacity(d);
        for &old in perm {
            let old_parents = &self.parents[old];
            let mut new_parents: Vec<usize> = old_parents.iter().map(|&p| inv[p]).collect();
            new_parents.sort_unstable();
            let rows = checked_pow(g, new_parents.len()).unwrap();
            let mut table = vec![0.0; rows * na * g];
            let mut full = vec![0u8; d];
            for rank in 0..rows {
                let vals = realization_values(rank, new_parents.len(), g);
                for (&np, &v) in new_parents.iter().zip(&vals) {
                    full[perm[np]] = v;
                }
                let old_rank = realization_rank(&full, old_parents, g);
                for a in 0..na {
                    let dst = (rank * na + a) * g;
                    table[dst..dst + g].copy_from_slice(self.cpt_row(old, old_rank, a));
                }
            }
            parents.push(new_parents);
            cpts.push(table);
        }
        let map_state = |new: &[u8]| -> Vec<u8> {
            let mut old = vec![0u8; d];
            for (k, &p) in perm.iter().enumerate() {
                old[p] = new[k];
            }
            old
        };
        let reward = match &self.reward {
            Reward::Constant { value } => Reward::Constant { value: *value },
            Reward::Indicator { var, value } => Reward::Indicator { var: inv[*var], value: *value },
            Reward::ActionMatch { var } => Reward::ActionMatch { var: inv[*var] },
            Reward::Table { values } => {
                let n = self.flat_size().unwrap();
                let mut out = vec![0.0; values.len()];
                for idx in 0..n {
                    let new = State::from_flat(idx, d, g);
                    let old = flat_index(&map_state(&new.0), g);
                    out[idx * na..(idx + 1) * na].copy_from_slice(&values[old * na..(old + 1) * na]);
                }
                Reward::Table { values: out }
            }
        };
        let rho = match &self.rho {
            InitialDist::Product { marginals } => InitialDist::Product {
                marginals: perm.iter().map(|&p| marginals[p].clone()).collect(),
            },
            InitialDist::Table { probs } => {
                let n = probs.len();
                let mut out = vec![0.0; n];
                for (idx, slot) in out.iter_mut().enumerate() {
                    let new = State::from_flat(idx, d, g);
                    *slot = probs[flat_index(&map_state(&new.0), g)];
                }
                InitialDist::Table { probs: out }
            }
        };
        FactoredMdp::new(d, g, na, self.horizon, parents, cpts, reward, rho)
    }
}

fn check_unit(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("reward {v} outside [0, 1]")))
    }
}
