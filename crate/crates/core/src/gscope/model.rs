use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::counts::{normalize, CountStore};
use super::threshold::Thresholds;
use crate::domains::DomainSpec;
use crate::fmdp::{
    checked_pow, realization_rank, sample_categorical, Action, FactoredMdp, InitialDist, State, TrajectoryBatch,
};
use crate::rng::Rng;
use crate::{Error, Result};

const DENSE_ROWS: usize = 1 << 16;
const MISSING: u32 = u32::MAX;

/// Where rollouts on a learned model start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum InitialStates {
    /// A known initial distribution.
    Known(InitialDist),
    /// Uniform over logged initial states (with repetition).
    Empirical(Vec<State>),
}

impl InitialStates {
    /// Fills `out`; returns `false` when there is nothing to sample from.
    pub fn sample_into(&self, gamma: usize, rng: &mut Rng, out: &mut [u8]) -> bool {
        use rand::Rng as _;
        match self {
            InitialStates::Known(rho) => {
                rho.sample_into(gamma, rng, out);
                true
            }
            InitialStates::Empirical(states) if states.is_empty() => false,
            InitialStates::Empirical(states) => {
                out.copy_from_slice(&states[rng.gen_range(0..states.len())].0);
                true
            }
        }
    }
}

/// Where the data behind a model came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_hash: Option<String>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// Row lookup `(rank · A + a) → offset` for one variable.
#[derive(Clone, Debug)]
enum RowIndex {
    Dense(Vec<u32>),
    Sparse(HashMap<usize, u32>),
}

impl RowIndex {
    fn new(n_rows: usize) -> Self {
        if n_rows <= DENSE_ROWS {
            RowIndex::Dense(vec![MISSING; n_rows])
        } else {
            RowIndex::Sparse(HashMap::new())
        }
    }

    fn insert(&mut self, key: usize, slot: u32) {
        match self {
            RowIndex::Dense(v) => v[key] = slot,
            RowIndex::Sparse(m) => {
                m.insert(key, slot);
            }
        }
    }

    #[inline]
    fn get(&self, key: usize) -> Option<usize> {
        match self {
            RowIndex::Dense(v) => v.get(key).copied().filter(|&x| x != MISSING).map(|x| x as usize),
            RowIndex::Sparse(m) => m.get(&key).map(|&x| x as usize),
        }
    }

    fn keys(&self) -> Vec<usize> {
        let mut keys: Vec<usize> = match self {
            RowIndex::Dense(v) => (0..v.len()).filter(|&k| v[k] != MISSING).collect(),
            RowIndex::Sparse(m) => m.keys().copied().collect(),
        };
        keys.sort_unstable();
        keys
    }
}

#[derive(Clone, Debug)]
struct VarTable {
    index: RowIndex,
    probs: Vec<f64>,
}

impl VarTable {
    fn new(n_rows: usize) -> Self {
        VarTable {
            index: RowIndex::new(n_rows),
            probs: Vec::new(),
        }
    }

    fn push(&mut self, key: usize, row: &[f64]) {
        let slot = (self.probs.len() / row.len()) as u32;
        self.index.insert(key, slot);
        self.probs.extend_from_slice(row);
    }
}

/// Estimated factored model: parent sets, empirical CPT rows for the known
/// set `K`, and the induced-MDP fallback for everything else.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct LearnedModel {
    n_vars: usize,
    gamma: usize,
    n_actions: usize,
    horizon: usize,
    parents: Vec<Vec<usize>>,
    thresholds: Thresholds,
    tables: Vec<VarTable>,
    initial: InitialStates,
    provenance: Provenance,
}

impl LearnedModel {
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

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn initial(&self) -> &InitialStates {
        &self.initial
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_initial(mut self, initial: InitialStates) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// The true model with every row marked sufficient.
    pub fn from_true_model(mdp: &FactoredMdp) -> Self {
        let (g, na) = (mdp.gamma(), mdp.n_actions());
        let tables = (0..mdp.n_vars())
            .map(|i| {
                let n_rows = g.pow(mdp.parents()[i].len() as u32) * na;
                let mut t = VarTable::new(n_rows);
                for key in 0..n_rows {
                    t.push(key, mdp.cpt_row(i, key / na, key % na));
                }
                t
            })
            .collect();
        LearnedModel {
            n_vars: mdp.n_vars(),
            gamma: g,
            n_actions: na,
            horizon: mdp.horizon(),
            parents: mdp.parents().to_vec(),
            thresholds: Thresholds {
                eps: 0.0,
                delta1: 0.0,
                c2: 0.0,
                n: 0,
            },
            tables,
            initial: InitialStates::Known(mdp.rho().clone()),
            provenance: Provenance::default(),
        }
    }

    /// The stored row `P̂(Y(i) | X(Φ̂ᵢ) = rank, a)`, if sufficient.
    pub fn cpt_row(&self, i: usize, rank: usize, a: Action) -> Option<&[f64]> {
        let t = &self.tables[i];
        t.index
            .get(rank * self.n_actions + a)
            .map(|slot| &t.probs[slot * self.gamma..(slot + 1) * self.gamma])
    }

    pub fn is_sufficient(&self, i: usize, rank: usize, a: Action) -> bool {
        self.cpt_row(i, rank, a).is_some()
    }

    /// Number of sufficient rows per variable.
    pub fn sufficient_counts(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.probs.len() / self.gamma).collect()
    }

    /// `true` when `(s, a)` is in the known set: every factor's row is sufficient.
    pub fn is_known(&self, s: &[u8], a: Action) -> bool {
        (0..self.n_vars).all(|i| self.is_sufficient(i, realization_rank(s, &self.parents[i], self.gamma), a))
    }

    /// Samples the next state into `out`. Returns `false` (leaving `out`
    /// unspecified) when `(s, a)` lies outside the known set.
    #[inline]
    pub fn step_into(&self, s: &[u8], a: Action, rng: &mut Rng, out: &mut [u8]) -> bool {
        debug_assert_eq!(out.len(), self.n_vars);
        for (i, (slot, ps)) in out.iter_mut().zip(&self.parents).enumerate() {
            let rank = realization_rank(s, ps, self.gamma);
            match self.cpt_row(i, rank, a) {
                Some(row) => *slot = sample_categorical(row, rng) as u8,
                None => return false,
            }
        }
        true
    }

    pub fn check_matches(&self, mdp: &FactoredMdp) -> Result<()> {
        if (self.n_vars, self.gamma, self.n_actions) != (mdp.n_vars(), mdp.gamma(), mdp.n_actions()) {
            return Err(Error::SignatureMismatch(format!(
                "model (D={}, gamma={}, A={}) vs MDP (D={}, gamma={}, A={})",
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

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_parents(parents: &[Vec<usize>], n_vars: usize) -> Result<()> {
    if parents.len() != n_vars {
        return Err(Error::InvalidArgument(format!(
            "{} parent sets for {n_vars} variables",
            parents.len()
        )));
    }
    for (i, ps) in parents.iter().enumerate() {
        if ps.iter().any(|&j| j >= n_vars) || ps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "parent set {ps:?} of variable {i} must be sorted, distinct and < {n_vars}"
            )));
        }
    }
    Ok(())
}

/// Empirical CPTs on the given parent sets. A row is stored (and marked
/// sufficient) iff `n(v, a) ≥ N`. Rollouts start from the logged initial states.
pub fn build_model(batch: &TrajectoryBatch, parents: &[Vec<usize>], thresholds: &Thresholds) -> Result<LearnedModel> {
    check_parents(parents, batch.n_vars)?;
    let (g, na) = (batch.gamma, batch.n_actions);
    let mut tables = Vec::with_capacity(batch.n_vars);
    for (i, ps) in parents.iter().enumerate() {
        let counts = CountStore::from_batch(batch, i, ps)?;
        let n_rows = counts.n_realizations().saturating_mul(na);
        let mut t = VarTable::new(n_rows);
        for (rank, a, row) in counts.rows() {
            if row.iter().sum::<u64>() >= thresholds.n {
                t.push(rank * na + a, &normalize(row));
            }
        }
        tables.push(t);
    }
    Ok(LearnedModel {
        n_vars: batch.n_vars,
        gamma: g,
        n_actions: na,
        horizon: batch.horizon,
        parents: parents.to_vec(),
        thresholds: *thresholds,
        tables,
        initial: InitialStates::Empirical(batch.initial_states()),
        provenance: Provenance {
            domain: None,
            data_hash: Some(batch.data_hash()),
            seeds: Vec::new(),
        },
    })
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    #[serde(rename = "D")]
    n_vars: usize,
    gamma: usize,
    #[serde(rename = "A")]
    n_actions: usize,
    horizon: usize,
    phi_hat: Vec<Vec<usize>>,
    thresholds: Thresholds,
    cpts: BTreeMap<String, Vec<f64>>,
    sufficient: BTreeMap<String, bool>,
    initial_states: InitialStates,
    #[serde(default)]
    provenance: Provenance,
}

fn parse_key(key: &str) -> Option<(usize, usize, usize)> {
    let mut it = key.split('/').map(|p| p.parse::<usize>().ok());
    let out = (it.next()??, it.next()??, it.next()??);
    it.next().is_none().then_some(out)
}

impl From<LearnedModel> for ModelDocument {
    fn from(m: LearnedModel) -> Self {
        let mut cpts = BTreeMap::new();
        let mut sufficient = BTreeMap::new();
        for (i, t) in m.tables.iter().enumerate() {
            for key in t.index.keys() {
                let (rank, a) = (key / m.n_actions, key % m.n_actions);
                let name = format!("{i}/{rank}/{a}");
                cpts.insert(name.clone(), m.cpt_row(i, rank, a).unwrap().to_vec());
                sufficient.insert(name, true);
            }
        }
        ModelDocument {
            n_vars: m.n_vars,
            gamma: m.gamma,
            n_actions: m.n_actions,
            horizon: m.horizon,
            phi_hat: m.parents,
            thresholds: m.thresholds,
            cpts,
            sufficient,
            initial_states: m.initial,
            provenance: m.provenance,
        }
    }
}

impl TryFrom<ModelDocument> for LearnedModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        check_parents(&doc.phi_hat, doc.n_vars)?;
        let (g, na) = (doc.gamma, doc.n_actions);
        if g < 2 || na == 0 {
            return Err(Error::InvalidModel("gamma must be >= 2 and A >= 1".into()));
        }
        let mut tables: Vec<VarTable> = doc
            .phi_hat
            .iter()
            .map(|ps| {
                checked_pow(g, ps.len())
                    .and_then(|r| r.checked_mul(na))
                    .map(VarTable::new)
                    .ok_or_else(|| Error::InvalidModel("parent set too large".into()))
            })
            .collect::<Result<_>>()?;
        let flagged: Vec<&String> = doc.sufficient.iter().filter(|(_, &v)| v).map(|(k, _)| k).collect();
        if flagged.len() != doc.cpts.len() || flagged.iter().any(|k| !doc.cpts.contains_key(*k)) {
            return Err(Error::InvalidModel("cpts and sufficient flags must share one key set".into()));
        }
        // Insert in numeric key order so slots are canonical.
        let mut rows: Vec<((usize, usize, usize), &Vec<f64>)> = Vec::with_capacity(doc.cpts.len());
        for (key, row) in &doc.cpts {
            let k = parse_key(key).ok_or_else(|| Error::InvalidModel(format!("bad CPT key `{key}`")))?;
            rows.push((k, row));
        }
        rows.sort_by_key(|(k, _)| *k);
        for ((i, rank, a), row) in rows {
            if i >= doc.n_vars || a >= na || row.len() != g {
                return Err(Error::InvalidModel(format!("CPT key {i}/{rank}/{a} out of range")));
            }
            crate::fmdp::check_distribution(row, &format!("CPT row {i}/{rank}/{a}"))?;
            let key = rank * na + a;
            if let RowIndex::Dense(v) = &tables[i].index {
                if key >= v.len() {
                    return Err(Error::InvalidModel(format!("CPT key {i}/{rank}/{a} out of range")));
                }
            }
            tables[i].push(key, row);
        }
        Ok(LearnedModel {
            n_vars: doc.n_vars,
            gamma: g,
            n_actions: na,
            horizon: doc.horizon,
            parents: doc.phi_hat,
            thresholds: doc.thresholds,
            tables,
            initial: doc.initial_states,
            provenance: doc.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::copy_chain;
    use crate::fmdp::{sample_batch, Policy};
    use crate::rng;

    fn copy_batch() -> (FactoredMdp, TrajectoryBatch) {
        let m = copy_chain(3, 2, 2).unwrap();
        let b = sample_batch(&m, &Policy::uniform(2), 40, 3).unwrap();
        (m, b)
    }

    #[test]
    fn sufficiency_threshold_is_inclusive() {
        let (_, b) = copy_batch();
        let th = Thresholds::new(0.5, 0.5, 0.0, 2).unwrap();
        let parents = vec![vec![0], vec![1], vec![2]];
        let counts = CountStore::from_batch(&b, 0, &[0]).unwrap();
        let exact = counts.n(1, 1);
        let model = build_model(&b, &parents, &th.with_min_count(exact).unwrap()).unwrap();
        assert!(model.is_sufficient(0, 1, 1));
        let model = build_model(&b, &parents, &th.with_min_count(exact + 1).unwrap()).unwrap();
        assert!(!model.is_sufficient(0, 1, 1));
    }

    #[test]
    fn copy_rows_are_point_masses() {
        let (_, b) = copy_batch();
        let th = Thresholds::new(0.5, 0.5, 0.0, 2).unwrap().with_min_count(1).unwrap();
        let model = build_model(&b, &[vec![0], vec![1], vec![2]], &th).unwrap();
        for i in 0..3 {
            for v in 0..2 {
                for a in 0..2 {
                    let row = model.cpt_row(i, v, a).unwrap();
                    assert!((row[v] - 1.0).abs() < 1e-9);
                }
            }
        }
        let mut out = [0u8; 3];
        assert!(model.step_into(&[1, 0, 1], 0, &mut rng::seeded(0), &mut out));
        assert_eq!(out, [1, 0, 1]);
    }

    #[test]
    fn nothing_sufficient() {
        let (_, b) = copy_batch();
        let th = Thresholds::new(0.5, 0.5, 0.0, 2).unwrap().with_min_count(1 << 40).unwrap();
        let model = build_model(&b, &[vec![0], vec![1], vec![2]], &th).unwrap();
        assert_eq!(model.sufficient_counts(), vec![0, 0, 0]);
        assert!(!model.is_known(&[0, 0, 0], 0));
    }

    #[test]
    fn json_round_trip_and_keys() {
        let (m, b) = copy_batch();
        let th = Thresholds::new(0.5, 0.5, 0.0, 2).unwrap().with_min_count(1).unwrap();
        let model = build_model(&b, &[vec![0], vec![], vec![1, 2]], &th).unwrap();
        let json = model.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["cpts"]["0/1/0"].is_array());
        assert_eq!(v["sufficient"]["0/1/0"], true);
        assert_eq!(v["thresholds"]["N"], 1);
        assert_eq!(v["phi_hat"][2], serde_json::json!([1, 2]));
        let back = LearnedModel::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
        back.check_matches(&m).unwrap();

        let truth = LearnedModel::from_true_model(&m);
        let again = LearnedModel::from_json(&truth.to_json().unwrap()).unwrap();
        assert_eq!(again.sufficient_counts(), vec![4, 4, 4]);
    }

    #[test]
    fn rejects_mismatched_flags() {
        let (_, b) = copy_batch();
        let th = Thresholds::new(0.5, 0.5, 0.0, 2).unwrap().with_min_count(1).unwrap();
        let model = build_model(&b, &[vec![0], vec![1], vec![2]], &th).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        v["sufficient"].as_object_mut().unwrap().remove("0/0/0");
        assert!(serde_json::from_value::<LearnedModel>(v).is_err());
    }
}
