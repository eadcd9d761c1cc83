//! Exhaustive evaluation of the three structural assumptions.
//!
//! Conditionals `Pr(Y(i) | X(Ψ) = v, a)` for sets that do not contain all
//! parents depend on the state distribution; they are taken under the
//! time-averaged state-action occupancy of a weighting policy (uniform
//! random by default). Realizations of zero mass are skipped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::occupancy::propagate;
use super::serde_inf;
use crate::fmdp::{realization_rank, realization_values, FactoredMdp, FlatDynamics, Policy};
use crate::gscope::l1_diff;
use crate::{Error, Result};

const MAX_VARS: usize = 10;
const TOL: f64 = 1e-12;

struct Table {
    mass: Vec<f64>,
    probs: Vec<f64>,
}

/// Exact conditionals of next-variable values under a weighting measure.
pub struct ExactConditionals<'a> {
    mdp: &'a FactoredMdp,
    flat: FlatDynamics,
    /// Time-averaged `Pr(s_t = s, a_t = a)`, `[s · A + a]`.
    weights: Vec<f64>,
    cache: HashMap<(usize, Vec<usize>), Table>,
}

impl<'a> ExactConditionals<'a> {
    pub fn new(mdp: &'a FactoredMdp, weighting: &Policy) -> Result<Self> {
        let mut weights: Vec<f64> = Vec::new();
        let horizon = mdp.horizon();
        let flat = if horizon == 0 {
            let flat = FlatDynamics::build(mdp)?;
            let pi = flat.policy_matrix(weighting);
            let rho = flat.initial_vector(mdp);
            weights = (0..pi.len()).map(|k| rho[k / flat.n_actions] * pi[k]).collect();
            flat
        } else {
            propagate(mdp, weighting, |_, _, joint| {
                if weights.is_empty() {
                    weights = vec![0.0; joint.len()];
                }
                for (w, j) in weights.iter_mut().zip(joint) {
                    *w += j / horizon as f64;
                }
            })?
        };
        Ok(ExactConditionals {
            mdp,
            flat,
            weights,
            cache: HashMap::new(),
        })
    }

    fn table(&mut self, i: usize, scope: &[usize]) -> &Table {
        let key = (i, scope.to_vec());
        if !self.cache.contains_key(&key) {
            let (g, na) = (self.flat.gamma, self.flat.n_actions);
            let rows = g.pow(scope.len() as u32) * na;
            let mut mass = vec![0.0; rows];
            let mut probs = vec![0.0; rows * g];
            for s in 0..self.flat.n_states {
                let x = self.flat.state(s);
                let base = realization_rank(x, scope, g) * na;
                for a in 0..na {
                    let w = self.weights[s * na + a];
                    if w == 0.0 {
                        continue;
                    }
                    mass[base + a] += w;
                    let row = self.mdp.next_var_dist(i, x, a);
                    for (acc, p) in probs[(base + a) * g..(base + a + 1) * g].iter_mut().zip(row) {
                        *acc += w * p;
                    }
                }
            }
            for (r, &m) in mass.iter().enumerate() {
                if m > 0.0 {
                    probs[r * g..(r + 1) * g].iter_mut().for_each(|p| *p /= m);
                }
            }
            self.cache.insert(key.clone(), Table { mass, probs });
        }
        &self.cache[&key]
    }

    /// `Pr(Y(i) | X(scope) = v, a)`, or `None` when the realization has no mass.
    pub fn conditional(&mut self, i: usize, scope: &[usize], v: &[u8], a: usize) -> Option<Vec<f64>> {
        let g = self.flat.gamma;
        let na = self.flat.n_actions;
        let row = v.iter().fold(0usize, |acc, &x| acc * g + x as usize) * na + a;
        let t = self.table(i, scope);
        (t.mass[row] > 0.0).then(|| t.probs[row * g..(row + 1) * g].to_vec())
    }

    /// `‖Pr(Y(i) | X(Ψ ∪ extra) = v, a) − Pr(Y(i) | X(Ψ) = v[..|Ψ|], a)‖₁`,
    /// with `v` listing `Ψ` values first, then `extra`.
    pub fn gain(&mut self, i: usize, psi: &[usize], extra: &[usize], v: &[u8], a: usize) -> Option<f64> {
        let mut scope = psi.to_vec();
        scope.extend_from_slice(extra);
        let joint = self.conditional(i, &scope, v, a)?;
        let base = self.conditional(i, psi, &v[..psi.len()], a)?;
        l1_diff(&joint, &base).ok()
    }

    /// All `(v, a)` realizations of `scope` in rank order.
    fn realizations(&self, len: usize) -> impl Iterator<Item = (Vec<u8>, usize)> {
        let (g, na) = (self.flat.gamma, self.flat.n_actions);
        (0..g.pow(len as u32)).flat_map(move |r| {
            let v = realization_values(r, len, g);
            (0..na).map(move |a| (v.clone(), a))
        })
    }
}

/// A realization of `Ψ ∪ {k}` and its gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rival {
    pub k: usize,
    pub v: Vec<u8>,
    pub a: usize,
    pub gain: f64,
}

/// A concrete instance of a violated condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "assumption")]
pub enum Witness {
    /// For this candidate strong set and `Ψ`, the non-parent `j` at `(v, a)`
    /// gains at least as much as every remaining strong parent does at its
    /// listed realization.
    #[serde(rename = "strong-parent-superiority")]
    StrongParent {
        var: usize,
        strong: Vec<usize>,
        psi: Vec<usize>,
        j: usize,
        /// `Ψ` values then `v(j)`.
        v: Vec<u8>,
        a: usize,
        gain: f64,
        rivals: Vec<Rival>,
    },
    /// The premise `gain_j ≥ gain_k` holds but `gain_j < gain_{k|j}`.
    #[serde(rename = "conditional-diminishing-returns")]
    DiminishingReturns {
        var: usize,
        psi: Vec<usize>,
        j: usize,
        k: usize,
        /// `Ψ` values, then `v(j)`, then `v(k)`.
        v: Vec<u8>,
        a: usize,
        gain_j: f64,
        gain_k: f64,
        gain_k_given_j: f64,
    },
}

impl Witness {
    /// Re-scores the witness and checks that it still violates its condition.
    pub fn verify(&self, cond: &mut ExactConditionals) -> bool {
        match self {
            Witness::StrongParent {
                var, psi, j, v, a, rivals, ..
            } => {
                let Some(gj) = cond.gain(*var, psi, &[*j], v, *a) else {
                    return false;
                };
                !rivals.is_empty()
                    && rivals.iter().all(|r| {
                        cond.gain(*var, psi, &[r.k], &r.v, r.a)
                            .is_some_and(|gk| gk <= gj + TOL)
                    })
            }
            Witness::DiminishingReturns {
                var, psi, j, k, v, a, ..
            } => {
                let n = psi.len();
                let mut vj = v[..=n].to_vec();
                let mut vk = v[..n].to_vec();
                vk.push(v[n + 1]);
                let gj = cond.gain(*var, psi, &[*j], &vj, *a);
                let gk = cond.gain(*var, psi, &[*k], &vk, *a);
                let mut with_j = psi.clone();
                with_j.push(*j);
                vj.push(v[n + 1]);
                let gkj = cond.gain(*var, &with_j, &[*k], &vj, *a);
                match (gj, gk, gkj) {
                    (Some(gj), Some(gk), Some(gkj)) => gj + TOL >= gk && gj < gkj - TOL,
                    _ => false,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub var: usize,
    pub parents: Vec<usize>,
    /// Strong subset used for the second and third conditions.
    pub strong: Vec<usize>,
    pub a1_holds: bool,
    /// Largest `C₁` for the chosen strong subset, when the condition holds.
    #[serde(with = "serde_inf::option")]
    pub c1: Option<f64>,
    /// Best `C₁` margin over nonempty strong subsets (may be negative).
    #[serde(with = "serde_inf")]
    pub a1_margin: f64,
    /// Smallest `C₂` that holds.
    pub c2: f64,
    pub a3_holds: bool,
    /// Largest `C₃` that holds (`inf` when the condition is vacuous).
    #[serde(with = "serde_inf::option")]
    pub c3: Option<f64>,
    pub witnesses: Vec<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// How non-parent conditionals were weighted.
    pub weighting: String,
    pub a1_holds: bool,
    pub a3_holds: bool,
    #[serde(with = "serde_inf::option")]
    pub c1: Option<f64>,
    pub c2: f64,
    #[serde(with = "serde_inf::option")]
    pub c3: Option<f64>,
    pub variables: Vec<VariableReport>,
}

fn subset(items: &[usize], mask: usize) -> Vec<usize> {
    items
        .iter()
        .enumerate()
        .filter(|(b, _)| mask >> b & 1 == 1)
        .map(|(_, &x)| x)
        .collect()
}

/// `(value, v, a)` extremum of `gain(Ψ, extra)` over positive-mass realizations.
fn extreme_gain(
    cond: &mut ExactConditionals,
    i: usize,
    psi: &[usize],
    extra: &[usize],
    maximize: bool,
) -> Option<(f64, Vec<u8>, usize)> {
    let mut best: Option<(f64, Vec<u8>, usize)> = None;
    let all: Vec<_> = cond.realizations(psi.len() + extra.len()).collect();
    for (v, a) in all {
        if let Some(g) = cond.gain(i, psi, extra, &v, a) {
            let better = best
                .as_ref()
                .is_none_or(|(b, _, _)| if maximize { g > *b } else { g < *b });
            if better {
                best = Some((g, v, a));
            }
        }
    }
    best
}

struct A1Candidate {
    strong: Vec<usize>,
    margin: f64,
    witness: Option<Witness>,
}

fn check_variable(cond: &mut ExactConditionals, i: usize) -> VariableReport {
    let mdp = cond.mdp;
    let phi = mdp.parents()[i].clone();
    let nonparents: Vec<usize> = (0..mdp.n_vars()).filter(|j| !phi.contains(j)).collect();
    let full = (1usize << phi.len()) - 1;

    // Per Ψ ⊂ Φ: strongest non-parent and weakest realization of each parent.
    let mut np_max: HashMap<usize, Option<(f64, usize, Vec<u8>, usize)>> = HashMap::new();
    let mut k_min: HashMap<(usize, usize), Option<(f64, Vec<u8>, usize)>> = HashMap::new();
    for psi_mask in 0..full {
        let psi = subset(&phi, psi_mask);
        let mut best: Option<(f64, usize, Vec<u8>, usize)> = None;
        for &j in &nonparents {
            if let Some((g, v, a)) = extreme_gain(cond, i, &psi, &[j], true) {
                if best.as_ref().is_none_or(|b| g > b.0) {
                    best = Some((g, j, v, a));
                }
            }
        }
        np_max.insert(psi_mask, best);
        for (bit, &k) in phi.iter().enumerate() {
            if psi_mask >> bit & 1 == 0 {
                k_min.insert((psi_mask, k), extreme_gain(cond, i, &psi, &[k], false));
            }
        }
    }

    let mut candidates: Vec<A1Candidate> = Vec::new();
    for s_mask in 1..=full {
        let strong = subset(&phi, s_mask);
        let mut margin = f64::INFINITY;
        let mut witness = None;
        for psi_mask in 0..full {
            if s_mask & !psi_mask == 0 {
                continue;
            }
            let Some((np_gain, j, ref v, a)) = np_max[&psi_mask] else {
                continue;
            };
            let remaining = subset(&phi, s_mask & !psi_mask);
            let k_best = remaining
                .iter()
                .map(|&k| k_min[&(psi_mask, k)].as_ref().map_or(f64::INFINITY, |m| m.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let term = k_best - np_gain;
            if term < margin {
                margin = term;
                witness = Some(Witness::StrongParent {
                    var: i,
                    strong: strong.clone(),
                    psi: subset(&phi, psi_mask),
                    j,
                    v: v.clone(),
                    a,
                    gain: np_gain,
                    rivals: remaining
                        .iter()
                        .filter_map(|&k| {
                            k_min[&(psi_mask, k)].as_ref().map(|(g, v, a)| Rival {
                                k,
                                v: v.clone(),
                                a: *a,
                                gain: *g,
                            })
                        })
                        .collect(),
                });
            }
        }
        candidates.push(A1Candidate { strong, margin, witness });
    }

    let chosen = candidates
        .iter()
        .filter(|c| c.margin > TOL)
        .max_by(|x, y| {
            x.margin
                .total_cmp(&y.margin)
                .then(x.strong.len().cmp(&y.strong.len()))
                .then(y.strong.cmp(&x.strong))
        });
    let a1_margin = candidates.iter().map(|c| c.margin).fold(f64::NEG_INFINITY, f64::max);
    let (a1_holds, strong, c1) = match (phi.is_empty(), chosen) {
        (true, _) => (true, Vec::new(), Some(f64::INFINITY)),
        (false, Some(c)) => (true, c.strong.clone(), Some(c.margin)),
        (false, None) => (false, Vec::new(), None),
    };
    let mut witnesses: Vec<Witness> = if a1_holds {
        Vec::new()
    } else {
        candidates.into_iter().filter_map(|c| c.witness).collect()
    };

    // Supersets of the strong subset inside Φ.
    let strong_mask = phi
        .iter()
        .enumerate()
        .filter(|(_, p)| strong.contains(p))
        .fold(0usize, |m, (b, _)| m | 1 << b);
    let supersets: Vec<usize> = (0..=full).filter(|m| m & strong_mask == strong_mask).collect();

    let mut c2: f64 = 0.0;
    for &psi_mask in &supersets {
        let psi = subset(&phi, psi_mask);
        for &j in &nonparents {
            if let Some((g, _, _)) = extreme_gain(cond, i, &psi, &[j], true) {
                c2 = c2.max(g);
            }
        }
    }

    let mut c3 = f64::INFINITY;
    let mut a3_witness = None;
    for &psi_mask in &supersets {
        let psi = subset(&phi, psi_mask);
        let rest = subset(&phi, full & !psi_mask);
        for &j in &rest {
            for &k in &rest {
                if j == k {
                    continue;
                }
                let mut with_j = psi.clone();
                with_j.push(j);
                let all: Vec<_> = cond.realizations(psi.len() + 2).collect();
                for (v, a) in all {
                    let n = psi.len();
                    let vj = &v[..=n];
                    let mut vk = v[..n].to_vec();
                    vk.push(v[n + 1]);
                    let (Some(gj), Some(gk), Some(gkj)) = (
                        cond.gain(i, &psi, &[j], vj, a),
                        cond.gain(i, &psi, &[k], &vk, a),
                        cond.gain(i, &with_j, &[k], &v, a),
                    ) else {
                        continue;
                    };
                    if gj + TOL < gk {
                        continue;
                    }
                    if gj - gkj < c3 {
                        c3 = gj - gkj;
                        a3_witness = Some(Witness::DiminishingReturns {
                            var: i,
                            psi: psi.clone(),
                            j,
                            k,
                            v: v.clone(),
                            a,
                            gain_j: gj,
                            gain_k: gk,
                            gain_k_given_j: gkj,
                        });
                    }
                }
            }
        }
    }
    let a3_holds = c3 >= -TOL;
    if !a3_holds {
        witnesses.extend(a3_witness);
    }
    VariableReport {
        var: i,
        parents: phi,
        strong,
        a1_holds,
        c1,
        a1_margin: if a1_margin == f64::NEG_INFINITY { f64::INFINITY } else { a1_margin },
        c2,
        a3_holds,
        c3: a3_holds.then_some(c3.max(0.0)),
        witnesses,
    }
}

/// Brute-force check of the three assumptions on every variable.
/// `weighting` defaults to the uniform random policy.
pub fn check_assumptions(mdp: &FactoredMdp, weighting: Option<&Policy>) -> Result<AssumptionReport> {
    if mdp.n_vars() > MAX_VARS {
        return Err(Error::TooLarge {
            what: "assumption check variables",
            size: mdp.n_vars() as u128,
            limit: MAX_VARS as u128,
        });
    }
    let uniform = Policy::uniform(mdp.n_actions());
    let policy = weighting.unwrap_or(&uniform);
    let mut cond = ExactConditionals::new(mdp, policy)?;
    let variables: Vec<VariableReport> = (0..mdp.n_vars()).map(|i| check_variable(&mut cond, i)).collect();
    let a1_holds = variables.iter().all(|v| v.a1_holds);
    let a3_holds = variables.iter().all(|v| v.a3_holds);
    Ok(AssumptionReport {
        weighting: format!(
            "time-averaged state-action occupancy over {} steps under {}",
            mdp.horizon(),
            if weighting.is_some() { "the supplied policy" } else { "the uniform random policy" }
        ),
        a1_holds,
        a3_holds,
        c1: a1_holds.then(|| variables.iter().filter_map(|v| v.c1).fold(f64::INFINITY, f64::min)),
        c2: variables.iter().map(|v| v.c2).fold(0.0, f64::max),
        c3: a3_holds.then(|| variables.iter().filter_map(|v| v.c3).fold(f64::INFINITY, f64::min)),
        variables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, make_assumption1_violation, make_assumption3_violation, random_fmdp};

    #[test]
    fn copy_chain_satisfies_everything() {
        let m = copy_chain(3, 2, 2).unwrap().with_horizon(5);
        let r = check_assumptions(&m, None).unwrap();
        assert!(r.a1_holds && r.a3_holds);
        for v in &r.variables {
            assert_eq!(v.strong, vec![v.var]);
            assert!((v.c1.unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(v.c2, 0.0);
            assert!(v.c3.unwrap() >= 0.0);
        }
    }

    #[test]
    fn proxy_breaks_superiority() {
        let m = make_assumption1_violation();
        let r = check_assumptions(&m, None).unwrap();
        assert!(!r.a1_holds);
        let v = &r.variables[2];
        assert!(!v.a1_holds && v.c1.is_none());
        assert!((v.a1_margin + 1.0).abs() < 1e-12);
        let mut cond = ExactConditionals::new(&m, &Policy::uniform(1)).unwrap();
        assert!(!v.witnesses.is_empty());
        let strong: Vec<&Witness> = v
            .witnesses
            .iter()
            .filter(|w| matches!(w, Witness::StrongParent { .. }))
            .collect();
        assert_eq!(strong.len(), 3);
        for w in strong {
            assert!(matches!(w, Witness::StrongParent { j: 2, .. }));
            assert!(w.verify(&mut cond));
        }
    }

    #[test]
    fn xor_breaks_diminishing_returns() {
        let m = make_assumption3_violation();
        let r = check_assumptions(&m, None).unwrap();
        assert!(!r.a3_holds);
        let v = &r.variables[2];
        assert!(v.strong.is_empty());
        let mut cond = ExactConditionals::new(&m, &Policy::uniform(1)).unwrap();
        let w = v
            .witnesses
            .iter()
            .find(|w| matches!(w, Witness::DiminishingReturns { .. }))
            .unwrap();
        if let Witness::DiminishingReturns { gain_j, gain_k_given_j, .. } = w {
            assert!(gain_j.abs() < 1e-12);
            assert!((gain_k_given_j - 1.0).abs() < 1e-12);
        }
        assert!(w.verify(&mut cond));
    }

    #[test]
    fn report_serializes_infinities() {
        let m = copy_chain(2, 2, 2).unwrap().with_horizon(3);
        let r = check_assumptions(&m, None).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: AssumptionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn guard_on_size() {
        let m = random_fmdp(11, 2, 2, 0).unwrap();
        assert!(check_assumptions(&m, None).unwrap_err().is_refusal());
    }
}
