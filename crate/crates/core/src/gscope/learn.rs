use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::{normalize, CountStore};
use super::threshold::{l1_diff, Thresholds};
use crate::fmdp::TrajectoryBatch;
use crate::Result;

/// Score of one candidate parent `j`: the largest L1 gain over its
/// qualifying triples, or `None` when no triple exceeds the count threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub j: usize,
    pub diff: Option<f64>,
    /// Number of qualifying `(v, v_j, a)` triples.
    pub theta: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub target: usize,
    pub phi_hat: Vec<usize>,
    /// One entry per `j ∉ phi_hat`, ascending.
    pub candidates: Vec<CandidateScore>,
    /// No candidate has any qualifying triple.
    pub theta_empty: bool,
}

impl ScoreReport {
    /// Highest-scoring candidate with data; ties go to the lowest index.
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for c in &self.candidates {
            if let Some(d) = c.diff {
                if best.is_none_or(|(_, b)| d > b) {
                    best = Some((c.j, d));
                }
            }
        }
        best
    }

    pub fn score(&self, j: usize) -> Option<f64> {
        self.candidates.iter().find(|c| c.j == j).and_then(|c| c.diff)
    }
}

fn score_candidate(batch: &TrajectoryBatch, i: usize, phi_hat: &[usize], j: usize, n_min: u64) -> Result<CandidateScore> {
    let g = batch.gamma;
    let mut scope = phi_hat.to_vec();
    scope.push(j);
    let joint = CountStore::from_batch(batch, i, &scope)?;
    let rows = joint.rows();
    // Baseline counts n(y, v, a) = Σ_{v_j} n(y, v, v_j, a).
    let mut marginal: HashMap<(usize, usize), Vec<u64>> = HashMap::new();
    for &(rank, a, row) in &rows {
        let m = marginal.entry((rank / g, a)).or_insert_with(|| vec![0; g]);
        for (acc, &c) in m.iter_mut().zip(row) {
            *acc += c;
        }
    }
    let mut diff: Option<f64> = None;
    let mut theta = 0;
    for &(rank, a, row) in &rows {
        if row.iter().sum::<u64>() <= n_min {
            continue;
        }
        theta += 1;
        let d = l1_diff(&normalize(row), &normalize(&marginal[&(rank / g, a)]))?;
        diff = Some(diff.map_or(d, |x: f64| x.max(d)));
    }
    Ok(CandidateScore { j, diff, theta })
}

/// Scores every `j ∉ phi_hat` as a next parent of variable `i`.
pub fn candidate_scores(batch: &TrajectoryBatch, i: usize, phi_hat: &[usize], thresholds: &Thresholds) -> Result<ScoreReport> {
    let candidates = (0..batch.n_vars)
        .filter(|j| !phi_hat.contains(j))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| score_candidate(batch, i, phi_hat, j, thresholds.n))
        .collect::<Result<Vec<_>>>()?;
    let theta_empty = candidates.iter().all(|c| c.theta == 0);
    Ok(ScoreReport {
        target: i,
        phi_hat: phi_hat.to_vec(),
        candidates,
        theta_empty,
    })
}

/// Output of [`learn_structure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedStructure {
    /// Sorted estimated parent set per variable.
    pub parents: Vec<Vec<usize>>,
    /// Parents in the order they were added, with their gain.
    pub picks: Vec<Vec<(usize, f64)>>,
    /// Number of scoring rounds per variable.
    pub rounds: Vec<usize>,
}

fn learn_one(batch: &TrajectoryBatch, i: usize, th: &Thresholds) -> Result<(Vec<usize>, Vec<(usize, f64)>, usize)> {
    let mut phi = Vec::new();
    let mut picks = Vec::new();
    let mut rounds = 0;
    while phi.len() < batch.n_vars {
        let report = candidate_scores(batch, i, &phi, th)?;
        rounds += 1;
        if report.theta_empty {
            break;
        }
        match report.best() {
            Some((j, d)) if d > th.acceptance_gain() => {
                picks.push((j, d));
                phi.push(j);
                phi.sort_unstable();
            }
            _ => break,
        }
    }
    Ok((phi, picks, rounds))
}

/// Greedy parent selection for every variable independently.
pub fn learn_structure(batch: &TrajectoryBatch, thresholds: &Thresholds) -> Result<LearnedStructure> {
    let per_var = (0..batch.n_vars)
        .into_par_iter()
        .map(|i| learn_one(batch, i, thresholds))
        .collect::<Result<Vec<_>>>()?;
    let mut out = LearnedStructure {
        parents: Vec::new(),
        picks: Vec::new(),
        rounds: Vec::new(),
    };
    for (p, k, r) in per_var {
        out.parents.push(p);
        out.picks.push(k);
        out.rounds.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, exact_frequency_batch, make_assumption1_violation, make_assumption3_violation};
    use crate::fmdp::{sample_batch, Policy};

    #[test]
    fn empty_batch_learns_nothing() {
        let m = copy_chain(3, 2, 2).unwrap();
        let b = TrajectoryBatch::empty_like(&m);
        let th = Thresholds::new(0.1, 0.05, 0.0, 2).unwrap();
        let r = candidate_scores(&b, 0, &[], &th).unwrap();
        assert!(r.theta_empty);
        assert!(r.candidates.iter().all(|c| c.diff.is_none()));
        let s = learn_structure(&b, &th).unwrap();
        assert!(s.parents.iter().all(Vec::is_empty));
        assert_eq!(s.rounds, vec![1, 1, 1]);
    }

    #[test]
    fn copy_chain_recovered() {
        let m = copy_chain(4, 2, 2).unwrap();
        let behavior = Policy::constant(2, 2, 0).unwrap();
        let b = sample_batch(&m, &behavior, 200, 7).unwrap();
        let th = Thresholds::new(0.1, 0.05, 0.0, 2).unwrap();
        let r = candidate_scores(&b, 1, &[], &th).unwrap();
        // Y(1) = X(1): conditioning on X(1) splits a fair coin into point masses.
        assert!((r.score(1).unwrap() - 1.0).abs() < 0.1);
        assert!(r.score(0).unwrap() < 0.4);
        let s = learn_structure(&b, &th).unwrap();
        assert_eq!(s.parents, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(s.rounds.iter().all(|&k| k <= 5));
    }

    #[test]
    fn proxy_is_picked_first() {
        let m = make_assumption1_violation();
        let b = exact_frequency_batch(&m, 400).unwrap();
        let th = Thresholds::new(0.1, 0.5, 0.0, 2).unwrap().with_min_count(1).unwrap();
        let r = candidate_scores(&b, 2, &[], &th).unwrap();
        assert!((r.score(2).unwrap() - 1.5).abs() < 1e-12);
        assert!((r.score(0).unwrap() - 0.5).abs() < 1e-12);
        assert!((r.score(1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.best().unwrap().0, 2);
    }

    #[test]
    fn xor_stays_empty() {
        let m = make_assumption3_violation();
        let b = exact_frequency_batch(&m, 3200).unwrap();
        let th = Thresholds::new(0.1, 0.5, 0.0, 2).unwrap().with_min_count(1).unwrap();
        let r = candidate_scores(&b, 2, &[], &th).unwrap();
        assert!(r.score(0).unwrap().abs() < 1e-12);
        assert!(r.score(1).unwrap().abs() < 1e-12);
        let s = learn_structure(&b, &th).unwrap();
        assert!(s.parents[2].is_empty());
        let pair = candidate_scores(&b, 2, &[0], &th).unwrap();
        assert!((pair.score(1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let r = ScoreReport {
            target: 0,
            phi_hat: vec![],
            candidates: vec![
                CandidateScore { j: 0, diff: None, theta: 0 },
                CandidateScore { j: 1, diff: Some(0.5), theta: 1 },
                CandidateScore { j: 2, diff: Some(0.5), theta: 1 },
            ],
            theta_empty: false,
        };
        assert_eq!(r.best(), Some((1, 0.5)));
    }
}
