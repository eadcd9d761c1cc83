use crate::fmdp::{realization_rank, FactoredMdp, FlatDynamics, Policy};
use crate::Result;

/// `Pr(X_t(Ψ) = v, a_t = a | π)` for the `T` decision steps `t = 0..T−1`,
/// stored `[t][rank(v)][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    pub scope: Vec<usize>,
    pub gamma: usize,
    pub n_actions: usize,
    pub horizon: usize,
    probs: Vec<f64>,
}

impl Occupancy {
    fn rows(&self) -> usize {
        self.gamma.pow(self.scope.len() as u32) * self.n_actions
    }

    pub fn get(&self, t: usize, rank: usize, a: usize) -> f64 {
        self.probs[t * self.rows() + rank * self.n_actions + a]
    }

    /// One timestep as a `[rank][a]` slice.
    pub fn at(&self, t: usize) -> &[f64] {
        let r = self.rows();
        &self.probs[t * r..(t + 1) * r]
    }

    /// `Σ_t Pr(X_t(Ψ) = v, a_t = a)`, `[rank][a]`.
    pub fn summed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        for t in 0..self.horizon {
            for (o, p) in out.iter_mut().zip(self.at(t)) {
                *o += p;
            }
        }
        out
    }
}

/// Exact state-action distribution at every decision step, `[t][s · A + a]`,
/// handed to `visit` one step at a time.
pub(crate) fn propagate(mdp: &FactoredMdp, policy: &Policy, mut visit: impl FnMut(usize, &FlatDynamics, &[f64])) -> Result<FlatDynamics> {
    policy.check_compatible(mdp.n_vars(), mdp.gamma(), mdp.n_actions())?;
    let flat = FlatDynamics::build(mdp)?;
    let na = flat.n_actions;
    let pi = flat.policy_matrix(policy);
    let mut d = flat.initial_vector(mdp);
    let mut joint = vec![0.0; flat.n_states * na];
    for t in 0..mdp.horizon() {
        for s in 0..flat.n_states {
            for a in 0..na {
                joint[s * na + a] = d[s] * pi[s * na + a];
            }
        }
        visit(t, &flat, &joint);
        d.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..flat.n_states {
            for a in 0..na {
                let w = joint[s * na + a];
                if w == 0.0 {
                    continue;
                }
                for (n, p) in flat.successors(s, a) {
                    d[n] += w * p;
                }
            }
        }
    }
    Ok(flat)
}

/// Occupancies for several parent sets from one forward pass.
pub fn occupancy_many(mdp: &FactoredMdp, policy: &Policy, scopes: &[Vec<usize>]) -> Result<Vec<Occupancy>> {
    let (g, na, horizon) = (mdp.gamma(), mdp.n_actions(), mdp.horizon());
    let mut out: Vec<Occupancy> = scopes
        .iter()
        .map(|scope| Occupancy {
            scope: scope.clone(),
            gamma: g,
            n_actions: na,
            horizon,
            probs: vec![0.0; horizon * g.pow(scope.len() as u32) * na],
        })
        .collect();
    propagate(mdp, policy, |t, flat, joint| {
        for occ in out.iter_mut() {
            let rows = occ.rows();
            for s in 0..flat.n_states {
                let base = t * rows + realization_rank(flat.state(s), &occ.scope, g) * na;
                for a in 0..na {
                    occ.probs[base + a] += joint[s * na + a];
                }
            }
        }
    })?;
    Ok(out)
}

/// Exact occupancy of `(X_t(parent_set), a_t)` under `policy`.
pub fn occupancy(mdp: &FactoredMdp, policy: &Policy, parent_set: &[usize]) -> Result<Occupancy> {
    Ok(occupancy_many(mdp, policy, &[parent_set.to_vec()])?.remove(0))
}

/// `ψᵢ = max_{(v,a)} Σ_t target-occupancy / Σ_t behavior-occupancy` over the
/// realizations of `parents[i]`, with `0/0 = 0` and `x/0 = ∞`.
pub fn compute_psi(mdp: &FactoredMdp, behavior: &Policy, target: &Policy, parents: &[Vec<usize>]) -> Result<Vec<f64>> {
    let b = occupancy_many(mdp, behavior, parents)?;
    let e = occupancy_many(mdp, target, parents)?;
    Ok(b
        .iter()
        .zip(&e)
        .map(|(ob, oe)| {
            ob.summed()
                .iter()
                .zip(oe.summed())
                .map(|(&pb, pe)| match (pe > 0.0, pb > 0.0) {
                    (false, _) => 0.0,
                    (true, false) => f64::INFINITY,
                    (true, true) => pe / pb,
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, random_fmdp};
    use crate::fmdp::sample_batch;

    #[test]
    fn each_step_sums_to_one() {
        let m = random_fmdp(4, 2, 3, 9).unwrap().with_horizon(6);
        let occ = occupancy(&m, &Policy::uniform(3), &[1, 3]).unwrap();
        for t in 0..6 {
            assert!((occ.at(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_is_point_mass() {
        let m = copy_chain(3, 2, 2).unwrap().with_horizon(4);
        let m = crate::FactoredMdp::new(
            3,
            2,
            2,
            4,
            m.parents().to_vec(),
            (0..3).map(|i| m.cpt(i).to_vec()).collect(),
            m.reward_fn().clone(),
            crate::InitialDist::Product {
                marginals: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        )
        .unwrap();
        let occ = occupancy(&m, &Policy::constant(2, 2, 1).unwrap(), &[0, 1, 2]).unwrap();
        for t in 0..4 {
            let nonzero: Vec<usize> = (0..16).filter(|&k| occ.at(t)[k] > 0.0).collect();
            // (1, 0, 1) is rank 5, action 1.
            assert_eq!(nonzero, vec![5 * 2 + 1]);
        }
    }

    #[test]
    fn monte_carlo_cross_check() {
        let m = random_fmdp(3, 2, 2, 4).unwrap().with_horizon(4);
        let p = Policy::uniform(2);
        let occ = occupancy(&m, &p, &[0, 2]).unwrap();
        let b = sample_batch(&m, &p, 100_000, 17).unwrap();
        let mut freq = vec![0.0; 4 * 8];
        for traj in &b.trajectories {
            for (t, (s, a, _)) in traj.steps().enumerate() {
                freq[t * 8 + realization_rank(s, &[0, 2], 2) * 2 + a] += 1e-5;
            }
        }
        for t in 0..4 {
            for k in 0..8 {
                assert!((freq[t * 8 + k] - occ.at(t)[k]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn psi_identity_and_infinity() {
        let m = random_fmdp(3, 2, 2, 1).unwrap().with_horizon(5);
        let p = Policy::uniform(2);
        assert!(compute_psi(&m, &p, &p, m.parents()).unwrap().iter().all(|&x| x == 1.0));
        let never_one = Policy::constant(2, 2, 0).unwrap();
        let always_one = Policy::constant(2, 2, 1).unwrap();
        let psi = compute_psi(&m, &never_one, &always_one, m.parents()).unwrap();
        assert!(psi.iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn psi_matches_sampled_ratio() {
        // Two variables; behavior prefers action 0, target prefers action 1.
        let m = random_fmdp(2, 2, 2, 6).unwrap().with_horizon(3);
        let behavior = Policy::constant(2, 2, 0).unwrap().epsilon_floor(0.5).unwrap();
        let target = Policy::constant(2, 2, 1).unwrap().epsilon_floor(0.2).unwrap();
        let psi = compute_psi(&m, &behavior, &target, m.parents()).unwrap();
        let n = 200_000;
        let bb = sample_batch(&m, &behavior, n, 1).unwrap();
        let be = sample_batch(&m, &target, n, 2).unwrap();
        for (i, ps) in m.parents().iter().enumerate() {
            let rows = 2usize.pow(ps.len() as u32) * 2;
            let tally = |b: &crate::TrajectoryBatch| {
                let mut c = vec![0.0; rows];
                for traj in &b.trajectories {
                    for (s, a, _) in traj.steps() {
                        c[realization_rank(s, ps, 2) * 2 + a] += 1.0;
                    }
                }
                c
            };
            let (cb, ce) = (tally(&bb), tally(&be));
            let mc = (0..rows)
                .filter(|&k| cb[k] > 0.0)
                .map(|k| ce[k] / cb[k])
                .fold(0.0, f64::max);
            assert!((mc - psi[i]).abs() / psi[i] < 0.05, "{mc} vs {}", psi[i]);
        }
    }
}
