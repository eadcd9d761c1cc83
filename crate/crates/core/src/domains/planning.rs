use crate::fmdp::{realization_values, FactoredMdp, FlatDynamics, Policy, Reward};
use crate::{Error, Result};

/// Optimal first-stage action of the `T`-step problem on the true model,
/// as a deterministic state-tabular policy with an `eps_floor` mixture.
///
/// Ties go to the lowest action index.
pub fn plan_target_policy(mdp: &FactoredMdp, eps_floor: f64) -> Result<Policy> {
    let flat = FlatDynamics::build(mdp)?;
    let na = mdp.n_actions();
    let mut v = vec![0.0; flat.n_states];
    let mut v_next = vec![0.0; flat.n_states];
    let mut greedy = vec![0usize; flat.n_states];
    for _ in 0..mdp.horizon() {
        std::mem::swap(&mut v, &mut v_next);
        for s in 0..flat.n_states {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let q = flat.backup(s, a, &v_next);
                if q > best + 1e-12 {
                    best = q;
                    best_a = a;
                }
            }
            v[s] = best;
            greedy[s] = best_a;
        }
    }
    let scope: Vec<usize> = (0..mdp.n_vars()).collect();
    Policy::deterministic(na, mdp.gamma(), scope, &greedy)?.epsilon_floor(eps_floor)
}

/// One-step lookahead for indicator rewards on models too large to enumerate:
/// pick the action maximising `Pr(Y(var) = value | X(Φ_var), a)`. The policy
/// reads only the parents of the rewarded variable.
pub fn reward_lookahead_policy(mdp: &FactoredMdp, eps_floor: f64) -> Result<Policy> {
    let Reward::Indicator { var, value } = *mdp.reward_fn() else {
        return Err(Error::InvalidArgument(
            "reward lookahead needs an indicator reward".into(),
        ));
    };
    let g = mdp.gamma();
    let na = mdp.n_actions();
    let scope = mdp.parents()[var].clone();
    let rows = g.pow(scope.len() as u32);
    let mut actions = Vec::with_capacity(rows);
    for rank in 0..rows {
        debug_assert_eq!(realization_values(rank, scope.len(), g).len(), scope.len());
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..na {
            let p = mdp.cpt_row(var, rank, a)[value as usize];
            if p > best + 1e-12 {
                best = p;
                best_a = a;
            }
        }
        actions.push(best_a);
    }
    Policy::deterministic(na, g, scope, &actions)?.epsilon_floor(eps_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, make_taxi, random_fmdp};
    use crate::fmdp::{exact_value, InitialDist};

    #[test]
    fn floor_respected() {
        let m = copy_chain(3, 2, 2).unwrap();
        let p = plan_target_policy(&m, 0.05).unwrap();
        let mut out = [0.0; 2];
        for idx in 0..8 {
            let s = crate::State::from_flat(idx, 3, 2);
            p.action_probs(&s.0, &mut out);
            assert!(out.iter().all(|&x| x >= 0.05 / 2.0 - 1e-15));
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Optimal on the copy chain: match X(0).
            assert!(out[s.0[0] as usize] > 0.9);
        }
    }

    #[test]
    fn zero_reward_still_a_distribution() {
        let base = copy_chain(2, 2, 3).unwrap();
        let m = FactoredMdp::new(
            2,
            2,
            3,
            4,
            base.parents().to_vec(),
            (0..2).map(|i| base.cpt(i).to_vec()).collect(),
            Reward::Constant { value: 0.0 },
            InitialDist::uniform_product(2, 2),
        )
        .unwrap();
        let p = plan_target_policy(&m, 0.0).unwrap();
        for idx in 0..4 {
            let s = crate::State::from_flat(idx, 2, 2);
            let total: f64 = (0..3).map(|a| p.action_prob(&s.0, a)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn taxi_plan_beats_random() {
        let m = make_taxi();
        let planned = plan_target_policy(&m, 0.05).unwrap();
        let v_plan = exact_value(&m, &planned).unwrap();
        let v_rand = exact_value(&m, &Policy::uniform(6)).unwrap();
        assert!(v_plan > v_rand + 10.0, "{v_plan} vs {v_rand}");
    }

    #[test]
    fn refuses_large_models() {
        let m = random_fmdp(20, 2, 2, 0).unwrap();
        assert!(plan_target_policy(&m, 0.05).unwrap_err().is_refusal());
        let p = reward_lookahead_policy(&m, 0.05).unwrap();
        assert_eq!(p.n_actions(), 2);
    }
}
