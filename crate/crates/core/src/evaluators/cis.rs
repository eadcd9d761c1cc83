use std::collections::BTreeMap;

use super::EvalResult;
use crate::fmdp::{McEstimate, Policy, TrajectoryBatch};
use crate::{Error, Result};

/// Clipped trajectory-level importance sampling:
/// `(1/H) Σ_h min(clip, Π_t π_e(a_t|s_t) / π_b(a_t|s_t)) · Σ_t r_t`.
/// Pass `f64::INFINITY` to disable clipping.
pub fn evaluate_cis(batch: &TrajectoryBatch, target: &Policy, behavior: &Policy, clip: f64) -> Result<EvalResult> {
    if !(clip > 0.0) {
        return Err(Error::InvalidArgument(format!("clip = {clip} must be positive")));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("CIS needs a nonempty batch".into()));
    }
    target.check_compatible(batch.n_vars, batch.gamma, batch.n_actions)?;
    behavior.check_compatible(batch.n_vars, batch.gamma, batch.n_actions)?;
    let mut weights = Vec::with_capacity(batch.len());
    let mut terms = Vec::with_capacity(batch.len());
    let mut clipped = 0usize;
    for (h, traj) in batch.trajectories.iter().enumerate() {
        let mut w = 1.0;
        for (t, (s, a, _)) in traj.steps().enumerate() {
            let pb = behavior.action_prob(s, a);
            if pb <= 0.0 {
                return Err(Error::LoggingInconsistency {
                    trajectory: h,
                    step: t,
                    action: a,
                });
            }
            if w > 0.0 {
                w *= target.action_prob(s, a) / pb;
            }
        }
        if w > clip {
            w = clip;
            clipped += 1;
        }
        weights.push(w);
        terms.push(w * traj.total_reward());
    }
    let est = McEstimate::from_samples(&terms);
    let sum_w: f64 = weights.iter().sum();
    let sum_w2: f64 = weights.iter().map(|w| w * w).sum();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("ess".into(), if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 });
    diagnostics.insert("clipped_fraction".into(), clipped as f64 / batch.len() as f64);
    diagnostics.insert(
        "zero_weight_fraction".into(),
        weights.iter().filter(|&&w| w == 0.0).count() as f64 / batch.len() as f64,
    );
    Ok(EvalResult {
        method: "cis".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n: batch.len(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::random_fmdp;
    use crate::fmdp::sample_batch;

    #[test]
    fn on_policy_unclipped_is_the_plain_mean() {
        let m = random_fmdp(4, 2, 3, 2).unwrap().with_horizon(8);
        let p = Policy::uniform(3);
        let b = sample_batch(&m, &p, 50, 1).unwrap();
        let r = evaluate_cis(&b, &p, &p, f64::INFINITY).unwrap();
        let mean = b.trajectories.iter().map(|t| t.total_reward()).sum::<f64>() / 50.0;
        assert_eq!(r.estimate, mean);
        assert_eq!(r.diagnostic("ess"), Some(50.0));
    }

    #[test]
    fn impossible_actions_zero_the_weight() {
        let m = random_fmdp(3, 2, 2, 0).unwrap().with_horizon(4);
        let behavior = Policy::uniform(2);
        let target = Policy::constant(2, 2, 0).unwrap();
        let b = sample_batch(&m, &behavior, 40, 3).unwrap();
        let r = evaluate_cis(&b, &target, &behavior, f64::INFINITY).unwrap();
        let expected: f64 = b
            .trajectories
            .iter()
            .filter(|t| t.actions().iter().all(|&a| a == 0))
            .map(|t| 16.0 * t.total_reward())
            .sum::<f64>()
            / 40.0;
        assert!((r.estimate - expected).abs() < 1e-12);
        assert!(r.diagnostic("zero_weight_fraction").unwrap() > 0.5);
    }

    #[test]
    fn clipping_is_monotone() {
        let m = random_fmdp(3, 2, 2, 5).unwrap().with_horizon(6);
        let behavior = Policy::uniform(2);
        let target = Policy::constant(2, 2, 1).unwrap().epsilon_floor(0.2).unwrap();
        let b = sample_batch(&m, &behavior, 100, 8).unwrap();
        let mut last = 0.0;
        for clip in [0.5, 1.0, 2.0, 5.0, 20.0, f64::INFINITY] {
            let e = evaluate_cis(&b, &target, &behavior, clip).unwrap().estimate;
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn logging_inconsistency() {
        let m = random_fmdp(3, 2, 2, 0).unwrap().with_horizon(3);
        let b = sample_batch(&m, &Policy::uniform(2), 5, 0).unwrap();
        let bad_behavior = Policy::constant(2, 2, 0).unwrap();
        let target = Policy::uniform(2);
        assert!(matches!(
            evaluate_cis(&b, &target, &bad_behavior, 10.0),
            Err(Error::LoggingInconsistency { .. })
        ));
    }
}
