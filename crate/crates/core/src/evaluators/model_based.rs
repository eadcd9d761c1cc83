use super::{rollout_result, EvalResult, Simulator};
use crate::fmdp::{Action, FactoredMdp, Policy, TrajectoryBatch};
use crate::gscope::{build_model, LearnedModel, Thresholds};
use crate::rng::Rng;
use crate::{Error, Result};

impl Simulator for LearnedModel {
    fn n_vars(&self) -> usize {
        LearnedModel::n_vars(self)
    }

    fn sample_initial(&self, rng: &mut Rng, out: &mut [u8]) -> bool {
        self.initial().sample_into(self.gamma(), rng, out)
    }

    fn step_into(&self, s: &[u8], a: Action, rng: &mut Rng, out: &mut [u8]) -> bool {
        LearnedModel::step_into(self, s, a, rng, out)
    }
}

/// Monte-Carlo value of `target` on a learned model; rewards come from `mdp`.
pub fn evaluate_model_based(model: &LearnedModel, mdp: &FactoredMdp, target: &Policy, n_rollouts: usize, seed: u64) -> Result<EvalResult> {
    model.check_matches(mdp)?;
    if model.horizon() != mdp.horizon() {
        return Err(Error::SignatureMismatch(format!(
            "model horizon {} vs MDP horizon {}",
            model.horizon(),
            mdp.horizon()
        )));
    }
    rollout_result("gscope", model, mdp, target, n_rollouts, seed)
}

/// Same pipeline as the learned model but on the true parent sets.
pub fn evaluate_known_structure(
    batch: &TrajectoryBatch,
    mdp: &FactoredMdp,
    thresholds: &Thresholds,
    target: &Policy,
    n_rollouts: usize,
    seed: u64,
) -> Result<EvalResult> {
    batch.check_matches(mdp)?;
    let model = build_model(batch, mdp.parents(), thresholds)?;
    let mut r = evaluate_model_based(&model, mdp, target, n_rollouts, seed)?;
    r.method = "ks".into();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{copy_chain, random_fmdp};
    use crate::fmdp::{exact_value, sample_batch};
    use crate::gscope::learn_structure;

    #[test]
    fn perfect_model_matches_exact_value() {
        for seed in 0..3 {
            let m = random_fmdp(3, 2, 2, seed).unwrap().with_horizon(5);
            let target = Policy::uniform(2);
            let truth = exact_value(&m, &target).unwrap();
            let r = evaluate_model_based(&LearnedModel::from_true_model(&m), &m, &target, 10_000, seed).unwrap();
            assert!((r.estimate - truth).abs() <= 4.0 * r.stderr, "{} vs {truth}", r.estimate);
            assert_eq!(r.diagnostic("fallback_rate"), Some(0.0));
        }
    }

    #[test]
    fn empty_model_pays_nothing() {
        let m = copy_chain(3, 2, 2).unwrap();
        let b = sample_batch(&m, &Policy::uniform(2), 5, 0).unwrap();
        let th = Thresholds::new(0.1, 0.1, 0.0, 2).unwrap().with_min_count(1 << 30).unwrap();
        let model = build_model(&b, m.parents(), &th).unwrap();
        let r = evaluate_model_based(&model, &m, &Policy::uniform(2), 200, 0).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.diagnostic("fallback_rate"), Some(1.0));
        let empty = TrajectoryBatch::empty_like(&m);
        let r = evaluate_known_structure(&empty, &m, &th, &Policy::uniform(2), 50, 0).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn learned_copy_chain_is_accurate() {
        let m = copy_chain(4, 2, 2).unwrap();
        let behavior = Policy::uniform(2);
        let b = sample_batch(&m, &behavior, 4000, 11).unwrap();
        let th = Thresholds::new(0.2, 0.1, 0.0, 2).unwrap();
        let s = learn_structure(&b, &th).unwrap();
        assert_eq!(s.parents, m.parents());
        let target = Policy::constant(2, 2, 1).unwrap();
        let truth = exact_value(&m, &target).unwrap();
        let model = build_model(&b, &s.parents, &th).unwrap();
        let a = evaluate_model_based(&model, &m, &target, 4000, 5).unwrap();
        assert!((a.estimate - truth).abs() <= 4.0 * a.stderr + 1e-9, "{} vs {truth}", a.estimate);
        let k = evaluate_known_structure(&b, &m, &th, &target, 4000, 5).unwrap();
        assert_eq!(k.estimate, a.estimate);
    }

    #[test]
    fn signature_checked() {
        let m = copy_chain(3, 2, 2).unwrap();
        let other = copy_chain(4, 2, 2).unwrap();
        let model = LearnedModel::from_true_model(&m);
        assert!(matches!(
            evaluate_model_based(&model, &other, &Policy::uniform(2), 10, 0),
            Err(Error::SignatureMismatch(_))
        ));
    }
}
