use proptest::prelude::*;

use gscope::domains::random_fmdp;
use gscope::evaluators::evaluate_cis;
use gscope::fmdp::{exact_value, sample_batch, FactoredMdp};
use gscope::gscope::{build_model, l1_diff, learn_structure, sample_threshold, LearnedModel, Thresholds};
use gscope::rng::derive_seed;
use gscope::sweep::{format_float, read_csv, write_csv, Method, Status, SweepRow};
use gscope::theory::{compute_psi, theorem1_bound, BoundInputs};
use gscope::Policy;

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|raw| {
        let t: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / t).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn l1_is_a_bounded_metric(p in distribution(4), q in distribution(4), r in distribution(4)) {
        let pq = l1_diff(&p, &q).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
        prop_assert_eq!(pq, l1_diff(&q, &p).unwrap());
        prop_assert!(l1_diff(&p, &p).unwrap() == 0.0);
        prop_assert!(pq <= l1_diff(&p, &r).unwrap() + l1_diff(&r, &q).unwrap() + 1e-12);
    }

    #[test]
    fn threshold_shrinks_with_tolerance(eps in 0.05f64..0.5, delta1 in 0.01f64..0.9, gamma in 2usize..6) {
        let n = sample_threshold(eps, delta1, gamma).unwrap();
        prop_assert!(sample_threshold(eps * 1.5, delta1, gamma).unwrap() <= n);
        prop_assert!(sample_threshold(eps, delta1 / 2.0, gamma).unwrap() >= n);
        prop_assert!(sample_threshold(eps, delta1, gamma + 1).unwrap() >= n);
    }

    #[test]
    fn derived_seeds_are_deterministic(seed: u64, a: u64, b: u64) {
        prop_assert_eq!(derive_seed(seed, &[a, b]), derive_seed(seed, &[a, b]));
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, &[a, b]), derive_seed(seed, &[b, a]));
    }

    #[test]
    fn fmdp_json_round_trips(d in 1usize..6, gamma in 2usize..4, actions in 1usize..4, seed: u64) {
        let m = random_fmdp(d, gamma, actions, seed).unwrap();
        prop_assert_eq!(FactoredMdp::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn learned_rows_are_distributions(seed in 0u64..1000, h in 1usize..40) {
        let m = random_fmdp(4, 2, 2, seed).unwrap().with_horizon(6);
        let b = sample_batch(&m, &Policy::uniform(2), h, seed).unwrap();
        let th = Thresholds::new(0.3, 0.5, 0.0, 2).unwrap().with_min_count(2).unwrap();
        let s = learn_structure(&b, &th).unwrap();
        for ps in &s.parents {
            prop_assert!(ps.windows(2).all(|w| w[0] < w[1]));
        }
        let model = build_model(&b, &s.parents, &th).unwrap();
        for (i, ps) in s.parents.iter().enumerate() {
            for rank in 0..(1usize << ps.len()) {
                for a in 0..2 {
                    if let Some(row) = model.cpt_row(i, rank, a) {
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
        let back = LearnedModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
    }

    #[test]
    fn on_policy_cis_is_the_mean_return(seed in 0u64..1000, h in 1usize..60) {
        let m = random_fmdp(3, 2, 3, seed).unwrap().with_horizon(7);
        let pi = Policy::constant(3, 2, (seed % 3) as usize).unwrap().epsilon_floor(0.3).unwrap();
        let b = sample_batch(&m, &pi, h, seed).unwrap();
        let mean = b.trajectories.iter().map(|t| t.total_reward()).sum::<f64>() / h as f64;
        let r = evaluate_cis(&b, &pi, &pi, f64::INFINITY).unwrap();
        prop_assert!((r.estimate - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }

    #[test]
    fn psi_is_one_on_policy(seed in 0u64..1000) {
        let m = random_fmdp(3, 2, 2, seed).unwrap().with_horizon(4);
        let pi = Policy::constant(2, 2, 1).unwrap().epsilon_floor(0.5).unwrap();
        for x in compute_psi(&m, &pi, &pi, m.parents()).unwrap() {
            prop_assert!(x == 0.0 || (x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bound_grows_with_psi(psi in prop::collection::vec(0.0f64..10.0, 3), extra in 0.0f64..5.0) {
        let mut inputs = BoundInputs {
            eps: 0.1, delta1: 0.01, horizon: 8, n_vars: 3, m: 2, c2: 0.05, c3: 0.0,
            psi, n_actions: 2, gamma: 2,
        };
        let before = theorem1_bound(&inputs).unwrap();
        inputs.psi[0] += extra;
        let after = theorem1_bound(&inputs).unwrap();
        prop_assert!(after.delta_star >= before.delta_star);
        prop_assert!(after.value_bound >= before.value_bound);
        prop_assert_eq!(after.eps_star, before.eps_star);
    }

    #[test]
    fn csv_rows_round_trip(estimate in -1e6f64..1e6, truth in 0.1f64..100.0, refused: bool, h in 1usize..5000) {
        let row = SweepRow {
            method: Method::Mfmc,
            domain: "random-fmdp".into(),
            h,
            trial: 3,
            seed: 99,
            estimate: (!refused).then_some(estimate),
            stderr: (!refused).then_some(0.5),
            truth,
            truth_stderr: 0.0,
            normalized_error: (!refused).then(|| (estimate - truth).abs() / truth),
            status: if refused { Status::Refused } else { Status::Ok },
            diagnostics: Default::default(),
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![row]);
        prop_assert_eq!(format_float(estimate).parse::<f64>().unwrap(), estimate);
    }
}

#[test]
fn copy_chain_exact_value() {
    let m = gscope::domains::copy_chain(3, 2, 2).unwrap().with_horizon(6);
    let target = Policy::constant(2, 2, 1).unwrap();
    let truth = exact_value(&m, &target).unwrap();
    assert!((truth - 3.0).abs() < 1e-12);
}
