use rand::seq::index::sample;
use rand::Rng as _;

use crate::fmdp::{checked_pow, FactoredMdp, InitialDist, Reward};
use crate::rng;
use crate::{Error, Result};

/// Random factored MDP: each variable gets `Uniform{1..4}` parents (capped
/// at `D`) drawn without replacement, CPT entries are i.i.d. `Uniform(0, 1)`
/// and row-normalised, and the reward is 1 iff the last variable equals 1.
/// Uniform product `ρ`, horizon 200.
pub fn random_fmdp(d: usize, gamma: usize, n_actions: usize, seed: u64) -> Result<FactoredMdp> {
    if d == 0 || gamma < 2 || n_actions == 0 {
        return Err(Error::InvalidArgument(
            "random FMDP needs D >= 1, gamma >= 2, A >= 1".into(),
        ));
    }
    let mut r = rng::seeded(seed);
    let mut parents = Vec::with_capacity(d);
    let mut cpts = Vec::with_capacity(d);
    for _ in 0..d {
        let k = r.gen_range(1..=4usize).min(d);
        let mut ps = sample(&mut r, d, k).into_vec();
        ps.sort_unstable();
        let rows = checked_pow(gamma, k).unwrap() * n_actions;
        let mut table = Vec::with_capacity(rows * gamma);
        for _ in 0..rows {
            let raw: Vec<f64> = (0..gamma).map(|_| r.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            table.extend(raw.iter().map(|x| x / total));
        }
        parents.push(ps);
        cpts.push(table);
    }
    FactoredMdp::new(
        d,
        gamma,
        n_actions,
        200,
        parents,
        cpts,
        Reward::Indicator {
            var: d - 1,
            value: 1,
        },
        InitialDist::uniform_product(d, gamma),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shape() {
        let m = random_fmdp(20, 2, 4, 0).unwrap();
        assert_eq!((m.n_vars(), m.gamma(), m.n_actions(), m.horizon()), (20, 2, 4, 200));
        for ps in m.parents() {
            assert!((1..=4).contains(&ps.len()));
        }
        assert_eq!(m.reward(&[0; 20], 0), 0.0);
        let mut s = [0u8; 20];
        s[19] = 1;
        assert_eq!(m.reward(&s, 3), 1.0);
    }

    #[test]
    fn seeds_matter() {
        assert_eq!(random_fmdp(20, 2, 2, 5).unwrap(), random_fmdp(20, 2, 2, 5).unwrap());
        assert_ne!(
            random_fmdp(20, 2, 2, 5).unwrap().parents(),
            random_fmdp(20, 2, 2, 6).unwrap().parents()
        );
    }

    #[test]
    fn small_d_caps_parent_count() {
        for seed in 0..50 {
            let m = random_fmdp(2, 3, 1, seed).unwrap();
            assert!(m.parents().iter().all(|p| p.len() <= 2 && !p.is_empty()));
        }
    }

    #[test]
    fn parent_counts_pass_chi_square() {
        // χ² with 3 dof; 16.27 is the p = 0.001 critical value.
        let mut hist = [0usize; 4];
        let n = 10_000;
        for seed in 0..n as u64 {
            let m = random_fmdp(6, 2, 1, seed).unwrap();
            hist[m.parents()[0].len() - 1] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, hist = {hist:?}");
    }
}
