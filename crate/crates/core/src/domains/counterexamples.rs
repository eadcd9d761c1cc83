//! Small models on which greedy parent selection is known to misbehave.

use crate::fmdp::{FactoredMdp, FlatDynamics, InitialDist, Reward, State, Trajectory, TrajectoryBatch};
use crate::{Error, Result};

const COPY: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

/// Three binary variables, one action. `X(0)` and `X(1)` copy themselves,
/// `Y(2) = X(0) AND X(1)`, and `ρ` is uniform over `(x0, x1)` with
/// `x2 = x0 AND x1`, so `X(2)` is a perfect proxy for `Y(2)` at every step.
/// Scored against the marginal, the proxy beats both true parents.
pub fn make_assumption1_violation() -> FactoredMdp {
    let and_table: Vec<f64> = (0..4)
        .flat_map(|rank| if rank == 3 { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    let mut rho = vec![0.0; 8];
    for x0 in 0..2usize {
        for x1 in 0..2usize {
            rho[(x0 << 2) | (x1 << 1) | (x0 & x1)] = 0.25;
        }
    }
    FactoredMdp::new(
        3,
        2,
        1,
        10,
        vec![vec![0], vec![1], vec![0, 1]],
        vec![COPY.to_vec(), COPY.to_vec(), and_table],
        Reward::Indicator { var: 2, value: 1 },
        InitialDist::Table { probs: rho },
    )
    .expect("valid construction")
}

/// Three binary variables, one action. `X(0)` and `X(1)` are fresh fair
/// coins every step and `Y(2) = X(0) XOR X(1)`: each parent alone carries no
/// information about `Y(2)`, both together determine it.
pub fn make_assumption3_violation() -> FactoredMdp {
    let xor_table: Vec<f64> = (0..4)
        .flat_map(|rank| if rank == 1 || rank == 2 { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    FactoredMdp::new(
        3,
        2,
        1,
        10,
        vec![vec![], vec![], vec![0, 1]],
        vec![vec![0.5, 0.5], vec![0.5, 0.5], xor_table],
        Reward::Indicator { var: 2, value: 1 },
        InitialDist::uniform_product(3, 2),
    )
    .expect("valid construction")
}

/// One-step trajectories whose empirical `(x, a, y)` frequencies equal
/// `ρ(x) · (1/A) · P(y | x, a)` exactly, with `total` transitions in all.
///
/// Fails when some weight times `total` is not an integer.
pub fn exact_frequency_batch(mdp: &FactoredMdp, total: u64) -> Result<TrajectoryBatch> {
    let flat = FlatDynamics::build(mdp)?;
    let rho = flat.initial_vector(mdp);
    let na = mdp.n_actions();
    let mut trajectories = Vec::new();
    for (s, &p_s) in rho.iter().enumerate() {
        if p_s == 0.0 {
            continue;
        }
        let x = State(flat.state(s).to_vec());
        for a in 0..na {
            for (n, p_n) in flat.successors(s, a) {
                let w = p_s * p_n / na as f64 * total as f64;
                let count = w.round();
                if (w - count).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "weight {w} is not integral; choose a different total"
                    )));
                }
                let y = State(flat.state(n).to_vec());
                let r = mdp.reward(&x.0, a);
                let t = Trajectory::from_parts(&[x.clone(), y], vec![a], vec![r], 0)?;
                trajectories.extend(std::iter::repeat_n(t, count as usize));
            }
        }
    }
    TrajectoryBatch::new(mdp.n_vars(), mdp.gamma(), na, 1, trajectories)
}
