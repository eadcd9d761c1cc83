//! The 5×5 Taxi grid as a four-variable factored MDP.
//!
//! Variables: 0 = row, 1 = column, 2 = passenger location (depot 0..3, or 4
//! for "in the taxi"), 3 = destination depot (0..3). All variables share
//! `Γ = 5`; destination value 4 is never reached from `ρ`.
//!
//! Parent sets: row ← {row}, column ← {row, column} (walls), passenger ←
//! {row, column, passenger}, destination ← {destination}.
//!
//! Classic rewards −1 per step, −10 for an illegal pickup or dropoff and +20
//! for a delivery are mapped to `[0, 1]` by `r ↦ (r + 10) / 30`.

use crate::fmdp::{flat_index, realization_values, FactoredMdp, InitialDist, Reward, State};

pub const TAXI_DEPOTS: [(u8, u8); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

const IN_TAXI: u8 = 4;
const GAMMA: usize = 5;
const N_ACTIONS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum TaxiAction {
    South = 0,
    North = 1,
    East = 2,
    West = 3,
    Pickup = 4,
    Dropoff = 5,
}

/// `true` if a wall separates column `col` from `col + 1` in row `row`.
fn wall_east(row: u8, col: u8) -> bool {
    matches!((row, col), (0, 1) | (1, 1) | (3, 0) | (4, 0) | (3, 2) | (4, 2))
}

fn depot_at(row: u8, col: u8) -> Option<u8> {
    TAXI_DEPOTS
        .iter()
        .position(|&d| d == (row, col))
        .map(|k| k as u8)
}

fn next_row(row: u8, a: usize) -> u8 {
    match a {
        0 => (row + 1).min(4),
        1 => row.saturating_sub(1),
        _ => row,
    }
}

fn next_col(row: u8, col: u8, a: usize) -> u8 {
    match a {
        2 if col < 4 && !wall_east(row, col) => col + 1,
        3 if col > 0 && !wall_east(row, col - 1) => col - 1,
        _ => col,
    }
}

fn next_pass(row: u8, col: u8, pass: u8, a: usize) -> u8 {
    match a {
        4 if pass < IN_TAXI && TAXI_DEPOTS[pass as usize] == (row, col) => IN_TAXI,
        5 if pass == IN_TAXI => depot_at(row, col).unwrap_or(pass),
        _ => pass,
    }
}

fn classic_reward(s: &[u8], a: usize) -> f64 {
    let (row, col, pass, dest) = (s[0], s[1], s[2], s[3]);
    match a {
        4 => {
            if pass < IN_TAXI && TAXI_DEPOTS[pass as usize] == (row, col) {
                -1.0
            } else {
                -10.0
            }
        }
        5 => {
            if pass != IN_TAXI {
                -10.0
            } else if dest < IN_TAXI && TAXI_DEPOTS[dest as usize] == (row, col) {
                20.0
            } else if depot_at(row, col).is_some() {
                -1.0
            } else {
                -10.0
            }
        }
        _ => -1.0,
    }
}

/// Point-mass CPT over parent realizations of length `n_parents`.
fn deterministic_cpt(n_parents: usize, f: impl Fn(&[u8], usize) -> u8) -> Vec<f64> {
    let rows = GAMMA.pow(n_parents as u32);
    let mut table = vec![0.0; rows * N_ACTIONS * GAMMA];
    for rank in 0..rows {
        let v = realization_values(rank, n_parents, GAMMA);
        for a in 0..N_ACTIONS {
            table[(rank * N_ACTIONS + a) * GAMMA + f(&v, a) as usize] = 1.0;
        }
    }
    table
}

/// Taxi with horizon 200 and a uniform initial distribution over the 500
/// valid states.
pub fn make_taxi() -> FactoredMdp {
    let parents = vec![vec![0], vec![0, 1], vec![0, 1, 2], vec![3]];
    let cpts = vec![
        deterministic_cpt(1, |v, a| next_row(v[0], a)),
        deterministic_cpt(2, |v, a| next_col(v[0], v[1], a)),
        deterministic_cpt(3, |v, a| next_pass(v[0], v[1], v[2], a)),
        deterministic_cpt(1, |v, _| v[0]),
    ];
    let n_states = GAMMA.pow(4);
    let mut rewards = vec![0.0; n_states * N_ACTIONS];
    for idx in 0..n_states {
        let s = State::from_flat(idx, 4, GAMMA);
        debug_assert_eq!(flat_index(&s.0, GAMMA), idx);
        for a in 0..N_ACTIONS {
            rewards[idx * N_ACTIONS + a] = (classic_reward(&s.0, a) + 10.0) / 30.0;
        }
    }
    let uniform5 = vec![0.2; 5];
    let rho = InitialDist::Product {
        marginals: vec![uniform5.clone(), uniform5.clone(), uniform5, vec![0.25, 0.25, 0.25, 0.25, 0.0]],
    };
    FactoredMdp::new(4, GAMMA, N_ACTIONS, 200, parents, cpts, Reward::Table { values: rewards }, rho)
        .expect("taxi construction is valid")
}
