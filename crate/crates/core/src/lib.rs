//! Off-policy evaluation on factored MDPs with greedily learned structure.
//!
//! The crate is organised bottom-up:
//!
//! * [`fmdp`] holds the factored model, policies, trajectories and exact /
//!   sampled dynamics.
//! * [`domains`] builds the benchmark models (Taxi, random FMDPs, the
//!   assumption counterexamples, a deterministic copy chain) and plans
//!   target policies on them.
//! * [`gscope`] learns parent sets from batch data and assembles the
//!   estimated model with its known-set fallback.
//! * [`evaluators`] turns batch data into value estimates (model based,
//!   flat, known structure, MFMC stitching, clipped importance sampling).
//! * [`theory`] computes occupancies, mismatch coefficients, the finite
//!   sample bound and brute-force assumption checks.
//! * [`sweep`] drives experiment grids and writes CSV / JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod domains;
pub mod error;
pub mod evaluators;
pub mod fmdp;
pub mod gscope;
pub mod rng;
pub mod sweep;
pub mod theory;

pub use error::{Error, Result};
pub use fmdp::{
    Action, FactoredMdp, InitialDist, Policy, Reward, State, Trajectory, TrajectoryBatch,
};
