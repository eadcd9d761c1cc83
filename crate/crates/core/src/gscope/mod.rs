//! Greedy structure learning of factored dynamics from batch data.
//!
//! For every next-state variable the learner starts from an empty parent
//! set and repeatedly adds the candidate whose conditioning moves the
//! empirical next-value distribution the most (in L1), scoring only
//! realization triples observed more than `N(ε, δ₁)` times. It stops when
//! the best gain is at most `C₂ + 2ε` or when no candidate has enough data.

mod counts;
mod learn;
mod model;
mod threshold;

pub use counts::{empirical_cpt, CountStore};
pub use learn::{candidate_scores, learn_structure, CandidateScore, LearnedStructure, ScoreReport};
pub use model::{build_model, InitialStates, LearnedModel, Provenance};
pub use threshold::{l1_diff, sample_threshold, Thresholds};
