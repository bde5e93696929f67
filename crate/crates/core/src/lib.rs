//! Learns a compact, weighted set of natural-language rubrics from a small
//! set of pairwise image preferences.
//!
//! Candidate rubrics are scored by a pluggable judge, selected by
//! ℓ1-regularized logistic regression over score differentials, and the pool
//! is expanded each round from curriculum-mined hard pairs. The numeric core
//! is generic over the scalar type; the aliases below fix `f64` for the
//! pipeline and file formats.

pub mod judge;
pub mod mining;
pub mod num;
pub mod pipeline;
pub mod proposer;
pub mod seedsel;
pub mod selection;
pub mod solver;
pub mod synthworld;
pub mod types;
mod util;

pub use num::Real;

/// Score matrix in the pipeline's working precision.
pub type ScoreMatrix = types::ScoreMatrix<f64>;
/// Weighted rubric set in the pipeline's working precision.
pub type WeightedRubricSet = types::WeightedRubricSet<f64>;
/// Round snapshot in the pipeline's working precision.
pub type RoundState = types::RoundState<f64>;
/// Solver input in the pipeline's working precision.
pub type SolveProblem = solver::SolveProblem<f64>;
/// Solver output in the pipeline's working precision.
pub type SolveResult = solver::SolveResult<f64>;
