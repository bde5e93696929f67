//! Shared domain types: rubrics, preference pairs, score matrices, weighted
//! rubric sets, and per-round snapshots.
//!
//! Everything here is an immutable value after construction and safe to
//! share across threads.

mod matrix;
mod pair;
mod round_state;
mod rubric;
mod weighted_set;

pub use matrix::ScoreMatrix;
pub use pair::{PreferencePair, PreferredSide};
pub use round_state::RoundState;
pub use rubric::{normalize_rubric_text, rubric_id, Rubric, RubricOrigin};
pub use weighted_set::{WeightedRubric, WeightedRubricSet};
pub(crate) use weighted_set::sort_entries as weighted_set_sort;

use thiserror::Error;

/// Errors raised while constructing or validating domain values.
#[derive(Debug, Error)]
pub enum TypeError {
    /// Rubric text is empty after whitespace normalization.
    #[error("invalid rubric: text is empty after normalization")]
    InvalidRubric,

    /// Two rubrics with the same content hash in one pool.
    #[error("duplicate rubric id {0} in pool")]
    DuplicateRubric(String),

    /// A score is outside the `[0, 1]` range.
    #[error("score {value} for ({row}, {col}) outside [0, 1]")]
    ScoreOutOfRange { row: usize, col: usize, value: f64 },

    /// Matrix dimensions do not match the id lists.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A weight that must be strictly positive is not.
    #[error("non-positive weight {weight} for rubric {rubric_id}")]
    NonPositiveWeight { rubric_id: String, weight: f64 },

    /// Retained entries reference rubrics missing from the working set.
    #[error("retained rubric {0} is not in the working set")]
    RetainedNotInWorkingSet(String),
}
