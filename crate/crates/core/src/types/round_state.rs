//! Checkpointable snapshot of one refinement round.

use serde::{Deserialize, Serialize};

use super::{Rubric, TypeError, WeightedRubricSet};
use crate::num::Real;

/// Everything one round produced: the working set it scored, what was
/// retained, which pairs were mined, and what was proposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState<F: Real> {
    pub round: u32,
    /// Rubrics scored and fitted this round.
    pub working_set: Vec<Rubric>,
    pub retained: WeightedRubricSet<F>,
    pub mined_pair_ids: Vec<String>,
    /// Ids of novel rubrics proposed this round (absent from `working_set`).
    pub proposed_rubric_ids: Vec<String>,
    pub train_accuracy: F,
    pub validation_accuracy: F,
}

impl<F: Real> RoundState<F> {
    /// Checks the structural invariants: retained ⊆ working set, proposals
    /// disjoint from the working set.
    pub fn validate(&self) -> Result<(), TypeError> {
        for entry in &self.retained.entries {
            if !self.working_set.iter().any(|r| r.id == entry.rubric.id) {
                return Err(TypeError::RetainedNotInWorkingSet(entry.rubric.id.clone()));
            }
        }
        for proposed in &self.proposed_rubric_ids {
            if self.working_set.iter().any(|r| &r.id == proposed) {
                return Err(TypeError::DuplicateRubric(proposed.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_retained_outside_working_set() {
        let inside = Rubric::seed("inside").unwrap();
        let outside = Rubric::seed("outside").unwrap();
        let state = RoundState::<f64> {
            round: 0,
            working_set: vec![inside],
            retained: WeightedRubricSet::new(vec![(outside, 1.0)], 0).unwrap(),
            mined_pair_ids: vec![],
            proposed_rubric_ids: vec![],
            train_accuracy: 0.5,
            validation_accuracy: 0.5,
        };
        assert!(state.validate().is_err());
    }

    #[test]
    fn validate_catches_proposed_already_in_working_set() {
        let r = Rubric::seed("shared").unwrap();
        let state = RoundState::<f64> {
            round: 0,
            working_set: vec![r.clone()],
            retained: WeightedRubricSet::empty(0),
            mined_pair_ids: vec![],
            proposed_rubric_ids: vec![r.id],
            train_accuracy: 0.0,
            validation_accuracy: 0.0,
        };
        assert!(state.validate().is_err());
    }
}
