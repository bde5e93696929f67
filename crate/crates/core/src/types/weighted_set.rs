//! The artifact's output: retained rubrics with strictly positive weights,
//! sorted by weight descending (ties by rubric id ascending).

use serde::{Deserialize, Serialize};

use super::{Rubric, TypeError};
use crate::num::Real;

/// One retained rubric and its fitted weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRubric<F: Real> {
    pub rubric: Rubric,
    pub weight: F,
}

/// Retained rubric set: the parameters of the learned reward function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRubricSet<F: Real> {
    pub entries: Vec<WeightedRubric<F>>,
    /// Refinement round that produced this set.
    pub round: u32,
    pub validation_accuracy: Option<F>,
}

impl<F: Real> WeightedRubricSet<F> {
    /// Builds a set from (rubric, weight) pairs, enforcing positive weights
    /// and the canonical order.
    pub fn new(entries: Vec<(Rubric, F)>, round: u32) -> Result<Self, TypeError> {
        for (rubric, weight) in &entries {
            if !(*weight > F::zero()) {
                return Err(TypeError::NonPositiveWeight {
                    rubric_id: rubric.id.clone(),
                    weight: weight.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mut entries: Vec<WeightedRubric<F>> = entries
            .into_iter()
            .map(|(rubric, weight)| WeightedRubric { rubric, weight })
            .collect();
        sort_entries(&mut entries);
        Ok(Self {
            entries,
            round,
            validation_accuracy: None,
        })
    }

    pub fn empty(round: u32) -> Self {
        Self {
            entries: Vec::new(),
            round,
            validation_accuracy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rubrics(&self) -> impl Iterator<Item = &Rubric> {
        self.entries.iter().map(|e| &e.rubric)
    }

    pub fn contains(&self, rubric_id: &str) -> bool {
        self.entries.iter().any(|e| e.rubric.id == rubric_id)
    }

    /// True if entries are in the canonical order (weight desc, id asc).
    pub fn is_sorted(&self) -> bool {
        self.entries.windows(2).all(|w| {
            w[0].weight > w[1].weight
                || (w[0].weight == w[1].weight && w[0].rubric.id <= w[1].rubric.id)
        })
    }
}

/// Weight descending, ties by rubric id ascending. Total order, so
/// re-sorting is idempotent.
pub(crate) fn sort_entries<F: Real>(entries: &mut [WeightedRubric<F>]) {
    entries.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .expect("weights are finite")
            .then_with(|| a.rubric.id.cmp(&b.rubric.id))
    });
}
