//! Turns solver weights into a retained Top-N rubric set and computes the
//! reward, margin, and accuracy quantities the rest of the pipeline consumes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::types::{PreferencePair, Rubric, ScoreMatrix, TypeError, WeightedRubricSet};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("weights/rubrics length mismatch: {weights} weights for {rubrics} rubrics")]
    LengthMismatch { weights: usize, rubrics: usize },

    #[error("missing score for retained rubric {0}")]
    IncompleteScores(String),

    #[error("missing row for pair {0}")]
    MissingPair(String),

    #[error("metrics are undefined on an empty pair list")]
    UndefinedMetric,

    #[error(transparent)]
    Type(#[from] TypeError),
}

/// How fitted weights become a retained set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionMode {
    /// Unconstrained fit; keep only the positive coordinates.
    TruncatePositive,
    /// Fit under a nonnegativity constraint; keep the positive coordinates.
    NonnegativeFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionConfig<F: Real> {
    pub top_n: usize,
    /// Coordinates at or below this magnitude count as zero.
    pub zero_threshold: F,
    pub mode: RetentionMode,
}

impl<F: Real> Default for RetentionConfig<F> {
    fn default() -> Self {
        Self {
            top_n: 20,
            zero_threshold: F::c(1e-4),
            mode: RetentionMode::TruncatePositive,
        }
    }
}

/// Keeps the Top-N rubrics with the largest weights above the zero
/// threshold, in the canonical order (weight desc, id asc).
pub fn retain_top_n<F: Real>(
    weights: &[F],
    rubrics: &[Rubric],
    config: &RetentionConfig<F>,
    round: u32,
) -> Result<WeightedRubricSet<F>, SelectionError> {
    if weights.len() != rubrics.len() {
        return Err(SelectionError::LengthMismatch {
            weights: weights.len(),
            rubrics: rubrics.len(),
        });
    }
    let survivors: Vec<(Rubric, F)> = rubrics
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > config.zero_threshold)
        .map(|(r, &w)| (r.clone(), w))
        .collect();
    let mut set = WeightedRubricSet::new(survivors, round)?;
    set.entries.truncate(config.top_n);
    Ok(set)
}

/// Weighted sum of per-rubric scores: the learned reward.
pub fn reward<F: Real>(
    set: &WeightedRubricSet<F>,
    scores: &HashMap<String, F>,
) -> Result<F, SelectionError> {
    let mut total = F::zero();
    for entry in &set.entries {
        let score = scores
            .get(&entry.rubric.id)
            .ok_or_else(|| SelectionError::IncompleteScores(entry.rubric.id.clone()))?;
        total = total + entry.weight * *score;
    }
    Ok(total)
}

/// Per-side scores for one pair, keyed by rubric id.
pub struct PairScores<'a, F: Real> {
    pub side_a: &'a HashMap<String, F>,
    pub side_b: &'a HashMap<String, F>,
}

/// Weighted score differential for one pair; positive means side a scored
/// higher under the set.
pub fn pair_margin<F: Real>(
    set: &WeightedRubricSet<F>,
    scores: &PairScores<'_, F>,
) -> Result<F, SelectionError> {
    let mut total = F::zero();
    for entry in &set.entries {
        let a = scores
            .side_a
            .get(&entry.rubric.id)
            .ok_or_else(|| SelectionError::IncompleteScores(entry.rubric.id.clone()))?;
        let b = scores
            .side_b
            .get(&entry.rubric.id)
            .ok_or_else(|| SelectionError::IncompleteScores(entry.rubric.id.clone()))?;
        total = total + entry.weight * (*a - *b);
    }
    Ok(total)
}

/// Evaluation outcome over a pair list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<F: Real> {
    /// wins / total.
    pub strict_accuracy: F,
    /// (wins + 0.5 * ties) / total.
    pub tie_adjusted_accuracy: F,
    /// Pairs with `z * margin < 0`; exact-zero margins are ties, not
    /// misrankings.
    pub misranked_ids: Vec<String>,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Signed margin per pair, aligned with the input pair order.
    pub margins: Vec<F>,
}

/// Scores a retained set against a matrix whose columns cover the set's
/// rubrics; rows are looked up per pair.
pub fn evaluate<F: Real>(
    set: &WeightedRubricSet<F>,
    pairs: &[PreferencePair],
    scores: &ScoreMatrix<F>,
) -> Result<EvalReport<F>, SelectionError> {
    if pairs.is_empty() {
        return Err(SelectionError::UndefinedMetric);
    }
    let columns: Vec<usize> = set
        .entries
        .iter()
        .map(|entry| {
            scores
                .rubric_column(&entry.rubric.id)
                .ok_or_else(|| SelectionError::IncompleteScores(entry.rubric.id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut wins = 0usize;
    let mut ties = 0usize;
    let mut losses = 0usize;
    let mut misranked_ids = Vec::new();
    let mut margins = Vec::with_capacity(pairs.len());

    for pair in pairs {
        let row = scores
            .pair_row(&pair.id)
            .ok_or_else(|| SelectionError::MissingPair(pair.id.clone()))?;
        let mut margin = F::zero();
        for (entry, &col) in set.entries.iter().zip(columns.iter()) {
            margin = margin + entry.weight * scores.delta[(row, col)];
        }
        margins.push(margin);
        let signed = pair.label.sign::<F>() * margin;
        if signed > F::zero() {
            wins += 1;
        } else if signed == F::zero() {
            ties += 1;
        } else {
            losses += 1;
            misranked_ids.push(pair.id.clone());
        }
    }

    let total = F::from_usize(pairs.len()).expect("pair count fits scalar");
    let wins_f = F::from_usize(wins).expect("count fits scalar");
    let ties_f = F::from_usize(ties).expect("count fits scalar");
    Ok(EvalReport {
        strict_accuracy: wins_f / total,
        tie_adjusted_accuracy: (wins_f + F::c(0.5) * ties_f) / total,
        misranked_ids,
        wins,
        ties,
        losses,
        margins,
    })
}
