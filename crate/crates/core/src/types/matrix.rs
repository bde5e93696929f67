//! Per-(pair, rubric) judge scores for both sides, plus their differential.
//! Rows follow `pair_ids`, columns follow `rubric_ids`; `delta` is always
//! exactly `s_a - s_b` in the matrix's own precision.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::TypeError;
use crate::num::Real;

/// The solver's feature source: side scores and score differentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<F: Real> {
    pub pair_ids: Vec<String>,
    pub rubric_ids: Vec<String>,
    pub s_a: Array2<F>,
    pub s_b: Array2<F>,
    pub delta: Array2<F>,
}

impl<F: Real> ScoreMatrix<F> {
    /// Builds the matrix from side scores, deriving `delta`, and validates
    /// ranges and dimensions.
    pub fn new(
        pair_ids: Vec<String>,
        rubric_ids: Vec<String>,
        s_a: Array2<F>,
        s_b: Array2<F>,
    ) -> Result<Self, TypeError> {
        let shape = (pair_ids.len(), rubric_ids.len());
        if s_a.dim() != shape || s_b.dim() != shape {
            return Err(TypeError::DimensionMismatch(format!(
                "expected {}x{} score matrices, got {:?} and {:?}",
                shape.0,
                shape.1,
                s_a.dim(),
                s_b.dim()
            )));
        }
        for (matrix, _name) in [(&s_a, "s_a"), (&s_b, "s_b")] {
            for ((row, col), &value) in matrix.indexed_iter() {
                if !(value >= F::zero() && value <= F::one()) {
                    return Err(TypeError::ScoreOutOfRange {
                        row,
                        col,
                        value: value.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        let delta = &s_a - &s_b;
        Ok(Self {
            pair_ids,
            rubric_ids,
            s_a,
            s_b,
            delta,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.pair_ids.len()
    }

    pub fn num_rubrics(&self) -> usize {
        self.rubric_ids.len()
    }

    /// Column index of a rubric, if present.
    pub fn rubric_column(&self, rubric_id: &str) -> Option<usize> {
        self.rubric_ids.iter().position(|id| id == rubric_id)
    }

    /// Row index of a pair, if present.
    pub fn pair_row(&self, pair_id: &str) -> Option<usize> {
        self.pair_ids.iter().position(|id| id == pair_id)
    }

    /// Largest absolute deviation between `delta` and `s_a - s_b`. Zero by
    /// construction; exposed so persisted matrices can be re-checked after
    /// decode.
    pub fn delta_reconstruction_error(&self) -> F {
        let mut worst = F::zero();
        for ((a, b), d) in self
            .s_a
            .iter()
            .zip(self.s_b.iter())
            .zip(self.delta.iter())
        {
            let err = (*d - (*a - *b)).abs();
            if err > worst {
                worst = err;
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_columns_is_valid() {
        let m: ScoreMatrix<f64> = ScoreMatrix::new(
            vec!["p".into()],
            vec![],
            Array2::zeros((1, 0)),
            Array2::zeros((1, 0)),
        )
        .unwrap();
        assert_eq!(m.num_rubrics(), 0);
    }

    #[test]
    fn rejects_out_of_range_scores() {
        let err = ScoreMatrix::<f64>::new(
            vec!["p".into()],
            vec!["r".into()],
            array![[1.5]],
            array![[0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, TypeError::ScoreOutOfRange { .. }));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = ScoreMatrix::<f64>::new(
            vec!["p".into()],
            vec!["r".into()],
            Array2::zeros((2, 1)),
            Array2::zeros((1, 1)),
        )
        .unwrap_err();
        assert!(matches!(err, TypeError::DimensionMismatch(_)));
    }

    #[test]
    fn delta_is_exact_difference() {
        let m = ScoreMatrix::new(
            vec!["p1".into(), "p2".into()],
            vec!["r1".into()],
            array![[0.9], [0.3]],
            array![[0.4], [0.3]],
        )
        .unwrap();
        assert_eq!(m.delta, array![[0.5], [0.0]]);
        assert_eq!(m.delta_reconstruction_error(), 0.0);
    }
}
