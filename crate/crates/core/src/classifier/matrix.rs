//! Explanation × label score matrices and the max-max decision rule.

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::scalar::{argmax, Scalar};

/// Scores with one row per explanation and one column per candidate label.
///
/// For predict-then-explain input the rows are the conditioning labels in task
/// order and the matrix is square. Other inputs (a single unconditioned
/// explanation, a human explanation) give fewer rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoreMatrix<T: Scalar = f64> {
    pub pvp_id: String,
    /// Conditioning label id of each row, if any.
    pub row_labels: Vec<Option<usize>>,
    pub values: Vec<Vec<T>>,
}

/// Outcome of the decision rule on a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub label: usize,
    /// Row holding the global maximum in the chosen column.
    pub row: usize,
    /// Another cell shares the global maximum.
    pub tie: bool,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn new(
        pvp_id: impl Into<String>,
        row_labels: Vec<Option<usize>>,
        values: Vec<Vec<T>>,
    ) -> Result<Self, ClassifierError> {
        let m = ScoreMatrix {
            pvp_id: pvp_id.into(),
            row_labels,
            values,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), ClassifierError> {
        if self.values.is_empty() {
            return Err(ClassifierError::Shape("matrix has no rows".into()));
        }
        if self.row_labels.len() != self.values.len() {
            return Err(ClassifierError::Shape(format!(
                "{} row labels for {} rows",
                self.row_labels.len(),
                self.values.len()
            )));
        }
        let cols = self.values[0].len();
        if cols == 0 || self.values.iter().any(|r| r.len() != cols) {
            return Err(ClassifierError::Shape("ragged or empty rows".into()));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.values.len()
    }

    pub fn num_labels(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn column_max(&self) -> Vec<T> {
        (0..self.num_labels())
            .map(|c| self.values.iter().map(|r| r[c]).fold(T::neg_infinity(), T::max))
            .collect()
    }

    /// Label = argmax of the column maxima; row = first row attaining that
    /// column's maximum. Ties go to the lowest index.
    pub fn decide(&self) -> Decision {
        let colmax = self.column_max();
        let (label, col_tie) = argmax(&colmax).expect("non-empty matrix");
        let column: Vec<T> = self.values.iter().map(|r| r[label]).collect();
        let (row, row_tie) = argmax(&column).expect("non-empty matrix");
        Decision {
            label,
            row,
            tie: col_tie || row_tie,
        }
    }

    /// Conditioning label of the row holding the global maximum.
    pub fn generator_label(&self) -> Option<usize> {
        self.row_labels[self.decide().row]
    }

    /// Element-wise mean of matrices of identical shape and row labels.
    pub fn average(matrices: &[ScoreMatrix<T>]) -> Result<ScoreMatrix<T>, ClassifierError> {
        let first = matrices
            .first()
            .ok_or_else(|| ClassifierError::Shape("nothing to average".into()))?;
        let n = T::of(matrices.len() as f64);
        let mut values = vec![vec![T::zero(); first.num_labels()]; first.num_rows()];
        for m in matrices {
            if m.row_labels != first.row_labels || m.num_labels() != first.num_labels() {
                return Err(ClassifierError::Shape(format!(
                    "matrix for `{}` does not match `{}`",
                    m.pvp_id, first.pvp_id
                )));
            }
            for (acc, row) in values.iter_mut().zip(&m.values) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a = *a + v;
                }
            }
        }
        for row in &mut values {
            for v in row.iter_mut() {
                *v = *v / n;
            }
        }
        Ok(ScoreMatrix {
            pvp_id: if matrices.len() == 1 {
                first.pvp_id.clone()
            } else {
                "averaged".into()
            },
            row_labels: first.row_labels.clone(),
            values,
        })
    }
}
