use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Feature matrix with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite target".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Targets as an `n × 1` matrix.
    pub fn targets(&self) -> Matrix {
        Matrix::from_raw(self.y.len(), 1, self.y.clone())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
        }
    }
}
