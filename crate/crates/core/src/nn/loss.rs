//! Losses on single-column outputs. Both return the mean over samples and
//! the gradient with respect to the prediction matrix.

use super::layer::sigmoid;
use super::model::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn check_shapes(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::EmptyDataset("loss over zero samples".into()));
    }
    Ok(())
}

/// Mean squared error over samples.
pub fn loss_mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    check_shapes(pred, target)?;
    let n = pred.rows() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, Matrix::from_raw(pred.rows(), pred.cols(), grad)))
}

/// Mean binary cross-entropy on logits, `max(z,0) − z·y + ln(1 + e^{−|z|})`.
pub fn loss_bce(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    check_shapes(logits, labels)?;
    if let Some((row, &value)) = labels
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, &y)| y != 0.0 && y != 1.0)
    {
        return Err(Error::InvalidLabel { row, value });
    }
    let n = logits.rows() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = logits
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&z, &y)| {
            sum += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (sigmoid(z) - y) / n
        })
        .collect();
    Ok((sum / n, Matrix::from_raw(logits.rows(), logits.cols(), grad)))
}

impl Task {
    /// The data loss this task trains with.
    pub fn loss(&self, output: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        match self {
            Task::Regression => loss_mse(output, target),
            Task::BinaryClassification => loss_bce(output, target),
        }
    }
}
