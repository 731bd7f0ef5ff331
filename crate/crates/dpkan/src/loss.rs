//! Batch losses with analytic gradients w.r.t. predictions.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Mean over batch and outputs of (pred - target)^2, with the per-entry
/// gradient 2 (pred - target) / (B * n_out).
pub fn mse_loss(pred: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::Shape(format!(
            "mse: predictions {}x{} vs targets {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = (pred.rows() * pred.cols()) as f64;
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for r in 0..pred.rows() {
        for c in 0..pred.cols() {
            let diff = pred.get(r, c) - target.get(r, c);
            loss += diff * diff;
            grad.set(r, c, 2.0 * diff / n);
        }
    }
    Ok((loss / n, grad))
}

/// Stable log-softmax of one row.
fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Mean negative log-softmax of the true class; gradient per row is
/// (softmax(logits) - one_hot(label)) / B.
pub fn cross_entropy_loss(logits: &DenseMatrix, labels: &[usize]) -> Result<(f64, DenseMatrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "cross-entropy: {} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let b = logits.rows() as f64;
    let classes = logits.cols();
    let mut grad = DenseMatrix::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let label = labels[r];
        if label >= classes {
            return Err(Error::Argument(format!(
                "label {label} out of range for {classes} classes (row {r})"
            )));
        }
        let ls = log_softmax(logits.row(r));
        loss -= ls[label];
        for c in 0..classes {
            let mut g = ls[c].exp();
            if c == label {
                g -= 1.0;
            }
            grad.set(r, c, g / b);
        }
    }
    Ok((loss / b, grad))
}

/// Gradient of the unreduced single-example loss w.r.t. one prediction row.
/// The mean of these over a batch equals the batch-loss gradient times B.
pub fn per_example_grad(
    kind: LossKind,
    pred_row: &[f64],
    target: PerExampleTarget<'_>,
) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::Mse, PerExampleTarget::Regression(t)) => {
            if pred_row.len() != t.len() {
                return Err(Error::Shape(format!(
                    "mse: {} outputs vs {} targets",
                    pred_row.len(),
                    t.len()
                )));
            }
            let n = pred_row.len() as f64;
            let mut loss = 0.0;
            let grad = pred_row
                .iter()
                .zip(t)
                .map(|(p, t)| {
                    let d = p - t;
                    loss += d * d;
                    2.0 * d / n
                })
                .collect();
            Ok((loss / n, grad))
        }
        (LossKind::CrossEntropy, PerExampleTarget::Class(label)) => {
            if label >= pred_row.len() {
                return Err(Error::Argument(format!(
                    "label {label} out of range for {} classes",
                    pred_row.len()
                )));
            }
            let ls = log_softmax(pred_row);
            let grad = ls
                .iter()
                .enumerate()
                .map(|(c, l)| l.exp() - if c == label { 1.0 } else { 0.0 })
                .collect();
            Ok((-ls[label], grad))
        }
        _ => Err(Error::Argument(
            "loss kind does not match target kind".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PerExampleTarget<'a> {
    Regression(&'a [f64]),
    Class(usize),
}
