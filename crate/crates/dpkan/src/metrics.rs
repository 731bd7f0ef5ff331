//! Evaluation metrics: coefficient of determination and classification
//! accuracy.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// R^2 = 1 - SS_res / SS_tot against the mean predictor. A target vector
/// with zero variance makes the score undefined and is rejected.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "r2: {} true values vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Argument("r2 of an empty vector is undefined".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Argument(
            "r2 is undefined when all target values are identical".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Fraction of rows whose argmax logit equals the label. Ties break to the
/// lowest class index.
pub fn accuracy(labels: &[usize], logits: &DenseMatrix) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "accuracy: {} labels vs {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Argument(
            "accuracy of an empty dataset is undefined".into(),
        ));
    }
    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_perfect_fit_is_one() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn r2_mean_predictor_is_zero() {
        let y = [1.0, 2.0, 3.0];
        let p = [2.0, 2.0, 2.0];
        assert!(r2_score(&y, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn r2_hand_computed_value() {
        // SS_res = 0.01 + 0.04 + 0.01 + 0.04 = 0.10, SS_tot = 5.0.
        let y = [1.0, 2.0, 3.0, 4.0];
        let p = [1.1, 1.8, 3.1, 4.2];
        let got = r2_score(&y, &p).unwrap();
        assert!((got - (1.0 - 0.10 / 5.0)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn r2_constant_targets_rejected() {
        assert!(r2_score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn r2_can_be_negative() {
        let y = [0.0, 1.0];
        let p = [10.0, -10.0];
        assert!(r2_score(&y, &p).unwrap() < 0.0);
    }

    #[test]
    fn accuracy_hand_case() {
        let logits = DenseMatrix::from_rows(&[
            vec![0.1, 0.9],  // class 1, correct
            vec![0.8, 0.2],  // class 0, correct
            vec![0.3, 0.7],  // class 1, wrong
        ])
        .unwrap();
        let got = accuracy(&[1, 0, 0], &logits).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_ties_break_to_lowest_index() {
        let logits = DenseMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(accuracy(&[0], &logits).unwrap(), 1.0);
        assert_eq!(accuracy(&[1], &logits).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_shape_mismatch() {
        let logits = DenseMatrix::zeros(2, 3);
        assert!(accuracy(&[0], &logits).is_err());
    }
}
