use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1 over classes `0..n_classes`; a class with
/// `P + R = 0` scores F1 = 0.
pub fn evaluate(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Scores> {
    if pred.len() != truth.len() {
        return Err(DriftError::Dimension(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() || n_classes == 0 {
        return Err(DriftError::Invalid("nothing to evaluate".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(DriftError::Invalid(format!(
                "class index outside 0..{n_classes}"
            )));
        }
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let f1_sum: f64 = (0..n_classes)
        .map(|c| {
            let precision = if predicted[c] > 0 {
                tp[c] as f64 / predicted[c] as f64
            } else {
                0.0
            };
            let recall = if actual[c] > 0 {
                tp[c] as f64 / actual[c] as f64
            } else {
                0.0
            };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(Scores {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / n_classes as f64,
    })
}
