//! Multinomial logistic regression with an L2 penalty.
//!
//! Objective (weights `W`, biases `b`, standardized features `z`):
//!
//! ```text
//! J = (1/m) Σᵢ [ logsumexp(W zᵢ + b) − (W zᵢ + b)_{yᵢ} ] + λ/(2m) ‖W‖²_F
//! ```
//!
//! minimized by full-batch gradient descent with Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2_strength: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2_strength: 1.0,
            max_iter: 1000,
            tol: 1e-6,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real> {
    /// Per-feature mean and scale from the training rows.
    pub feature_mean: DVector<T>,
    pub feature_scale: DVector<T>,
    /// `classes × d`
    pub weights: DMatrix<T>,
    pub biases: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting at the initial point.
    pub loss_trace: Vec<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn standardize(&self, x: &DMatrix<T>) -> DMatrix<T> {
        standardize_with(x, &self.feature_mean, &self.feature_scale)
    }

    /// Class scores `W z + b` for every row.
    pub fn decision(&self, x: &DMatrix<T>) -> DMatrix<T> {
        logits(&self.standardize(x), &self.weights, &self.biases)
    }

    /// Highest-scoring class per row; ties go to the lower class index.
    pub fn predict(&self, x: &DMatrix<T>) -> Vec<usize> {
        let scores = self.decision(x);
        (0..scores.nrows())
            .map(|i| {
                let row = scores.row(i);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn standardize_with<T: Real>(x: &DMatrix<T>, mean: &DVector<T>, scale: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / scale[j])
}

fn logits<T: Real>(z: &DMatrix<T>, w: &DMatrix<T>, b: &DVector<T>) -> DMatrix<T> {
    let mut out = z * w.transpose();
    for mut row in out.row_iter_mut() {
        for (v, bias) in row.iter_mut().zip(b.iter()) {
            *v += *bias;
        }
    }
    out
}

/// Standardized training problem.
pub struct LogisticProblem<T: Real> {
    z: DMatrix<T>,
    y: Vec<usize>,
    n_classes: usize,
    l2: T,
}

impl<T: Real> LogisticProblem<T> {
    /// `x` must already be in the feature space the model is fit in.
    pub fn new(z: DMatrix<T>, y: Vec<usize>, n_classes: usize, l2: T) -> Self {
        LogisticProblem {
            z,
            y,
            n_classes,
            l2,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Objective and gradient at `(w, b)`.
    pub fn objective_and_gradient(
        &self,
        w: &DMatrix<T>,
        b: &DVector<T>,
    ) -> (T, DMatrix<T>, DVector<T>) {
        let m = T::from_count(self.z.nrows());
        let mut scores = logits(&self.z, w, b);
        let mut data_loss = T::zero();
        for (i, mut row) in scores.row_iter_mut().enumerate() {
            let peak = row.iter().copied().fold(row[0], |a, v| a.max(v));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - peak).exp();
                total += *v;
            }
            let target = row[self.y[i]];
            data_loss -= (target / total).ln();
            for v in row.iter_mut() {
                *v /= total;
            }
            row[self.y[i]] -= T::one();
        }
        // scores now holds P − Y
        let penalty = self.l2 / (T::lit(2.0) * m) * w.norm_squared();
        let loss = data_loss / m + penalty;
        let grad_w = scores.tr_mul(&self.z) / m + w * (self.l2 / m);
        let grad_b = DVector::from_iterator(
            self.n_classes,
            scores.column_iter().map(|c| c.iter().copied().sum::<T>() / m),
        );
        (loss, grad_w, grad_b)
    }

    pub fn objective(&self, w: &DMatrix<T>, b: &DVector<T>) -> T {
        self.objective_and_gradient(w, b).0
    }
}

/// Fit on rows of `x` with class indices `y` in `0..n_classes`.
pub fn train_logistic<T: Real>(
    x: &DMatrix<T>,
    y: &[usize],
    n_classes: usize,
    config: &LogisticConfig,
) -> Result<LinearModel<T>> {
    let (m, d) = x.shape();
    if y.len() != m {
        return Err(DriftError::Dimension(format!("{} labels for {m} rows", y.len())));
    }
    if let Some(bad) = y.iter().position(|&c| c >= n_classes) {
        return Err(DriftError::Invalid(format!(
            "row {bad} has class {} outside 0..{n_classes}",
            y[bad]
        )));
    }
    let mut present: Vec<usize> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(DriftError::Invalid(
            "single class present in training labels".into(),
        ));
    }
    if m < n_classes {
        return Err(DriftError::Invalid(format!(
            "{m} training rows for {n_classes} classes"
        )));
    }
    for i in 0..m {
        for j in 0..d {
            if !x[(i, j)].is_finite_value() {
                return Err(DriftError::NonFinite { row: i, column: j });
            }
        }
    }

    let (mean, scale) = if config.standardize {
        let mf = T::from_count(m);
        let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.iter().copied().sum::<T>() / mf));
        let scale = DVector::from_iterator(
            d,
            x.column_iter().zip(mean.iter()).map(|(c, &mu)| {
                let var = c.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / mf;
                if var > T::zero() {
                    var.sqrt()
                } else {
                    T::one()
                }
            }),
        );
        (mean, scale)
    } else {
        (DVector::zeros(d), DVector::from_element(d, T::one()))
    };
    let problem = LogisticProblem::new(
        standardize_with(x, &mean, &scale),
        y.to_vec(),
        n_classes,
        T::lit(config.l2_strength),
    );

    let mut w = DMatrix::<T>::zeros(n_classes, d);
    let mut b = DVector::<T>::zeros(n_classes);
    let (mut loss, mut gw, mut gb) = problem.objective_and_gradient(&w, &b);
    let mut trace = vec![loss];
    let tol = T::lit(config.tol);
    let armijo = T::lit(1e-4);
    let mut step = T::one();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let gnorm2 = gw.norm_squared() + gb.norm_squared();
        if gnorm2.sqrt() < tol {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let w_new = &w - &gw * step;
            let b_new = &b - &gb * step;
            let cand = problem.objective(&w_new, &b_new);
            if cand <= loss - armijo * step * gnorm2 {
                accepted = Some((w_new, b_new));
                break;
            }
            step *= T::lit(0.5);
        }
        let Some((w_new, b_new)) = accepted else {
            break;
        };
        w = w_new;
        b = b_new;
        (loss, gw, gb) = problem.objective_and_gradient(&w, &b);
        trace.push(loss);
        iterations += 1;
        step = (step * T::lit(2.0)).min(T::lit(1e4));
    }
    if !converged {
        converged = (gw.norm_squared() + gb.norm_squared()).sqrt() < tol;
    }

    Ok(LinearModel {
        feature_mean: mean,
        feature_scale: scale,
        weights: w,
        biases: b,
        iterations,
        converged,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64);
        let err = train_logistic(&x, &[1; 6], 3, &LogisticConfig::default()).unwrap_err();
        assert!(err.to_string().contains("single class"));
    }

    #[test]
    fn non_finite_rejected() {
        let mut x = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        x[(2, 1)] = f64::INFINITY;
        let err = train_logistic(&x, &[0, 1, 0, 1], 2, &LogisticConfig::default()).unwrap_err();
        assert!(matches!(err, DriftError::NonFinite { row: 2, column: 1 }));
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.random::<f64>());
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let model = train_logistic(&x, &y, 3, &LogisticConfig::default()).unwrap();
        assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn repeated_fit_is_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random::<f64>());
        let y: Vec<usize> = (0..30).map(|i| (i * 7) % 2).collect();
        let a = train_logistic(&x, &y, 2, &LogisticConfig::default()).unwrap();
        let b = train_logistic(&x, &y, 2, &LogisticConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
