//! Loss-curve features of a fine-tuning run.
//!
//! With the model size fixed, the loss as a function of training tokens `D`
//! follows `L(D) = C + B·D^(−β)`. [`fit_power_law`] recovers `(C, B, β)` and
//! the relative-improvement helpers summarize how far the loss fell.

use serde::{Deserialize, Serialize};

use crate::corpus_io::LossCurve;
use crate::error::{DriftError, Result};
use crate::scalar::Real;

pub const DEFAULT_WINDOW: usize = 5;
pub const BETA_GRID_POINTS: usize = 200;
pub const BETA_MIN: f64 = 0.01;
pub const BETA_MAX: f64 = 2.0;
pub const BETA_TOL: f64 = 1e-4;

/// `(start − end) / start` over window means of `values`.
///
/// The window shrinks to `⌊n/2⌋` (at least 1) when fewer than `2·window`
/// values are available.
pub fn relative_improvement_of<T: Real>(values: &[T], window: usize) -> Result<(T, T, T)> {
    let n = values.len();
    if n < 2 {
        return Err(DriftError::Invalid(format!(
            "relative improvement needs at least 2 points, got {n}"
        )));
    }
    let w = if n < 2 * window { (n / 2).max(1) } else { window.max(1) };
    let wt = T::from_count(w);
    let start = values[..w].iter().copied().sum::<T>() / wt;
    let end = values[n - w..].iter().copied().sum::<T>() / wt;
    if start == T::zero() {
        return Err(DriftError::Degenerate("start loss is zero".into()));
    }
    Ok(((start - end) / start, start, end))
}

pub fn relative_improvement(curve: &LossCurve, window: usize) -> Result<f64> {
    let train: Vec<f64> = curve.points().iter().map(|p| p.train_loss).collect();
    relative_improvement_of(&train, window).map(|(r, _, _)| r)
}

/// Relative improvement restricted to points with `epoch ≤ 1`.
pub fn first_epoch_relative_improvement(curve: &LossCurve, window: usize) -> Result<f64> {
    let first: Vec<f64> = curve
        .points()
        .iter()
        .filter(|p| p.epoch <= 1.0)
        .map(|p| p.train_loss)
        .collect();
    if first.len() < 2 {
        return Err(DriftError::Invalid(format!(
            "need at least 2 first-epoch points, found {}",
            first.len()
        )));
    }
    relative_improvement_of(&first, window).map(|(r, _, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub c_asymptote: T,
    pub b_coefficient: T,
    /// Zero when `no_decay` is set.
    pub beta: T,
    pub sse: T,
    pub n_points: usize,
    /// The best fit has `B = 0`: the loss shows no decay with `D`.
    pub no_decay: bool,
}

impl<T: Real> PowerLawFit<T> {
    pub fn predict(&self, tokens: T) -> T {
        if self.no_decay {
            return self.c_asymptote;
        }
        self.c_asymptote + self.b_coefficient * tokens.powf(-self.beta)
    }
}

/// Least-squares `(C, B)` for a fixed β, both clipped at zero, and the SSE.
pub fn inner_fit<T: Real>(tokens: &[T], loss: &[T], beta: T) -> (T, T, T) {
    let n = T::from_count(tokens.len());
    let x: Vec<T> = tokens.iter().map(|&d| d.powf(-beta)).collect();
    let mx = x.iter().copied().sum::<T>() / n;
    let my = loss.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&xi, &yi) in x.iter().zip(loss) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let (mut c, mut b) = if sxx > T::zero() {
        let b = sxy / sxx;
        (my - b * mx, b)
    } else {
        (my, T::zero())
    };
    if b < T::zero() {
        b = T::zero();
        c = my;
    }
    if c < T::zero() {
        c = T::zero();
        let xx: T = x.iter().map(|&v| v * v).sum();
        let xy: T = x.iter().zip(loss).map(|(&a, &l)| a * l).sum();
        b = if xx > T::zero() { (xy / xx).max(T::zero()) } else { T::zero() };
    }
    let sse = x
        .iter()
        .zip(loss)
        .map(|(&xi, &yi)| {
            let r = yi - c - b * xi;
            r * r
        })
        .sum();
    (c, b, sse)
}

/// The 200 log-spaced β values searched before refinement.
pub fn beta_grid<T: Real>() -> Vec<T> {
    let (lo, hi) = (BETA_MIN.ln(), BETA_MAX.ln());
    (0..BETA_GRID_POINTS)
        .map(|i| T::lit((lo + (hi - lo) * i as f64 / (BETA_GRID_POINTS - 1) as f64).exp()))
        .collect()
}

/// Fit `L = C + B·D^(−β)` to `(tokens, loss)` pairs with `tokens > 0`.
///
/// Grid search over β with closed-form `(C, B)`, then golden-section
/// refinement between the grid neighbors of the best β.
pub fn fit_power_law_points<T: Real>(tokens: &[T], loss: &[T]) -> Result<PowerLawFit<T>> {
    if tokens.len() != loss.len() {
        return Err(DriftError::Dimension(format!(
            "{} token counts for {} losses",
            tokens.len(),
            loss.len()
        )));
    }
    let (d, l): (Vec<T>, Vec<T>) = tokens
        .iter()
        .zip(loss)
        .filter(|(&t, _)| t > T::zero())
        .map(|(&t, &v)| (t, v))
        .unzip();
    if d.len() < 4 {
        return Err(DriftError::Invalid(format!(
            "power-law fit needs at least 4 points with tokens > 0, got {}",
            d.len()
        )));
    }
    if d.iter().all(|&t| t == d[0]) {
        return Err(DriftError::Degenerate("all token counts are equal".into()));
    }

    let grid = beta_grid::<T>();
    let fits: Vec<(T, T, T)> = grid.iter().map(|&beta| inner_fit(&d, &l, beta)).collect();
    let best = (0..grid.len())
        .reduce(|a, b| if fits[b].2 < fits[a].2 { b } else { a })
        .expect("non-empty grid");
    let (mut beta, (mut c, mut b, mut sse)) = (grid[best], fits[best]);

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let ratio = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(BETA_TOL);
    let sse_at = |beta: T| inner_fit(&d, &l, beta).2;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (sse_at(x1), sse_at(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = sse_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = sse_at(x2);
        }
    }
    let refined = (lo + hi) / T::lit(2.0);
    let (rc, rb, rsse) = inner_fit(&d, &l, refined);
    if rsse <= sse {
        (beta, c, b, sse) = (refined, rc, rb, rsse);
    }

    let no_decay = b == T::zero();
    Ok(PowerLawFit {
        c_asymptote: c,
        b_coefficient: b,
        beta: if no_decay { T::zero() } else { beta },
        sse,
        n_points: d.len(),
        no_decay,
    })
}

pub fn fit_power_law(curve: &LossCurve) -> Result<PowerLawFit<f64>> {
    let tokens: Vec<f64> = curve.points().iter().map(|p| p.tokens_seen as f64).collect();
    let loss: Vec<f64> = curve.points().iter().map(|p| p.train_loss).collect();
    fit_power_law_points(&tokens, &loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFeatures {
    pub relative_improvement: f64,
    pub first_epoch_relative_improvement: Option<f64>,
    pub relative_improvement_eval: Option<f64>,
    pub first_epoch_relative_improvement_eval: Option<f64>,
    pub start_loss: f64,
    pub end_loss: f64,
    pub fit: Option<PowerLawFit<f64>>,
}

impl LossFeatures {
    pub fn named(&self) -> Vec<(&'static str, Option<f64>)> {
        let fit = self.fit.as_ref();
        vec![
            ("loss_relative_improvement", Some(self.relative_improvement)),
            (
                "loss_first_epoch_relative_improvement",
                self.first_epoch_relative_improvement,
            ),
            ("loss_relative_improvement_eval", self.relative_improvement_eval),
            (
                "loss_first_epoch_relative_improvement_eval",
                self.first_epoch_relative_improvement_eval,
            ),
            ("power_law_c", fit.map(|f| f.c_asymptote)),
            ("power_law_b", fit.map(|f| f.b_coefficient)),
            ("power_law_beta", fit.filter(|f| !f.no_decay).map(|f| f.beta)),
        ]
    }
}

/// All loss features; the optional ones are `None` when their preconditions fail.
pub fn loss_features(curve: &LossCurve, window: usize) -> Result<LossFeatures> {
    let train: Vec<f64> = curve.points().iter().map(|p| p.train_loss).collect();
    let (relative, start, end) = relative_improvement_of(&train, window)?;
    let eval: Vec<f64> = curve.points().iter().filter_map(|p| p.eval_loss).collect();
    let first_eval: Vec<f64> = curve
        .points()
        .iter()
        .filter(|p| p.epoch <= 1.0)
        .filter_map(|p| p.eval_loss)
        .collect();
    let fit = match fit_power_law(curve) {
        Ok(fit) => Some(fit),
        Err(e) => {
            log::warn!("power-law fit skipped: {e}");
            None
        }
    };
    Ok(LossFeatures {
        relative_improvement: relative,
        first_epoch_relative_improvement: first_epoch_relative_improvement(curve, window).ok(),
        relative_improvement_eval: relative_improvement_of(&eval, window).ok().map(|r| r.0),
        first_epoch_relative_improvement_eval: relative_improvement_of(&first_eval, window)
            .ok()
            .map(|r| r.0),
        start_loss: start,
        end_loss: end,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::LossPoint;

    fn curve(points: &[(f64, f64)]) -> LossCurve {
        LossCurve::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(epoch, loss))| LossPoint {
                    step: i as u64 + 1,
                    epoch,
                    tokens_seen: 1000 * (i as u64 + 1),
                    train_loss: loss,
                    eval_loss: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_curve() {
        let c = curve(&[(0.1, 3.0); 12]);
        assert_eq!(relative_improvement(&c, DEFAULT_WINDOW).unwrap(), 0.0);
    }

    #[test]
    fn window_means() {
        let mut pts = vec![(0.1, 8.0); 5];
        pts.extend(vec![(0.5, 5.0); 3]);
        pts.extend(vec![(0.9, 2.0); 5]);
        let c = curve(&pts);
        assert_eq!(relative_improvement(&c, DEFAULT_WINDOW).unwrap(), 0.75);
    }

    #[test]
    fn rising_curve_is_negative() {
        let c = curve(&[(0.1, 2.0), (0.2, 3.0)]);
        assert_eq!(relative_improvement(&c, DEFAULT_WINDOW).unwrap(), -0.5);
    }

    #[test]
    fn scale_invariant() {
        let vals = [9.0, 7.5, 6.0, 5.5, 5.0, 4.2, 4.0];
        let scaled: Vec<f64> = vals.iter().map(|v| v * 3.7).collect();
        let a = relative_improvement_of(&vals, 2).unwrap().0;
        let b = relative_improvement_of(&scaled, 2).unwrap().0;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn zero_start_rejected() {
        assert!(relative_improvement_of(&[0.0, 1.0], 5).is_err());
    }

    #[test]
    fn first_epoch_only() {
        let flat = curve(&[(0.5, 5.0), (1.0, 5.0), (1.5, 3.0), (2.0, 1.0)]);
        assert_eq!(first_epoch_relative_improvement(&flat, 5).unwrap(), 0.0);
        let c = curve(&[(0.5, 8.0), (1.0, 6.0), (1.5, 6.0), (2.0, 2.0)]);
        assert_eq!(first_epoch_relative_improvement(&c, 5).unwrap(), 0.25);
        let single = curve(&[(1.0, 8.0), (1.5, 6.0), (2.0, 2.0)]);
        assert!(first_epoch_relative_improvement(&single, 5).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = beta_grid::<f64>();
        assert_eq!(g.len(), 200);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[199] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_has_no_decay() {
        let d: Vec<f64> = (1..=10).map(|i| 1000.0 * i as f64).collect();
        let fit = fit_power_law_points(&d, &[3.0; 10]).unwrap();
        assert!(fit.no_decay);
        assert!((fit.c_asymptote - 3.0).abs() < 1e-12);
        assert_eq!(fit.b_coefficient, 0.0);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_power_law_points(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).is_err());
        assert!(fit_power_law_points(&[5.0; 6], &[3.0, 2.0, 1.0, 1.0, 1.0, 1.0]).is_err());
        // zero-token points are dropped before counting
        assert!(fit_power_law_points(&[0.0, 1.0, 2.0, 3.0], &[4.0, 3.0, 2.0, 1.0]).is_err());
    }
}
