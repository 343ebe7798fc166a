use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::scalar::Real;

pub const MIN_DOMAINS: usize = 3;

/// Least-squares line through the domains where both values are present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFit<T> {
    pub slope: T,
    pub intercept: T,
    pub pearson_r: T,
    pub p_value: f64,
    pub n_used: usize,
    /// |r| = 1: the t statistic is infinite and `p_value` is reported as 0.
    pub perfect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFailure {
    InsufficientN { n_used: usize },
    Degenerate { n_used: usize },
}

impl FitFailure {
    pub fn n_used(self) -> usize {
        match self {
            FitFailure::InsufficientN { n_used } | FitFailure::Degenerate { n_used } => n_used,
        }
    }
}

/// Two-sided p-value of Pearson's r under Student-t with `n − 2` degrees of freedom.
///
/// Uses `P(|T| ≥ t) = I_{df/(df+t²)}(df/2, 1/2)`.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    assert!(n >= MIN_DOMAINS, "p-value needs n >= 3");
    if r == 0.0 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}

/// OLS fit of `y` on `x`, skipping positions where either side is missing.
pub fn pairwise_fit<T: Real>(
    x: &[Option<T>],
    y: &[Option<T>],
) -> std::result::Result<PairFit<T>, FitFailure> {
    assert_eq!(x.len(), y.len(), "pairwise_fit: unaligned inputs");
    let (xs, ys): (Vec<T>, Vec<T>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    let n_used = xs.len();
    if n_used < MIN_DOMAINS {
        return Err(FitFailure::InsufficientN { n_used });
    }
    let n = T::from_count(n_used);
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in xs.iter().zip(&ys) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(FitFailure::Degenerate { n_used });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-T::one(), T::one());
    let r64 = r.as_f64();
    // treat rounding-level departures from a perfect line as perfect
    let perfect = 1.0 - r64.abs() <= 1e-14;
    Ok(PairFit {
        slope,
        intercept,
        pearson_r: r,
        p_value: if perfect { 0.0 } else { correlation_p_value(r64, n_used) },
        n_used,
        perfect,
    })
}
