use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::repr_similarity::vanishes;
use crate::scalar::{center_columns, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub effective_rank: f64,
    pub partition_isotropy: f64,
}

pub fn isotropy_report(x: &DMatrix<f64>) -> Result<IsotropyReport> {
    Ok(IsotropyReport {
        effective_rank: effective_rank(x)?,
        partition_isotropy: partition_isotropy(x)?,
    })
}

/// Exponential of the Shannon entropy of the normalized singular values.
///
/// Singular values below `1e-12 · σ₁` are treated as zero.
pub fn effective_rank_from_singular_values<T: Real>(singular_values: &[T]) -> Result<T> {
    let largest = singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    if largest <= T::zero() {
        return Err(DriftError::Degenerate("all singular values are zero".into()));
    }
    let cutoff = largest * T::lit(1e-12).max(T::default_epsilon() * T::lit(4.0));
    let kept: Vec<T> = singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .collect();
    let total: T = kept.iter().copied().sum();
    let entropy = kept
        .iter()
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum::<T>();
    Ok(entropy.exp())
}

/// Effective rank of the column-centered cloud.
pub fn effective_rank<T: Real>(x: &DMatrix<T>) -> Result<T> {
    let centered = center_columns(x);
    if vanishes(&centered, x) {
        return Err(DriftError::Degenerate("cloud is zero after centering".into()));
    }
    let sv = centered.singular_values();
    effective_rank_from_singular_values(sv.as_slice())
}

/// `ln Σ exp(v)` without overflow.
fn log_sum_exp<T: Real>(values: impl Iterator<Item = T> + Clone) -> T {
    let peak = values.clone().fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b));
    peak + values.map(|v| (v - peak).exp()).sum::<T>().ln()
}

/// Partition-function isotropy `min_c Z(c) / max_c Z(c)` in (0, 1].
///
/// `c` ranges over the unit eigenvectors of `XᵀX` and their negations and
/// `Z(c) = Σᵢ exp(cᵀ wᵢ)` sums over the (uncentered) rows `wᵢ`.
pub fn partition_isotropy<T: Real>(x: &DMatrix<T>) -> Result<T> {
    if x.iter().all(|v| *v == T::zero()) {
        return Err(DriftError::Degenerate("zero matrix".into()));
    }
    let gram = x.tr_mul(x);
    let eigen = gram.symmetric_eigen();
    let projections = x * &eigen.eigenvectors;
    let mut lo = T::lit(f64::INFINITY);
    let mut hi = T::lit(f64::NEG_INFINITY);
    for col in projections.column_iter() {
        let plus = log_sum_exp(col.iter().copied());
        let minus = log_sum_exp(col.iter().map(|&v| -v));
        lo = lo.min(plus.min(minus));
        hi = hi.max(plus.max(minus));
    }
    Ok((lo - hi).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::matrix_from_rows;

    fn signed_basis(d: usize, scales: &[f64]) -> DMatrix<f64> {
        let mut rows = Vec::new();
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut r = vec![0.0; d];
                r[i] = sign * scales[i];
                rows.push(r);
            }
        }
        matrix_from_rows(&rows)
    }

    #[test]
    fn signed_basis_has_full_effective_rank() {
        let x = signed_basis(4, &[1.0; 4]);
        assert!((effective_rank(&x).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_cloud() {
        let v = [0.3, -1.2, 2.0];
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64 - 2.5) * v[j]);
        assert!((effective_rank(&x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_one_one_spectrum() {
        let direct = effective_rank_from_singular_values(&[2.0, 1.0, 1.0]).unwrap();
        assert!((direct - 8f64.sqrt()).abs() < 1e-12);
        // rows ±√2·e1, ±e2/√2, ±e3/√2 have singular values (2, 1, 1)
        let x = signed_basis(3, &[2f64.sqrt(), 0.5f64.sqrt(), 0.5f64.sqrt()]);
        assert!((effective_rank(&x).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_rejected() {
        let z = DMatrix::<f64>::zeros(4, 3);
        assert!(effective_rank(&z).is_err());
        assert!(partition_isotropy(&z).is_err());
    }

    #[test]
    fn symmetric_cloud_is_isotropic() {
        let x = signed_basis(5, &[1.0; 5]);
        assert!((partition_isotropy(&x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_unit_vector() {
        let w = [0.6, 0.0, -0.8];
        let x = DMatrix::from_fn(7, 3, |_, j| w[j]);
        let v = partition_isotropy(&x).unwrap();
        assert!((v - (-2f64).exp()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn large_values_do_not_overflow() {
        let x = DMatrix::from_fn(10, 2, |i, j| 500.0 * (i as f64 + 1.0) * (j as f64 + 1.0));
        let v = partition_isotropy(&x).unwrap();
        assert!(v >= 0.0 && v <= 1.0);
    }
}
