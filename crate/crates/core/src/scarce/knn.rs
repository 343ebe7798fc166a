use std::cmp::Ordering;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for KnnMetric {
    type Err = DriftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(KnnMetric::Cosine),
            "euclidean" => Ok(KnnMetric::Euclidean),
            other => Err(DriftError::Invalid(format!("unknown kNN metric {other:?}"))),
        }
    }
}

fn distance<T: Real>(a: &[T], b: &[T], metric: KnnMetric) -> T {
    match metric {
        KnnMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum::<T>()
            .sqrt(),
        KnnMetric::Cosine => {
            let dot: T = a.iter().zip(b).map(|(&p, &q)| p * q).sum();
            let na = a.iter().map(|&p| p * p).sum::<T>().sqrt();
            let nb = b.iter().map(|&q| q * q).sum::<T>().sqrt();
            if na == T::zero() || nb == T::zero() {
                T::one()
            } else {
                T::one() - dot / (na * nb)
            }
        }
    }
}

fn rows_of<T: Real>(x: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Majority vote among the `k` nearest training rows.
///
/// Equal distances favor the lower training row; tied votes favor the lower
/// class index.
pub fn knn_classify<T: Real>(
    train_x: &DMatrix<T>,
    train_y: &[usize],
    test_x: &DMatrix<T>,
    k: usize,
    metric: KnnMetric,
) -> Result<Vec<usize>> {
    let m = train_x.nrows();
    if m == 0 {
        return Err(DriftError::Invalid("empty training set".into()));
    }
    if train_y.len() != m {
        return Err(DriftError::Dimension(format!("{} labels for {m} rows", train_y.len())));
    }
    if k == 0 || k > m {
        return Err(DriftError::Invalid(format!("k must lie in 1..={m}, got {k}")));
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(DriftError::Dimension(format!(
            "train dimension {} vs test dimension {}",
            train_x.ncols(),
            test_x.ncols()
        )));
    }
    let n_classes = train_y.iter().max().map_or(0, |&c| c + 1);
    let train = rows_of(train_x);
    let test = rows_of(test_x);
    let mut order: Vec<(T, usize)> = Vec::with_capacity(m);
    let mut votes = vec![0usize; n_classes];
    Ok(test
        .iter()
        .map(|point| {
            order.clear();
            order.extend(train.iter().enumerate().map(|(i, t)| (distance(point, t, metric), i)));
            order.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, i) in &order[..k] {
                votes[train_y[i]] += 1;
            }
            let mut best = 0;
            for c in 1..n_classes {
                if votes[c] > votes[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
