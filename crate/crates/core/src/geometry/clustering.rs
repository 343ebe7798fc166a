//! Seeded k-means++, silhouette and silhouette-optimal k.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::scalar::Real;

pub const SILHOUETTE_SAMPLE_CAP: usize = 2000;
pub const DEFAULT_K_RANGE: std::ops::RangeInclusive<usize> = 2..=12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves more than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T: Real> {
    pub assignment: Vec<usize>,
    /// `k × d`
    pub centroids: DMatrix<T>,
    pub inertia: T,
    pub restart: u64,
}

/// Row-major copy of a matrix for tight distance loops.
struct Rows<T> {
    data: Vec<T>,
    d: usize,
}

impl<T: Real> Rows<T> {
    fn new(x: &DMatrix<T>) -> Self {
        let (n, d) = x.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(x.row(i).iter().copied());
        }
        Rows { data, d }
    }

    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn len(&self) -> usize {
        self.data.len() / self.d.max(1)
    }
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let t = p - q;
            t * t
        })
        .sum()
}

fn nearest<T: Real>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(point, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let dist = sq_dist(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn plus_plus_init<T: Real>(rows: &Rows<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = rows.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(rows.row(i), rows.row(chosen[0])).as_f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave acc <= target: take the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(rows.row(i), rows.row(next)).as_f64());
        }
    }
    chosen.iter().map(|&i| rows.row(i).to_vec()).collect()
}

fn lloyd<T: Real>(
    rows: &Rows<T>,
    mut centroids: Vec<Vec<T>>,
    config: &KMeansConfig,
) -> (Vec<usize>, Vec<Vec<T>>, T) {
    let n = rows.len();
    let k = centroids.len();
    let d = rows.d;
    let tol = T::lit(config.tol);
    let mut assignment = vec![0usize; n];
    for _ in 0..config.max_iter {
        let mut dists = vec![T::zero(); n];
        for i in 0..n {
            let (c, dist) = nearest(rows.row(i), &centroids);
            assignment[i] = c;
            dists[i] = dist;
        }
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        // empty clusters take the point farthest from its centroid
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                counts[assignment[i]] -= 1;
                assignment[i] = empty;
                counts[empty] = 1;
                dists[i] = T::zero();
            }
        }
        let mut sums = vec![vec![T::zero(); d]; k];
        for i in 0..n {
            for (s, &v) in sums[assignment[i]].iter_mut().zip(rows.row(i)) {
                *s += v;
            }
        }
        let mut shift = T::zero();
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let cnt = T::from_count(counts[c]);
            let updated: Vec<T> = sums[c].iter().map(|&s| s / cnt).collect();
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if shift < tol {
            break;
        }
    }
    let mut inertia = T::zero();
    for i in 0..n {
        let (c, dist) = nearest(rows.row(i), &centroids);
        assignment[i] = c;
        inertia += dist;
    }
    (assignment, centroids, inertia)
}

pub fn kmeans<T: Real>(x: &DMatrix<T>, k: usize, seed: u64) -> Result<KMeansFit<T>> {
    kmeans_with(x, k, seed, &KMeansConfig::default())
}

/// Best-inertia fit over `config.restarts` k-means++ initializations.
///
/// Restart `r` draws from ChaCha8 stream `r` of `seed`, so the result does
/// not depend on how restarts are scheduled across threads.
pub fn kmeans_with<T: Real>(
    x: &DMatrix<T>,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<KMeansFit<T>> {
    let n = x.nrows();
    if k < 2 || k > n {
        return Err(DriftError::Invalid(format!(
            "k must lie in 2..={n}, got {k}"
        )));
    }
    if config.restarts == 0 {
        return Err(DriftError::Invalid("at least one restart required".into()));
    }
    let rows = Rows::new(x);
    let fits: Vec<_> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart);
            let init = plus_plus_init(&rows, k, &mut rng);
            let (assignment, centroids, inertia) = lloyd(&rows, init, config);
            (restart, assignment, centroids, inertia)
        })
        .collect();
    let (restart, assignment, centroids, inertia) = fits
        .into_iter()
        .reduce(|best, cand| if cand.3 < best.3 { cand } else { best })
        .expect("at least one restart");
    let d = x.ncols();
    Ok(KMeansFit {
        assignment,
        centroids: DMatrix::from_fn(k, d, |i, j| centroids[i][j]),
        inertia,
        restart,
    })
}

/// Pairwise Euclidean distances among the selected rows.
fn distance_matrix<T: Real>(rows: &Rows<T>, idx: &[usize]) -> Vec<T> {
    let m = idx.len();
    let mut out = vec![T::zero(); m * m];
    for a in 0..m {
        for b in a + 1..m {
            let v = sq_dist(rows.row(idx[a]), rows.row(idx[b])).sqrt();
            out[a * m + b] = v;
            out[b * m + a] = v;
        }
    }
    out
}

fn silhouette_from_distances<T: Real>(dist: &[T], labels: &[usize]) -> Result<T> {
    let m = labels.len();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    if clusters.len() < 2 {
        return Err(DriftError::Invalid(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    let index: Vec<usize> = clusters.iter().copied().collect();
    let slot = |label: usize| index.binary_search(&label).expect("known label");
    let mut sizes = vec![0usize; index.len()];
    for &l in labels {
        sizes[slot(l)] += 1;
    }
    let mut total = T::zero();
    let mut sums = vec![T::zero(); index.len()];
    for i in 0..m {
        let own = slot(labels[i]);
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = T::zero());
        for j in 0..m {
            sums[slot(labels[j])] += dist[i * m + j];
        }
        let a = sums[own] / T::from_count(sizes[own] - 1);
        let b = (0..index.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / T::from_count(sizes[c]))
            .fold(T::lit(f64::INFINITY), |p, q| p.min(q));
        let denom = a.max(b);
        if denom > T::zero() {
            total += (b - a) / denom;
        }
    }
    Ok(total / T::from_count(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub score: f64,
    /// Points the score was computed on (the whole cloud unless capped).
    pub n_used: usize,
    pub subsampled: bool,
}

/// Deterministic subsample of at most `cap` row indices, in ascending order.
pub fn subsample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(cap);
    idx.sort_unstable();
    idx
}

/// Mean silhouette; clouds above [`SILHOUETTE_SAMPLE_CAP`] points use a subsample seeded with 0.
pub fn silhouette<T: Real>(x: &DMatrix<T>, assignment: &[usize]) -> Result<T> {
    silhouette_sampled(x, assignment, SILHOUETTE_SAMPLE_CAP, 0).map(|(s, _)| s)
}

pub fn silhouette_sampled<T: Real>(
    x: &DMatrix<T>,
    assignment: &[usize],
    cap: usize,
    seed: u64,
) -> Result<(T, usize)> {
    if assignment.len() != x.nrows() {
        return Err(DriftError::Dimension(format!(
            "{} labels for {} points",
            assignment.len(),
            x.nrows()
        )));
    }
    let rows = Rows::new(x);
    let idx = subsample_indices(x.nrows(), cap, seed);
    let dist = distance_matrix(&rows, &idx);
    let labels: Vec<usize> = idx.iter().map(|&i| assignment[i]).collect();
    Ok((silhouette_from_distances(&dist, &labels)?, idx.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalK {
    pub k: usize,
    /// `(k, silhouette)` for every k evaluated.
    pub scores: Vec<(usize, f64)>,
    pub silhouette: SilhouetteReport,
}

/// Index of the first maximum.
pub(crate) fn first_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// k in `k_range` (capped at n − 1) maximizing the silhouette; ties go to the smallest k.
pub fn optimal_k(
    x: &DMatrix<f64>,
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<OptimalK> {
    let n = x.nrows();
    if n < 3 {
        return Err(DriftError::Invalid(format!(
            "optimal k needs at least 3 points, got {n}"
        )));
    }
    let ks: Vec<usize> = k_range.filter(|&k| k >= 2 && k < n).collect();
    if ks.is_empty() {
        return Err(DriftError::Invalid("empty k range".into()));
    }
    let rows = Rows::new(x);
    let idx = subsample_indices(n, SILHOUETTE_SAMPLE_CAP, seed);
    let dist = distance_matrix(&rows, &idx);
    let scores = ks
        .iter()
        .map(|&k| {
            let fit = kmeans(x, k, seed)?;
            let labels: Vec<usize> = idx.iter().map(|&i| fit.assignment[i]).collect();
            silhouette_from_distances(&dist, &labels).map(|s| (k, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = scores.iter().map(|&(_, s)| s).collect();
    let best = first_argmax(&values).expect("non-empty");
    Ok(OptimalK {
        k: scores[best].0,
        silhouette: SilhouetteReport {
            score: scores[best].1,
            n_used: idx.len(),
            subsampled: idx.len() < n,
        },
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ari;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = centers.len() * per;
        let mut truth = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * 2);
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                for &m in center {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(m + spread * z);
                }
                truth.push(c);
            }
        }
        (DMatrix::from_row_slice(n, 2, &data), truth)
    }

    #[test]
    fn separated_blobs_recovered() {
        let (x, truth) = blobs(&[[0.0, 0.0], [10.0, 10.0]], 30, 0.5, 1);
        let fit = kmeans(&x, 2, 7).unwrap();
        assert_eq!(ari(&fit.assignment, &truth).unwrap(), 1.0);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let (x, _) = blobs(&[[0.0, 0.0]], 6, 1.0, 2);
        let fit = kmeans(&x, 6, 3).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let distinct: BTreeSet<_> = fit.assignment.iter().collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (x, _) = blobs(&[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]], 20, 1.0, 4);
        let a = kmeans(&x, 3, 11).unwrap();
        let b = kmeans(&x, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k_out_of_range() {
        let (x, _) = blobs(&[[0.0, 0.0]], 5, 1.0, 2);
        assert!(kmeans(&x, 1, 0).is_err());
        assert!(kmeans(&x, 6, 0).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 0.0, 0.0, 0.0, 5.0, 5.0]);
        let fit = kmeans(&x, 3, 0).unwrap();
        let distinct: BTreeSet<_> = fit.assignment.iter().collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn four_point_silhouette() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        let s: f64 = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        let expected = ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95) / 2.0;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.99).abs() < 1e-4);
    }

    #[test]
    fn single_cluster_rejected() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        assert!(silhouette(&x, &[3, 3, 3, 3]).is_err());
    }

    #[test]
    fn singletons_contribute_zero() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.2, 9.0]);
        let s: f64 = silhouette(&x, &[0, 0, 1]).unwrap();
        let first = (9.0 - 0.2) / 9.0;
        let second = (8.8 - 0.2) / 8.8;
        assert!((s - (first + second) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_labels_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(500, 2, |_, _| rng.random::<f64>());
        let labels: Vec<usize> = (0..500).map(|_| rng.random_range(0..3)).collect();
        assert!(silhouette(&x, &labels).unwrap().abs() < 0.1);
    }

    #[test]
    fn subsample_is_capped_and_seeded() {
        let idx = subsample_indices(5000, 2000, 3);
        assert_eq!(idx.len(), 2000);
        assert_eq!(idx, subsample_indices(5000, 2000, 3));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn three_blobs_pick_three() {
        let (x, _) = blobs(&[[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]], 25, 0.7, 5);
        assert_eq!(optimal_k(&x, DEFAULT_K_RANGE, 1).unwrap().k, 3);
    }

    #[test]
    fn structureless_cloud_scores_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(300, 6, |_, _| StandardNormal.sample(&mut rng));
        let best = optimal_k(&x, DEFAULT_K_RANGE, 2).unwrap();
        assert!(best.silhouette.score < 0.2, "{best:?}");
    }

    #[test]
    fn ties_resolve_to_first() {
        assert_eq!(first_argmax(&[0.4, 0.7, 0.2, 0.7]), Some(1));
        assert_eq!(first_argmax(&[]), None);
    }

    #[test]
    fn optimal_k_needs_three_points() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(optimal_k(&x, DEFAULT_K_RANGE, 0).is_err());
    }
}
