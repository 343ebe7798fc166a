//! Brute-force reference implementations and random fixtures shared by the
//! integration tests. Everything here works on plain `Vec<Vec<f64>>` rows and
//! avoids the library's linear algebra.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rows = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect())
        .collect()
}

pub fn to_matrix(rows: &Rows) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

pub fn random_orthogonal(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn transpose(a: &Rows) -> Rows {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

fn matmul(a: &Rows, b: &Rows) -> Rows {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn center(x: &Rows) -> Rows {
    let n = x.len() as f64;
    let d = x[0].len();
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    x.iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect()
}

fn frobenius(x: &Rows) -> f64 {
    x.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues and eigenvectors (as columns of the second result).
pub fn jacobi_eigen(a: &Rows) -> (Vec<f64>, Rows) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Rows = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Linear CKA through centered Gram matrices in sample space.
pub fn naive_cka(x: &Rows, y: &Rows) -> f64 {
    let n = x.len();
    let k = matmul(x, &transpose(x));
    let l = matmul(y, &transpose(y));
    let centered = |g: &Rows| -> Rows {
        let row_means: Vec<f64> = g.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let total = row_means.iter().sum::<f64>() / n as f64;
        (0..n)
            .map(|i| (0..n).map(|j| g[i][j] - row_means[i] - row_means[j] + total).collect())
            .collect()
    };
    let (kc, lc) = (centered(&k), centered(&l));
    let hsic = |a: &Rows, b: &Rows| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i][j] * b[i][j];
            }
        }
        s
    };
    hsic(&kc, &lc) / (hsic(&kc, &kc) * hsic(&lc, &lc)).sqrt()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn upper_distances(x: &Rows) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push(d2.sqrt());
        }
    }
    out
}

/// Pearson correlation of the strict upper triangles of the distance matrices.
pub fn naive_rsa(x: &Rows, y: &Rows) -> f64 {
    naive_pearson(&upper_distances(x), &upper_distances(y))
}

fn shape_normalize(x: &Rows) -> Rows {
    let c = center(x);
    let norm = frobenius(&c);
    c.iter()
        .map(|r| r.iter().map(|v| v / norm).collect())
        .collect()
}

/// Procrustes similarity as the nuclear norm of `XᵀY`, from Jacobi eigenvalues.
pub fn nuclear_procrustes(x: &Rows, y: &Rows) -> f64 {
    let (x, y) = (shape_normalize(x), shape_normalize(y));
    let m = matmul(&transpose(&x), &y);
    let (vals, _) = jacobi_eigen(&matmul(&transpose(&m), &m));
    vals.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// Best `tr(Rᵀ XᵀY)` over `samples` planar rotations and their reflections.
pub fn sampled_procrustes_2d(x: &Rows, y: &Rows, samples: usize) -> f64 {
    let (x, y) = (shape_normalize(x), shape_normalize(y));
    let m = matmul(&transpose(&x), &y);
    let mut best = f64::NEG_INFINITY;
    for s in 0..samples {
        let t = std::f64::consts::TAU * s as f64 / samples as f64;
        let (sin, cos) = t.sin_cos();
        // rotation [[c, -s], [s, c]] and reflection [[c, s], [s, -c]]
        let rot = m[0][0] * cos - m[0][1] * sin + m[1][0] * sin + m[1][1] * cos;
        let refl = m[0][0] * cos + m[0][1] * sin + m[1][0] * sin - m[1][1] * cos;
        best = best.max(rot).max(refl);
    }
    best
}

/// Adjusted Rand index from explicit pair counting.
pub fn naive_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / denom
}

/// NMI with geometric-mean normalization from empirical probabilities.
pub fn naive_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    let mut pab: HashMap<(usize, usize), f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
        *pab.entry((x, y)).or_default() += 1.0 / n;
    }
    let h = |p: &HashMap<usize, f64>| -> f64 { p.values().map(|v| -v * v.ln()).sum() };
    let (ha, hb) = (h(&pa), h(&pb));
    if pa.len() == 1 && pb.len() == 1 {
        return 1.0;
    }
    if pa.len() == 1 || pb.len() == 1 {
        return 0.0;
    }
    let mi: f64 = pab
        .iter()
        .map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln())
        .sum();
    mi / (ha * hb).sqrt()
}

/// Mean silhouette with Euclidean distances; singletons score 0.
pub fn naive_silhouette(x: &Rows, labels: &[usize]) -> f64 {
    let dist = |i: usize, j: usize| -> f64 {
        x[i].iter()
            .zip(&x[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort_unstable();
        others.dedup();
        for c in others {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let m = members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64;
            b = b.min(m);
        }
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Entropy-exponent effective rank of the centered cloud, from Jacobi eigenvalues.
pub fn naive_effective_rank(x: &Rows) -> f64 {
    let c = center(x);
    let (vals, _) = jacobi_eigen(&matmul(&transpose(&c), &c));
    let sv: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let kept: Vec<f64> = sv.into_iter().filter(|&s| s > 1e-6 * top).collect();
    let total: f64 = kept.iter().sum();
    let entropy: f64 = kept
        .iter()
        .map(|s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    entropy.exp()
}

/// `min Z / max Z` over the signed eigenvectors of `XᵀX` (uncentered).
pub fn naive_partition_isotropy(x: &Rows) -> f64 {
    let (_, vecs) = jacobi_eigen(&matmul(&transpose(x), x));
    let d = x[0].len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let z: f64 = x
                .iter()
                .map(|row| (sign * (0..d).map(|j| row[j] * vecs[j][k]).sum::<f64>()).exp())
                .sum();
            lo = lo.min(z);
            hi = hi.max(z);
        }
    }
    lo / hi
}

/// Random labels in `0..k` using at least two distinct values.
pub fn random_labels(r: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        if labels.iter().any(|&l| l != labels[0]) {
            return labels;
        }
    }
}
