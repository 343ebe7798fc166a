//! Base-vs-fine-tuned similarity of per-layer embedding clouds.
//!
//! Three metrics are provided: linear CKA, orthogonal Procrustes and RSA.
//! Each compares two clouds over the same samples (rows) and is invariant
//! to rotations of either cloud. [`layer_profile`] applies one of them over
//! all 13 layers and [`similarity_features`] reduces the profile to the
//! scalar features used by the correlation study.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{ensure_same_ids, LayerStack, STACK_LAYERS};
use crate::error::{DriftError, Result};
use crate::scalar::{center_columns, Real};
use crate::stats::{pearson, spearman};

/// True when a centered matrix is numerically zero relative to the original.
pub(crate) fn vanishes<T: Real>(centered: &DMatrix<T>, original: &DMatrix<T>) -> bool {
    let scale = original.norm();
    let tol = T::default_epsilon() * T::lit(64.0) * T::from_count(original.len()).sqrt();
    scale == T::zero() || centered.norm() <= tol * scale
}

fn same_rows<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, min: usize) -> Result<usize> {
    if x.nrows() != y.nrows() {
        return Err(DriftError::Dimension(format!(
            "row counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < min {
        return Err(DriftError::Invalid(format!(
            "at least {min} samples required, got {}",
            x.nrows()
        )));
    }
    Ok(x.nrows())
}

fn centered_nonzero<T: Real>(x: &DMatrix<T>, which: &str) -> Result<DMatrix<T>> {
    let c = center_columns(x);
    if vanishes(&c, x) {
        return Err(DriftError::Degenerate(format!(
            "{which} is zero after centering"
        )));
    }
    Ok(c)
}

/// Linear centered kernel alignment in [0, 1].
///
/// Computed in feature space: `‖Yᵀ X‖²_F / (‖Xᵀ X‖_F ‖Yᵀ Y‖_F)` on
/// column-centered inputs, which needs only `d × d` products.
pub fn linear_cka<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<T> {
    same_rows(x, y, 3)?;
    let xc = centered_nonzero(x, "X")?;
    let yc = centered_nonzero(y, "Y")?;
    let cross = yc.tr_mul(&xc).norm_squared();
    let xx = xc.tr_mul(&xc).norm();
    let yy = yc.tr_mul(&yc).norm();
    Ok(cross / (xx * yy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesAlignment<T: Real> {
    /// Nuclear norm of the normalized cross-covariance, in [0, 1].
    pub similarity: T,
    /// `min_Q ‖X Q − Y‖_F` over orthogonal `Q`, on normalized clouds.
    pub distance: T,
    /// Orthogonal `Q` mapping the normalized first cloud onto the second.
    pub rotation: DMatrix<T>,
}

/// Column-center and scale to unit Frobenius norm.
pub fn normalize_shape<T: Real>(x: &DMatrix<T>, which: &str) -> Result<DMatrix<T>> {
    let c = centered_nonzero(x, which)?;
    let norm = c.norm();
    Ok(c / norm)
}

/// Best orthogonal alignment of `x` onto `y` after centering and unit-norm scaling.
pub fn procrustes_align<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<ProcrustesAlignment<T>> {
    same_rows(x, y, 1)?;
    if x.ncols() != y.ncols() {
        return Err(DriftError::Dimension(format!(
            "procrustes needs equal dimensions, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let xn = normalize_shape(x, "X")?;
    let yn = normalize_shape(y, "Y")?;
    let svd = xn.tr_mul(&yn).svd(true, true);
    let similarity: T = svd.singular_values.iter().copied().sum();
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let two = T::lit(2.0);
    let distance = (two - two * similarity).max(T::zero()).sqrt();
    Ok(ProcrustesAlignment {
        similarity,
        distance,
        rotation: u * v_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
}

/// Strict upper triangle of the Euclidean distance matrix, row by row.
pub fn pairwise_distances<T: Real>(x: &DMatrix<T>) -> Vec<T> {
    let n = x.nrows();
    let rows: Vec<_> = (0..n).map(|i| x.row(i).clone_owned()).collect();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((&rows[i] - &rows[j]).norm());
        }
    }
    out
}

/// Correlation of the two clouds' pairwise-distance structures, in [−1, 1].
pub fn rsa<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, kind: CorrelationKind) -> Result<T> {
    same_rows(x, y, 4)?;
    let dx = pairwise_distances(&center_columns(x));
    let dy = pairwise_distances(&center_columns(y));
    let r = match kind {
        CorrelationKind::Pearson => pearson(&dx, &dy),
        CorrelationKind::Spearman => spearman(&dx, &dy),
    };
    r.ok_or_else(|| DriftError::Degenerate("distance vector has zero variance".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    Cka,
    Procrustes,
    Rsa(CorrelationKind),
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 3] = [
        SimilarityMetric::Cka,
        SimilarityMetric::Procrustes,
        SimilarityMetric::Rsa(CorrelationKind::Pearson),
    ];

    /// Name recorded in profiles.
    pub fn profile_name(self) -> &'static str {
        match self {
            SimilarityMetric::Cka => "cka",
            SimilarityMetric::Procrustes => "procrustes_similarity",
            SimilarityMetric::Rsa(_) => "rsa",
        }
    }

    /// Short prefix used for feature names.
    pub fn feature_prefix(self) -> &'static str {
        match self {
            SimilarityMetric::Cka => "cka",
            SimilarityMetric::Procrustes => "procrustes",
            SimilarityMetric::Rsa(_) => "rsa",
        }
    }

    pub fn score<T: Real>(self, base: &DMatrix<T>, ft: &DMatrix<T>) -> Result<T> {
        match self {
            SimilarityMetric::Cka => linear_cka(base, ft),
            SimilarityMetric::Procrustes => procrustes_align(ft, base).map(|a| a.similarity),
            SimilarityMetric::Rsa(kind) => rsa(base, ft, kind),
        }
    }

    /// Map a score onto the shared [0, 1] change scale.
    pub fn change<T: Real>(self, score: T) -> T {
        match self {
            SimilarityMetric::Cka | SimilarityMetric::Procrustes => T::one() - score,
            SimilarityMetric::Rsa(_) => (T::one() - score) / T::lit(2.0),
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityMetric::Rsa(CorrelationKind::Spearman) => f.write_str("rsa_spearman"),
            other => f.write_str(other.feature_prefix()),
        }
    }
}

impl FromStr for SimilarityMetric {
    type Err = DriftError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cka" => Ok(SimilarityMetric::Cka),
            "procrustes" | "procrustes_similarity" => Ok(SimilarityMetric::Procrustes),
            "rsa" | "rsa_pearson" => Ok(SimilarityMetric::Rsa(CorrelationKind::Pearson)),
            "rsa_spearman" => Ok(SimilarityMetric::Rsa(CorrelationKind::Spearman)),
            _ => Err(DriftError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSimilarityProfile {
    pub metric_name: String,
    pub scores: Vec<f64>,
    pub change: Vec<f64>,
}

/// Apply `metric` to every layer pair of the two stacks. A degenerate layer 0
/// scores NaN instead of failing.
pub fn layer_profile(
    base: &LayerStack,
    ft: &LayerStack,
    metric: SimilarityMetric,
) -> Result<LayerSimilarityProfile> {
    ensure_same_ids(base.sample_ids(), ft.sample_ids())?;
    let scores = (0..STACK_LAYERS)
        .into_par_iter()
        .map(|layer| {
            let b = base.layer(layer).matrix::<f64>();
            let f = ft.layer(layer).matrix::<f64>();
            match metric.score(&b, &f) {
                Err(DriftError::Degenerate(msg)) if layer == 0 => {
                    log::debug!("layer 0 degenerate, score left undefined: {msg}");
                    Ok(f64::NAN)
                }
                other => other.map_err(|e| e.at_layer(layer)),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let change = scores.iter().map(|&s| metric.change(s)).collect();
    Ok(LayerSimilarityProfile {
        metric_name: metric.profile_name().to_string(),
        scores,
        change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFeatures {
    pub max_change: f64,
    pub argmax_layer: usize,
    pub mean_change_layers_1_3: f64,
    pub final_layer_change: f64,
    pub mean_change_all: f64,
}

impl SimilarityFeatures {
    /// `(suffix, value)` pairs; feature names are `<metric>_<suffix>`.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("max", self.max_change),
            ("argmax_layer", self.argmax_layer as f64),
            ("layers_1_3", self.mean_change_layers_1_3),
            ("final_layer", self.final_layer_change),
            ("mean", self.mean_change_all),
        ]
    }
}

/// Reduce a profile to scalar features. Layer 0 only enters the max, argmax
/// and overall mean when `include_layer0` is set.
pub fn similarity_features(
    profile: &LayerSimilarityProfile,
    include_layer0: bool,
) -> Result<SimilarityFeatures> {
    if profile.change.len() != STACK_LAYERS {
        return Err(DriftError::Invalid(format!(
            "profile has {} layers, expected {STACK_LAYERS}",
            profile.change.len()
        )));
    }
    let first = usize::from(!include_layer0);
    if let Some(bad) = (first..STACK_LAYERS).find(|&l| !profile.change[l].is_finite()) {
        return Err(DriftError::NonFinite { row: bad, column: 0 });
    }
    let (mut argmax, mut max) = (first, profile.change[first]);
    for layer in first + 1..STACK_LAYERS {
        if profile.change[layer] > max {
            max = profile.change[layer];
            argmax = layer;
        }
    }
    let span = &profile.change[first..];
    Ok(SimilarityFeatures {
        max_change: max,
        argmax_layer: argmax,
        mean_change_layers_1_3: profile.change[1..=3].iter().sum::<f64>() / 3.0,
        final_layer_change: profile.change[STACK_LAYERS - 1],
        mean_change_all: span.iter().sum::<f64>() / span.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::EmbeddingCloud;
    use crate::scalar::matrix_from_rows;

    fn cross() -> DMatrix<f64> {
        matrix_from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
    }

    fn stretched() -> DMatrix<f64> {
        matrix_from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![-1.0, 0.0],
            vec![0.0, -2.0],
        ])
    }

    #[test]
    fn cka_worked_value() {
        let v = linear_cka(&cross(), &stretched()).unwrap();
        let expected = 20.0 / (8f64.sqrt() * 68f64.sqrt());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.85749).abs() < 1e-5);
    }

    #[test]
    fn cka_identity_and_symmetry() {
        let x = stretched();
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let a = linear_cka(&cross(), &stretched()).unwrap();
        let b = linear_cka(&stretched(), &cross()).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn cka_rejects_small_and_constant() {
        let two = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(linear_cka(&two, &two).is_err());
        let constant = DMatrix::from_element(5, 3, 0.1);
        let err = linear_cka(&constant, &constant).unwrap_err();
        assert!(matches!(err, DriftError::Degenerate(_)));
    }

    #[test]
    fn cka_works_in_f32() {
        let x = cross().map(|v| v as f32);
        let y = stretched().map(|v| v as f32);
        let v = linear_cka(&x, &y).unwrap();
        assert!((v - 0.85749).abs() < 1e-5);
    }

    #[test]
    fn procrustes_self() {
        let a = procrustes_align(&stretched(), &stretched()).unwrap();
        assert!((a.similarity - 1.0).abs() < 1e-12);
        assert!(a.distance < 1e-6);
        assert!((a.rotation - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn procrustes_dimension_mismatch() {
        let y = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        assert!(matches!(
            procrustes_align(&cross(), &y),
            Err(DriftError::Dimension(_))
        ));
    }

    #[test]
    fn rsa_self_and_constant_distance() {
        let x = stretched();
        assert!((rsa(&x, &x, CorrelationKind::Pearson).unwrap() - 1.0).abs() < 1e-15);
        // the four cross points are all at distance sqrt(2) or 2: not constant
        assert!(rsa(&cross(), &x, CorrelationKind::Spearman).is_ok());
        let simplex = matrix_from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        assert!(matches!(
            rsa(&simplex, &x, CorrelationKind::Pearson),
            Err(DriftError::Degenerate(_))
        ));
    }

    #[test]
    fn metric_names() {
        assert_eq!("cka".parse::<SimilarityMetric>().unwrap(), SimilarityMetric::Cka);
        let err = "cosine".parse::<SimilarityMetric>().unwrap_err();
        assert!(matches!(err, DriftError::UnknownMetric(ref m) if m == "cosine"));
        assert_eq!(SimilarityMetric::Rsa(CorrelationKind::Pearson).change(-1.0), 1.0);
    }

    fn profile(change: Vec<f64>) -> LayerSimilarityProfile {
        LayerSimilarityProfile {
            metric_name: "cka".into(),
            scores: change.iter().map(|c| 1.0 - c).collect(),
            change,
        }
    }

    #[test]
    fn features_of_zero_profile() {
        let f = similarity_features(&profile(vec![0.0; 13]), false).unwrap();
        assert_eq!(f.max_change, 0.0);
        assert_eq!(f.argmax_layer, 1);
        assert_eq!(f.mean_change_layers_1_3, 0.0);
        assert_eq!(f.final_layer_change, 0.0);
    }

    #[test]
    fn features_of_stated_vector() {
        let mut c = vec![0.0, 0.1, 0.5, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05];
        c[0] = 0.3;
        let f = similarity_features(&profile(c), false).unwrap();
        assert_eq!(f.max_change, 0.5);
        assert_eq!(f.argmax_layer, 2);
        assert!((f.mean_change_layers_1_3 - 0.8 / 3.0).abs() < 1e-15);
        assert!((f.mean_change_layers_1_3 - 0.2667).abs() < 1e-4);
        assert_eq!(f.final_layer_change, 0.05);
    }

    #[test]
    fn layer_zero_excluded_unless_requested() {
        let mut c = vec![0.1; 13];
        c[0] = 0.9;
        let f = similarity_features(&profile(c.clone()), false).unwrap();
        assert_eq!(f.max_change, 0.1);
        let g = similarity_features(&profile(c), true).unwrap();
        assert_eq!((g.max_change, g.argmax_layer), (0.9, 0));
    }

    fn stack(tag: &str, shift: f32, constant_layer0: bool) -> LayerStack {
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let clouds = (0..STACK_LAYERS as u16)
            .map(|l| {
                let rows: Vec<Vec<f32>> = (0..6)
                    .map(|i| {
                        let x = i as f32;
                        if l == 0 && constant_layer0 {
                            vec![1.0, 2.0]
                        } else {
                            vec![x, (x * x + shift * x).sin()]
                        }
                    })
                    .collect();
                EmbeddingCloud::from_rows(l, tag, ids.clone(), &rows).unwrap()
            })
            .collect();
        LayerStack::new(tag, clouds).unwrap()
    }

    #[test]
    fn constant_layer_zero_scores_nan() {
        let p = layer_profile(&stack("b", 0.0, true), &stack("f", 0.7, true), SimilarityMetric::Cka).unwrap();
        assert!(p.scores[0].is_nan() && p.change[0].is_nan());
        assert!(p.scores[1..].iter().all(|s| s.is_finite()));
        assert!(similarity_features(&p, false).is_ok());
        assert!(matches!(
            similarity_features(&p, true),
            Err(DriftError::NonFinite { row: 0, .. })
        ));
    }

    #[test]
    fn degenerate_later_layer_still_fails() {
        let base = stack("b", 0.0, false);
        let mut clouds: Vec<EmbeddingCloud> = (0..STACK_LAYERS).map(|l| base.layer(l).clone()).collect();
        clouds[4] = EmbeddingCloud::from_rows(4, "f", base.sample_ids().to_vec(), &vec![vec![0.0, 0.0]; 6]).unwrap();
        let ft = LayerStack::new("f", clouds).unwrap();
        let err = layer_profile(&base, &ft, SimilarityMetric::Cka).unwrap_err();
        assert!(matches!(err, DriftError::Layer { layer: 4, .. }));
    }
}
