//! Internal geometry of a single cloud and the base → fine-tuned deltas.

mod agreement;
mod clustering;
mod isotropy;

pub use agreement::{ari, nmi};
pub use clustering::{
    kmeans, kmeans_with, optimal_k, silhouette, silhouette_sampled, subsample_indices, KMeansConfig,
    KMeansFit, OptimalK, SilhouetteReport, DEFAULT_K_RANGE, SILHOUETTE_SAMPLE_CAP,
};
pub use isotropy::{
    effective_rank, effective_rank_from_singular_values, isotropy_report, partition_isotropy,
    IsotropyReport,
};

use serde::{Deserialize, Serialize};

use crate::corpus_io::{ensure_same_ids, EmbeddingCloud, LabelTable};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub optimal_k: usize,
    pub silhouette_at_optimal: f64,
    pub silhouette_points_used: usize,
    pub silhouette_subsampled: bool,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub ari_vs_labels: Option<f64>,
    pub nmi_vs_labels: Option<f64>,
    pub k_used_for_label_metrics: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudGeometry {
    pub model_tag: String,
    pub isotropy: IsotropyReport,
    pub clustering: ClusteringReport,
}

/// ft − base for every geometry measure. Label metrics are `None` without labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryFeatures {
    pub effective_rank_delta: f64,
    pub partition_isotropy_delta: f64,
    pub ari_delta: Option<f64>,
    pub nmi_delta: Option<f64>,
    pub silhouette_delta: f64,
}

impl GeometryFeatures {
    pub fn named(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("effective_rank_delta", Some(self.effective_rank_delta)),
            ("partition_isotropy_delta", Some(self.partition_isotropy_delta)),
            ("ari_delta", self.ari_delta),
            ("nmi_delta", self.nmi_delta),
            ("silhouette_delta", Some(self.silhouette_delta)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub base: CloudGeometry,
    pub ft: CloudGeometry,
    pub deltas: GeometryFeatures,
}

pub fn cloud_geometry(
    cloud: &EmbeddingCloud,
    labels: Option<&LabelTable>,
    seed: u64,
) -> Result<CloudGeometry> {
    let x = cloud.matrix::<f64>();
    let isotropy = isotropy_report(&x)?;
    let best = optimal_k(&x, DEFAULT_K_RANGE, seed)?;
    let (mut ari_v, mut nmi_v, mut k_used) = (None, None, None);
    if let Some(labels) = labels {
        let truth = labels.encode(cloud.sample_ids())?;
        let k = labels.n_classes();
        if k >= 2 && k <= cloud.n() {
            let fit = kmeans(&x, k, seed)?;
            ari_v = Some(ari(&fit.assignment, &truth)?);
            nmi_v = Some(nmi(&fit.assignment, &truth)?);
            k_used = Some(k);
        }
    }
    Ok(CloudGeometry {
        model_tag: cloud.model_tag.clone(),
        isotropy,
        clustering: ClusteringReport {
            optimal_k: best.k,
            silhouette_at_optimal: best.silhouette.score,
            silhouette_points_used: best.silhouette.n_used,
            silhouette_subsampled: best.silhouette.subsampled,
            silhouette_by_k: best.scores,
            ari_vs_labels: ari_v,
            nmi_vs_labels: nmi_v,
            k_used_for_label_metrics: k_used,
        },
    })
}

fn delta(ft: Option<f64>, base: Option<f64>) -> Option<f64> {
    Some(ft? - base?)
}

/// Geometry of both clouds (conventionally the final layer) and their differences.
pub fn geometry_deltas(
    base: &EmbeddingCloud,
    ft: &EmbeddingCloud,
    labels: Option<&LabelTable>,
    seed: u64,
) -> Result<GeometryReport> {
    ensure_same_ids(base.sample_ids(), ft.sample_ids())?;
    let (b, f) = rayon::join(
        || cloud_geometry(base, labels, seed),
        || cloud_geometry(ft, labels, seed),
    );
    let (b, f) = (b?, f?);
    let deltas = GeometryFeatures {
        effective_rank_delta: f.isotropy.effective_rank - b.isotropy.effective_rank,
        partition_isotropy_delta: f.isotropy.partition_isotropy - b.isotropy.partition_isotropy,
        ari_delta: delta(f.clustering.ari_vs_labels, b.clustering.ari_vs_labels),
        nmi_delta: delta(f.clustering.nmi_vs_labels, b.clustering.nmi_vs_labels),
        silhouette_delta: f.clustering.silhouette_at_optimal - b.clustering.silhouette_at_optimal,
    };
    Ok(GeometryReport {
        base: b,
        ft: f,
        deltas,
    })
}
