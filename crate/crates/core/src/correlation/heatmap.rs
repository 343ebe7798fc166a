use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::fit::{pairwise_fit, FitFailure, PairFit, MIN_DOMAINS};
use crate::error::{DriftError, Result};

/// Named values observed for one domain; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DomainFeatureRow {
    pub domain: String,
    pub features: BTreeMap<String, Option<f64>>,
}

impl DomainFeatureRow {
    pub fn new(domain: impl Into<String>) -> Self {
        DomainFeatureRow {
            domain: domain.into(),
            features: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: impl Into<String>, value: Option<f64>) {
        self.features.insert(name.into(), value.filter(|v| v.is_finite()));
    }
}

/// Domains × names, both sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub domains: Vec<String>,
    pub names: Vec<String>,
    /// `values[domain][name]`
    pub values: Vec<Vec<Option<f64>>>,
}

impl FeatureMatrix {
    pub fn column(&self, name: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|row| row[name]).collect()
    }

    /// Column of `name` re-indexed to `domains`; unknown domains are missing.
    fn aligned_column(&self, name: usize, domains: &[String]) -> Vec<Option<f64>> {
        domains
            .iter()
            .map(|d| {
                self.domains
                    .binary_search(d)
                    .ok()
                    .and_then(|i| self.values[i][name])
            })
            .collect()
    }
}

/// Align rows by name. Requires at least three distinct domains.
pub fn assemble_feature_matrix(rows: &[DomainFeatureRow]) -> Result<FeatureMatrix> {
    let mut by_domain: BTreeMap<&str, &DomainFeatureRow> = BTreeMap::new();
    for row in rows {
        if by_domain.insert(row.domain.as_str(), row).is_some() {
            return Err(DriftError::Invalid(format!("duplicate domain {:?}", row.domain)));
        }
    }
    if by_domain.len() < MIN_DOMAINS {
        return Err(DriftError::Invalid(format!(
            "correlation needs >= {MIN_DOMAINS} domains, got {}",
            by_domain.len()
        )));
    }
    let names: Vec<String> = rows
        .iter()
        .flat_map(|r| r.features.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let values = by_domain
        .values()
        .map(|row| {
            names
                .iter()
                .map(|n| row.features.get(n).copied().flatten())
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        domains: by_domain.keys().map(|d| d.to_string()).collect(),
        names,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    InsufficientN,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub status: CellStatus,
    pub n_used: usize,
    pub fit: Option<PairFit<f64>>,
    /// Benjamini–Hochberg adjusted p-value over all ok cells.
    pub q_value: Option<f64>,
}

impl HeatmapCell {
    pub fn signed_r(&self) -> Option<f64> {
        self.fit.map(|f| f.pearson_r)
    }

    pub fn p_value(&self) -> Option<f64> {
        self.fit.map(|f| f.p_value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTable {
    pub features: Vec<String>,
    pub targets: Vec<String>,
    /// `cells[feature][target]`
    pub cells: Vec<Vec<HeatmapCell>>,
}

impl HeatmapTable {
    pub fn cell(&self, feature: &str, target: &str) -> Option<&HeatmapCell> {
        let f = self.features.iter().position(|n| n == feature)?;
        let t = self.targets.iter().position(|n| n == target)?;
        Some(&self.cells[f][t])
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty() || self.targets.is_empty()
    }

    pub fn ok_cells(&self) -> impl Iterator<Item = &HeatmapCell> {
        self.cells
            .iter()
            .flatten()
            .filter(|c| c.status == CellStatus::Ok)
    }
}

/// Benjamini–Hochberg step-up adjustment, returned in input order.
pub fn benjamini_hochberg(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}

/// One line fit per (feature, target) over the feature matrix's domains.
pub fn build_heatmap(features: &FeatureMatrix, targets: &FeatureMatrix) -> HeatmapTable {
    let domains = &features.domains;
    let target_cols: Vec<Vec<Option<f64>>> = (0..targets.names.len())
        .map(|t| targets.aligned_column(t, domains))
        .collect();
    let mut cells: Vec<Vec<HeatmapCell>> = (0..features.names.len())
        .map(|f| {
            let x = features.column(f);
            target_cols
                .iter()
                .map(|y| match pairwise_fit(&x, y) {
                    Ok(fit) => HeatmapCell {
                        status: CellStatus::Ok,
                        n_used: fit.n_used,
                        fit: Some(fit),
                        q_value: None,
                    },
                    Err(failure) => HeatmapCell {
                        status: match failure {
                            FitFailure::InsufficientN { .. } => CellStatus::InsufficientN,
                            FitFailure::Degenerate { .. } => CellStatus::Degenerate,
                        },
                        n_used: failure.n_used(),
                        fit: None,
                        q_value: None,
                    },
                })
                .collect()
        })
        .collect();

    let ok: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(f, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| c.status == CellStatus::Ok)
                .map(move |(t, _)| (f, t))
        })
        .collect();
    let p: Vec<f64> = ok
        .iter()
        .map(|&(f, t)| cells[f][t].p_value().expect("ok cell has a fit"))
        .collect();
    for (&(f, t), q) in ok.iter().zip(benjamini_hochberg(&p)) {
        cells[f][t].q_value = Some(q);
    }
    HeatmapTable {
        features: features.names.clone(),
        targets: targets.names.clone(),
        cells,
    }
}
