//! End-to-end study: per-domain features and targets, then the correlation
//! heatmap, written as a reproducible report bundle.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::{load_probe_set, load_run, DomainRun, FINAL_LAYER};
use crate::correlation::{
    assemble_feature_matrix, build_heatmap, comment_block, emit_heatmap, write_named_table,
    DomainFeatureRow, MIN_DOMAINS,
};
use crate::error::{DriftError, Result};
use crate::geometry::{geometry_deltas, GeometryReport};
use crate::improvement::{improvement_table, write_improvement_table, ImprovementTable};
use crate::loss_dynamics::{loss_features, LossFeatures, DEFAULT_WINDOW};
use crate::repr_similarity::{
    layer_profile, similarity_features, LayerSimilarityProfile, SimilarityMetric,
};
use crate::scarce::{run_scarce_protocol, write_outcomes, ClassificationOutcome, ProbeConfig};

/// One domain of a study. `probe_test` overrides the run manifest's own entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub run: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureToggles {
    pub similarity: bool,
    pub geometry: bool,
    pub loss: bool,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        FeatureToggles {
            similarity: true,
            geometry: true,
            loss: true,
        }
    }
}

fn default_metrics() -> Vec<String> {
    SimilarityMetric::ALL.iter().map(|m| m.to_string()).collect()
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

/// A whole study in one JSON file. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub domains: Vec<DomainEntry>,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub features: FeatureToggles,
    #[serde(default = "default_metrics")]
    pub similarity_metrics: Vec<String>,
    #[serde(default)]
    pub include_layer0: bool,
    #[serde(default = "default_window")]
    pub loss_window: usize,
    /// Seed for clustering and silhouette subsampling.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(domains: Vec<DomainEntry>) -> Self {
        PipelineConfig {
            domains,
            probe: ProbeConfig::default(),
            features: FeatureToggles::default(),
            similarity_metrics: default_metrics(),
            include_layer0: false,
            loss_window: DEFAULT_WINDOW,
            seed: 0,
        }
    }

    pub fn metrics(&self) -> Result<Vec<SimilarityMetric>> {
        self.similarity_metrics.iter().map(|m| m.parse()).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text + "\n").map_err(|e| DriftError::io(path, e))
    }
}

/// Parsed config plus the digest of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub sha256: String,
    pub root: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DriftError::io(path, e))?;
    let config: PipelineConfig =
        serde_json::from_slice(&bytes).map_err(|source| DriftError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    config.metrics()?;
    if config.domains.is_empty() {
        return Err(DriftError::Invalid("config lists no domains".into()));
    }
    Ok(LoadedConfig {
        config,
        sha256: sha256_hex(&bytes),
        root: path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Lines written at the head of every bundle file.
pub fn provenance_block(config: &PipelineConfig, sha256: &str) -> String {
    let seeds: Vec<String> = config.probe.seeds.iter().map(u64::to_string).collect();
    format!(
        "drift {}\nconfig_sha256 {sha256}\ngeometry_seed {}\nprobe_seeds {}",
        crate::VERSION,
        config.seed,
        seeds.join(" ")
    )
}

/// Everything computed for one domain.
#[derive(Debug, Clone)]
pub struct DomainResult {
    pub domain: String,
    pub features: DomainFeatureRow,
    pub targets: Option<DomainFeatureRow>,
    pub profiles: Vec<LayerSimilarityProfile>,
    pub geometry: Option<GeometryReport>,
    pub loss: Option<LossFeatures>,
    pub outcomes: Vec<ClassificationOutcome>,
    pub improvement: ImprovementTable,
    pub unlabeled: bool,
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn domain_features(
    run: &DomainRun,
    config: &PipelineConfig,
) -> Result<(DomainFeatureRow, Vec<LayerSimilarityProfile>, Option<GeometryReport>, Option<LossFeatures>)>
{
    let mut row = DomainFeatureRow::new(run.domain());
    let mut profiles = Vec::new();
    if config.features.similarity {
        for metric in config.metrics()? {
            let profile = layer_profile(run.base(), run.ft(), metric)?;
            let feats = similarity_features(&profile, config.include_layer0)?;
            for (suffix, value) in feats.named() {
                row.set(format!("{metric}_{suffix}"), Some(value));
            }
            profiles.push(profile);
        }
    }
    let geometry = if config.features.geometry {
        let report = geometry_deltas(
            run.base().layer(FINAL_LAYER),
            run.ft().layer(FINAL_LAYER),
            run.labels(),
            config.seed,
        )?;
        for (name, value) in report.deltas.named() {
            row.set(name, value);
        }
        Some(report)
    } else {
        None
    };
    let loss = if config.features.loss {
        let feats = loss_features(&run.loss, config.loss_window)?;
        for (name, value) in feats.named() {
            row.set(name, value);
        }
        Some(feats)
    } else {
        None
    };
    Ok((row, profiles, geometry, loss))
}

/// Run every stage for one domain.
pub fn process_domain(
    entry: &DomainEntry,
    config: &PipelineConfig,
    root: &Path,
) -> Result<DomainResult> {
    let run = load_run(resolve(root, &entry.run))?;
    let domain = run.domain().to_string();
    log::info!("{domain}: computing features");
    let (features, profiles, geometry, loss) = domain_features(&run, config)?;

    let test_path = entry
        .probe_test
        .as_ref()
        .map(|p| resolve(root, p))
        .or_else(|| run.probe_test_path());
    let (outcomes, unlabeled) = match (run.labels(), test_path) {
        (None, _) => {
            log::warn!("{domain}: no labels, contributes features only");
            (Vec::new(), true)
        }
        (Some(_), None) => {
            return Err(DriftError::Invalid(format!(
                "{domain}: labeled run has no probe-test set"
            )))
        }
        (Some(_), Some(path)) => {
            let test = load_probe_set(&path)?;
            log::info!("{domain}: running scarce-label probes");
            let out = run_scarce_protocol(&domain, &run.eval, &test, &config.probe, 0)?;
            (out.outcomes, out.unlabeled)
        }
    };
    let improvement = improvement_table(&outcomes);
    let targets = (!unlabeled).then(|| {
        let mut row = DomainFeatureRow::new(&domain);
        for r in &improvement.rows {
            for (name, value) in r.targets() {
                row.set(name, value);
            }
        }
        row
    });
    Ok(DomainResult {
        domain,
        features,
        targets,
        profiles,
        geometry,
        loss,
        outcomes,
        improvement,
        unlabeled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainState {
    Ok,
    Unlabeled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStatus {
    pub run: PathBuf,
    pub domain: Option<String>,
    pub state: DomainState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    Success,
    Partial,
    Failure,
}

impl PipelineStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            PipelineStatus::Success => 0,
            PipelineStatus::Failure => 1,
            PipelineStatus::Partial => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub provenance: String,
    pub status: PipelineStatus,
    pub domains: Vec<DomainStatus>,
    /// Why the correlation stage did not run, if it did not.
    pub correlation_refused: Option<String>,
    pub files: Vec<PathBuf>,
}

fn with_header(provenance: &str, body: String) -> String {
    comment_block(Some(provenance)) + &body
}

fn prepend_header(path: &Path, provenance: &str) -> Result<()> {
    let body = fs::read_to_string(path).map_err(|e| DriftError::io(path, e))?;
    fs::write(path, with_header(provenance, body)).map_err(|e| DriftError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, provenance: &str, value: &T) -> Result<()> {
    let doc = serde_json::json!({ "provenance": provenance, "data": value });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| DriftError::io(path, e))
}

fn profiles_csv(results: &[DomainResult]) -> String {
    let mut out = String::from("domain,metric,layer,score,change\n");
    for r in results {
        for p in &r.profiles {
            for (layer, (s, c)) in p.scores.iter().zip(&p.change).enumerate() {
                let _ = writeln!(out, "{},{},{layer},{s},{c}", r.domain, p.metric_name);
            }
        }
    }
    out
}

/// Run the study described by `config_path`, writing the bundle into `out_dir`.
///
/// `jobs` bounds concurrently processed domains (0 uses all cores); results
/// do not depend on it. Domain failures are recorded and skipped; the error
/// return is reserved for an unreadable config or an unwritable bundle.
pub fn run_pipeline(
    config_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    jobs: usize,
) -> Result<PipelineReport> {
    let loaded = load_config(config_path)?;
    let config = &loaded.config;
    let provenance = provenance_block(config, &loaded.sha256);
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| DriftError::io(out, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| DriftError::Invalid(format!("thread pool: {e}")))?;
    let processed: Vec<Result<DomainResult>> = pool.install(|| {
        config
            .domains
            .par_iter()
            .map(|entry| process_domain(entry, config, &loaded.root))
            .collect()
    });

    let mut statuses = Vec::new();
    let mut results: Vec<DomainResult> = Vec::new();
    let mut seen = BTreeSet::new();
    for (entry, outcome) in config.domains.iter().zip(processed) {
        let outcome = outcome.and_then(|r| {
            if seen.insert(r.domain.clone()) {
                Ok(r)
            } else {
                Err(DriftError::Invalid(format!("duplicate domain {:?}", r.domain)))
            }
        });
        match outcome {
            Ok(r) => {
                statuses.push(DomainStatus {
                    run: entry.run.clone(),
                    domain: Some(r.domain.clone()),
                    state: if r.unlabeled {
                        DomainState::Unlabeled
                    } else {
                        DomainState::Ok
                    },
                    reason: r.unlabeled.then(|| "no labels".to_string()),
                });
                results.push(r);
            }
            Err(e) => {
                log::error!("{}: domain skipped: {e}", entry.run.display());
                statuses.push(DomainStatus {
                    run: entry.run.clone(),
                    domain: None,
                    state: DomainState::Failed,
                    reason: Some(e.to_string()),
                });
            }
        }
    }
    results.sort_by(|a, b| a.domain.cmp(&b.domain));

    let mut files = Vec::new();
    let features: Vec<DomainFeatureRow> = results.iter().map(|r| r.features.clone()).collect();
    let targets: Vec<DomainFeatureRow> = results.iter().filter_map(|r| r.targets.clone()).collect();
    let path = out.join("features.csv");
    write_named_table(&features, &path, Some(&provenance))?;
    files.push(path);
    let path = out.join("targets.csv");
    write_named_table(&targets, &path, Some(&provenance))?;
    files.push(path);

    let outcomes: Vec<ClassificationOutcome> =
        results.iter().flat_map(|r| r.outcomes.clone()).collect();
    let path = out.join("outcomes.csv");
    write_outcomes(&outcomes, &path)?;
    prepend_header(&path, &provenance)?;
    files.push(path);

    let improvement = ImprovementTable {
        rows: results
            .iter()
            .flat_map(|r| r.improvement.rows.clone())
            .collect(),
    };
    let path = out.join("improvement.csv");
    write_improvement_table(&improvement, &path)?;
    prepend_header(&path, &provenance)?;
    files.push(path);

    let path = out.join("profiles.csv");
    fs::write(&path, with_header(&provenance, profiles_csv(&results)))
        .map_err(|e| DriftError::io(&path, e))?;
    files.push(path);

    let geometry: Vec<_> = results
        .iter()
        .filter_map(|r| r.geometry.as_ref().map(|g| (r.domain.clone(), g)))
        .collect();
    let path = out.join("geometry.json");
    write_json(&path, &provenance, &geometry)?;
    files.push(path);
    let loss: Vec<_> = results
        .iter()
        .filter_map(|r| r.loss.as_ref().map(|l| (r.domain.clone(), l)))
        .collect();
    let path = out.join("loss_features.json");
    write_json(&path, &provenance, &loss)?;
    files.push(path);

    let correlation_refused = if features.len() < MIN_DOMAINS {
        Some(format!(
            "correlation needs >= {MIN_DOMAINS} domains with features, got {}",
            features.len()
        ))
    } else if targets.len() < MIN_DOMAINS {
        Some(format!(
            "correlation needs >= {MIN_DOMAINS} labeled domains, got {}",
            targets.len()
        ))
    } else {
        let table = build_heatmap(
            &assemble_feature_matrix(&features)?,
            &assemble_feature_matrix(&targets)?,
        );
        match emit_heatmap(&table, out.join("heatmap"), Some(&provenance)) {
            Ok(written) => {
                files.extend(written);
                None
            }
            Err(DriftError::Invalid(reason)) => Some(reason),
            Err(e) => return Err(e),
        }
    };
    if let Some(reason) = &correlation_refused {
        log::warn!("correlation stage refused: {reason}");
    }

    let status = if results.is_empty() {
        PipelineStatus::Failure
    } else if correlation_refused.is_some()
        || statuses.iter().any(|s| s.state != DomainState::Ok)
    {
        PipelineStatus::Partial
    } else {
        PipelineStatus::Success
    };
    let path = out.join("pipeline_log.json");
    files.push(path.clone());
    let report = PipelineReport {
        provenance: provenance.clone(),
        status,
        domains: statuses,
        correlation_refused,
        files: files
            .iter()
            .map(|f| f.strip_prefix(out).unwrap_or(f).to_path_buf())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| DriftError::io(&path, e))?;
    Ok(report)
}

struct NamedMatrix {
    columns: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
}

fn read_matrix(path: &Path) -> Result<NamedMatrix> {
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let columns: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let values = record.iter().skip(1).map(|v| v.parse().ok()).collect();
        rows.push((record[0].to_string(), values));
    }
    Ok(NamedMatrix { columns, rows })
}

/// Markdown summary of a bundle: domain states and the `top` strongest cells.
pub fn summarize_bundle(bundle: impl AsRef<Path>, top: usize) -> Result<String> {
    let dir = bundle.as_ref();
    let log_path = dir.join("pipeline_log.json");
    let text = fs::read_to_string(&log_path).map_err(|e| DriftError::io(&log_path, e))?;
    let report: PipelineReport = serde_json::from_str(&text).map_err(|source| DriftError::Json {
        path: log_path.clone(),
        source,
    })?;
    let mut md = String::from("# Drift study report\n\n```\n");
    md.push_str(&report.provenance);
    md.push_str("\n```\n\n");
    let _ = writeln!(md, "Status: {:?}\n", report.status);
    md.push_str("| run | domain | state | reason |\n|---|---|---|---|\n");
    for s in &report.domains {
        let _ = writeln!(
            md,
            "| {} | {} | {:?} | {} |",
            s.run.display(),
            s.domain.as_deref().unwrap_or(""),
            s.state,
            s.reason.as_deref().unwrap_or("")
        );
    }
    if let Some(reason) = &report.correlation_refused {
        let _ = writeln!(md, "\nCorrelation stage not run: {reason}");
        return Ok(md);
    }
    let heat = dir.join("heatmap");
    let r = read_matrix(&heat.join("signed_r.csv"))?;
    let p = read_matrix(&heat.join("p_value.csv"))?;
    let q = read_matrix(&heat.join("q_value.csv"))?;
    let mut cells = Vec::new();
    for (i, (feature, values)) in r.rows.iter().enumerate() {
        for (j, v) in values.iter().enumerate() {
            if let Some(v) = v {
                cells.push((v.abs(), feature.clone(), r.columns[j].clone(), *v, p.rows[i].1[j], q.rows[i].1[j]));
            }
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| (&a.1, &a.2).cmp(&(&b.1, &b.2))));
    let _ = writeln!(md, "\nStrongest feature/target correlations:\n");
    md.push_str("| feature | target | r | p | q |\n|---|---|---|---|---|\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_default();
    for (_, f, t, v, pv, qv) in cells.into_iter().take(top) {
        let _ = writeln!(md, "| {f} | {t} | {v:.3} | {} | {} |", fmt(pv), fmt(qv));
    }
    Ok(md)
}
