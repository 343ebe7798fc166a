use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cloud::{ensure_same_ids, LayerStack};
use super::labels::{read_labels, LabelTable};
use super::loss_log::{read_loss_log, LossCurve};
use crate::error::{DriftError, Result};

fn default_split_tag() -> String {
    "B".to_string()
}

/// JSON description of one domain's run. Relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub domain_name: String,
    pub base_dir: PathBuf,
    pub ft_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_split_tag")]
    pub split_tag: String,
    /// Free-form notes on how embeddings were extracted (dropout state, pooling, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_notes: Option<String>,
    /// Held-out probe-test set (same schema, no loss log).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_test: Option<PathBuf>,
    /// Generator parameters, present for synthetic domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DriftError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| DriftError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| DriftError::io(path, e))
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Base and fine-tuned stacks of one evaluation set, with optional labels.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub base: LayerStack,
    pub ft: LayerStack,
    pub labels: Option<LabelTable>,
}

impl ProbeSet {
    pub fn new(base: LayerStack, ft: LayerStack, labels: Option<LabelTable>) -> Result<Self> {
        ensure_same_ids(base.sample_ids(), ft.sample_ids())?;
        if base.dim() != ft.dim() {
            return Err(DriftError::Dimension(format!(
                "base dimension {} vs ft dimension {}",
                base.dim(),
                ft.dim()
            )));
        }
        if let Some(labels) = &labels {
            labels.check_covers(base.sample_ids())?;
        }
        Ok(ProbeSet { base, ft, labels })
    }

    pub fn require_labels(&self) -> Result<&LabelTable> {
        self.labels
            .as_ref()
            .ok_or_else(|| DriftError::Invalid("labels required but none supplied".into()))
    }
}

/// Everything loaded from one run manifest.
#[derive(Debug, Clone)]
pub struct DomainRun {
    pub manifest: RunManifest,
    pub eval: ProbeSet,
    pub loss: LossCurve,
    /// Directory the manifest lives in, for resolving further references.
    pub root: PathBuf,
}

impl DomainRun {
    pub fn domain(&self) -> &str {
        &self.manifest.domain_name
    }

    pub fn base(&self) -> &LayerStack {
        &self.eval.base
    }

    pub fn ft(&self) -> &LayerStack {
        &self.eval.ft
    }

    pub fn labels(&self) -> Option<&LabelTable> {
        self.eval.labels.as_ref()
    }

    /// Path of the probe-test manifest, if the run names one.
    pub fn probe_test_path(&self) -> Option<PathBuf> {
        self.manifest
            .probe_test
            .as_ref()
            .map(|p| resolve(&self.root, p))
    }
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_stacks(manifest: &RunManifest, root: &Path) -> Result<ProbeSet> {
    let base = LayerStack::load(resolve(root, &manifest.base_dir))?;
    let ft = LayerStack::load(resolve(root, &manifest.ft_dir))?;
    let labels = manifest
        .labels
        .as_ref()
        .map(|p| read_labels(resolve(root, p)))
        .transpose()?;
    ProbeSet::new(base, ft, labels)
}

/// Load stacks and labels of a manifest, ignoring any loss log.
pub fn load_probe_set(manifest_path: impl AsRef<Path>) -> Result<ProbeSet> {
    let path = manifest_path.as_ref();
    let manifest = RunManifest::read(path)?;
    load_stacks(&manifest, &manifest_root(path))
}

pub fn load_run(manifest_path: impl AsRef<Path>) -> Result<DomainRun> {
    let path = manifest_path.as_ref();
    let manifest = RunManifest::read(path)?;
    let root = manifest_root(path);
    let eval = load_stacks(&manifest, &root)?;
    let loss_path = manifest.loss_log.as_ref().ok_or_else(|| {
        DriftError::Invalid(format!("{}: manifest has no loss_log", path.display()))
    })?;
    let loss = read_loss_log(resolve(&root, loss_path))?;
    Ok(DomainRun {
        manifest,
        eval,
        loss,
        root,
    })
}
