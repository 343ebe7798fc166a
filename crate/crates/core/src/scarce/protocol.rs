use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::knn::{knn_classify, KnnMetric};
use super::logistic::{train_logistic, LogisticConfig};
use super::subset::stratified_subset;
use crate::corpus_io::{LabelTable, ProbeSet, FINAL_LAYER};
use crate::error::{DriftError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    Knn,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Knn => "knn",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = DriftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ClassifierKind::Logistic),
            "knn" => Ok(ClassifierKind::Knn),
            other => Err(DriftError::Invalid(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub classifiers: Vec<ClassifierKind>,
    pub subset_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub knn_k: usize,
    pub knn_metric: KnnMetric,
    pub logistic: LogisticConfig,
    /// Layer whose embeddings are probed.
    pub layer: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            classifiers: vec![ClassifierKind::Logistic, ClassifierKind::Knn],
            subset_sizes: vec![250, 500, 1000],
            seeds: vec![0, 1, 2, 3, 4],
            knn_k: 5,
            knn_metric: KnnMetric::Cosine,
            logistic: LogisticConfig::default(),
            layer: FINAL_LAYER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub domain: String,
    pub classifier: ClassifierKind,
    pub subset_size: usize,
    pub seed: u64,
    pub model_tag: String,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutput {
    pub outcomes: Vec<ClassificationOutcome>,
    /// Set when either side lacks labels and the protocol was skipped.
    pub unlabeled: bool,
}

/// Union of both tables' classes, in lexicographic order.
fn shared_classes(a: &LabelTable, b: &LabelTable) -> Vec<String> {
    a.class_set()
        .iter()
        .chain(b.class_set())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn encode(labels: &LabelTable, ids: &[String], classes: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            let label = labels
                .label(id)
                .ok_or_else(|| DriftError::MissingLabel { id: id.clone() })?;
            Ok(classes
                .binary_search_by(|c| c.as_str().cmp(label))
                .expect("class drawn from union"))
        })
        .collect()
}

/// Train on stratified subsets of `train` (probe-train role) and score on
/// `test` (probe-test role), for both models, every classifier, size and seed.
///
/// `jobs` bounds the worker threads (0 runs on the current rayon pool); the
/// output does not depend on it.
pub fn run_scarce_protocol(
    domain: &str,
    train: &ProbeSet,
    test: &ProbeSet,
    config: &ProbeConfig,
    jobs: usize,
) -> Result<ProtocolOutput> {
    let (Some(train_labels), Some(test_labels)) = (&train.labels, &test.labels) else {
        log::info!("{domain}: unlabeled domain, scarce-label protocol skipped");
        return Ok(ProtocolOutput {
            outcomes: Vec::new(),
            unlabeled: true,
        });
    };
    if config.layer > FINAL_LAYER {
        return Err(DriftError::Invalid(format!("probe layer {} out of range", config.layer)));
    }
    if train.base.dim() != test.base.dim() {
        return Err(DriftError::Dimension(format!(
            "probe-train dimension {} vs probe-test dimension {}",
            train.base.dim(),
            test.base.dim()
        )));
    }
    let train_ids: BTreeSet<&String> = train.base.sample_ids().iter().collect();
    if let Some(leak) = test.base.sample_ids().iter().find(|id| train_ids.contains(id)) {
        return Err(DriftError::Invalid(format!(
            "sample {leak:?} appears in both probe-train and probe-test sets"
        )));
    }
    let classes = shared_classes(train_labels, test_labels);
    if classes.len() < 2 {
        return Err(DriftError::Invalid("classification needs at least 2 classes".into()));
    }
    let n_classes = classes.len();
    let y_train = encode(train_labels, train.base.sample_ids(), &classes)?;
    let y_test = encode(test_labels, test.base.sample_ids(), &classes)?;
    for &size in &config.subset_sizes {
        if size > y_train.len() {
            return Err(DriftError::Invalid(format!(
                "subset size {size} exceeds {} probe-train samples",
                y_train.len()
            )));
        }
    }

    let models = [
        (&train.base, &test.base),
        (&train.ft, &test.ft),
    ];
    let matrices: Vec<_> = models
        .iter()
        .map(|(tr, te)| {
            (
                tr.model_tag.clone(),
                tr.layer(config.layer).matrix::<f64>(),
                te.layer(config.layer).matrix::<f64>(),
            )
        })
        .collect();

    let mut cells = Vec::new();
    for &classifier in &config.classifiers {
        for &size in &config.subset_sizes {
            for &seed in &config.seeds {
                for model in 0..matrices.len() {
                    cells.push((classifier, size, seed, model));
                }
            }
        }
    }

    let run_cells = || {
        cells
            .par_iter()
            .map(|&(classifier, size, seed, model)| {
                let (tag, train_x, test_x) = &matrices[model];
                let subset = stratified_subset(&y_train, n_classes, size, seed)?;
                let sub_x = train_x.select_rows(&subset);
                let sub_y: Vec<usize> = subset.iter().map(|&i| y_train[i]).collect();
                let pred = match classifier {
                    ClassifierKind::Logistic => {
                        train_logistic(&sub_x, &sub_y, n_classes, &config.logistic)?.predict(test_x)
                    }
                    ClassifierKind::Knn => {
                        knn_classify(&sub_x, &sub_y, test_x, config.knn_k, config.knn_metric)?
                    }
                };
                let scores = evaluate(&pred, &y_test, n_classes)?;
                Ok(ClassificationOutcome {
                    domain: domain.to_string(),
                    classifier,
                    subset_size: size,
                    seed,
                    model_tag: tag.clone(),
                    accuracy: scores.accuracy,
                    macro_f1: scores.macro_f1,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let outcomes = if jobs == 0 {
        run_cells()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| DriftError::Invalid(format!("thread pool: {e}")))?
            .install(run_cells)?
    };
    Ok(ProtocolOutput {
        outcomes,
        unlabeled: false,
    })
}

pub const OUTCOME_HEADER: [&str; 7] = [
    "domain",
    "classifier",
    "subset_size",
    "seed",
    "model_tag",
    "accuracy",
    "macro_f1",
];

pub fn write_outcomes(outcomes: &[ClassificationOutcome], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(OUTCOME_HEADER).map_err(csv_err)?;
    for o in outcomes {
        w.write_record([
            o.domain.clone(),
            o.classifier.to_string(),
            o.subset_size.to_string(),
            o.seed.to_string(),
            o.model_tag.clone(),
            o.accuracy.to_string(),
            o.macro_f1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| DriftError::io(path, e))
}

pub fn read_outcomes(path: impl AsRef<Path>) -> Result<Vec<ClassificationOutcome>> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |field: &str| DriftError::Format {
            path: path.to_path_buf(),
            message: format!("row {}: bad {field}", row + 1),
        };
        out.push(ClassificationOutcome {
            domain: record[0].to_string(),
            classifier: record[1].parse().map_err(|_| bad("classifier"))?,
            subset_size: record[2].parse().map_err(|_| bad("subset_size"))?,
            seed: record[3].parse().map_err(|_| bad("seed"))?,
            model_tag: record[4].to_string(),
            accuracy: record[5].parse().map_err(|_| bad("accuracy"))?,
            macro_f1: record[6].parse().map_err(|_| bad("macro_f1"))?,
        });
    }
    Ok(out)
}
