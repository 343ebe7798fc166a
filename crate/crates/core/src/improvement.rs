//! Cross-domain comparable improvement targets: error reduction rate and logit delta.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::scalar::Real;
use crate::scarce::{ClassificationOutcome, ClassifierKind};

pub const LOGIT_EPS: f64 = 1e-6;

/// Fraction of the remaining error removed: `(ft − bl) / (1 − bl)`.
/// `None` when the baseline is already perfect.
pub fn err<T: Real>(bl: T, ft: T) -> Option<T> {
    if bl >= T::one() {
        return None;
    }
    Some((ft - bl) / (T::one() - bl))
}

pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitDelta<T> {
    pub value: T,
    /// Either input was moved into `[eps, 1 − eps]`.
    pub clamped: bool,
}

/// `logit(ft) − logit(bl)` with both inputs clamped to `[eps, 1 − eps]`.
pub fn logit_delta<T: Real>(bl: T, ft: T, eps: T) -> LogitDelta<T> {
    let lo = eps;
    let hi = T::one() - eps;
    let clamp = |p: T| p.max(lo).min(hi);
    let (b, f) = (clamp(bl), clamp(ft));
    LogitDelta {
        value: logit(f) - logit(b),
        clamped: b != bl || f != ft,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    Accuracy,
    MacroF1,
}

impl fmt::Display for ScoreMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMetric::Accuracy => "accuracy",
            ScoreMetric::MacroF1 => "macro_f1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub domain: String,
    pub classifier: ClassifierKind,
    pub metric: ScoreMetric,
    pub subset_size: usize,
    /// Seed means; `None` when that model has no outcomes for the cell.
    pub bl: Option<f64>,
    pub ft: Option<f64>,
    pub raw_delta: Option<f64>,
    pub err: Option<f64>,
    pub logit_delta: Option<f64>,
    pub flags: Vec<String>,
}

impl ImprovementRow {
    pub fn is_complete(&self) -> bool {
        self.bl.is_some() && self.ft.is_some()
    }

    /// Target-column stem, e.g. `logistic_macro_f1_250`.
    pub fn target_stem(&self) -> String {
        format!("{}_{}_{}", self.classifier, self.metric, self.subset_size)
    }

    /// `(target name, value)` for raw delta, ERR and logit delta.
    pub fn targets(&self) -> Vec<(String, Option<f64>)> {
        let stem = format!("{}_{}", self.classifier, self.metric);
        let size = self.subset_size;
        vec![
            (format!("{stem}_raw_{size}"), self.raw_delta),
            (format!("{stem}_err_{size}"), self.err),
            (format!("{stem}_logit_{size}"), self.logit_delta),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImprovementTable {
    pub rows: Vec<ImprovementRow>,
}

type CellKey = (String, ClassifierKind, ScoreMetric, usize);

/// Average each model's scores over seeds, then derive raw delta, ERR and logit delta.
///
/// Outcomes tagged `base` are the baseline, every other tag counts as fine-tuned.
pub fn improvement_table(outcomes: &[ClassificationOutcome]) -> ImprovementTable {
    let mut cells: BTreeMap<CellKey, [Vec<f64>; 2]> = BTreeMap::new();
    for o in outcomes {
        let side = usize::from(o.model_tag != "base");
        for (metric, value) in [
            (ScoreMetric::Accuracy, o.accuracy),
            (ScoreMetric::MacroF1, o.macro_f1),
        ] {
            let key = (o.domain.clone(), o.classifier, metric, o.subset_size);
            cells.entry(key).or_default()[side].push(value);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let rows = cells
        .into_iter()
        .map(|((domain, classifier, metric, subset_size), [base, ft])| {
            let bl = mean(&base);
            let ftm = mean(&ft);
            let mut flags = Vec::new();
            let (mut raw, mut e, mut ld) = (None, None, None);
            match (bl, ftm) {
                (Some(b), Some(f)) => {
                    raw = Some(f - b);
                    e = err(b, f);
                    if e.is_none() {
                        flags.push("err_undefined".to_string());
                    }
                    let l = logit_delta(b, f, LOGIT_EPS);
                    if l.clamped {
                        flags.push("logit_clamped".to_string());
                    }
                    ld = Some(l.value);
                }
                _ => flags.push("incomplete".to_string()),
            }
            ImprovementRow {
                domain,
                classifier,
                metric,
                subset_size,
                bl,
                ft: ftm,
                raw_delta: raw,
                err: e,
                logit_delta: ld,
                flags,
            }
        })
        .collect();
    ImprovementTable { rows }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_improvement_table(table: &ImprovementTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "domain",
        "classifier",
        "metric",
        "size",
        "bl",
        "ft",
        "raw_delta",
        "err",
        "logit_delta",
        "flags",
    ])
    .map_err(csv_err)?;
    for r in &table.rows {
        w.write_record([
            r.domain.clone(),
            r.classifier.to_string(),
            r.metric.to_string(),
            r.subset_size.to_string(),
            opt(r.bl),
            opt(r.ft),
            opt(r.raw_delta),
            opt(r.err),
            opt(r.logit_delta),
            r.flags.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| DriftError::io(path, e))
}
