use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};

pub const LOSS_LOG_HEADER: [&str; 5] = ["step", "epoch", "tokens_seen", "train_loss", "eval_loss"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub epoch: f64,
    pub tokens_seen: u64,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
}

/// Logged training curve of one fine-tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    points: Vec<LossPoint>,
}

impl LossCurve {
    pub fn new(points: Vec<LossPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(DriftError::Invalid(format!(
                "loss curve needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.epoch >= 0.0 && p.epoch.is_finite()) {
                return Err(DriftError::Invalid(format!("point {i}: bad epoch {}", p.epoch)));
            }
            if !(p.train_loss >= 0.0 && p.train_loss.is_finite()) {
                return Err(DriftError::Invalid(format!(
                    "point {i}: bad train loss {}",
                    p.train_loss
                )));
            }
            if let Some(e) = p.eval_loss {
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(DriftError::Invalid(format!("point {i}: bad eval loss {e}")));
                }
            }
            if i > 0 {
                let prev = &points[i - 1];
                if p.step <= prev.step {
                    return Err(DriftError::Invalid(format!(
                        "point {i}: steps not strictly increasing ({} after {})",
                        p.step, prev.step
                    )));
                }
                if p.tokens_seen < prev.tokens_seen {
                    return Err(DriftError::Invalid(format!(
                        "point {i}: tokens_seen decreases ({} after {})",
                        p.tokens_seen, prev.tokens_seen
                    )));
                }
            }
        }
        Ok(LossCurve { points })
    }

    pub fn points(&self) -> &[LossPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<LossCurve> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|source| DriftError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let log_err = |line: usize, message: String| DriftError::LossLog {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader
        .headers()
        .map_err(|source| DriftError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != LOSS_LOG_HEADER {
        return Err(log_err(
            1,
            format!("expected header {}", LOSS_LOG_HEADER.join(",")),
        ));
    }

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| DriftError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_err = |name: &str, raw: &str| log_err(line, format!("cannot parse {name} {raw:?}"));
        let step = field(0).parse::<u64>().map_err(|_| parse_err("step", field(0)))?;
        let epoch = field(1).parse::<f64>().map_err(|_| parse_err("epoch", field(1)))?;
        let tokens_seen = field(2)
            .parse::<u64>()
            .map_err(|_| parse_err("tokens_seen", field(2)))?;
        let train_loss = field(3)
            .parse::<f64>()
            .map_err(|_| parse_err("train_loss", field(3)))?;
        let eval_loss = match field(4) {
            "" => None,
            raw => Some(raw.parse::<f64>().map_err(|_| parse_err("eval_loss", raw))?),
        };
        if let Some(prev) = points.last().map(|p: &LossPoint| p.step) {
            if step <= prev {
                return Err(log_err(
                    line,
                    format!("steps must be strictly increasing ({step} after {prev})"),
                ));
            }
        }
        points.push(LossPoint {
            step,
            epoch,
            tokens_seen,
            train_loss,
            eval_loss,
        });
    }
    if points.len() < 2 {
        return Err(log_err(
            1,
            format!("at least 2 points required, found {}", points.len()),
        ));
    }
    LossCurve::new(points).map_err(|e| log_err(0, e.to_string()))
}

pub fn write_loss_log(curve: &LossCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,epoch,tokens_seen,train_loss,eval_loss\n");
    for p in curve.points() {
        let eval = p.eval_loss.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.step, p.epoch, p.tokens_seen, p.train_loss, eval
        ));
    }
    let mut file = File::create(path).map_err(|e| DriftError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| DriftError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "step,epoch,tokens_seen,train_loss,eval_loss\n{body}").unwrap();
        f
    }

    #[test]
    fn two_point_curve_with_empty_eval() {
        let f = log("1,0.1,1000,8.0,\n2,0.2,2000,6.0,5.9\n");
        let curve = read_loss_log(f.path()).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve.points()[0].eval_loss, None);
        assert_eq!(curve.points()[1].eval_loss, Some(5.9));
        assert_eq!(curve.points()[1].tokens_seen, 2000);
    }

    #[test]
    fn non_monotonic_steps() {
        let f = log("5,0.1,1000,8.0,\n3,0.2,2000,6.0,\n");
        let err = read_loss_log(f.path()).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn header_only() {
        let f = log("");
        let err = read_loss_log(f.path()).unwrap_err();
        assert!(err.to_string().contains("at least 2 points"), "{err}");
    }

    #[test]
    fn unparsable_number() {
        let f = log("1,0.1,1000,eight,\n2,0.2,2000,6.0,\n");
        let err = read_loss_log(f.path()).unwrap_err();
        assert!(err.to_string().contains("train_loss"), "{err}");
    }

    #[test]
    fn write_then_read() {
        let curve = LossCurve::new(vec![
            LossPoint {
                step: 10,
                epoch: 0.5,
                tokens_seen: 5120,
                train_loss: 3.25,
                eval_loss: Some(3.5),
            },
            LossPoint {
                step: 20,
                epoch: 1.0,
                tokens_seen: 10240,
                train_loss: 2.125,
                eval_loss: None,
            },
        ])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_loss_log(&curve, f.path()).unwrap();
        assert_eq!(read_loss_log(f.path()).unwrap(), curve);
    }
}
