use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{DriftError, Result};

/// Class labels keyed by sample id. Classes are indexed in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    entries: HashMap<String, String>,
    class_set: Vec<String>,
}

impl LabelTable {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut map = HashMap::new();
        for (id, label) in entries {
            if map.insert(id.clone(), label).is_some() {
                return Err(DriftError::Invalid(format!("duplicate label row for {id:?}")));
            }
        }
        let class_set = map
            .values()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(LabelTable {
            entries: map,
            class_set,
        })
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }

    pub fn n_classes(&self) -> usize {
        self.class_set.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_set.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    /// Dense class indices for `ids`, failing on the first unlabeled id.
    pub fn encode(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                let label = self
                    .label(id)
                    .ok_or_else(|| DriftError::MissingLabel { id: id.clone() })?;
                Ok(self.class_index(label).expect("label drawn from class set"))
            })
            .collect()
    }

    /// Fails with the first id (in the given order) that has no label.
    pub fn check_covers(&self, ids: &[String]) -> Result<()> {
        match ids.iter().find(|id| !self.entries.contains_key(*id)) {
            Some(id) => Err(DriftError::MissingLabel { id: id.clone() }),
            None => Ok(()),
        }
    }

    pub fn require_classifiable(&self) -> Result<()> {
        if self.class_set.len() < 2 {
            return Err(DriftError::Invalid(format!(
                "classification needs at least 2 classes, found {}",
                self.class_set.len()
            )));
        }
        Ok(())
    }
}

/// Read a `sample_id,label` CSV with header.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "label" {
        return Err(DriftError::Format {
            path: path.to_path_buf(),
            message: "expected header sample_id,label".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push((record[0].to_string(), record[1].to_string()));
    }
    LabelTable::new(rows)
}

/// Write labels for `ids` in the given order.
pub fn write_labels(labels: &LabelTable, ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(["sample_id", "label"]).map_err(csv_err)?;
    for id in ids {
        let label = labels
            .label(id)
            .ok_or_else(|| DriftError::MissingLabel { id: id.clone() })?;
        writer.write_record([id.as_str(), label]).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| DriftError::io(path, e))
}
