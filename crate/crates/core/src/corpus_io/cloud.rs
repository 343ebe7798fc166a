//! ECL1 embedding-cloud files and 13-layer stacks.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ECL1" | version u16 = 1 | layer_index u16 | n u64 | d u32
//!        | tag_len u16 | tag bytes (UTF-8)
//!        | n*d f32, row-major
//!        | n * (id_len u16 | id bytes (UTF-8))
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{DriftError, Result};
use crate::scalar::Real;

pub const ECL1_MAGIC: &[u8; 4] = b"ECL1";
pub const ECL1_VERSION: u16 = 1;
/// Number of layers in a stack: the context-free embedding layer plus 12 blocks.
pub const STACK_LAYERS: usize = 13;
pub const FINAL_LAYER: usize = STACK_LAYERS - 1;

/// [CLS] vectors of one evaluation set at one layer of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCloud {
    pub layer_index: u16,
    pub model_tag: String,
    sample_ids: Vec<String>,
    vectors: DMatrix<f32>,
}

impl EmbeddingCloud {
    /// Validates shape, finiteness and id uniqueness.
    pub fn new(
        layer_index: u16,
        model_tag: impl Into<String>,
        sample_ids: Vec<String>,
        vectors: DMatrix<f32>,
    ) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(DriftError::Invalid(format!(
                "cloud must be at least 1x1, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if sample_ids.len() != vectors.nrows() {
            return Err(DriftError::Dimension(format!(
                "{} sample ids for {} rows",
                sample_ids.len(),
                vectors.nrows()
            )));
        }
        check_finite(&vectors)?;
        check_unique(&sample_ids)?;
        Ok(EmbeddingCloud {
            layer_index,
            model_tag: model_tag.into(),
            sample_ids,
            vectors,
        })
    }

    /// Build from row-major data.
    pub fn from_rows(
        layer_index: u16,
        model_tag: impl Into<String>,
        sample_ids: Vec<String>,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(DriftError::Dimension(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        let vectors = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(layer_index, model_tag, sample_ids, vectors)
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn vectors(&self) -> &DMatrix<f32> {
        &self.vectors
    }

    /// The cloud widened (or kept) to the analysis scalar.
    pub fn matrix<T: Real>(&self) -> DMatrix<T> {
        self.vectors.map(|v| T::lit(f64::from(v)))
    }

    /// Select rows by index, preserving the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&i| self.sample_ids[i].clone()).collect();
        let vectors = self.vectors.select_rows(rows);
        Self::new(self.layer_index, self.model_tag.clone(), ids, vectors)
    }
}

fn check_finite(vectors: &DMatrix<f32>) -> Result<()> {
    for row in 0..vectors.nrows() {
        for column in 0..vectors.ncols() {
            if !vectors[(row, column)].is_finite() {
                return Err(DriftError::NonFinite { row, column });
            }
        }
    }
    Ok(())
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(DriftError::DuplicateId {
                id: id.clone(),
                row,
            });
        }
    }
    Ok(())
}

/// Serialize a cloud to ECL1 bytes.
pub fn encode_cloud(cloud: &EmbeddingCloud) -> Result<Vec<u8>> {
    check_finite(&cloud.vectors)?;
    let tag = cloud.model_tag.as_bytes();
    let tag_len = u16::try_from(tag.len())
        .map_err(|_| DriftError::Invalid("model tag longer than 65535 bytes".into()))?;
    let (n, d) = cloud.vectors.shape();
    let d32 = u32::try_from(d).map_err(|_| DriftError::Invalid("dimension exceeds u32".into()))?;

    let mut out = Vec::with_capacity(22 + tag.len() + n * d * 4 + n * 8);
    out.extend_from_slice(ECL1_MAGIC);
    out.extend_from_slice(&ECL1_VERSION.to_le_bytes());
    out.extend_from_slice(&cloud.layer_index.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend_from_slice(&tag_len.to_le_bytes());
    out.extend_from_slice(tag);
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&cloud.vectors[(i, j)].to_le_bytes());
        }
    }
    for id in &cloud.sample_ids {
        let bytes = id.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| DriftError::Invalid(format!("sample id {id:?} too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(bytes);
    }
    Ok(out)
}

pub fn write_cloud(cloud: &EmbeddingCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cloud(cloud)?;
    fs::write(path, bytes).map_err(|e| DriftError::io(path, e))
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<EmbeddingCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DriftError::io(path, e))?;
    decode_cloud(&bytes, path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(DriftError::Truncated {
                path: self.path.to_path_buf(),
                what,
                offset: self.pos as u64,
                expected: len as u64,
                found: available as u64,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize, what: &'static str) -> Result<String> {
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| DriftError::Format {
            path: self.path.to_path_buf(),
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

/// Parse ECL1 bytes; `path` is only used for error messages.
pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<EmbeddingCloud> {
    let format_err = |message: String| DriftError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let magic = r.take(4, "magic")?;
    if magic != ECL1_MAGIC {
        return Err(format_err(format!(
            "bad magic {:?} at byte 0, expected \"ECL1\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u16("version")?;
    if version != ECL1_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let layer_index = r.u16("layer index")?;
    let n = r.u64("row count")?;
    let d = r.u32("dimension")? as u64;
    if n == 0 || d == 0 {
        return Err(format_err(format!("empty cloud {n}x{d}")));
    }
    let tag_len = r.u16("model tag length")? as usize;
    let model_tag = r.string(tag_len, "model tag")?;

    let payload_len = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(format!("payload size overflow for {n}x{d}")))?;
    let available = (bytes.len() - r.pos) as u64;
    if available < payload_len {
        return Err(DriftError::Truncated {
            path: path.to_path_buf(),
            what: "payload",
            offset: r.pos as u64,
            expected: payload_len,
            found: available,
        });
    }
    let (n, d) = (n as usize, d as usize);
    let payload = r.take(payload_len as usize, "payload")?;
    let vectors = DMatrix::from_fn(n, d, |i, j| {
        let at = 4 * (i * d + j);
        f32::from_le_bytes(payload[at..at + 4].try_into().expect("4 bytes"))
    });

    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u16("id length")? as usize;
        ids.push(r.string(len, "sample id")?);
    }
    if r.pos != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after id block",
            bytes.len() - r.pos
        )));
    }
    EmbeddingCloud::new(layer_index, model_tag, ids, vectors)
}

/// The 13 per-layer clouds of one model on one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub model_tag: String,
    clouds: Vec<EmbeddingCloud>,
}

impl LayerStack {
    pub fn new(model_tag: impl Into<String>, clouds: Vec<EmbeddingCloud>) -> Result<Self> {
        if clouds.len() != STACK_LAYERS {
            let present: HashSet<u16> = clouds.iter().map(|c| c.layer_index).collect();
            let missing = (0..STACK_LAYERS)
                .find(|l| !present.contains(&(*l as u16)))
                .unwrap_or(clouds.len());
            return Err(DriftError::MissingLayer {
                found: clouds.len(),
                missing,
            });
        }
        let first = &clouds[0];
        for (layer, cloud) in clouds.iter().enumerate() {
            if cloud.layer_index as usize != layer {
                return Err(DriftError::Invalid(format!(
                    "stack position {layer} holds layer {}",
                    cloud.layer_index
                )));
            }
            if cloud.dim() != first.dim() {
                return Err(DriftError::Dimension(format!(
                    "dimension {} differs from layer 0 ({})",
                    cloud.dim(),
                    first.dim()
                ))
                .at_layer(layer));
            }
            ensure_same_ids(first.sample_ids(), cloud.sample_ids()).map_err(|e| e.at_layer(layer))?;
        }
        Ok(LayerStack {
            model_tag: model_tag.into(),
            clouds,
        })
    }

    pub fn layer(&self, index: usize) -> &EmbeddingCloud {
        &self.clouds[index]
    }

    pub fn layers(&self) -> &[EmbeddingCloud] {
        &self.clouds
    }

    pub fn sample_ids(&self) -> &[String] {
        self.clouds[0].sample_ids()
    }

    pub fn n(&self) -> usize {
        self.clouds[0].n()
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim()
    }

    /// File name of a layer inside a stack directory.
    pub fn layer_file_name(layer: usize) -> String {
        format!("layer_{layer:02}.ecl1")
    }

    pub fn layer_path(dir: &Path, layer: usize) -> PathBuf {
        dir.join(Self::layer_file_name(layer))
    }

    /// Load `layer_00.ecl1` .. `layer_12.ecl1` from a directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let present: Vec<usize> = (0..STACK_LAYERS)
            .filter(|&l| Self::layer_path(dir, l).is_file())
            .collect();
        if present.len() != STACK_LAYERS {
            let missing = (0..STACK_LAYERS)
                .find(|l| !present.contains(l))
                .expect("some layer missing");
            return Err(DriftError::MissingLayer {
                found: present.len(),
                missing,
            });
        }
        let clouds = (0..STACK_LAYERS)
            .map(|l| read_cloud(Self::layer_path(dir, l)).map_err(|e| e.at_layer(l)))
            .collect::<Result<Vec<_>>>()?;
        let tag = clouds[0].model_tag.clone();
        Self::new(tag, clouds)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| DriftError::io(dir, e))?;
        for (layer, cloud) in self.clouds.iter().enumerate() {
            write_cloud(cloud, Self::layer_path(dir, layer))?;
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_ids(left: &[String], right: &[String]) -> Result<()> {
    if left.len() != right.len() {
        return Err(DriftError::Dimension(format!(
            "{} sample ids vs {}",
            left.len(),
            right.len()
        )));
    }
    if let Some(row) = left.iter().zip(right).position(|(a, b)| a != b) {
        return Err(DriftError::IdMismatch {
            row,
            left: left[row].clone(),
            right: right[row].clone(),
        });
    }
    Ok(())
}
