//! Single-file model checkpoints.
//!
//! ```text
//! magic       4 bytes  "MRCK"
//! version     u32 LE   1
//! header_len  u64 LE
//! header      header_len bytes of UTF-8 JSON:
//!             {"config": ModelConfig, "vocab": {"threshold", "words"},
//!              "tensors": [{"name", "rows", "cols"}, ...]}
//! tensors     for each manifest entry in order, rows × cols f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::PgNet;
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub tensors: Vec<TensorEntry>,
}

impl PgNet {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let tensors = self
            .params()
            .iter()
            .map(|(_, name, m)| TensorEntry {
                name: name.to_string(),
                rows: m.rows,
                cols: m.cols,
            })
            .collect();
        let header = CheckpointHeader {
            config: self.config().clone(),
            vocab: self.vocab().clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params().scalar_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, m) in self.params().iter() {
            for &v in &m.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint, validating every tensor against the shapes the
    /// echoed config implies.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut model = PgNet::new(header.config, header.vocab, 0)?;

        let expected: Vec<(String, usize, usize)> = model
            .params()
            .iter()
            .map(|(_, n, m)| (n.to_string(), m.rows, m.cols))
            .collect();
        if header.tensors.len() != expected.len() {
            let missing: Vec<&str> = expected
                .iter()
                .filter(|(n, _, _)| !header.tensors.iter().any(|t| &t.name == n))
                .map(|(n, _, _)| n.as_str())
                .collect();
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}; missing: {}",
                expected.len(),
                header.tensors.len(),
                missing.join(", ")
            )));
        }

        let mut pos = 16 + hlen;
        for entry in &header.tensors {
            let id = model
                .params()
                .id(&entry.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{}`", entry.name)))?;
            let shape = model.params().get(id).shape();
            if shape != (entry.rows, entry.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` is {}x{}, config implies {}x{}",
                    entry.name, entry.rows, entry.cols, shape.0, shape.1
                )));
            }
            let n = entry.rows * entry.cols;
            let raw = bytes
                .get(pos..pos + 4 * n)
                .ok_or_else(|| Error::Checkpoint(format!("truncated tensor `{}`", entry.name)))?;
            pos += 4 * n;
            let target = model.params_mut().get_mut(id);
            for (o, c) in target.data.iter_mut().zip(raw.chunks_exact(4)) {
                *o = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            }
            if !target.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{}` has non-finite values", entry.name)));
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Rounds every parameter to `f32`, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        let ids: Vec<_> = self.params().ids().collect();
        for id in ids {
            for v in &mut self.params_mut().get_mut(id).data {
                *v = f64::from(*v as f32);
            }
        }
    }
}
