//! Binary vector store for precomputed contextual embeddings.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "MRVS"
//! version u32      1
//! d       u32      vector width
//! layers  u32      L
//! count   u64      number of records
//! record  repeated `count` times:
//!   id_len   u32
//!   id       id_len bytes, UTF-8 example id
//!   position u32   token position
//!   values   L × d f32, layer-major
//! ```
//!
//! A companion text index `<path>.index` lists `example_id<TAB>position<TAB>offset`
//! per record, where `offset` is the byte offset of the record.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"MRVS";
pub const STORE_VERSION: u32 = 1;

/// Contextual vectors keyed by `(example_id, position)`, each holding
/// `layers × d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    d: usize,
    layers: usize,
    records: HashMap<(String, usize), Vec<f32>>,
}

impl VectorStore {
    pub fn new(d: usize, layers: usize) -> Result<Self> {
        if d == 0 || layers == 0 {
            return Err(Error::config("vector store needs d ≥ 1 and at least one layer"));
        }
        Ok(VectorStore {
            d,
            layers,
            records: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stores `values` (`layers × d`, layer-major) for one token.
    pub fn insert(&mut self, example_id: &str, position: usize, values: Vec<f32>) -> Result<()> {
        if values.len() != self.layers * self.d {
            return Err(Error::Shape(format!(
                "record ({example_id}, {position}) has {} values, expected {}",
                values.len(),
                self.layers * self.d
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("record ({example_id}, {position})")));
        }
        self.records.insert((example_id.to_string(), position), values);
        Ok(())
    }

    /// Stores every layer of a sequence: `layers[l]` is `P × d`.
    pub fn insert_sequence(&mut self, example_id: &str, layers: &[Mat]) -> Result<()> {
        if layers.len() != self.layers || layers.iter().any(|m| m.cols != self.d) {
            return Err(Error::Shape(format!(
                "sequence `{example_id}` does not match {} layers of width {}",
                self.layers, self.d
            )));
        }
        let p = layers[0].rows;
        for pos in 0..p {
            let mut v = Vec::with_capacity(self.layers * self.d);
            for l in layers {
                v.extend(l.row(pos).iter().map(|&x| x as f32));
            }
            self.insert(example_id, pos, v)?;
        }
        Ok(())
    }

    pub fn get(&self, example_id: &str, position: usize) -> Result<&[f32]> {
        self.records
            .get(&(example_id.to_string(), position))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingVector {
                example_id: example_id.to_string(),
                position,
            })
    }

    /// Layer matrices (`L` of `n × d`) for positions `0..n`.
    pub fn sequence(&self, example_id: &str, n: usize) -> Result<Vec<Mat>> {
        let mut layers = vec![Mat::zeros(n, self.d); self.layers];
        for pos in 0..n {
            let v = self.get(example_id, pos)?;
            for (l, m) in layers.iter_mut().enumerate() {
                for (o, &x) in m.row_mut(pos).iter_mut().zip(&v[l * self.d..(l + 1) * self.d]) {
                    *o = f64::from(x);
                }
            }
        }
        Ok(layers)
    }

    fn sorted_keys(&self) -> Vec<&(String, usize)> {
        let mut keys: Vec<_> = self.records.keys().collect();
        keys.sort();
        keys
    }

    pub fn to_bytes(&self) -> (Vec<u8>, String) {
        let mut buf = Vec::new();
        let mut index = String::new();
        buf.extend_from_slice(STORE_MAGIC);
        buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.d as u32).to_le_bytes());
        buf.extend_from_slice(&(self.layers as u32).to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for key in self.sorted_keys() {
            index.push_str(&format!("{}\t{}\t{}\n", key.0, key.1, buf.len()));
            buf.extend_from_slice(&(key.0.len() as u32).to_le_bytes());
            buf.extend_from_slice(key.0.as_bytes());
            buf.extend_from_slice(&(key.1 as u32).to_le_bytes());
            for v in &self.records[key] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        (buf, index)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != STORE_MAGIC {
            return Err(Error::data("not a vector store (bad magic)"));
        }
        let version = r.u32()?;
        if version != STORE_VERSION {
            return Err(Error::data(format!("unsupported vector store version {version}")));
        }
        let d = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let count = r.u64()?;
        let mut store = VectorStore::new(d, layers)?;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::data("vector store id is not UTF-8"))?
                .to_string();
            let position = r.u32()? as usize;
            let raw = r.take(4 * d * layers)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(&id, position, values)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::data("trailing bytes after vector store records"));
        }
        Ok(store)
    }

    /// Writes the store and its text index next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (bytes, index) = self.to_bytes();
        let mut f = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))?;
        let ip = index_path(path);
        fs::write(&ip, index).map_err(|e| Error::io(&ip, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::data("vector store truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

/// Averages sub-word vectors into word vectors. `word_of[k]` is the word
/// index of sub-word row `k`; words must be numbered `0..n` in order.
pub fn average_subwords(subwords: &Mat, word_of: &[usize]) -> Result<Mat> {
    if word_of.len() != subwords.rows {
        return Err(Error::Shape("one word index per sub-word row required".into()));
    }
    let n = word_of.last().map_or(0, |&w| w + 1);
    let mut out = Mat::zeros(n, subwords.cols);
    let mut counts = vec![0usize; n];
    for (k, &w) in word_of.iter().enumerate() {
        if w >= n || (k > 0 && w < word_of[k - 1]) {
            return Err(Error::Shape("sub-word word indices must be non-decreasing".into()));
        }
        counts[w] += 1;
        for (o, x) in out.row_mut(w).iter_mut().zip(subwords.row(k)) {
            *o += x;
        }
    }
    for (w, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::Shape(format!("word {w} has no sub-words")));
        }
        for o in out.row_mut(w) {
            *o /= c as f64;
        }
    }
    Ok(out)
}
