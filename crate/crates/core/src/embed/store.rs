//! Binary embedding file, little-endian:
//!
//! ```text
//! magic "EMB1" | u32 record count | u32 dim |
//! count × { u16 id byte length | id bytes (UTF-8) | dim × f32 }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.vectors.keys().map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: vector.len(),
                context: Some(format!("embedding `{id}`")),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Malformed(format!("embedding `{id}` has a non-finite value")));
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::Malformed(format!("embedding id longer than {} bytes", u16::MAX)));
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::Duplicate { kind: "embedding", id });
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    /// Records are written in ascending id order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.vectors.len() * (self.dim * 4 + 16));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.vectors.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, v) in &self.vectors {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > buf.len() {
                return Err(Error::Malformed(format!("embedding file truncated at byte {pos}")));
            }
            let s = &buf[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != EMBEDDING_MAGIC {
            return Err(Error::Malformed("not an embedding file (bad magic)".into()));
        }
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            let id_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let id = String::from_utf8(take(id_len)?.to_vec())
                .map_err(|e| Error::Malformed(format!("embedding id is not UTF-8: {e}")))?;
            let raw = take(dim * 4).map_err(|_| Error::Dimension {
                expected: dim,
                actual: 0,
                context: Some(format!("record `{id}` is shorter than the header dimension")),
            })?;
            let v = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            store.insert(id, v)?;
        }
        if pos != buf.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after {count} records of dim {dim}",
                buf.len() - pos
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
