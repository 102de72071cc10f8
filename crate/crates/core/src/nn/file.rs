//! Model file: magic "MLP1", u32 LE layer-width count `n`, `n` × u32 LE
//! widths (input first), then for each layer its row-major weights followed
//! by its bias, all f32 LE.

use std::path::Path;

use super::{Dense, MlpModel};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MLP1";

impl MlpModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.dims();
        let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for l in self.layers() {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let truncated = || Error::Malformed("model file truncated".into());
        let word = |i: usize| -> Result<u32> {
            buf.get(i..i + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(truncated)
        };
        if buf.get(..4) != Some(MAGIC) {
            return Err(Error::Malformed("not a model file (bad magic)".into()));
        }
        let n = word(4)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Malformed(format!("implausible layer count {n}")));
        }
        let dims: Vec<usize> = (0..n).map(|i| word(8 + 4 * i).map(|d| d as usize)).collect::<Result<_>>()?;
        let mut pos = 8 + 4 * n;
        let mut read = |count: usize| -> Result<Vec<f64>> {
            let bytes = buf.get(pos..pos + 4 * count).ok_or_else(truncated)?;
            pos += 4 * count;
            Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
        };
        let mut layers = Vec::with_capacity(n - 1);
        for w in dims.windows(2) {
            let weights = read(w[0] * w[1])?;
            let bias = read(w[1])?;
            layers.push(Dense {
                inputs: w[0],
                outputs: w[1],
                weights,
                bias,
            });
        }
        if pos != buf.len() {
            return Err(Error::Malformed("trailing bytes in model file".into()));
        }
        MlpModel::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
