use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-column z-scoring fitted on training rows. Constant columns keep
/// their offset removed and are not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for row in rows {
            if n == 0 {
                sum = vec![0.0; row.len()];
                sq = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::Dimension {
                    expected: sum.len(),
                    actual: row.len(),
                    context: Some("standardizer row".into()),
                });
            }
            for (i, v) in row.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Degenerate("no rows to standardize".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
                context: Some("standardizer input".into()),
            });
        }
        Ok(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect())
    }
}
