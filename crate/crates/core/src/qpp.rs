//! Score-dispersion query performance prediction.
//!
//! σ is the population standard deviation of the top retrieval scores: a
//! flat score distribution signals a query the retriever cannot separate.

use serde::{Deserialize, Serialize};

/// σ at every depth `1..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QppRepresentation {
    pub values: Vec<f64>,
}

impl QppRepresentation {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

/// Population standard deviation of the first `min(k, n)` scores; 0 with
/// fewer than two scores.
pub fn sigma_scalar(scores: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "sigma depth must be positive");
    if scores.is_empty() {
        log::warn!("sigma of an empty ranking; reporting 0");
        return 0.0;
    }
    let top = &scores[..k.min(scores.len())];
    if top.len() < 2 {
        return 0.0;
    }
    let n = top.len() as f64;
    let mean = top.iter().sum::<f64>() / n;
    (top.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `values[i − 1] = σ@i` for `i = 1..=k`; depths beyond the list repeat the
/// last computable value.
pub fn sigma_vector(scores: &[f64], k: usize) -> QppRepresentation {
    assert!(k >= 1, "sigma depth must be positive");
    let mut values = Vec::with_capacity(k);
    // Running sums; prefix std = sqrt(E[x²] − E[x]²) is numerically poor for
    // log-likelihood scores, so shift by the first score.
    let shift = scores.first().copied().unwrap_or(0.0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 1..=k {
        if i <= scores.len() {
            let x = scores[i - 1] - shift;
            s1 += x;
            s2 += x * x;
            let n = i as f64;
            let var = if i < 2 { 0.0 } else { (s2 / n - (s1 / n).powi(2)).max(0.0) };
            values.push(var.sqrt());
        } else {
            values.push(values.last().copied().unwrap_or(0.0));
        }
    }
    QppRepresentation { values }
}
