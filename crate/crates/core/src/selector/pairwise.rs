//! RankNet-style pairwise ranking over the hand-crafted features.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scaling::Standardizer;
use crate::nn::{Gradients, MlpModel, Optimizer, TrainConfig};
use crate::{Error, Result};

/// Logistic loss of ranking `pos` above `neg`: `ln(1 + e^-(s_pos - s_neg))`.
pub fn pairwise_loss(s_pos: f64, s_neg: f64) -> f64 {
    let d = s_pos - s_neg;
    // ln(1 + e^-d) computed without overflow.
    if d > 0.0 {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Feature rows of one context: `(features, label)` per candidate.
pub type Group = Vec<(Vec<f64>, bool)>;

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    pub net: MlpModel,
    pub scaling: Standardizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairwiseStats {
    pub groups_used: usize,
    pub groups_skipped: usize,
    pub pairs: usize,
}

impl PairwiseModel {
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        self.net.margin(&self.scaling.apply(features)?)
    }

    /// Writes the network and, beside it, the feature scaling as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.net.save(path)?;
        save_scaling(&self.scaling, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(PairwiseModel {
            net: MlpModel::load(path)?,
            scaling: load_scaling(path)?,
        })
    }
}

pub(crate) fn scaling_path(model_path: &Path) -> std::path::PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".scaling.json");
    s.into()
}

pub(crate) fn save_scaling(scaling: &Standardizer, model_path: &Path) -> Result<()> {
    let p = scaling_path(model_path);
    std::fs::write(&p, serde_json::to_string(scaling)?).map_err(|e| Error::io(&p, e))
}

pub(crate) fn load_scaling(model_path: &Path) -> Result<Standardizer> {
    let p = scaling_path(model_path);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Mean pairwise loss over every (positive, negative) pair in `groups`.
pub fn mean_pairwise_loss(model: &PairwiseModel, groups: &[Group]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for g in groups {
        let scores: Vec<(f64, bool)> = g
            .iter()
            .map(|(x, y)| model.score(x).map(|s| (s, *y)))
            .collect::<Result<_>>()?;
        for (sp, _) in scores.iter().filter(|s| s.1) {
            for (sn, _) in scores.iter().filter(|s| !s.1) {
                total += pairwise_loss(*sp, *sn);
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Trains on all within-group (positive, negative) pairs. Groups without
/// both a positive and a negative are skipped and counted.
pub fn train_pairwise(groups: &[Group], config: &TrainConfig) -> Result<(PairwiseModel, PairwiseStats)> {
    train_pairwise_with_history(groups, config).map(|(m, s, _)| (m, s))
}

pub fn train_pairwise_with_history(
    groups: &[Group],
    config: &TrainConfig,
) -> Result<(PairwiseModel, PairwiseStats, Vec<f64>)> {
    config.validate()?;
    let mut stats = PairwiseStats::default();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut usable: Vec<Group> = Vec::new();
    for g in groups {
        let has_pos = g.iter().any(|r| r.1);
        let has_neg = g.iter().any(|r| !r.1);
        if !(has_pos && has_neg) {
            stats.groups_skipped += 1;
            continue;
        }
        stats.groups_used += 1;
        let base = rows.len();
        rows.extend(g.iter().map(|r| r.0.clone()));
        for (i, (_, yi)) in g.iter().enumerate() {
            for (j, (_, yj)) in g.iter().enumerate() {
                if *yi && !*yj {
                    pairs.push((base + i, base + j));
                }
            }
        }
        usable.push(g.clone());
    }
    if stats.groups_skipped > 0 {
        log::info!(
            "pairwise training: {} groups used, {} skipped without both labels",
            stats.groups_used,
            stats.groups_skipped
        );
    }
    if pairs.is_empty() {
        return Err(Error::Degenerate("no trainable pairs".into()));
    }
    stats.pairs = pairs.len();

    let scaling = Standardizer::fit(rows.iter().map(Vec::as_slice))?;
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| scaling.apply(r)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = MlpModel::new(scaling.dim(), &config.hidden_dims, 2, &mut rng);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &net);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        pairs.shuffle(&mut rng);
        for (b, chunk) in pairs.chunks(config.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&net);
            let mut loss = 0.0;
            for &(p, n) in chunk {
                let d = net.margin(&rows[p])? - net.margin(&rows[n])?;
                loss += pairwise_loss(d, 0.0);
                // dL/dd = -sigmoid(-d); the margin is z1 - z0.
                let g = -sigmoid(-d);
                net.accumulate_gradient(&rows[p], &[-g, g], &mut grads)?;
                net.accumulate_gradient(&rows[n], &[g, -g], &mut grads)?;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.apply(&mut net, &grads);
        }
        let model = PairwiseModel {
            net: net.clone(),
            scaling: scaling.clone(),
        };
        history.push(mean_pairwise_loss(&model, &usable)?);
    }
    Ok((PairwiseModel { net, scaling }, stats, history))
}

/// Fraction of within-group (positive, negative) pairs ordered correctly.
pub fn pairwise_accuracy(model: &PairwiseModel, groups: &[Group]) -> Result<f64> {
    let mut ok = 0usize;
    let mut n = 0usize;
    for g in groups {
        let scores: BTreeMap<usize, f64> =
            g.iter().enumerate().map(|(i, (x, _))| model.score(x).map(|s| (i, s))).collect::<Result<_>>()?;
        for (i, (_, yi)) in g.iter().enumerate() {
            for (j, (_, yj)) in g.iter().enumerate() {
                if *yi && !*yj {
                    n += 1;
                    ok += usize::from(scores[&i] > scores[&j]);
                }
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}
