use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

/// What a cross-validation unit is: a whole topic, or a single facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    #[default]
    ByTopic,
    ByFacet,
}

impl FoldMode {
    /// The unit a (topic, facet) instance belongs to.
    pub fn unit<'a>(self, topic_id: &'a str, facet_id: &'a str) -> &'a str {
        match self {
            FoldMode::ByTopic => topic_id,
            FoldMode::ByFacet => facet_id,
        }
    }
}

impl std::str::FromStr for FoldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "by_topic" | "topic" | "T" => Ok(FoldMode::ByTopic),
            "by_facet" | "facet" | "F" => Ok(FoldMode::ByFacet),
            other => Err(Error::InvalidParam(format!("unknown fold mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub mode: FoldMode,
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl FoldSplit {
    pub fn in_test(&self, topic_id: &str, facet_id: &str) -> bool {
        self.test.contains(self.mode.unit(topic_id, facet_id))
    }

    pub fn in_train(&self, topic_id: &str, facet_id: &str) -> bool {
        self.train.contains(self.mode.unit(topic_id, facet_id))
    }

    pub fn in_validation(&self, topic_id: &str, facet_id: &str) -> bool {
        self.validation.contains(self.mode.unit(topic_id, facet_id))
    }
}

/// `k` folds over shuffled units. Fold `i` tests on chunk `i`, validates on
/// chunk `i + 1 (mod k)` and trains on the rest.
pub fn make_folds(dataset: &Dataset, mode: FoldMode, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 folds, got {k}")));
    }
    let mut units: Vec<String> = match mode {
        FoldMode::ByTopic => dataset.topics().map(|t| t.id.clone()).collect(),
        FoldMode::ByFacet => dataset.facets().map(|f| f.id.clone()).collect(),
    };
    if units.len() < k {
        return Err(Error::InvalidParam(format!(
            "{} units cannot fill {k} folds",
            units.len()
        )));
    }
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chunks: Vec<BTreeSet<String>> = (0..k)
        .map(|c| units.iter().skip(c).step_by(k).cloned().collect())
        .collect();
    Ok((0..k)
        .map(|i| {
            let v = (i + 1) % k;
            FoldSplit {
                fold_index: i,
                mode,
                test: chunks[i].clone(),
                validation: chunks[v].clone(),
                train: (0..k)
                    .filter(|&c| c != i && c != v)
                    .flat_map(|c| chunks[c].iter().cloned())
                    .collect(),
            }
        })
        .collect())
}

pub fn write_folds(folds: &[FoldSplit], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(folds)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_folds(path: &Path) -> Result<Vec<FoldSplit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
