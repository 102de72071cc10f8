use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A unigram term distribution. Every stored probability is strictly positive
/// and the distribution sums to one (or is empty).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanguageModel {
    probs: BTreeMap<String, f64>,
}

impl LanguageModel {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Maximum-likelihood model over the pooled tokens of all sequences.
    pub fn mle<S: AsRef<[String]>>(sequences: &[S]) -> Self {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for seq in sequences {
            for term in seq.as_ref() {
                *counts.entry(term.clone()).or_default() += 1.0;
            }
        }
        Self::from_weights(counts)
    }

    /// Normalizes non-negative weights; zero and negative weights are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut probs: BTreeMap<String, f64> = BTreeMap::new();
        for (term, w) in weights {
            if w > 0.0 && w.is_finite() {
                *probs.entry(term).or_default() += w;
            }
        }
        let total: f64 = probs.values().sum();
        if total > 0.0 {
            for p in probs.values_mut() {
                *p /= total;
            }
        }
        LanguageModel { probs }
    }

    /// Builds from probabilities that are already normalized, dropping zeros.
    pub(crate) fn from_probs_unchecked(probs: impl IntoIterator<Item = (String, f64)>) -> Self {
        LanguageModel {
            probs: probs.into_iter().filter(|(_, p)| *p > 0.0).collect(),
        }
    }

    pub fn prob(&self, term: &str) -> f64 {
        self.probs.get(term).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.probs.iter().map(|(t, p)| (t.as_str(), *p))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.probs.keys().map(String::as_str)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// True when empty or when probabilities sum to one within `1e-9`.
    pub fn is_normalized(&self) -> bool {
        self.is_empty() || ((self.total() - 1.0).abs() <= 1e-9 && self.probs.values().all(|p| *p > 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn mle_counts() {
        let lm = LanguageModel::mle(&[toks(&["a", "b", "a"])]);
        assert!((lm.prob("a") - 2.0 / 3.0).abs() < 1e-15);
        assert!((lm.prob("b") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(lm.support_size(), 2);
    }

    #[test]
    fn mle_of_nothing_is_empty() {
        let empty: Vec<Vec<String>> = vec![];
        assert_eq!(LanguageModel::mle(&empty).support_size(), 0);
        assert_eq!(LanguageModel::mle(&[Vec::<String>::new()]).support_size(), 0);
    }

    #[test]
    fn question_length_support() {
        let q = crate::text::tokenize("are you interested in buying a book about dinosaurs");
        let lm = LanguageModel::mle(std::slice::from_ref(&q));
        assert_eq!(lm.support_size(), q.len());
        assert!(lm.is_normalized());
    }
}
