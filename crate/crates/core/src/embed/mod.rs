//! Text embeddings for topics, questions and question–answer pairs.
//!
//! Vectors either come from a precomputed [`EmbeddingStore`] or from the
//! deterministic feature-hashing fallback, so everything runs without an
//! external encoder.

mod hashing;
mod store;

pub use hashing::{fnv1a64, hash_embed, DEFAULT_HASH_DIM};
pub use store::{EmbeddingStore, EMBEDDING_MAGIC};

use crate::data::{ConversationContext, Dataset, Question, Topic};
use crate::{Error, Result};

/// Separator placed between question and answer text for pair embeddings.
pub const QA_SEPARATOR: char = '\u{241F}';

/// Where φ vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    Store(EmbeddingStore),
    Hashing { dim: usize },
}

impl Embedder {
    pub fn hashing(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidParam(format!("hashing dimension must be >= 8, got {dim}")));
        }
        Ok(Embedder::Hashing { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Store(s) => s.dim(),
            Embedder::Hashing { dim } => *dim,
        }
    }

    fn lookup(&self, key: &str, text: impl FnOnce() -> String) -> Result<Vec<f32>> {
        match self {
            Embedder::Store(s) => s.get(key).map(<[f32]>::to_vec).ok_or_else(|| Error::Unknown {
                kind: "embedding",
                id: key.to_owned(),
            }),
            Embedder::Hashing { dim } => Ok(hash_embed(&text(), *dim)),
        }
    }

    /// φ_T, keyed by topic id.
    pub fn topic(&self, topic: &Topic) -> Result<Vec<f32>> {
        self.lookup(&topic.id, || topic.query_text.clone())
    }

    /// φ_Q, keyed by question id.
    pub fn question(&self, question: &Question) -> Result<Vec<f32>> {
        self.lookup(&question.id, || question.text.clone())
    }

    /// φ_QA, keyed by `question_id|facet_id`.
    pub fn question_answer(&self, question: &Question, facet_id: &str, answer: &str) -> Result<Vec<f32>> {
        self.lookup(&format!("{}|{facet_id}", question.id), || {
            format!("{} {QA_SEPARATOR} {answer}", question.text)
        })
    }

    /// φ_H: mean of the turns' φ_QA vectors; zero for an empty context.
    pub fn context(&self, dataset: &Dataset, context: &ConversationContext) -> Result<Vec<f32>> {
        let dim = self.dim();
        if context.is_empty() {
            return Ok(vec![0.0; dim]);
        }
        let mut sum = vec![0.0f64; dim];
        for turn in &context.turns {
            let q = dataset.question(&turn.question_id)?;
            let v = self.question_answer(q, &context.facet_id, &turn.answer_text)?;
            for (s, x) in sum.iter_mut().zip(&v) {
                *s += *x as f64;
            }
        }
        let n = context.len() as f64;
        Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            actual: v.len(),
            context: Some("cosine".into()),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 1.0]).is_err());
    }

    fn store_embedder() -> Embedder {
        let mut s = EmbeddingStore::new(2);
        s.insert("q1|t1-1", vec![1.0, 0.0]).unwrap();
        s.insert("q2|t1-1", vec![0.0, 1.0]).unwrap();
        Embedder::Store(s)
    }

    #[test]
    fn context_mean() {
        let ds = crate::data::Dataset::from_json_str(crate::data::tests_fixture()).unwrap();
        let e = store_embedder();
        let mut ctx = ConversationContext::empty("t1", "t1-1");
        assert_eq!(e.context(&ds, &ctx).unwrap(), [0.0, 0.0]);
        ctx.push_answered(&ds, "q1").unwrap();
        assert_eq!(e.context(&ds, &ctx).unwrap(), [1.0, 0.0]);
        ctx.push_answered(&ds, "q2").unwrap();
        assert_eq!(e.context(&ds, &ctx).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn context_mean_is_idempotent() {
        let ds = crate::data::Dataset::from_json_str(crate::data::tests_fixture()).unwrap();
        let e = Embedder::hashing(32).unwrap();
        let mut one = ConversationContext::empty("t1", "t1-1");
        one.push_answered(&ds, "q1").unwrap();
        let mut three = one.clone();
        three.turns.push(one.turns[0].clone());
        three.turns.push(one.turns[0].clone());
        let a = e.context(&ds, &one).unwrap();
        let b = e.context(&ds, &three).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_store_vector() {
        let ds = crate::data::Dataset::from_json_str(crate::data::tests_fixture()).unwrap();
        let e = store_embedder();
        let mut ctx = ConversationContext::empty("t1", "t1-2");
        ctx.push_answered(&ds, "q1").unwrap();
        let err = e.context(&ds, &ctx).unwrap_err();
        assert!(err.to_string().contains("q1|t1-2"));
    }

    #[test]
    fn small_hash_dim_rejected() {
        assert!(Embedder::hashing(4).is_err());
    }
}
