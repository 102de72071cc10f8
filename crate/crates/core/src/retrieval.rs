//! Conversational document retrieval.
//!
//! The query model mixes the original topic's language model with a model of
//! everything said in the conversation:
//!
//! `p(w) = α·p(w|θ_topic) + (1 − α)·p(w|θ_conversation)`
//!
//! and documents are ranked by Dirichlet-smoothed query likelihood under that
//! mixture. Turns answered with the no-answer flag contribute their question
//! text only.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{ConversationContext, Dataset, Question, Topic};
use crate::text::{score_ql_dirichlet, InvertedIndex, LanguageModel, RankedList, Tokenizer, DEFAULT_MU};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Weight of the original query model.
    pub alpha: f64,
    /// Dirichlet prior.
    pub mu: f64,
    pub cutoff: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            alpha: 0.5,
            mu: DEFAULT_MU,
            cutoff: 100,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParam(format!("mu {} must be finite and >= 0", self.mu)));
        }
        if self.cutoff == 0 {
            return Err(Error::InvalidParam("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        RetrievalParams { alpha, ..self }
    }
}

/// The α-mixture of a topic model and a conversation model.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedQueryModel {
    pub alpha: f64,
    pub topic_model: LanguageModel,
    pub conversation_model: LanguageModel,
}

impl InterpolatedQueryModel {
    /// Union of both supports.
    pub fn support(&self) -> BTreeSet<&str> {
        self.topic_model.terms().chain(self.conversation_model.terms()).collect()
    }

    pub fn prob(&self, term: &str) -> f64 {
        self.alpha * self.topic_model.prob(term) + (1.0 - self.alpha) * self.conversation_model.prob(term)
    }

    /// The mixture as a plain distribution; terms whose mixed weight is zero
    /// (possible at α ∈ {0, 1}) are left out.
    pub fn to_language_model(&self) -> LanguageModel {
        LanguageModel::from_probs_unchecked(self.support().into_iter().map(|t| (t.to_owned(), self.prob(t))).collect::<Vec<_>>())
    }
}

pub fn interpolate(topic_model: LanguageModel, conversation_model: LanguageModel, alpha: f64) -> Result<InterpolatedQueryModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(InterpolatedQueryModel {
        alpha,
        topic_model,
        conversation_model,
    })
}

/// Maximum-likelihood model of the conversation so far plus the current
/// question and, when given, its answer. No-answer turns contribute only
/// their question text. Terms are pooled with raw counts.
pub fn build_conversation_lm(
    dataset: &Dataset,
    tokenizer: Tokenizer,
    context: &ConversationContext,
    question: Option<&Question>,
    answer: Option<(&str, bool)>,
) -> Result<LanguageModel> {
    if let Some(q) = question {
        if context.contains(&q.id) {
            return Err(Error::InvalidParam(format!("question `{}` is already in the context", q.id)));
        }
    }
    let mut sequences = Vec::with_capacity(2 * context.len() + 2);
    for turn in &context.turns {
        sequences.push(tokenizer.tokenize(&dataset.question(&turn.question_id)?.text));
        if !turn.no_answer {
            sequences.push(tokenizer.tokenize(&turn.answer_text));
        }
    }
    if let Some(q) = question {
        sequences.push(tokenizer.tokenize(&q.text));
        if let Some((text, false)) = answer {
            sequences.push(tokenizer.tokenize(text));
        }
    }
    Ok(LanguageModel::mle(&sequences))
}

pub fn topic_model(topic: &Topic, tokenizer: Tokenizer) -> LanguageModel {
    LanguageModel::mle(&[tokenizer.tokenize(&topic.query_text)])
}

/// Ranks documents for the original query alone (α = 1).
pub fn retrieve_original(index: &InvertedIndex, topic: &Topic, params: &RetrievalParams) -> Result<RankedList> {
    params.validate()?;
    score_ql_dirichlet(index, &topic_model(topic, index.tokenizer()), params.mu, params.cutoff)
}

/// Full pipeline: topic model, conversation model, interpolation, scoring.
///
/// With `answer = None` the current question is scored without its answer,
/// which is how candidate questions are assessed during selection. With
/// `question = None` only the existing context is used.
pub fn retrieve(
    index: &InvertedIndex,
    dataset: &Dataset,
    topic: &Topic,
    context: &ConversationContext,
    question: Option<&Question>,
    answer: Option<(&str, bool)>,
    params: &RetrievalParams,
) -> Result<RankedList> {
    params.validate()?;
    let tokenizer = index.tokenizer();
    let conversation = build_conversation_lm(dataset, tokenizer, context, question, answer)?;
    let mut alpha = params.alpha;
    if conversation.is_empty() {
        if question.is_some() || !context.is_empty() {
            log::warn!("empty conversation model for `{}`; using the original query only", context.key());
        }
        alpha = 1.0;
    }
    let mixture = interpolate(topic_model(topic, tokenizer), conversation, alpha)?;
    score_ql_dirichlet(index, &mixture.to_language_model(), params.mu, params.cutoff)
}
