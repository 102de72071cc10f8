use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question_id: String,
    pub answer_text: String,
    pub no_answer: bool,
}

/// The question/answer history of one (topic, facet) conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationContext {
    pub topic_id: String,
    pub facet_id: String,
    pub turns: Vec<Turn>,
}

impl ConversationContext {
    pub fn empty(topic_id: impl Into<String>, facet_id: impl Into<String>) -> Self {
        ConversationContext {
            topic_id: topic_id.into(),
            facet_id: facet_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.turns.iter().any(|t| t.question_id == question_id)
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.turns.iter().map(|t| t.question_id.as_str())
    }

    /// Canonical key `topic|facet|q1,q2,...`.
    pub fn key(&self) -> String {
        let qs: Vec<&str> = self.question_ids().collect();
        format!("{}|{}|{}", self.topic_id, self.facet_id, qs.join(","))
    }

    /// Appends the answered turn for `question_id`, fetching the answer from the dataset.
    pub fn push_answered(&mut self, dataset: &Dataset, question_id: &str) -> Result<()> {
        if self.contains(question_id) {
            return Err(Error::InvalidParam(format!("question `{question_id}` already asked")));
        }
        let (text, no_answer) = dataset.answer(&self.topic_id, &self.facet_id, question_id)?;
        self.turns.push(Turn {
            question_id: question_id.to_owned(),
            answer_text: text.to_owned(),
            no_answer,
        });
        Ok(())
    }
}

/// A context together with the questions that may be asked next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCandidates {
    pub context: ConversationContext,
    pub candidates: Vec<String>,
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every context of `turn_len` distinct questions of the topic (turns in
/// ascending question id order, answers from the oracle) with the
/// remaining questions as candidates.
pub fn expand_contexts(
    dataset: &Dataset,
    topic_id: &str,
    facet_id: &str,
    turn_len: usize,
) -> Result<Vec<ContextCandidates>> {
    let questions = dataset.questions_of(topic_id)?;
    if dataset.facet(facet_id)?.topic_id != topic_id {
        return Err(Error::Unknown {
            kind: "facet of topic",
            id: format!("{facet_id} of {topic_id}"),
        });
    }
    let z = questions.len();
    if turn_len >= z {
        return Err(Error::InsufficientQuestions {
            topic: topic_id.to_owned(),
            available: z,
            requested: turn_len,
        });
    }
    combinations(z, turn_len)
        .into_iter()
        .map(|combo| {
            let mut context = ConversationContext::empty(topic_id, facet_id);
            for &i in &combo {
                context.push_answered(dataset, &questions[i])?;
            }
            let candidates = (0..z)
                .filter(|i| combo.binary_search(i).is_err())
                .map(|i| questions[i].clone())
                .collect();
            Ok(ContextCandidates { context, candidates })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExpansionCounts {
    /// Distinct (topic, facet, context) triples.
    pub contexts: u64,
    /// (context, candidate) pairs.
    pub instances: u64,
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Context and instance totals over every (topic, facet) pair for the given
/// turn lengths, computed in closed form. Turn lengths a topic cannot supply
/// are skipped for that topic.
pub fn expansion_counts(dataset: &Dataset, turn_lens: &[usize]) -> ExpansionCounts {
    let mut counts = ExpansionCounts::default();
    for topic in dataset.topics() {
        let z = dataset.questions_of(&topic.id).map_or(0, <[_]>::len) as u64;
        let facets = dataset.facets_of(&topic.id).map_or(0, <[_]>::len) as u64;
        for &l in turn_lens {
            let l = l as u64;
            if l < z {
                let c = binomial(z, l);
                counts.contexts += facets * c;
                counts.instances += facets * c * (z - l);
            }
        }
    }
    counts
}
