use serde::{Deserialize, Serialize};

use crate::data::ConversationContext;
use crate::qpp::sigma_scalar;
use crate::text::{tokenize, RankedList};

const OPEN_WORDS: [&str; 10] = ["describe", "how", "tell", "what", "when", "where", "which", "who", "whom", "why"];

/// 1 when the first word is an interrogative or an imperative asking for
/// description. Yes/no openers ("do", "are", "would", ...) and anything
/// else count as closed.
pub fn detect_open_question(text: &str) -> bool {
    tokenize(text)
        .first()
        .is_some_and(|w| OPEN_WORDS.binary_search(&w.as_str()).is_ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Yes,
    No,
    Other,
    None,
}

impl Polarity {
    pub fn encode(self) -> f64 {
        match self {
            Polarity::Yes => 1.0,
            Polarity::No => -1.0,
            Polarity::Other | Polarity::None => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Yes => "yes",
            Polarity::No => "no",
            Polarity::Other => "other",
            Polarity::None => "none",
        }
    }
}

/// Classifies an answer by its first word. Flagged no-answers are `Other`.
pub fn detect_answer_polarity(answer: &str, no_answer: bool) -> Polarity {
    if no_answer {
        return Polarity::Other;
    }
    match tokenize(answer).first().map(String::as_str) {
        Some("yes") => Polarity::Yes,
        Some("no") => Polarity::No,
        _ => Polarity::Other,
    }
}

/// Polarity of the context's last turn; `None` for an empty context.
pub fn last_polarity(context: &ConversationContext) -> Polarity {
    context
        .turns
        .last()
        .map_or(Polarity::None, |t| detect_answer_polarity(&t.answer_text, t.no_answer))
}

/// Kendall's τ between two runs, restricted to documents in both the top
/// `depth_a` of `a` and the top `depth_b` of `b`. Fewer than two shared
/// documents give 0.
pub fn kendall_tau_at(a: &RankedList, depth_a: usize, b: &RankedList, depth_b: usize) -> f64 {
    let b_top: Vec<&str> = b.ids().take(depth_b).collect();
    let pairs: Vec<(usize, usize)> = a
        .ids()
        .take(depth_a)
        .enumerate()
        .filter_map(|(ra, id)| b_top.iter().position(|x| *x == id).map(|rb| (ra, rb)))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let da = pairs[i].0 as i64 - pairs[j].0 as i64;
            let db = pairs[i].1 as i64 - pairs[j].1 as i64;
            score += (da * db).signum();
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// The seven hand-crafted features of a candidate question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub open_question: bool,
    pub last_answer_polarity: Polarity,
    pub sigma_q: f64,
    pub tau_orig_10_50: f64,
    pub tau_ctx_20_50: f64,
    pub cos_q_topic: f64,
    pub cos_q_context: f64,
}

impl FeatureBundle {
    pub const NAMES: [&'static str; 7] = [
        "open_question",
        "last_answer_polarity",
        "sigma_q",
        "tau_orig_10_50",
        "tau_ctx_20_50",
        "cos_q_topic",
        "cos_q_context",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            f64::from(u8::from(self.open_question)),
            self.last_answer_polarity.encode(),
            self.sigma_q,
            self.tau_orig_10_50,
            self.tau_ctx_20_50,
            self.cos_q_topic,
            self.cos_q_context,
        ]
    }
}

/// Assembles the bundle from precomputed runs and similarities.
///
/// `candidate_run` is the answer-absent run for the question,
/// `original_run` the topic-only run and `context_run` the run for the
/// context alone (for an empty context, the candidate run itself).
#[allow(clippy::too_many_arguments)]
pub(crate) fn bundle(
    question_text: &str,
    context: &ConversationContext,
    candidate_run: &RankedList,
    original_run: &RankedList,
    context_run: &RankedList,
    sigma_k: usize,
    cos_q_topic: f64,
    cos_q_context: f64,
) -> FeatureBundle {
    FeatureBundle {
        open_question: detect_open_question(question_text),
        last_answer_polarity: last_polarity(context),
        sigma_q: sigma_scalar(&candidate_run.scores(), sigma_k),
        tau_orig_10_50: kendall_tau_at(original_run, 10, candidate_run, 50),
        tau_ctx_20_50: kendall_tau_at(candidate_run, 20, context_run, 50),
        cos_q_topic,
        cos_q_context,
    }
}
