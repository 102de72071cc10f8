//! Clarifying-question selection.
//!
//! Every policy scores the candidate questions of one conversation context
//! without seeing their answers (except the oracles, which exist to bound
//! what is achievable) and picks the highest score, ties going to the
//! lowest question id.

mod features;
mod neuqs;
mod pairwise;
mod scaling;

pub use features::{
    detect_answer_polarity, detect_open_question, kendall_tau_at, last_polarity, FeatureBundle, Polarity,
};
pub use neuqs::{neuqs_score, train_neuqs, NeuqsInput, NeuqsModel};
pub use pairwise::{
    mean_pairwise_loss, pairwise_accuracy, pairwise_loss, train_pairwise, train_pairwise_with_history, Group,
    PairwiseModel, PairwiseStats,
};
pub use scaling::Standardizer;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ConversationContext, Dataset, FacetQrels, Topic};
use crate::embed::{cosine, fnv1a64, Embedder};
use crate::metrics::mrr;
use crate::qpp::sigma_vector;
use crate::retrieval::{retrieve, retrieve_original, RetrievalParams};
use crate::text::{InvertedIndex, RankedList};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorParams {
    /// Depth of the scalar σ feature.
    pub sigma_k: usize,
    /// Number of retrieval scores (η) and σ prefix values fed to NeuQS.
    pub eta_k: usize,
}

impl Default for SelectorParams {
    fn default() -> Self {
        SelectorParams { sigma_k: 100, eta_k: 10 }
    }
}

/// Everything a policy may consult.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub dataset: &'a Dataset,
    pub index: &'a InvertedIndex,
    pub embedder: &'a Embedder,
    pub qrels: &'a FacetQrels,
    pub retrieval: RetrievalParams,
    pub selector: SelectorParams,
}

/// Per-context quantities shared by all candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEvidence {
    pub original_run: RankedList,
    /// Run for the context alone; `None` when the context is empty.
    pub context_run: Option<RankedList>,
    pub phi_t: Vec<f32>,
    pub phi_h: Vec<f32>,
}

impl ContextEvidence {
    pub fn compute(env: &Env, topic: &Topic, context: &ConversationContext) -> Result<Self> {
        let context_run = if context.is_empty() {
            None
        } else {
            Some(retrieve(env.index, env.dataset, topic, context, None, None, &env.retrieval)?)
        };
        Ok(ContextEvidence {
            original_run: retrieve_original(env.index, topic, &env.retrieval)?,
            context_run,
            phi_t: env.embedder.topic(topic)?,
            phi_h: env.embedder.context(env.dataset, context)?,
        })
    }
}

/// Answer-free evidence for one candidate question.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvidence {
    pub question_id: String,
    pub run: RankedList,
    pub features: FeatureBundle,
    pub phi_q: Vec<f32>,
    /// Top `eta_k` raw scores, padded by repeating the last.
    pub eta_raw: Vec<f64>,
    pub sigma_vec: Vec<f64>,
}

impl CandidateEvidence {
    pub fn compute(
        env: &Env,
        topic: &Topic,
        context: &ConversationContext,
        shared: &ContextEvidence,
        question_id: &str,
    ) -> Result<Self> {
        let question = env.dataset.question(question_id)?;
        let run = retrieve(env.index, env.dataset, topic, context, Some(question), None, &env.retrieval)?;
        let phi_q = env.embedder.question(question)?;
        let features = features::bundle(
            &question.text,
            context,
            &run,
            &shared.original_run,
            shared.context_run.as_ref().unwrap_or(&run),
            env.selector.sigma_k,
            cosine(&phi_q, &shared.phi_t)?,
            cosine(&phi_q, &shared.phi_h)?,
        );
        let scores = run.scores();
        let k = env.selector.eta_k;
        let mut eta_raw: Vec<f64> = scores.iter().take(k).copied().collect();
        let last = eta_raw.last().copied().unwrap_or(0.0);
        eta_raw.resize(k, last);
        let sigma_vec = sigma_vector(&scores, k).values;
        Ok(CandidateEvidence {
            question_id: question_id.to_owned(),
            run,
            features,
            phi_q,
            eta_raw,
            sigma_vec,
        })
    }
}

/// The seven features of one candidate (see [`FeatureBundle`]).
pub fn extract_features(
    env: &Env,
    topic: &Topic,
    context: &ConversationContext,
    question_id: &str,
) -> Result<FeatureBundle> {
    let shared = ContextEvidence::compute(env, topic, context)?;
    Ok(CandidateEvidence::compute(env, topic, context, &shared, question_id)?.features)
}

/// Evidence for every candidate, in ascending id order.
pub fn gather_evidence(
    env: &Env,
    topic: &Topic,
    context: &ConversationContext,
    candidates: &[String],
) -> Result<(ContextEvidence, Vec<CandidateEvidence>)> {
    let shared = ContextEvidence::compute(env, topic, context)?;
    let mut ids: Vec<&String> = candidates.iter().collect();
    ids.sort();
    ids.dedup();
    let cands = ids
        .into_iter()
        .map(|q| CandidateEvidence::compute(env, topic, context, &shared, q))
        .collect::<Result<_>>()?;
    Ok((shared, cands))
}

/// NeuQS inputs for all candidates of a context. The η scores are
/// standardized jointly over every candidate's list so that candidates stay
/// comparable while the corpus-dependent scale is removed.
pub fn neuqs_inputs(shared: &ContextEvidence, candidates: &[CandidateEvidence]) -> Vec<NeuqsInput> {
    let finite: Vec<f64> = candidates
        .iter()
        .flat_map(|c| c.eta_raw.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let n = finite.len().max(1) as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let sd = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let norm = |v: f64| {
        if !v.is_finite() || sd <= 1e-12 {
            0.0
        } else {
            (v - mean) / sd
        }
    };
    candidates
        .iter()
        .map(|c| NeuqsInput {
            phi_t: shared.phi_t.clone(),
            phi_h: shared.phi_h.clone(),
            phi_q: c.phi_q.clone(),
            eta: c.eta_raw.iter().map(|&v| norm(v)).collect(),
            sigma_vec: c.sigma_vec.clone(),
        })
        .collect()
}

/// Highest score wins; ties (and NaN) go to the lowest id.
fn argmax(scored: &[(String, f64)]) -> Result<String> {
    let mut best: Option<(&str, f64)> = None;
    for (id, s) in scored {
        let s = if s.is_nan() { f64::NEG_INFINITY } else { *s };
        best = match best {
            None => Some((id, s)),
            Some((bid, bs)) if s > bs || (s == bs && id.as_str() < bid) => Some((id, s)),
            keep => keep,
        };
    }
    best.map(|(id, _)| id.to_owned())
        .ok_or_else(|| Error::Degenerate("no candidate questions".into()))
}

fn argmin(scored: &[(String, f64)]) -> Result<String> {
    let negated: Vec<(String, f64)> = scored.iter().map(|(id, s)| (id.clone(), -s)).collect();
    argmax(&negated)
}

/// The candidate with the highest σ; ties by id.
pub fn select_sigma(candidates: &[String], sigmas: &[f64]) -> Result<String> {
    if candidates.len() != sigmas.len() {
        return Err(Error::Dimension {
            expected: candidates.len(),
            actual: sigmas.len(),
            context: Some("sigma values".into()),
        });
    }
    let scored: Vec<(String, f64)> = candidates.iter().cloned().zip(sigmas.iter().copied()).collect();
    argmax(&scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Best,
    Worst,
}

/// Retrieval after `question_id` has been asked and answered by the facet.
pub fn answered_run(
    env: &Env,
    topic: &Topic,
    facet_id: &str,
    context: &ConversationContext,
    question_id: &str,
) -> Result<RankedList> {
    let question = env.dataset.question(question_id)?;
    let answer = env.dataset.answer(&topic.id, facet_id, question_id)?;
    retrieve(env.index, env.dataset, topic, context, Some(question), Some(answer), &env.retrieval)
}

/// MRR of the answered run of every candidate, in ascending id order.
pub fn candidate_mrrs(
    env: &Env,
    topic: &Topic,
    facet_id: &str,
    context: &ConversationContext,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    let grades = env.qrels.grades(facet_id);
    let mut ids: Vec<&String> = candidates.iter().collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|q| Ok((q.clone(), mrr(&answered_run(env, topic, facet_id, context, q)?, grades))))
        .collect()
}

/// The candidate whose answered retrieval has the highest (or lowest) MRR.
pub fn oracle_select(
    env: &Env,
    topic: &Topic,
    facet_id: &str,
    context: &ConversationContext,
    candidates: &[String],
    mode: OracleMode,
) -> Result<(String, f64)> {
    if candidates.is_empty() {
        return Err(Error::Degenerate("no candidate questions".into()));
    }
    if !env.qrels.grades(facet_id).values().any(|&g| g > 0) {
        log::warn!("facet `{facet_id}` has no relevant documents; oracle picks the lowest id");
        let lowest = candidates.iter().min().expect("non-empty");
        return Ok((lowest.clone(), 0.0));
    }
    let scored = candidate_mrrs(env, topic, facet_id, context, candidates)?;
    let pick = match mode {
        OracleMode::Best => argmax(&scored)?,
        OracleMode::Worst => argmin(&scored)?,
    };
    let value = scored.iter().find(|(q, _)| *q == pick).map_or(0.0, |(_, m)| *m);
    Ok((pick, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    OriginalQuery,
    Random,
    Sigma,
    Pairwise,
    Neuqs,
    OracleBest,
    OracleWorst,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::OriginalQuery,
        Policy::Random,
        Policy::Sigma,
        Policy::Pairwise,
        Policy::Neuqs,
        Policy::OracleBest,
        Policy::OracleWorst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::OriginalQuery => "original_query",
            Policy::Random => "random",
            Policy::Sigma => "sigma",
            Policy::Pairwise => "pairwise",
            Policy::Neuqs => "neuqs",
            Policy::OracleBest => "oracle_best",
            Policy::OracleWorst => "oracle_worst",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Policy::Pairwise | Policy::Neuqs)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| Error::InvalidParam(format!("unknown policy `{s}`")))
    }
}

/// A policy together with whatever it needs to score candidates.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    OriginalQuery,
    Random { seed: u64 },
    Sigma,
    Pairwise(PairwiseModel),
    Neuqs(NeuqsModel),
    Oracle(OracleMode),
}

impl Selector {
    pub fn policy(&self) -> Policy {
        match self {
            Selector::OriginalQuery => Policy::OriginalQuery,
            Selector::Random { .. } => Policy::Random,
            Selector::Sigma => Policy::Sigma,
            Selector::Pairwise(_) => Policy::Pairwise,
            Selector::Neuqs(_) => Policy::Neuqs,
            Selector::Oracle(OracleMode::Best) => Policy::OracleBest,
            Selector::Oracle(OracleMode::Worst) => Policy::OracleWorst,
        }
    }

    /// Selectors that need no trained model.
    pub fn untrained(policy: Policy, seed: u64) -> Result<Self> {
        Ok(match policy {
            Policy::OriginalQuery => Selector::OriginalQuery,
            Policy::Random => Selector::Random { seed },
            Policy::Sigma => Selector::Sigma,
            Policy::OracleBest => Selector::Oracle(OracleMode::Best),
            Policy::OracleWorst => Selector::Oracle(OracleMode::Worst),
            Policy::Pairwise | Policy::Neuqs => {
                return Err(Error::InvalidParam(format!("policy `{policy}` needs a trained model")))
            }
        })
    }
}

/// Picks the next question, or `None` for the original-query policy, which
/// asks nothing. The result does not depend on the order of `candidates`.
pub fn select(
    selector: &Selector,
    env: &Env,
    topic: &Topic,
    facet_id: &str,
    context: &ConversationContext,
    candidates: &[String],
) -> Result<Option<String>> {
    if candidates.is_empty() {
        return Err(Error::Degenerate(format!("no candidate questions for `{}`", context.key())));
    }
    let pick = match selector {
        Selector::OriginalQuery => return Ok(None),
        Selector::Random { seed } => {
            let mut ids: Vec<&String> = candidates.iter().collect();
            ids.sort();
            ids.dedup();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(context.key().as_bytes()));
            ids[rng.random_range(0..ids.len())].clone()
        }
        Selector::Sigma => {
            let (_, cands) = gather_evidence(env, topic, context, candidates)?;
            let ids: Vec<String> = cands.iter().map(|c| c.question_id.clone()).collect();
            let sigmas: Vec<f64> = cands.iter().map(|c| c.features.sigma_q).collect();
            select_sigma(&ids, &sigmas)?
        }
        Selector::Pairwise(model) => {
            let (_, cands) = gather_evidence(env, topic, context, candidates)?;
            let scored: Vec<(String, f64)> = cands
                .iter()
                .map(|c| model.score(&c.features.to_vec()).map(|s| (c.question_id.clone(), s)))
                .collect::<Result<_>>()?;
            argmax(&scored)?
        }
        Selector::Neuqs(model) => {
            let (shared, cands) = gather_evidence(env, topic, context, candidates)?;
            let inputs = neuqs_inputs(&shared, &cands);
            let scored: Vec<(String, f64)> = cands
                .iter()
                .zip(&inputs)
                .map(|(c, x)| neuqs_score(model, x).map(|s| (c.question_id.clone(), s)))
                .collect::<Result<_>>()?;
            argmax(&scored)?
        }
        Selector::Oracle(mode) => oracle_select(env, topic, facet_id, context, candidates, *mode)?.0,
    };
    Ok(Some(pick))
}

/// One labelled candidate of one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInstance {
    pub topic_id: String,
    pub facet_id: String,
    pub context_key: String,
    pub turn_len: usize,
    pub question_id: String,
    /// Answered-retrieval MRR of the candidate.
    pub mrr: f64,
    /// Whether asking the candidate beats the original query.
    pub label: bool,
    pub split: String,
    pub features: FeatureBundle,
}

/// All candidates of a context with evidence and labels.
#[derive(Debug, Clone)]
pub struct LabelledContext {
    pub instances: Vec<SelectionInstance>,
    pub neuqs: Vec<NeuqsInput>,
    pub original_mrr: f64,
}

/// Label = answered MRR of the candidate strictly above the MRR of the
/// original query alone.
pub fn label_context(
    env: &Env,
    topic: &Topic,
    facet_id: &str,
    context: &ConversationContext,
    candidates: &[String],
    split: &str,
) -> Result<LabelledContext> {
    let (shared, cands) = gather_evidence(env, topic, context, candidates)?;
    let grades = env.qrels.grades(facet_id);
    let original_mrr = mrr(&shared.original_run, grades);
    let mrrs = candidate_mrrs(env, topic, facet_id, context, candidates)?;
    let key = context.key();
    let instances = cands
        .iter()
        .zip(&mrrs)
        .map(|(c, (_, m))| SelectionInstance {
            topic_id: topic.id.clone(),
            facet_id: facet_id.to_owned(),
            context_key: key.clone(),
            turn_len: context.len(),
            question_id: c.question_id.clone(),
            mrr: *m,
            label: *m > original_mrr,
            split: split.to_owned(),
            features: c.features,
        })
        .collect();
    Ok(LabelledContext {
        instances,
        neuqs: neuqs_inputs(&shared, &cands),
        original_mrr,
    })
}

/// Tab-separated feature table with a header row.
pub fn features_tsv(instances: &[SelectionInstance]) -> String {
    let mut out = String::from("topic_id\tfacet_id\tcontext\tturn_len\tquestion_id\tsplit\tlabel\tmrr");
    for name in FeatureBundle::NAMES {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for i in instances {
        let f = &i.features;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            i.topic_id,
            i.facet_id,
            i.context_key,
            i.turn_len,
            i.question_id,
            i.split,
            u8::from(i.label),
            i.mrr,
            u8::from(f.open_question),
            f.last_answer_polarity.as_str(),
            f.sigma_q,
            f.tau_orig_10_50,
            f.tau_ctx_20_50,
            f.cos_q_topic,
            f.cos_q_context
        );
    }
    out
}

pub fn write_features_tsv(instances: &[SelectionInstance], path: &Path) -> Result<()> {
    std::fs::write(path, features_tsv(instances)).map_err(|e| Error::io(path, e))
}
