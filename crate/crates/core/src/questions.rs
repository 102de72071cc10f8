//! Retrieval of candidate clarifying questions from the global question bank.
//!
//! A topic's query text is matched against every question in the bank with
//! one of the term-based scorers; the top of that list can then be reordered
//! by embedding similarity. A question counts as relevant to a topic when it
//! was collected for that topic.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Grades, Question, Topic};
use crate::embed::{cosine, EmbeddingStore};
use crate::metrics::{average_precision, recall_at};
use crate::par::Execution;
use crate::text::{
    rm3_expand, score_bm25, score_ql_dirichlet, Bm25Params, InvertedIndex, LanguageModel, RankedList, Rm3Params,
    Tokenizer, DEFAULT_MU,
};
use crate::{Error, Result};

pub const DEFAULT_RERANK_POOL: usize = 100;
pub const RECALL_CUTOFFS: [usize; 3] = [10, 20, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionMethod {
    Ql,
    Bm25,
    Rm3,
}

impl fmt::Display for QuestionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionMethod::Ql => "ql",
            QuestionMethod::Bm25 => "bm25",
            QuestionMethod::Rm3 => "rm3",
        })
    }
}

impl FromStr for QuestionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ql" => Ok(QuestionMethod::Ql),
            "bm25" => Ok(QuestionMethod::Bm25),
            "rm3" => Ok(QuestionMethod::Rm3),
            _ => Err(Error::InvalidParam(format!("unknown question retrieval method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionRetrievalParams {
    pub mu: f64,
    pub bm25: Bm25Params,
    pub rm3: Rm3Params,
}

impl Default for QuestionRetrievalParams {
    fn default() -> Self {
        QuestionRetrievalParams {
            mu: DEFAULT_MU,
            bm25: Bm25Params::default(),
            rm3: Rm3Params::default(),
        }
    }
}

/// Builds an index whose documents are the bank's questions.
pub fn index_questions<'a>(
    questions: impl IntoIterator<Item = &'a Question>,
    tokenizer: Tokenizer,
    exec: Execution,
) -> Result<InvertedIndex> {
    InvertedIndex::build(questions.into_iter().map(|q| (q.id.clone(), q.text.clone())), tokenizer, exec)
}

pub fn retrieve_questions(
    index: &InvertedIndex,
    topic: &Topic,
    method: QuestionMethod,
    k: usize,
    params: &QuestionRetrievalParams,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    let terms = index.tokenizer().tokenize(&topic.query_text);
    match method {
        QuestionMethod::Ql => score_ql_dirichlet(index, &LanguageModel::mle(&[&terms]), params.mu, k),
        QuestionMethod::Bm25 => score_bm25(index, &terms, params.bm25, k),
        QuestionMethod::Rm3 => {
            let expanded = rm3_expand(index, &terms, params.rm3)?;
            score_ql_dirichlet(index, &expanded, params.mu, k)
        }
    }
}

/// Reorders the first `pool` candidates by cosine to `topic_vec`, highest
/// first with ties by id. Candidates below the pool keep their order.
pub fn rerank_by_embedding(
    candidates: &RankedList,
    topic_vec: &[f32],
    store: &EmbeddingStore,
    pool: usize,
) -> Result<RankedList> {
    let depth = pool.min(candidates.len());
    let mut head = Vec::with_capacity(depth);
    for (id, _) in &candidates.entries()[..depth] {
        let v = store.get(id).ok_or_else(|| Error::Unknown {
            kind: "question embedding",
            id: id.clone(),
        })?;
        head.push((id.clone(), cosine(topic_vec, v)?));
    }
    head.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    head.extend(candidates.entries()[depth..].iter().cloned());
    Ok(RankedList::from_sorted(head, candidates.cutoff()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRetrievalReport {
    pub map: f64,
    /// Macro-averaged recall keyed by cutoff.
    pub recall: BTreeMap<usize, f64>,
    pub topics: usize,
    pub per_topic_ap: BTreeMap<String, f64>,
}

/// Bank-membership labels: every question collected for the topic is
/// relevant with grade 1.
pub fn bank_labels(dataset: &Dataset) -> BTreeMap<String, Grades> {
    dataset
        .topics()
        .map(|t| {
            let grades = dataset
                .questions_of(&t.id)
                .map(|qs| qs.iter().map(|q| (q.clone(), 1)).collect())
                .unwrap_or_default();
            (t.id.clone(), grades)
        })
        .collect()
}

/// MAP and Recall@{10,20,30}, macro-averaged over topics. Topics without any
/// relevant question are left out.
pub fn eval_question_retrieval(
    runs: &BTreeMap<String, RankedList>,
    labels: &BTreeMap<String, Grades>,
) -> Result<QuestionRetrievalReport> {
    let mut per_topic_ap = BTreeMap::new();
    let mut recall_sums: BTreeMap<usize, f64> = RECALL_CUTOFFS.iter().map(|&k| (k, 0.0)).collect();
    for (topic, run) in runs {
        let grades = labels.get(topic).ok_or_else(|| Error::Unknown {
            kind: "labels for topic",
            id: topic.clone(),
        })?;
        if !grades.values().any(|&g| g > 0) {
            log::warn!("topic `{topic}` has no relevant questions; excluded");
            continue;
        }
        per_topic_ap.insert(topic.clone(), average_precision(run, grades));
        for (k, sum) in recall_sums.iter_mut() {
            *sum += recall_at(run, grades, *k);
        }
    }
    let n = per_topic_ap.len();
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(QuestionRetrievalReport {
        map: mean(per_topic_ap.values().sum()),
        recall: recall_sums.into_iter().map(|(k, s)| (k, mean(s))).collect(),
        topics: n,
        per_topic_ap,
    })
}

/// TREC run lines `topic Q0 question rank score tag`, topics in key order.
pub fn to_trec_run(runs: &BTreeMap<String, RankedList>, tag: &str) -> String {
    let mut out = String::new();
    for (topic, run) in runs {
        for (i, (qid, score)) in run.entries().iter().enumerate() {
            let _ = writeln!(out, "{topic} Q0 {qid} {} {score} {tag}", i + 1);
        }
    }
    out
}

pub fn write_trec_run(runs: &BTreeMap<String, RankedList>, tag: &str, path: &Path) -> Result<()> {
    std::fs::write(path, to_trec_run(runs, tag)).map_err(|e| Error::io(path, e))
}
