use serde::{Deserialize, Serialize};

use super::{InvertedIndex, LanguageModel, RankedList};
use crate::{Error, Result};

/// Default Dirichlet prior.
pub const DEFAULT_MU: f64 = 2000.0;

/// Query-likelihood scoring with Dirichlet-smoothed document models:
///
/// `score(d) = Σ_w p(w|q) · ln((tf(w,d) + μ·p(w|C)) / (|d| + μ))`
///
/// summed over every query term with non-zero probability and non-zero
/// collection frequency. All documents are scored; the list is cut at `cutoff`.
pub fn score_ql_dirichlet(
    index: &InvertedIndex,
    query: &LanguageModel,
    mu: f64,
    cutoff: usize,
) -> Result<RankedList> {
    if cutoff == 0 {
        return Err(Error::InvalidParam("cutoff must be at least 1".into()));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParam(format!("mu must be finite and >= 0, got {mu}")));
    }
    let n = index.doc_count();
    // (term id, p(w|q), p(w|C))
    let qterms: Vec<(u32, f64, f64)> = query
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .filter_map(|(t, p)| {
            let tid = index.term_id(t)?;
            let pc = index.collection_prob(t);
            (pc > 0.0).then_some((tid, p, pc))
        })
        .collect();

    let scores: Vec<f64> = if mu > 0.0 {
        let base: f64 = qterms.iter().map(|&(_, p, pc)| p * (mu * pc).ln()).sum();
        let mass: f64 = qterms.iter().map(|&(_, p, _)| p).sum();
        let mut scores: Vec<f64> = (0..n)
            .map(|d| base - mass * (index.doc_lengths[d] as f64 + mu).ln())
            .collect();
        for &(tid, p, pc) in &qterms {
            let background = (mu * pc).ln();
            for posting in &index.postings[tid as usize] {
                scores[posting.doc as usize] += p * ((posting.tf as f64 + mu * pc).ln() - background);
            }
        }
        scores
    } else {
        // Unsmoothed: a document missing any query term has likelihood zero.
        let mut scores = vec![0.0; n];
        let mut matched = vec![0usize; n];
        for &(tid, p, _) in &qterms {
            for posting in &index.postings[tid as usize] {
                let d = posting.doc as usize;
                scores[d] += p * (posting.tf as f64 / index.doc_lengths[d] as f64).ln();
                matched[d] += 1;
            }
        }
        for d in 0..n {
            if matched[d] < qterms.len() {
                scores[d] = f64::NEG_INFINITY;
            }
        }
        scores
    };

    Ok(rank(index, scores, cutoff))
}

fn rank(index: &InvertedIndex, scores: Vec<f64>, cutoff: usize) -> RankedList {
    // Document numbers follow ascending id order, so sorting by number breaks
    // ties by id.
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    order.truncate(cutoff);
    RankedList::from_sorted(
        order
            .into_iter()
            .map(|d| (index.doc_id(d).to_owned(), scores[d as usize]))
            .collect(),
        cutoff,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Okapi BM25 with `idf = ln((N − df + 0.5)/(df + 0.5) + 1)`. Every query
/// token contributes, so repeated tokens count repeatedly.
pub fn score_bm25(
    index: &InvertedIndex,
    query_terms: &[String],
    params: Bm25Params,
    cutoff: usize,
) -> Result<RankedList> {
    if cutoff == 0 {
        return Err(Error::InvalidParam("cutoff must be at least 1".into()));
    }
    if !(params.k1 >= 0.0) || !(0.0..=1.0).contains(&params.b) {
        return Err(Error::InvalidParam(format!("bm25 k1={} b={}", params.k1, params.b)));
    }
    if query_terms.is_empty() {
        return Ok(RankedList::empty(cutoff));
    }
    let n = index.doc_count();
    let avgdl = index.average_doc_length();
    let mut scores = vec![0.0; n];
    for term in query_terms {
        let plist = index.postings(term);
        if plist.is_empty() {
            continue;
        }
        let df = plist.len() as f64;
        let idf = ((n as f64 - df + 0.5) / (df + 0.5) + 1.0).ln();
        for p in plist {
            let tf = p.tf as f64;
            let dl = index.doc_lengths[p.doc as usize] as f64;
            let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
            scores[p.doc as usize] +=
                idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
        }
    }
    Ok(rank(index, scores, cutoff))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Weight of the original query model in the final mixture.
    pub lambda: f64,
    /// Dirichlet prior of the initial feedback run.
    pub mu: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Rm3Params {
            fb_docs: 10,
            fb_terms: 10,
            lambda: 0.5,
            mu: DEFAULT_MU,
        }
    }
}

/// RM3 expansion: a relevance model estimated from the top `fb_docs` of an
/// initial query-likelihood run, truncated to `fb_terms` terms and mixed with
/// the query's maximum-likelihood model.
///
/// Feedback documents are weighted by their query likelihood, i.e. the
/// run's log scores exponentiated and normalized over the feedback set.
pub fn rm3_expand(index: &InvertedIndex, query_terms: &[String], params: Rm3Params) -> Result<LanguageModel> {
    if params.fb_docs == 0 || params.fb_terms == 0 {
        return Err(Error::InvalidParam("fb_docs and fb_terms must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&params.lambda) {
        return Err(Error::InvalidParam(format!("rm3 lambda {} outside [0, 1]", params.lambda)));
    }
    let query = LanguageModel::mle(&[query_terms]);
    if params.lambda == 1.0 {
        return Ok(query);
    }
    let run = score_ql_dirichlet(index, &query, params.mu, params.fb_docs)?;
    if run.is_empty() || query.is_empty() {
        log::warn!("rm3: empty feedback run, returning the unexpanded query model");
        return Ok(query);
    }

    let max = run.entries()[0].1;
    let mut weights: Vec<f64> = if max.is_finite() {
        run.entries().iter().map(|(_, s)| (s - max).exp()).collect()
    } else {
        vec![1.0; run.len()]
    };
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);

    let mut relevance = vec![0.0; index.vocabulary_size()];
    for ((doc_id, _), w) in run.entries().iter().zip(&weights) {
        let doc = index.doc_number(doc_id).expect("run ids come from the index");
        let len = index.doc_length(doc) as f64;
        if len == 0.0 {
            continue;
        }
        for &(tid, tf) in index.doc_terms(doc) {
            relevance[tid as usize] += w * tf as f64 / len;
        }
    }
    let mut ranked: Vec<(u32, f64)> = relevance
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .map(|(t, p)| (t as u32, p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| index.term(a.0).cmp(index.term(b.0))));
    ranked.truncate(params.fb_terms);
    let rm = LanguageModel::from_weights(ranked.into_iter().map(|(t, p)| (index.term(t).to_owned(), p)));
    if rm.is_empty() {
        log::warn!("rm3: feedback documents are empty, returning the unexpanded query model");
        return Ok(query);
    }

    let mut mixed: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    for (t, p) in query.iter() {
        *mixed.entry(t.to_owned()).or_default() += params.lambda * p;
    }
    for (t, p) in rm.iter() {
        *mixed.entry(t.to_owned()).or_default() += (1.0 - params.lambda) * p;
    }
    Ok(LanguageModel::from_probs_unchecked(mixed))
}
