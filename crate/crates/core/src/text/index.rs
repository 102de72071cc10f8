use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::Tokenizer;
use crate::par::Execution;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Term → postings index with the collection statistics needed for smoothing.
///
/// Documents are numbered by ascending id, so the index is independent of the
/// order in which documents are supplied. Postings are sorted by document
/// number. A forward index (document → term counts) is kept alongside for
/// relevance-model expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(super) tokenizer: Tokenizer,
    pub(super) doc_ids: Vec<String>,
    pub(super) doc_lengths: Vec<u32>,
    pub(super) terms: Vec<String>,
    pub(super) term_ids: HashMap<String, u32>,
    pub(super) postings: Vec<Vec<Posting>>,
    pub(super) term_counts: Vec<u64>,
    pub(super) collection_length: u64,
    pub(super) forward: Vec<Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Index `(doc_id, text)` pairs. Tokenization is spread over `exec`.
    pub fn build<I>(docs: I, tokenizer: Tokenizer, exec: Execution) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut docs: Vec<(String, String)> = docs.into_iter().collect();
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Duplicate {
                kind: "document",
                id: w[0].0.clone(),
            });
        }

        let bags: Vec<(u32, BTreeMap<String, u32>)> = exec.map(&docs, |(_, text)| {
            let tokens = tokenizer.tokenize(text);
            let mut bag = BTreeMap::new();
            for t in &tokens {
                *bag.entry(t.clone()).or_insert(0u32) += 1;
            }
            (tokens.len() as u32, bag)
        });

        let mut vocab: BTreeMap<&str, ()> = BTreeMap::new();
        for (_, bag) in &bags {
            for term in bag.keys() {
                vocab.insert(term, ());
            }
        }
        let terms: Vec<String> = vocab.into_keys().map(str::to_owned).collect();
        let term_ids: HashMap<String, u32> =
            terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();

        let mut postings = vec![Vec::new(); terms.len()];
        let mut forward = Vec::with_capacity(bags.len());
        let mut doc_lengths = Vec::with_capacity(bags.len());
        for (doc, (len, bag)) in bags.into_iter().enumerate() {
            doc_lengths.push(len);
            let mut fwd = Vec::with_capacity(bag.len());
            for (term, tf) in bag {
                let tid = term_ids[&term];
                postings[tid as usize].push(Posting { doc: doc as u32, tf });
                fwd.push((tid, tf));
            }
            forward.push(fwd);
        }
        let doc_ids = docs.into_iter().map(|(id, _)| id).collect();
        Ok(Self::assemble(tokenizer, doc_ids, doc_lengths, terms, postings, Some(forward)))
    }

    /// Fills in the derived statistics from the primary tables.
    pub(super) fn assemble(
        tokenizer: Tokenizer,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        forward: Option<Vec<Vec<(u32, u32)>>>,
    ) -> Self {
        let term_ids = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let term_counts: Vec<u64> =
            postings.iter().map(|p| p.iter().map(|x| x.tf as u64).sum()).collect();
        let collection_length = doc_lengths.iter().map(|&l| l as u64).sum();
        let forward = forward.unwrap_or_else(|| {
            let mut fwd = vec![Vec::new(); doc_ids.len()];
            for (tid, plist) in postings.iter().enumerate() {
                for p in plist {
                    fwd[p.doc as usize].push((tid as u32, p.tf));
                }
            }
            fwd
        });
        InvertedIndex {
            tokenizer,
            doc_ids,
            doc_lengths,
            terms,
            term_ids,
            postings,
            term_counts,
            collection_length,
            forward,
        }
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_number(&self, id: &str) -> Option<u32> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(id)).ok().map(|i| i as u32)
    }

    pub fn doc_length(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn collection_length(&self) -> u64 {
        self.collection_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    /// Total occurrences of `term` in the collection.
    pub fn collection_count(&self, term: &str) -> u64 {
        self.term_id(term).map_or(0, |t| self.term_counts[t as usize])
    }

    /// p(w|C); zero for unseen terms or an empty collection.
    pub fn collection_prob(&self, term: &str) -> f64 {
        if self.collection_length == 0 {
            return 0.0;
        }
        self.collection_count(term) as f64 / self.collection_length as f64
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_id(term).map_or(&[], |t| &self.postings[t as usize])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn tf(&self, term: &str, doc: u32) -> u32 {
        let plist = self.postings(term);
        plist
            .binary_search_by_key(&doc, |p| p.doc)
            .map_or(0, |i| plist[i].tf)
    }

    /// `(term id, tf)` pairs of one document, sorted by term id.
    pub fn doc_terms(&self, doc: u32) -> &[(u32, u32)] {
        &self.forward[doc as usize]
    }

    pub fn average_doc_length(&self) -> f64 {
        if self.doc_ids.is_empty() {
            0.0
        } else {
            self.collection_length as f64 / self.doc_ids.len() as f64
        }
    }
}

#[derive(Deserialize)]
struct CorpusRecord {
    doc_id: String,
    text: String,
}

/// Reads a corpus of line-delimited `{"doc_id": ..., "text": ...}` objects.
/// Blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        docs.push((rec.doc_id, rec.text));
    }
    Ok(docs)
}
