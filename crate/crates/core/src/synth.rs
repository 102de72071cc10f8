//! A seeded synthetic collection with planted facets.
//!
//! Every topic has a query term shared by all of its documents and one
//! distinctive term per facet that only that facet's relevant documents
//! contain. Distractor documents repeat the query term more often than the
//! relevant ones, so the original query alone ranks poorly. The question bank
//! per topic holds one question naming each facet term, one open question
//! whose answer always names the user's facet term, and one vague question
//! that is never answered. Off-facet answers to facet questions are "no",
//! sometimes followed by the user's own facet term. Question ids are
//! shuffled per topic so that id order carries no signal.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    AnswerEntry, Dataset, DatasetRecords, FacetKind, FacetQrels, FacetRecord, QuestionRecord, TopicKind,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub topics: usize,
    pub facets_per_topic: usize,
    pub docs_per_facet: usize,
    pub distractors_per_topic: usize,
    pub noise_docs: usize,
    pub filler_len: usize,
    /// Inclusive range of facet-term occurrences in a relevant document.
    pub facet_term_tf: (usize, usize),
    /// Inclusive range of topic-term occurrences in a distractor.
    pub distractor_topic_tf: (usize, usize),
    /// Chance that an off-facet "no" answer also names the user's facet.
    pub reveal_probability: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            topics: 20,
            facets_per_topic: 4,
            docs_per_facet: 5,
            distractors_per_topic: 6,
            noise_docs: 60,
            filler_len: 12,
            facet_term_tf: (1, 3),
            distractor_topic_tf: (2, 4),
            reveal_probability: 0.3,
            seed: 42,
        }
    }
}

impl SuiteConfig {
    /// Questions per topic: one per facet plus the open and the vague one.
    pub fn questions_per_topic(&self) -> usize {
        self.facets_per_topic + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSuite {
    pub dataset: Dataset,
    pub corpus: Vec<(String, String)>,
    pub qrels: FacetQrels,
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "gu", "hy"];

fn filler_word<R: Rng>(rng: &mut R) -> String {
    (0..3).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

fn topic_term(t: usize) -> String {
    format!("topic{t}")
}

fn facet_term(t: usize, f: usize) -> String {
    format!("aspect{t}x{f}")
}

enum QuestionKind {
    Facet(usize),
    Open,
    Vague,
}

impl PlantedSuite {
    pub fn generate(config: &SuiteConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut records = DatasetRecords::default();
        let mut corpus = Vec::new();
        let mut qrels = FacetQrels::default();

        let doc = |rng: &mut ChaCha8Rng, planted: &[(String, usize)]| -> String {
            let mut words: Vec<String> = (0..config.filler_len).map(|_| filler_word(rng)).collect();
            for (term, n) in planted {
                words.extend(std::iter::repeat_n(term.clone(), *n));
            }
            words.shuffle(rng);
            words.join(" ")
        };

        for t in 1..=config.topics {
            let tid = t.to_string();
            let tterm = topic_term(t);
            records.topic_query.insert(tid.clone(), tterm.clone());
            records
                .topic_kind
                .insert(tid.clone(), if t % 2 == 0 { TopicKind::Ambiguous } else { TopicKind::Faceted });

            let facet_ids: Vec<String> = (1..=config.facets_per_topic).map(|f| format!("{t}-{f}")).collect();
            for (j, fid) in facet_ids.iter().enumerate() {
                let fterm = facet_term(t, j);
                records.facets.insert(
                    fid.clone(),
                    FacetRecord {
                        topic_id: tid.clone(),
                        description: format!("Find information about {fterm}."),
                        kind: if j == 0 { FacetKind::Navigational } else { FacetKind::Informational },
                    },
                );
                for k in 0..config.docs_per_facet {
                    let did = format!("{t}-f{j}-d{k}");
                    let n = rng.random_range(config.facet_term_tf.0..=config.facet_term_tf.1);
                    let text = doc(&mut rng, &[(tterm.clone(), 1), (fterm.clone(), n)]);
                    corpus.push((did.clone(), text));
                    qrels.insert(fid.clone(), did, rng.random_range(1..=2));
                }
            }
            for k in 0..config.distractors_per_topic {
                let n = rng.random_range(config.distractor_topic_tf.0..=config.distractor_topic_tf.1);
                let text = doc(&mut rng, &[(tterm.clone(), n)]);
                corpus.push((format!("{t}-x{k}"), text));
            }

            let mut kinds: Vec<QuestionKind> = (0..config.facets_per_topic).map(QuestionKind::Facet).collect();
            kinds.push(QuestionKind::Open);
            kinds.push(QuestionKind::Vague);
            kinds.shuffle(&mut rng);
            for (slot, kind) in kinds.iter().enumerate() {
                let qid = format!("{t}-q{slot}");
                let text = match kind {
                    QuestionKind::Facet(j) => format!("are you interested in {}", facet_term(t, *j)),
                    QuestionKind::Open => format!("what would you like to know about {tterm}"),
                    QuestionKind::Vague => format!("would you like to see some pictures of {tterm}"),
                };
                records.questions.insert(
                    qid.clone(),
                    QuestionRecord {
                        topic_id: tid.clone(),
                        text,
                    },
                );
                for (f, fid) in facet_ids.iter().enumerate() {
                    let own = facet_term(t, f);
                    let entry = match kind {
                        QuestionKind::Facet(j) if *j == f => AnswerEntry {
                            text: format!("yes I am interested in {own}"),
                            no_answer: false,
                        },
                        QuestionKind::Facet(_) => AnswerEntry {
                            text: if rng.random_bool(config.reveal_probability) {
                                format!("no, I want {own}")
                            } else {
                                "no".to_owned()
                            },
                            no_answer: false,
                        },
                        QuestionKind::Open => AnswerEntry {
                            text: format!("I need {own} details"),
                            no_answer: false,
                        },
                        QuestionKind::Vague => AnswerEntry {
                            text: "No answer".to_owned(),
                            no_answer: true,
                        },
                    };
                    records.answers.insert(format!("{tid}|{fid}|{qid}"), entry);
                }
            }
        }
        for k in 0..config.noise_docs {
            let text = doc(&mut rng, &[]);
            corpus.push((format!("noise-{k:04}"), text));
        }

        let dataset = Dataset::from_records(records).expect("generated suite is consistent");
        PlantedSuite { dataset, corpus, qrels }
    }

    /// Writes `dataset.json`, `corpus.jsonl` and `qrels.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dataset.save(&dir.join("dataset.json"))?;
        let mut lines = String::new();
        for (id, text) in &self.corpus {
            let rec: BTreeMap<&str, &str> = [("doc_id", id.as_str()), ("text", text.as_str())].into();
            lines.push_str(&serde_json::to_string(&rec)?);
            lines.push('\n');
        }
        let corpus = dir.join("corpus.jsonl");
        std::fs::write(&corpus, lines).map_err(|e| Error::io(&corpus, e))?;
        self.qrels.save(&dir.join("qrels.txt"))
    }
}
