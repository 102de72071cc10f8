use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicKind {
    Ambiguous,
    Faceted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacetKind {
    Informational,
    Navigational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub id: String,
    pub query_text: String,
    pub kind: TopicKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    pub id: String,
    pub topic_id: String,
    pub description: String,
    pub kind: FacetKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    pub topic_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRecord {
    pub topic_id: String,
    pub facet_id: String,
    pub question_id: String,
    pub text: String,
    pub no_answer: bool,
}

/// On-disk layout: parallel maps keyed by record id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecords {
    pub topic_query: BTreeMap<String, String>,
    pub topic_kind: BTreeMap<String, TopicKind>,
    pub facets: BTreeMap<String, FacetRecord>,
    pub questions: BTreeMap<String, QuestionRecord>,
    /// Keyed by `"topic_id|facet_id|question_id"`.
    pub answers: BTreeMap<String, AnswerEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetRecord {
    pub topic_id: String,
    pub description: String,
    pub kind: FacetKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub topic_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEntry {
    pub text: String,
    #[serde(default)]
    pub no_answer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetCounts {
    pub topics: usize,
    pub facets: usize,
    pub questions: usize,
    pub answer_records: usize,
}

type TripleKey = (String, String, String);

/// A validated, immutable collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    topics: BTreeMap<String, Topic>,
    facets: BTreeMap<String, Facet>,
    questions: BTreeMap<String, Question>,
    answers: BTreeMap<TripleKey, AnswerRecord>,
    topic_facets: BTreeMap<String, Vec<String>>,
    topic_questions: BTreeMap<String, Vec<String>>,
}

fn dangling(kind: &'static str, id: &str, target: impl Into<String>) -> Error {
    Error::Dangling {
        kind,
        id: id.to_owned(),
        target: target.into(),
    }
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let records: DatasetRecords = serde_json::from_str(text)?;
        Self::from_records(records)
    }

    /// Validates every referential constraint; the first violation is returned.
    pub fn from_records(records: DatasetRecords) -> Result<Self> {
        let DatasetRecords {
            topic_query,
            mut topic_kind,
            facets: facet_records,
            questions: question_records,
            answers: answer_records,
        } = records;

        let mut topics = BTreeMap::new();
        for (id, query_text) in topic_query {
            if query_text.trim().is_empty() {
                return Err(Error::Malformed(format!("topic `{id}` has an empty query")));
            }
            let kind = topic_kind
                .remove(&id)
                .ok_or_else(|| Error::Malformed(format!("topic `{id}` has no kind")))?;
            topics.insert(id.clone(), Topic { id, query_text, kind });
        }
        if let Some(id) = topic_kind.keys().next() {
            return Err(dangling("topic kind", id, "topic query"));
        }

        let mut topic_facets: BTreeMap<String, Vec<String>> = topics.keys().map(|t| (t.clone(), Vec::new())).collect();
        let mut facets = BTreeMap::new();
        for (id, r) in facet_records {
            if r.description.trim().is_empty() {
                return Err(Error::Malformed(format!("facet `{id}` has an empty description")));
            }
            topic_facets
                .get_mut(&r.topic_id)
                .ok_or_else(|| dangling("facet", &id, format!("topic `{}`", r.topic_id)))?
                .push(id.clone());
            facets.insert(
                id.clone(),
                Facet {
                    id,
                    topic_id: r.topic_id,
                    description: r.description,
                    kind: r.kind,
                },
            );
        }

        let mut topic_questions: BTreeMap<String, Vec<String>> = topics.keys().map(|t| (t.clone(), Vec::new())).collect();
        let mut questions = BTreeMap::new();
        for (id, r) in question_records {
            if r.text.trim().is_empty() {
                return Err(Error::Malformed(format!("question `{id}` has empty text")));
            }
            topic_questions
                .get_mut(&r.topic_id)
                .ok_or_else(|| dangling("question", &id, format!("topic `{}`", r.topic_id)))?
                .push(id.clone());
            questions.insert(
                id.clone(),
                Question {
                    id,
                    topic_id: r.topic_id,
                    text: r.text,
                },
            );
        }

        let mut answers = BTreeMap::new();
        for (key, entry) in answer_records {
            let mut parts = key.split('|');
            let (Some(t), Some(f), Some(q), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Malformed(format!("answer key `{key}` is not topic|facet|question")));
            };
            if !topics.contains_key(t) {
                return Err(dangling("answer", &key, format!("topic `{t}`")));
            }
            match facets.get(f) {
                Some(facet) if facet.topic_id == t => {}
                _ => return Err(dangling("answer", &key, format!("facet `{f}` of topic `{t}`"))),
            }
            match questions.get(q) {
                Some(question) if question.topic_id == t => {}
                _ => return Err(dangling("answer", &key, format!("question `{q}` of topic `{t}`"))),
            }
            if !entry.no_answer && entry.text.trim().is_empty() {
                return Err(Error::Malformed(format!("answer `{key}` is empty but not flagged no_answer")));
            }
            answers.insert(
                (t.to_owned(), f.to_owned(), q.to_owned()),
                AnswerRecord {
                    topic_id: t.to_owned(),
                    facet_id: f.to_owned(),
                    question_id: q.to_owned(),
                    text: entry.text,
                    no_answer: entry.no_answer,
                },
            );
        }

        Ok(Dataset {
            topics,
            facets,
            questions,
            answers,
            topic_facets,
            topic_questions,
        })
    }

    pub fn to_records(&self) -> DatasetRecords {
        DatasetRecords {
            topic_query: self.topics.values().map(|t| (t.id.clone(), t.query_text.clone())).collect(),
            topic_kind: self.topics.values().map(|t| (t.id.clone(), t.kind)).collect(),
            facets: self
                .facets
                .values()
                .map(|f| {
                    (
                        f.id.clone(),
                        FacetRecord {
                            topic_id: f.topic_id.clone(),
                            description: f.description.clone(),
                            kind: f.kind,
                        },
                    )
                })
                .collect(),
            questions: self
                .questions
                .values()
                .map(|q| {
                    (
                        q.id.clone(),
                        QuestionRecord {
                            topic_id: q.topic_id.clone(),
                            text: q.text.clone(),
                        },
                    )
                })
                .collect(),
            answers: self
                .answers
                .values()
                .map(|a| {
                    (
                        format!("{}|{}|{}", a.topic_id, a.facet_id, a.question_id),
                        AnswerEntry {
                            text: a.text.clone(),
                            no_answer: a.no_answer,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_records()).expect("dataset records serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn counts(&self) -> DatasetCounts {
        DatasetCounts {
            topics: self.topics.len(),
            facets: self.facets.len(),
            questions: self.questions.len(),
            answer_records: self.answers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn topics(&self) -> impl Iterator<Item = &Topic> + '_ {
        self.topics.values()
    }

    pub fn facets(&self) -> impl Iterator<Item = &Facet> + '_ {
        self.facets.values()
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> + '_ {
        self.questions.values()
    }

    pub fn topic(&self, id: &str) -> Result<&Topic> {
        self.topics.get(id).ok_or_else(|| Error::Unknown {
            kind: "topic",
            id: id.to_owned(),
        })
    }

    pub fn facet(&self, id: &str) -> Result<&Facet> {
        self.facets.get(id).ok_or_else(|| Error::Unknown {
            kind: "facet",
            id: id.to_owned(),
        })
    }

    pub fn question(&self, id: &str) -> Result<&Question> {
        self.questions.get(id).ok_or_else(|| Error::Unknown {
            kind: "question",
            id: id.to_owned(),
        })
    }

    /// Facet ids of a topic, ascending.
    pub fn facets_of(&self, topic_id: &str) -> Result<&[String]> {
        self.topic_facets.get(topic_id).map(Vec::as_slice).ok_or_else(|| Error::Unknown {
            kind: "topic",
            id: topic_id.to_owned(),
        })
    }

    /// Question ids of a topic, ascending.
    pub fn questions_of(&self, topic_id: &str) -> Result<&[String]> {
        self.topic_questions.get(topic_id).map(Vec::as_slice).ok_or_else(|| Error::Unknown {
            kind: "topic",
            id: topic_id.to_owned(),
        })
    }

    /// The simulated user's answer to `question_id` when their intent is
    /// `facet_id`, returned verbatim together with the no-answer flag.
    pub fn answer(&self, topic_id: &str, facet_id: &str, question_id: &str) -> Result<(&str, bool)> {
        self.answers
            .get(&(topic_id.to_owned(), facet_id.to_owned(), question_id.to_owned()))
            .map(|a| (a.text.as_str(), a.no_answer))
            .ok_or_else(|| Error::Unknown {
                kind: "answer triple",
                id: format!("topic `{topic_id}`, facet `{facet_id}`, question `{question_id}`"),
            })
    }

    pub fn answers(&self) -> impl Iterator<Item = &AnswerRecord> + '_ {
        self.answers.values()
    }
}
