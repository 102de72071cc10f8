//! Conversion from the column-oriented JSON in which the collection is
//! distributed: one object per field, each mapping a row number to that
//! row's value. Rows are (topic, facet, question, answer) records; question
//! ids are assigned here as `<topic>-q<NNN>` in order of first appearance.

use std::collections::{BTreeMap, HashMap};

use serde_json::Value;

use super::{AnswerEntry, Dataset, DatasetRecords, FacetKind, FacetRecord, QuestionRecord, TopicKind};
use crate::{Error, Result};

const COLUMNS: [&str; 8] = [
    "topic_id",
    "topic_facet_id",
    "topic",
    "facet_desc",
    "question",
    "answer",
    "topic_type",
    "facet_type",
];

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn is_no_answer(text: &str) -> bool {
    let t: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase();
    let t = t.split_whitespace().collect::<Vec<_>>().join(" ");
    t.is_empty() || t == "no answer"
}

pub fn from_release_json(text: &str) -> Result<Dataset> {
    let root: HashMap<String, HashMap<String, Value>> = serde_json::from_str(text)?;
    let column = |name: &str| {
        root.get(name)
            .ok_or_else(|| Error::Malformed(format!("release file lacks column `{name}`")))
    };
    for c in COLUMNS {
        column(c)?;
    }
    let mut rows: Vec<&String> = column("topic_id")?.keys().collect();
    rows.sort_by_key(|r| (r.parse::<u64>().unwrap_or(u64::MAX), r.to_string()));

    let mut records = DatasetRecords::default();
    let mut question_ids: HashMap<(String, String), String> = HashMap::new();
    let mut per_topic: BTreeMap<String, usize> = BTreeMap::new();
    let mut duplicates = 0usize;

    for row in rows {
        let get = |c: &str| -> Result<String> {
            column(c)?
                .get(row)
                .map(cell)
                .ok_or_else(|| Error::Malformed(format!("row {row} lacks `{c}`")))
        };
        let topic = get("topic_id")?;
        let facet = get("topic_facet_id")?;
        let question_text = get("question")?;
        let answer = get("answer")?;

        records.topic_query.entry(topic.clone()).or_insert(get("topic")?);
        let kind = match get("topic_type")?.to_lowercase().as_str() {
            "ambiguous" => TopicKind::Ambiguous,
            _ => TopicKind::Faceted,
        };
        records.topic_kind.entry(topic.clone()).or_insert(kind);
        let facet_kind = match get("facet_type")?.to_lowercase().as_str() {
            "nav" | "navigational" => FacetKind::Navigational,
            _ => FacetKind::Informational,
        };
        if !records.facets.contains_key(&facet) {
            records.facets.insert(
                facet.clone(),
                FacetRecord {
                    topic_id: topic.clone(),
                    description: get("facet_desc")?,
                    kind: facet_kind,
                },
            );
        }
        let qid = question_ids
            .entry((topic.clone(), question_text.clone()))
            .or_insert_with(|| {
                let n = per_topic.entry(topic.clone()).or_default();
                *n += 1;
                format!("{topic}-q{:03}", n)
            })
            .clone();
        records.questions.entry(qid.clone()).or_insert(QuestionRecord {
            topic_id: topic.clone(),
            text: question_text,
        });
        let key = format!("{topic}|{facet}|{qid}");
        if records.answers.contains_key(&key) {
            duplicates += 1;
            continue;
        }
        let no_answer = is_no_answer(&answer);
        records.answers.insert(key, AnswerEntry { text: answer, no_answer });
    }
    if duplicates > 0 {
        log::warn!("{duplicates} repeated answer records kept their first occurrence");
    }
    Dataset::from_records(records)
}
