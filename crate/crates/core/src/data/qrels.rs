use std::collections::BTreeMap;
use std::path::Path;

use super::Dataset;
use crate::{Error, Result};

/// Document id → relevance grade for a single facet.
pub type Grades = BTreeMap<String, u32>;

/// Facet-level relevance judgments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FacetQrels {
    facets: BTreeMap<String, Grades>,
}

impl FacetQrels {
    /// Parses `facet_id 0 doc_id grade` lines. Blank lines are ignored; a
    /// repeated (facet, doc) pair must repeat the same grade.
    pub fn parse(text: &str) -> Result<Self> {
        let mut facets: BTreeMap<String, Grades> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedLine { line: line_no, reason };
            let [facet, _iter, doc, grade] = fields[..] else {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            };
            let grade: i64 = grade.parse().map_err(|_| bad(format!("grade `{grade}` is not an integer")))?;
            if grade < 0 {
                return Err(bad(format!("negative grade {grade}")));
            }
            let grade = u32::try_from(grade).map_err(|_| bad(format!("grade {grade} out of range")))?;
            let grades = facets.entry(facet.to_owned()).or_default();
            match grades.get(doc) {
                Some(&g) if g != grade => {
                    return Err(bad(format!("conflicting grades {g} and {grade} for `{facet}` / `{doc}`")));
                }
                _ => {
                    grades.insert(doc.to_owned(), grade);
                }
            }
        }
        if facets.is_empty() {
            log::warn!("qrels contain no judgments");
        }
        Ok(FacetQrels { facets })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_trec_string(&self) -> String {
        let mut out = String::new();
        for (facet, grades) in &self.facets {
            for (doc, g) in grades {
                out.push_str(&format!("{facet} 0 {doc} {g}\n"));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_trec_string()).map_err(|e| Error::io(path, e))
    }

    pub fn insert(&mut self, facet_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.facets.entry(facet_id.into()).or_default().insert(doc_id.into(), grade);
    }

    /// Judgments for a facet; an unjudged facet has no relevant documents.
    pub fn grades(&self, facet_id: &str) -> &Grades {
        static EMPTY: Grades = BTreeMap::new();
        self.facets.get(facet_id).unwrap_or(&EMPTY)
    }

    pub fn facet_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.facets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Every judged facet must exist in the dataset.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        for f in self.facets.keys() {
            if dataset.facet(f).is_err() {
                return Err(Error::Dangling {
                    kind: "qrels facet",
                    id: f.clone(),
                    target: "dataset facet".into(),
                });
            }
        }
        Ok(())
    }
}
