use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Grades;
use crate::text::RankedList;
use crate::Error;

fn grade(grades: &Grades, doc: &str) -> u32 {
    grades.get(doc).copied().unwrap_or(0)
}

fn relevant_total(grades: &Grades) -> usize {
    grades.values().filter(|&&g| g > 0).count()
}

/// Reciprocal rank of the first relevant document; 0 if none is retrieved.
pub fn mrr(run: &RankedList, grades: &Grades) -> f64 {
    run.ids()
        .position(|d| grade(grades, d) > 0)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Fraction of the top `k` positions holding relevant documents.
pub fn precision_at(run: &RankedList, grades: &Grades, k: usize) -> f64 {
    assert!(k >= 1, "precision cutoff must be positive");
    let hits = run.ids().take(k).filter(|d| grade(grades, d) > 0).count();
    hits as f64 / k as f64
}

pub fn recall_at(run: &RankedList, grades: &Grades, k: usize) -> f64 {
    assert!(k >= 1, "recall cutoff must be positive");
    let total = relevant_total(grades);
    if total == 0 {
        log::warn!("recall undefined without relevant documents; reporting 0");
        return 0.0;
    }
    let hits = run.ids().take(k).filter(|d| grade(grades, d) > 0).count();
    hits as f64 / total as f64
}

/// Mean of precision at each relevant document's rank, over all judged
/// relevant documents (retrieved or not).
pub fn average_precision(run: &RankedList, grades: &Grades) -> f64 {
    let total = relevant_total(grades);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in run.ids().enumerate() {
        if grade(grades, d) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

fn gain(g: u32) -> f64 {
    2f64.powi(g as i32) - 1.0
}

fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

/// DCG over the first `k` positions with gain `2^grade − 1`.
pub fn dcg_at(run: &RankedList, grades: &Grades, k: usize) -> f64 {
    run.ids().take(k).enumerate().map(|(i, d)| gain(grade(grades, d)) * discount(i)).sum()
}

/// DCG@k divided by the DCG@k of the ideal ordering of all judged documents.
pub fn ndcg_at(run: &RankedList, grades: &Grades, k: usize) -> f64 {
    assert!(k >= 1, "ndcg cutoff must be positive");
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain(g) * discount(i)).sum();
    if idcg == 0.0 {
        return 0.0;
    }
    dcg_at(run, grades, k) / idcg
}

/// A named metric with its cutoff, e.g. `ndcg@5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    Mrr,
    Precision(usize),
    Recall(usize),
    Ndcg(usize),
    AveragePrecision,
}

impl Metric {
    /// The document-retrieval metrics reported per simulated turn.
    pub const DOCUMENT: [Metric; 5] = [
        Metric::Mrr,
        Metric::Precision(1),
        Metric::Ndcg(1),
        Metric::Ndcg(5),
        Metric::Ndcg(20),
    ];

    pub fn evaluate(self, run: &RankedList, grades: &Grades) -> f64 {
        match self {
            Metric::Mrr => mrr(run, grades),
            Metric::Precision(k) => precision_at(run, grades, k),
            Metric::Recall(k) => recall_at(run, grades, k),
            Metric::Ndcg(k) => ndcg_at(run, grades, k),
            Metric::AveragePrecision => average_precision(run, grades),
        }
    }

    pub fn cutoff(self) -> usize {
        match self {
            Metric::Precision(k) | Metric::Recall(k) | Metric::Ndcg(k) => k,
            Metric::Mrr | Metric::AveragePrecision => 0,
        }
    }

    pub fn base_name(self) -> &'static str {
        match self {
            Metric::Mrr => "mrr",
            Metric::Precision(_) => "p",
            Metric::Recall(_) => "recall",
            Metric::Ndcg(_) => "ndcg",
            Metric::AveragePrecision => "ap",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cutoff() {
            0 => f.write_str(self.base_name()),
            k => write!(f, "{}@{k}", self.base_name()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidParam(format!("unknown metric `{s}`"));
        let (name, k) = match s.split_once('@') {
            Some((n, k)) => (n, Some(k.parse::<usize>().ok().filter(|&k| k > 0).ok_or_else(bad)?)),
            None => (s, None),
        };
        match (name.to_lowercase().as_str(), k) {
            ("mrr", None) => Ok(Metric::Mrr),
            ("ap" | "map", None) => Ok(Metric::AveragePrecision),
            ("p" | "precision", Some(k)) => Ok(Metric::Precision(k)),
            ("recall", Some(k)) => Ok(Metric::Recall(k)),
            ("ndcg", Some(k)) => Ok(Metric::Ndcg(k)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}
