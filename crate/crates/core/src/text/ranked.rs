use serde::{Deserialize, Serialize};

/// Scored documents, best first. Ties are broken by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
    cutoff: usize,
}

impl RankedList {
    /// Sorts `entries` into ranking order and truncates to `cutoff`.
    pub fn from_scores(mut entries: Vec<(String, f64)>, cutoff: usize) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        debug_assert!(entries.windows(2).all(|w| w[0].0 != w[1].0 || w[0].1 != w[1].1));
        entries.truncate(cutoff);
        RankedList { entries, cutoff }
    }

    /// Wraps entries that are already in ranking order.
    pub(crate) fn from_sorted(entries: Vec<(String, f64)>, cutoff: usize) -> Self {
        RankedList { entries, cutoff }
    }

    pub fn empty(cutoff: usize) -> Self {
        RankedList {
            entries: Vec::new(),
            cutoff,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, s)| *s).collect()
    }

    /// The first `depth` entries as a new list.
    pub fn top(&self, depth: usize) -> RankedList {
        RankedList {
            entries: self.entries.iter().take(depth).cloned().collect(),
            cutoff: depth.min(self.cutoff),
        }
    }

    /// Position (0-based) of `id`, if present.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|(d, _)| d == id)
    }

    /// Check ordering and uniqueness.
    pub fn is_well_formed(&self) -> bool {
        let ordered = self.entries.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
        });
        let mut ids: Vec<&str> = self.ids().collect();
        ids.sort_unstable();
        ids.dedup();
        ordered && ids.len() == self.entries.len() && self.entries.len() <= self.cutoff
    }
}
