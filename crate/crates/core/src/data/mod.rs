//! The faceted-topic collection: topics, facets, the question bank, the
//! answer oracle, facet-level relevance judgments, multi-turn context
//! expansion and cross-validation folds.

mod contexts;
mod dataset;
mod folds;
mod qrels;
mod release;

pub use contexts::{combinations, expand_contexts, expansion_counts, ContextCandidates, ConversationContext, ExpansionCounts, Turn};
pub use dataset::{
    AnswerRecord, Dataset, DatasetCounts, DatasetRecords, Facet, FacetKind, FacetRecord, Question, QuestionRecord,
    Topic, TopicKind, AnswerEntry,
};
pub use folds::{make_folds, read_folds, write_folds, FoldMode, FoldSplit};
pub use qrels::{FacetQrels, Grades};
pub use release::from_release_json;

#[cfg(test)]
pub(crate) fn tests_fixture() -> &'static str {
    dataset::tests::FIXTURE
}
