//! Facet-level ranking metrics and paired significance testing.
//!
//! Documents absent from the judgments have grade 0; any grade above 0 is
//! relevant for the binary metrics.

mod ranking;
mod report;
mod stats;

pub use ranking::{average_precision, dcg_at, mrr, ndcg_at, precision_at, recall_at, Metric};
pub use report::{reports_tsv, write_reports_tsv, MetricReport};
pub use stats::{bonferroni, paired_ttest, TTest};
