use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::{Error, Result};

/// Per-instance values of one metric and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub values: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricReport {
    pub fn new(metric: Metric, values: BTreeMap<String, f64>) -> Self {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.values().sum::<f64>() / values.len() as f64
        };
        MetricReport { metric, values, mean }
    }

    pub fn metric_name(&self) -> &'static str {
        self.metric.base_name()
    }

    pub fn cutoff(&self) -> usize {
        self.metric.cutoff()
    }
}

/// TSV with `instance_key metric cutoff value` rows followed by a summary
/// block of `# mean` lines.
pub fn write_reports_tsv(reports: &[MetricReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_tsv(reports)).map_err(|e| Error::io(path, e))
}

pub fn reports_tsv(reports: &[MetricReport]) -> String {
    let mut out = String::from("instance_key\tmetric\tcutoff\tvalue\n");
    for r in reports {
        for (key, v) in &r.values {
            let _ = writeln!(out, "{key}\t{}\t{}\t{v}", r.metric_name(), r.cutoff());
        }
    }
    out.push_str("# summary\n");
    for r in reports {
        let _ = writeln!(out, "# mean\t{}\t{}\t{}\t{}", r.metric_name(), r.cutoff(), r.mean, r.values.len());
    }
    out
}
