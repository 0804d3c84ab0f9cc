//! Metric records and the ablation table layout.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub inception_score: f64,
    pub inception_score_std: f64,
    pub fid: f64,
    pub attribute_mse: f64,
    /// Pixel accuracy in percent.
    pub segmentation_accuracy: f64,
    pub generated_count: usize,
    pub real_count: usize,
    /// Checkpoint file hash when evaluated from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_hash: Option<String>,
}

impl MetricReport {
    pub fn check_ranges(&self) -> bool {
        self.inception_score >= 1.0 - 1e-9
            && self.fid >= 0.0
            && self.attribute_mse >= 0.0
            && (0.0..=100.0).contains(&self.segmentation_accuracy)
    }
}

pub const TABLE_HEADER: &str = "Model | IS | FID | Att. MSE | Seg. Acc.";

/// One table row per report, in the given order.
pub fn format_table(rows: &[MetricReport]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{} | {:.2} | {:.2} | {:.3} | {:.2}",
            r.label, r.inception_score, r.fid, r.attribute_mse, r.segmentation_accuracy
        );
    }
    out
}
