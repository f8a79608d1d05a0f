//! Closed/open-set evaluation: splits, top-k accuracy, AUROC and reports.

mod metrics;
mod report;
mod split;

pub use metrics::{auroc, openset_scores, topk_accuracies, topk_accuracy};
pub use report::{
    emit_report, ConfigEcho, Decimal6, EvalReport, LabelSpace, MetricRow, ReportFormat, SplitEcho,
    CSV_HEADER,
};
pub use split::{seeded_permutation, split_catalog, SplitSpec};

use crate::error::Result;
use crate::fusion::ProbMatrix;

/// The k values reported for every method.
pub const REPORTED_K: [usize; 3] = [1, 3, 5];

/// Top-1/3/5 and AUROC of one probability matrix.
///
/// `closed_columns` defines the open-set detector; `label_space` selects the
/// columns ranked (and the samples scored) by the accuracies.
pub fn evaluate_matrix(
    name: &str,
    p: &ProbMatrix,
    labels: &[usize],
    closed_columns: &[usize],
    label_space: &[usize],
) -> Result<MetricRow> {
    let (acc, n_eval) = topk_accuracies(p, labels, label_space, &REPORTED_K)?;
    let (pos, neg) = openset_scores(p, labels, closed_columns)?;
    let area = auroc(&pos, &neg)?;
    Ok(MetricRow {
        method: name.to_owned(),
        top1: acc[0].into(),
        top3: acc[1].into(),
        top5: acc[2].into(),
        auroc: area.into(),
        n_eval,
        n_pos: pos.len(),
        n_neg: neg.len(),
    })
}
