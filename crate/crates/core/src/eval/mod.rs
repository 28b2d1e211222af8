//! Scoring attention mappings against annotated ground truth.

mod metrics;
mod report;

pub use metrics::{
    cohen_kappa, confusion_matrix, metrics, metrics_with, per_class, Averaging, ClassMetrics, ConfusionMatrix, Metrics,
};
pub use report::{
    class_union, pair_with_truth, read_truth, score, truth_agreement, write_truth, EvaluationReport, ReportFormat,
    Scored, TruthRow, MARKDOWN_HEADER, NO_STUDENT, REPORT_SCHEMA_VERSION,
};
