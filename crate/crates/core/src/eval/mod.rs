//! Splitting, metrics and report emission.

mod metrics;
mod report;
mod split;

pub use metrics::{accuracy, argmax, binary_auc, confusion_counts, confusion_proportional, roc_auc_ovr, AucSummary, Confusion};
pub use report::{confusion_ppm, curves_csv, fmt_sig9, log_curves, parse_curves_csv, CurveRow, EvalReport, AUC_METHOD, CURVE_HEADER, HEATMAP_CELL};
pub use split::{grouped_split, largest_remainder, stratified_split, SplitIndices, DEFAULT_FRACTIONS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("fractions {0:?} must be positive and sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("score rows have different widths")]
    RaggedScores,
    #[error("no class has both positive and negative samples")]
    NoValidClass,
    #[error("schema error: {0}")]
    Schema(String),
}
