//! Gradient-boosted regression trees: a squared-error regression booster and
//! a multiclass softmax booster sharing one histogram CART grower.

mod binning;
mod boost;
mod tree;

pub use binning::BinnedMatrix;
pub use boost::{
    fit_boosted, fit_boosted_with, fit_gbm_regression, neg_gradient, predict_proba_gbdt, BoostMode, BoostedClassifier, GbdtConfig, GbmRegressor,
    LossKind, SplitMethod, StepRule,
};
pub use tree::{best_root_split, fit_regression_tree, sse_gain, RegressionTree, SplitChoice, TreeNode, TreeParams};

use ndarray::Array2;
use thiserror::Error;

use crate::dsp::MfccSegment;

#[derive(Debug, Error, PartialEq)]
pub enum GbdtError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("classification needs at least two classes")]
    SingleClass,
    #[error("no training rows")]
    EmptyData,
    #[error("non-finite value in input")]
    NonFinite,
}

pub const MFCC_FRAMES: usize = 130;
pub const MFCC_COEFFS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tabularization {
    /// element (i, j) at index `n_coeffs * i + j`
    #[default]
    Flatten,
    /// per-coefficient mean then per-coefficient population std
    MeanStd,
}

/// Row-major flatten of a 130 x 13 MFCC matrix.
pub fn tabularize_mfcc(segment: &MfccSegment) -> Result<Vec<f64>, GbdtError> {
    tabularize_matrix(&segment.matrix, Tabularization::Flatten, Some((MFCC_FRAMES, MFCC_COEFFS)))
}

/// Tabularize a frames x coefficients matrix. `expect` pins the shape.
pub fn tabularize_matrix(m: &Array2<f64>, how: Tabularization, expect: Option<(usize, usize)>) -> Result<Vec<f64>, GbdtError> {
    if let Some(shape) = expect {
        if m.dim() != shape {
            return Err(GbdtError::ShapeMismatch(format!("expected {:?}, got {:?}", shape, m.dim())));
        }
    }
    Ok(match how {
        Tabularization::Flatten => m.iter().copied().collect(),
        Tabularization::MeanStd => {
            let n = m.nrows().max(1) as f64;
            let mut out = Vec::with_capacity(2 * m.ncols());
            let means: Vec<f64> = m.columns().into_iter().map(|c| c.sum() / n).collect();
            out.extend(&means);
            for (c, mu) in m.columns().into_iter().zip(&means) {
                out.push((c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt());
            }
            out
        }
    })
}

/// Feature matrix plus labels for boosting.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub provenance: String,
}

impl TabularDataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, n_classes: usize, provenance: impl Into<String>) -> Result<Self, GbdtError> {
        if x.nrows() != y.len() {
            return Err(GbdtError::ShapeMismatch(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GbdtError::NonFinite);
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(GbdtError::ShapeMismatch(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Self {
            x,
            y,
            provenance: provenance.into(),
        })
    }

    /// Stack per-item rows, all of the same length.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<usize>, n_classes: usize, provenance: impl Into<String>) -> Result<Self, GbdtError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(GbdtError::ShapeMismatch("ragged rows".into()));
        }
        let x = Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| GbdtError::ShapeMismatch(e.to_string()))?;
        Self::new(x, y, n_classes, provenance)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }
}
