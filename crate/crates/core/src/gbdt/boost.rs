use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::tree::{fit_regression_tree, RegressionTree, TreeParams};
use super::GbdtError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostMode {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    /// Quantile histograms with `n_bins` bins per feature.
    Histogram,
    /// One bin per distinct value.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Scale every tree by the learning rate.
    Fixed,
    /// Golden-section search for the step in (0, 2] minimizing training loss.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_bins: usize,
    /// L2 regularization of Newton leaf values.
    pub lambda: f64,
    pub seed: u64,
    pub mode: BoostMode,
    pub split_method: SplitMethod,
    /// Regression mode only; classification always uses shrinkage.
    pub step: StepRule,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 1000,
            learning_rate: 0.3,
            max_depth: 6,
            min_samples_leaf: 1,
            n_bins: 256,
            lambda: 1.0,
            seed: 0,
            mode: BoostMode::Classification,
            split_method: SplitMethod::Histogram,
            step: StepRule::Fixed,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<(), GbdtError> {
        if !(self.learning_rate > 0.0) {
            return Err(GbdtError::InvalidConfig(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.n_bins < 2 {
            return Err(GbdtError::InvalidConfig(format!("n_bins {} must be at least 2", self.n_bins)));
        }
        if self.lambda < 0.0 {
            return Err(GbdtError::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            lambda: self.lambda,
        }
    }

    pub(crate) fn bin(&self, x: &Array2<f64>) -> BinnedMatrix {
        match self.split_method {
            SplitMethod::Histogram => BinnedMatrix::new(x, Some(self.n_bins)),
            SplitMethod::Exact => BinnedMatrix::new(x, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Negative gradient of the loss at the current scores.
///
/// `Mse`: `scores` holds one prediction per sample, targets are residuals
/// `y - F`. `SoftmaxCrossEntropy`: `scores` is row-major n x K, targets are
/// `onehot(y) - softmax(F)` with the same layout.
pub fn neg_gradient(labels: &[f64], scores: &[f64], loss: LossKind) -> Vec<f64> {
    match loss {
        LossKind::Mse => labels.iter().zip(scores).map(|(y, f)| y - f).collect(),
        LossKind::SoftmaxCrossEntropy => {
            let n = labels.len();
            let k = scores.len() / n;
            let mut out = Vec::with_capacity(scores.len());
            for (row, &y) in scores.chunks(k).zip(labels) {
                let p = crate::nn::softmax(row);
                out.extend(p.iter().enumerate().map(|(c, pc)| if c == y as usize { 1.0 } else { 0.0 } - pc));
            }
            out
        }
    }
}

fn check_xy(x: &Array2<f64>, n_targets: usize) -> Result<(), GbdtError> {
    if x.nrows() != n_targets {
        return Err(GbdtError::ShapeMismatch(format!("{} rows but {} targets", x.nrows(), n_targets)));
    }
    if x.nrows() == 0 {
        return Err(GbdtError::EmptyData);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GbdtError::NonFinite);
    }
    Ok(())
}

fn row_slice(x: &Array2<f64>, i: usize) -> ArrayView1<'_, f64> {
    x.row(i)
}

fn predict_tree(tree: &RegressionTree, x: &Array2<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let r = row_slice(x, i);
            match r.as_slice() {
                Some(s) => tree.predict_row(s),
                None => tree.predict_row(&r.to_vec()),
            }
        })
        .collect()
}

/// Additive squared-error model `F(x) = F0 + sum_m step_m * h_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmRegressor {
    pub base: f64,
    pub trees: Vec<RegressionTree>,
    pub steps: Vec<f64>,
    pub n_features: usize,
    pub config: GbdtConfig,
    /// Training MSE after each round, `train_mse[0]` being the `F0` fit.
    pub train_mse: Vec<f64>,
}

impl GbmRegressor {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>, GbdtError> {
        if x.ncols() != self.n_features {
            return Err(GbdtError::ShapeMismatch(format!("{} features, model has {}", x.ncols(), self.n_features)));
        }
        let mut f = vec![self.base; x.nrows()];
        for (tree, step) in self.trees.iter().zip(&self.steps) {
            for (fi, h) in f.iter_mut().zip(predict_tree(tree, x)) {
                *fi += step * h;
            }
        }
        Ok(f)
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Golden-section minimization of `loss` on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, loss: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (loss(a), loss(b));
    for _ in 0..80 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = loss(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = loss(b);
        }
    }
    (lo + hi) / 2.0
}

/// Stagewise least-squares boosting: `F0 = mean(y)`, each round fits a tree
/// to the residuals `y - F` and adds it with either the fixed learning rate or
/// a line-searched step.
pub fn fit_gbm_regression(x: &Array2<f64>, y: &[f64], config: &GbdtConfig) -> Result<GbmRegressor, GbdtError> {
    config.validate()?;
    check_xy(x, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GbdtError::NonFinite);
    }
    let binned = config.bin(x);
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut f = vec![base; y.len()];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut steps = Vec::with_capacity(config.n_rounds);
    let mut train_mse = vec![mse(y, &f)];
    for _ in 0..config.n_rounds {
        let residuals = neg_gradient(y, &f, LossKind::Mse);
        let tree = fit_regression_tree(&binned, &residuals, None, config.tree_params());
        let h = predict_tree(&tree, x);
        let step = match config.step {
            StepRule::Fixed => config.learning_rate,
            StepRule::LineSearch => {
                let loss = |g: f64| residuals.iter().zip(&h).map(|(r, hi)| (r - g * hi).powi(2)).sum::<f64>();
                let g = golden_section(0.0, 2.0, loss);
                if loss(g) <= loss(0.0) {
                    g
                } else {
                    0.0
                }
            }
        };
        for (fi, hi) in f.iter_mut().zip(&h) {
            *fi += step * hi;
        }
        trees.push(tree);
        steps.push(step);
        train_mse.push(mse(y, &f));
    }
    Ok(GbmRegressor {
        base,
        trees,
        steps,
        n_features: x.ncols(),
        config: config.clone(),
        train_mse,
    })
}

/// Multiclass softmax booster: one tree per class per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifier {
    pub n_classes: usize,
    pub n_features: usize,
    /// log class priors
    pub base_scores: Vec<f64>,
    pub learning_rate: f64,
    /// `trees[round][class]`
    pub trees: Vec<Vec<RegressionTree>>,
    pub config: GbdtConfig,
}

/// Priors of absent classes are floored so their log stays finite.
const PRIOR_FLOOR: f64 = 1e-15;

/// Fit a softmax cross-entropy booster. Each round computes `p = softmax(F)`
/// and, per class, fits a tree to `y_k - p_k` with Newton leaf values
/// (hessian `p_k (1 - p_k)`, L2 `lambda`); scores accumulate scaled by the
/// learning rate.
pub fn fit_boosted(x: &Array2<f64>, y: &[usize], n_classes: usize, config: &GbdtConfig) -> Result<BoostedClassifier, GbdtError> {
    fit_boosted_with(x, y, n_classes, config, |_, _| {})
}

/// [`fit_boosted`] with a callback after each round receiving the round
/// number and the training cross-entropy.
pub fn fit_boosted_with(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    config: &GbdtConfig,
    mut on_round: impl FnMut(usize, f64),
) -> Result<BoostedClassifier, GbdtError> {
    config.validate()?;
    if n_classes < 2 {
        return Err(GbdtError::SingleClass);
    }
    check_xy(x, y.len())?;
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(GbdtError::ShapeMismatch(format!("label {bad} outside 0..{n_classes}")));
    }
    let n = y.len();
    let k = n_classes;
    let mut counts = vec![0usize; k];
    for &l in y {
        counts[l] += 1;
    }
    let base_scores: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln()).collect();
    let binned = config.bin(x);
    let mut scores: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
    let labels_f: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let mut trees = Vec::with_capacity(config.n_rounds);
    for round in 0..config.n_rounds {
        let grad = neg_gradient(&labels_f, &scores, LossKind::SoftmaxCrossEntropy);
        let mut round_trees = Vec::with_capacity(k);
        for c in 0..k {
            let targets: Vec<f64> = (0..n).map(|i| grad[i * k + c]).collect();
            let hess: Vec<f64> = (0..n)
                .map(|i| {
                    let p = if y[i] == c { 1.0 - targets[i] } else { -targets[i] };
                    (p * (1.0 - p)).max(1e-16)
                })
                .collect();
            let tree = fit_regression_tree(&binned, &targets, Some(&hess), config.tree_params());
            round_trees.push(tree);
        }
        for (c, tree) in round_trees.iter().enumerate() {
            for (i, h) in predict_tree(tree, x).into_iter().enumerate() {
                scores[i * k + c] += config.learning_rate * h;
            }
        }
        trees.push(round_trees);
        on_round(round + 1, cross_entropy_of(&scores, y, k));
    }
    Ok(BoostedClassifier {
        n_classes: k,
        n_features: x.ncols(),
        base_scores,
        learning_rate: config.learning_rate,
        trees,
        config: config.clone(),
    })
}

fn cross_entropy_of(scores: &[f64], y: &[usize], k: usize) -> f64 {
    scores
        .chunks(k)
        .zip(y)
        .map(|(row, &l)| crate::nn::cross_entropy(&crate::nn::softmax(row), l))
        .sum::<f64>()
        / y.len() as f64
}

impl BoostedClassifier {
    /// Accumulated class scores, row-major n x K.
    pub fn raw_scores(&self, x: &Array2<f64>) -> Result<Vec<f64>, GbdtError> {
        if x.ncols() != self.n_features {
            return Err(GbdtError::ShapeMismatch(format!("{} features, model has {}", x.ncols(), self.n_features)));
        }
        let k = self.n_classes;
        let mut scores: Vec<f64> = (0..x.nrows()).flat_map(|_| self.base_scores.iter().copied()).collect();
        for round in &self.trees {
            for (c, tree) in round.iter().enumerate() {
                for (i, h) in predict_tree(tree, x).into_iter().enumerate() {
                    scores[i * k + c] += self.learning_rate * h;
                }
            }
        }
        Ok(scores)
    }

    /// Softmax over accumulated scores, one row per sample.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<Vec<f64>>, GbdtError> {
        Ok(self.raw_scores(x)?.chunks(self.n_classes).map(crate::nn::softmax).collect())
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>, GbdtError> {
        Ok(self
            .predict_proba(x)?
            .iter()
            .map(|p| p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best }))
            .collect())
    }

    pub fn n_trees(&self) -> usize {
        self.trees.iter().map(|r| r.len()).sum()
    }
}

/// Convenience wrapper matching [`BoostedClassifier::predict_proba`].
pub fn predict_proba_gbdt(model: &BoostedClassifier, x: &Array2<f64>) -> Result<Vec<Vec<f64>>, GbdtError> {
    model.predict_proba(x)
}
