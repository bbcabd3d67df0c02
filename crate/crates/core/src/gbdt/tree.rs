use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        /// training rows routed here
        cover: usize,
    },
}

/// Binary regression tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn leaf(value: f64, cover: usize) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value, cover }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                TreeNode::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Leaf { value, cover } => Some((value, cover)),
            _ => None,
        })
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 term in Newton leaf values; unused for mean leaves.
    pub lambda: f64,
}

/// A chosen split: feature, last bin routed left, squared-error reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub bin: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Squared-error reduction of splitting a node with target sum `s` over `n`
/// rows into (`sl`, `nl`) and the remainder.
#[inline]
pub fn sse_gain(sl: f64, nl: f64, s: f64, n: f64) -> f64 {
    let sr = s - sl;
    let nr = n - nl;
    sl * sl / nl + sr * sr / nr - s * s / n
}

struct Histogram {
    sum: Vec<f64>,
    count: Vec<u32>,
}

/// Below this many (row, feature) visits a node is processed on one thread.
const PARALLEL_WORK: usize = 1 << 18;

fn go_parallel(work: usize) -> bool {
    work >= PARALLEL_WORK && rayon::current_num_threads() > 1
}

fn fill_feature(col: &[u32], targets: &[f64], rows: &[usize], sum: &mut [f64], count: &mut [u32]) {
    for &r in rows {
        let b = col[r] as usize;
        sum[b] += targets[r];
        count[b] += 1;
    }
}

impl Histogram {
    fn build(binned: &BinnedMatrix, targets: &[f64], rows: &[usize]) -> Self {
        let mut h = Histogram {
            sum: vec![0.0; binned.total_bins()],
            count: vec![0; binned.total_bins()],
        };
        h.fill(binned, targets, rows);
        h
    }

    /// Accumulate `rows` into this (zeroed) histogram.
    fn fill(&mut self, binned: &BinnedMatrix, targets: &[f64], rows: &[usize]) {
        let Histogram { sum, count } = self;
        let nf = binned.n_features();
        if go_parallel(rows.len() * nf) {
            let mut parts: Vec<(usize, &mut [f64], &mut [u32])> = Vec::with_capacity(nf);
            let (mut s_rest, mut c_rest) = (sum.as_mut_slice(), count.as_mut_slice());
            for f in 0..nf {
                let nb = binned.n_bins(f);
                let (s, sr) = s_rest.split_at_mut(nb);
                let (c, cr) = c_rest.split_at_mut(nb);
                parts.push((f, s, c));
                s_rest = sr;
                c_rest = cr;
            }
            parts
                .par_iter_mut()
                .with_min_len(16)
                .for_each(|(f, s, c)| fill_feature(binned.column(*f), targets, rows, s, c));
        } else {
            for f in 0..nf {
                let (off, nb) = (binned.offsets[f], binned.n_bins(f));
                fill_feature(binned.column(f), targets, rows, &mut sum[off..off + nb], &mut count[off..off + nb]);
            }
        }
    }

    fn subtract(&mut self, other: &Histogram) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a -= b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a -= b;
        }
    }
}

/// Best (gain, bin) of one feature, scanning bins ascending and keeping only
/// strict improvements.
fn best_bin(hist: &Histogram, off: usize, nb: usize, total: f64, n: usize, min_leaf: usize, min_gain: f64) -> Option<(f64, usize)> {
    let nf = n as f64;
    let mut best: Option<(f64, usize)> = None;
    let mut sl = 0.0;
    let mut nl = 0usize;
    for b in 0..nb - 1 {
        sl += hist.sum[off + b];
        nl += hist.count[off + b] as usize;
        if nl < min_leaf {
            continue;
        }
        if n - nl < min_leaf {
            break;
        }
        if nl == 0 || nl == n {
            continue;
        }
        let g = sse_gain(sl, nl as f64, total, nf);
        if g > min_gain && best.is_none_or(|(bg, _)| g > bg) {
            best = Some((g, b));
        }
    }
    best
}

/// Best split of a node. Features are compared in index order with strict
/// improvement, so ties go to the lowest feature then the lowest threshold.
fn best_split(binned: &BinnedMatrix, hist: &Histogram, total: f64, n: usize, min_leaf: usize, min_gain: f64) -> Option<SplitChoice> {
    let scan = |f: usize| best_bin(hist, binned.offsets[f], binned.n_bins(f), total, n, min_leaf, min_gain);
    let per_feature: Vec<Option<(f64, usize)>> = if go_parallel(binned.total_bins() * 4) {
        (0..binned.n_features()).into_par_iter().with_min_len(16).map(scan).collect()
    } else {
        (0..binned.n_features()).map(scan).collect()
    };
    let mut best: Option<SplitChoice> = None;
    for (f, cand) in per_feature.into_iter().enumerate() {
        if let Some((gain, bin)) = cand {
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    bin,
                    threshold: binned.cuts[f][bin],
                    gain,
                });
            }
        }
    }
    best
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    targets: &'a [f64],
    hessians: Option<&'a [f64]>,
    params: TreeParams,
    nodes: Vec<TreeNode>,
    /// spare histogram buffers
    pool: Vec<Histogram>,
}

impl Grower<'_> {
    fn histogram(&mut self, rows: &[usize]) -> Histogram {
        match self.pool.pop() {
            Some(mut h) => {
                h.sum.fill(0.0);
                h.count.fill(0);
                h.fill(self.binned, self.targets, rows);
                h
            }
            None => Histogram::build(self.binned, self.targets, rows),
        }
    }

    fn recycle(&mut self, h: Option<Histogram>) {
        if let Some(h) = h {
            self.pool.push(h);
        }
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let s: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        match self.hessians {
            Some(h) => {
                let hs: f64 = rows.iter().map(|&r| h[r]).sum();
                s / (hs + self.params.lambda)
            }
            None => s / rows.len() as f64,
        }
    }

    fn push_leaf(&mut self, rows: &[usize]) -> usize {
        let value = self.leaf_value(rows);
        self.nodes.push(TreeNode::Leaf { value, cover: rows.len() });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, hist: Option<Histogram>, depth: usize) -> usize {
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf.max(1) {
            self.recycle(hist);
            return self.push_leaf(&rows);
        }
        let mut hist = match hist {
            Some(h) => h,
            None => self.histogram(&rows),
        };
        let total: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let scale: f64 = rows.iter().map(|&r| self.targets[r] * self.targets[r]).sum();
        let min_gain = 1e-12 * scale;
        let Some(split) = best_split(self.binned, &hist, total, n, self.params.min_samples_leaf.max(1), min_gain) else {
            self.recycle(Some(hist));
            return self.push_leaf(&rows);
        };
        let col = self.binned.column(split.feature);
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] as usize <= split.bin);

        // build the smaller child, derive the sibling by subtraction
        let (left_hist, right_hist) = if depth + 1 < self.params.max_depth {
            let small_is_left = left.len() <= right.len();
            let small = self.histogram(if small_is_left { &left } else { &right });
            hist.subtract(&small);
            if small_is_left {
                (Some(small), Some(hist))
            } else {
                (Some(hist), Some(small))
            }
        } else {
            self.recycle(Some(hist));
            (None, None)
        };

        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0, cover: 0 });
        let l = self.grow(left, left_hist, depth + 1);
        let r = self.grow(right, right_hist, depth + 1);
        self.nodes[me] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        me
    }
}

/// Greedy depth-first CART fit of `targets`. Split gain is squared-error
/// reduction; leaves hold the target mean, or the Newton step
/// `sum(targets) / (sum(hessians) + lambda)` when hessians are given.
pub fn fit_regression_tree(binned: &BinnedMatrix, targets: &[f64], hessians: Option<&[f64]>, params: TreeParams) -> RegressionTree {
    assert_eq!(targets.len(), binned.n_rows, "one target per row");
    let mut g = Grower {
        binned,
        targets,
        hessians,
        params,
        nodes: Vec::new(),
        pool: Vec::new(),
    };
    g.grow((0..binned.n_rows).collect(), None, 0);
    RegressionTree { nodes: g.nodes }
}

/// Best root split under the same rules as [`fit_regression_tree`].
pub fn best_root_split(binned: &BinnedMatrix, targets: &[f64], min_samples_leaf: usize) -> Option<SplitChoice> {
    let rows: Vec<usize> = (0..binned.n_rows).collect();
    let hist = Histogram::build(binned, targets, &rows);
    let total: f64 = targets.iter().sum();
    let scale: f64 = targets.iter().map(|t| t * t).sum();
    best_split(binned, &hist, total, rows.len(), min_samples_leaf.max(1), 1e-12 * scale)
}
