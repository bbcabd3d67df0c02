use ndarray::Array2;

/// Feature values quantized into ordered bins. A row with value `x` lands in
/// bin `b` where `b` is the number of cut points strictly below `x`, so
/// `x <= cuts[b]` holds exactly for bins `0..=b`.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub(crate) n_rows: usize,
    pub(crate) cuts: Vec<Vec<f64>>,
    /// column-major bin ids, `bins[f * n_rows + i]`
    pub(crate) bins: Vec<u32>,
    /// start of each feature's bins in a flat histogram
    pub(crate) offsets: Vec<usize>,
}

fn feature_cuts(sorted: &[f64], max_bins: Option<usize>) -> Vec<f64> {
    let mut unique = sorted.to_vec();
    unique.dedup();
    match max_bins {
        Some(b) if unique.len() > b => {
            let n = sorted.len();
            let mut cuts: Vec<f64> = (1..b).map(|j| sorted[(j * n / b).min(n - 1)]).collect();
            cuts.dedup();
            let top = *sorted.last().unwrap();
            cuts.retain(|&c| c < top);
            cuts
        }
        _ => {
            unique.pop();
            unique
        }
    }
}

impl BinnedMatrix {
    /// Quantile-bin every column into at most `max_bins` bins; `None` keeps one
    /// bin per distinct value (exact greedy splitting).
    pub fn new(x: &Array2<f64>, max_bins: Option<usize>) -> Self {
        let (n_rows, n_features) = x.dim();
        let mut cuts = Vec::with_capacity(n_features);
        let mut bins = vec![0u32; n_rows * n_features];
        let mut offsets = Vec::with_capacity(n_features + 1);
        let mut total = 0;
        for f in 0..n_features {
            let col: Vec<f64> = x.column(f).to_vec();
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let c = feature_cuts(&sorted, max_bins);
            for (i, &v) in col.iter().enumerate() {
                bins[f * n_rows + i] = c.partition_point(|&cut| cut < v) as u32;
            }
            offsets.push(total);
            total += c.len() + 1;
            cuts.push(c);
        }
        offsets.push(total);
        Self {
            n_rows,
            cuts,
            bins,
            offsets,
        }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub(crate) fn column(&self, feature: usize) -> &[u32] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    pub(crate) fn total_bins(&self) -> usize {
        *self.offsets.last().unwrap()
    }
}
