use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop_length: usize,
    pub window: Window,
    /// Pad `n_fft / 2` reflected samples on both sides so frame `t` is
    /// centered on sample `t * hop_length`.
    pub centered: bool,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop_length: 512,
            window: Window::Hann,
            centered: true,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(FeatureError::InvalidParams(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop_length == 0 || self.hop_length > self.n_fft {
            return Err(FeatureError::InvalidParams(format!(
                "hop_length {} must be in 1..={}",
                self.hop_length, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Periodic Hann window: `w[k] = 0.5 * (1 - cos(2 pi k / n))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect()
}

/// Number of frames the STFT produces for `len` input samples.
pub fn frame_count(len: usize, params: &StftParams) -> usize {
    if params.centered {
        1 + len / params.hop_length
    } else if len >= params.n_fft {
        1 + (len - params.n_fft) / params.hop_length
    } else {
        0
    }
}

/// Index into a signal of length `n` under numpy-style reflect padding
/// (edge sample not repeated), folding repeatedly for short signals.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Short-time Fourier transform, frames x (n_fft/2 + 1) complex bins.
pub fn stft(samples: &[f64], params: &StftParams) -> Result<Array2<Complex64>, FeatureError> {
    params.validate()?;
    if samples.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n_fft = params.n_fft;
    let n_frames = frame_count(samples.len(), params);
    let n_bins = params.n_bins();
    let window = match params.window {
        Window::Hann => hann_window(n_fft),
        Window::Rectangular => vec![1.0; n_fft],
    };
    let offset: isize = if params.centered { -((n_fft / 2) as isize) } else { 0 };

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n_fft];
    let mut out = Array2::<Complex64>::zeros((n_frames, n_bins));
    for t in 0..n_frames {
        let start = t as isize * params.hop_length as isize + offset;
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = reflect_index(start + k as isize, samples.len());
            *slot = Complex64::new(samples[idx] * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (j, v) in buf[..n_bins].iter().enumerate() {
            out[[t, j]] = *v;
        }
    }
    Ok(out)
}

/// Energy of the time-domain frame behind one-sided spectrum `bins`:
/// `(|X_0|^2 + |X_{n/2}|^2 + 2 * sum of interior |X_k|^2) / n_fft`.
pub fn one_sided_energy(bins: &[Complex64], n_fft: usize) -> f64 {
    let last = bins.len() - 1;
    let total: f64 = bins
        .iter()
        .enumerate()
        .map(|(k, c)| if k == 0 || k == last { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
        .sum();
    total / n_fft as f64
}
