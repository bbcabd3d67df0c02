use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stft::{stft, StftParams};
use super::FeatureError;
use crate::audio_io::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelScale {
    /// Linear below 1 kHz, logarithmic above (Auditory Toolbox).
    Slaney,
    /// `1127 * ln(1 + f / 700)`, the HTK toolkit definition (equivalently
    /// `2595.04 * log10(1 + f / 700)`).
    Htk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelNorm {
    /// Each triangle scaled to unit area (`2 / bandwidth`).
    Slaney,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelParams {
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
    pub scale: MelScale,
    pub norm: MelNorm,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_mels: 128,
            f_min: 0.0,
            f_max: None,
            scale: MelScale::Slaney,
            norm: MelNorm::Slaney,
        }
    }
}

impl MelParams {
    pub fn resolved_f_max(&self, sample_rate: u32) -> f64 {
        self.f_max.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        let f_max = self.resolved_f_max(sample_rate);
        if self.n_mels == 0 {
            return Err(FeatureError::InvalidParams("n_mels must be at least 1".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < f_max && f_max <= sample_rate as f64 / 2.0) {
            return Err(FeatureError::InvalidParams(format!(
                "need 0 <= f_min ({}) < f_max ({}) <= nyquist ({})",
                self.f_min,
                f_max,
                sample_rate as f64 / 2.0
            )));
        }
        Ok(())
    }
}

const HTK_SCALE: f64 = 1127.0;
const SLANEY_F_SP: f64 = 200.0 / 3.0;
const SLANEY_MIN_LOG_HZ: f64 = 1000.0;
const SLANEY_MIN_LOG_MEL: f64 = SLANEY_MIN_LOG_HZ / SLANEY_F_SP;

fn slaney_logstep() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => HTK_SCALE * (1.0 + hz / 700.0).ln(),
        MelScale::Slaney => {
            if hz >= SLANEY_MIN_LOG_HZ {
                SLANEY_MIN_LOG_MEL + (hz / SLANEY_MIN_LOG_HZ).ln() / slaney_logstep()
            } else {
                hz / SLANEY_F_SP
            }
        }
    }
}

pub fn mel_to_hz(mel: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * ((mel / HTK_SCALE).exp() - 1.0),
        MelScale::Slaney => {
            if mel >= SLANEY_MIN_LOG_MEL {
                SLANEY_MIN_LOG_HZ * (slaney_logstep() * (mel - SLANEY_MIN_LOG_MEL)).exp()
            } else {
                mel * SLANEY_F_SP
            }
        }
    }
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`.
pub fn mel_filterbank(sample_rate: u32, params: &MelParams, n_fft: usize) -> Result<Array2<f64>, FeatureError> {
    params.validate(sample_rate)?;
    if n_fft < 2 {
        return Err(FeatureError::InvalidParams("n_fft must be at least 2".into()));
    }
    let n_bins = n_fft / 2 + 1;
    let f_max = params.resolved_f_max(sample_rate);
    let mel_lo = hz_to_mel(params.f_min, params.scale);
    let mel_hi = hz_to_mel(f_max, params.scale);
    let n_points = params.n_mels + 2;
    let edges: Vec<f64> = (0..n_points)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_points - 1) as f64, params.scale))
        .collect();
    let fft_freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * sample_rate as f64 / n_fft as f64).collect();

    let mut bank = Array2::<f64>::zeros((params.n_mels, n_bins));
    for m in 0..params.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let scale = match params.norm {
            MelNorm::Slaney => 2.0 / (right - left),
            MelNorm::None => 1.0,
        };
        let mut any = false;
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            let w = rise.min(fall).max(0.0);
            if w > 0.0 {
                any = true;
            }
            bank[[m, k]] = w * scale;
        }
        if !any {
            return Err(FeatureError::InvalidParams(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; reduce n_mels or raise n_fft"
            )));
        }
    }
    Ok(bank)
}

/// Reference level for decibel conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbReference {
    /// Relative to the matrix maximum, so the loudest cell is 0 dB.
    Max,
    Absolute(f64),
}

const AMIN: f64 = 1e-10;

/// `10 * log10(power / ref)`, clipped to `top_db` below the output maximum.
/// An all-silent matrix under [`DbReference::Max`] comes out at `-top_db`
/// everywhere.
pub fn power_to_db(power: &Array2<f64>, reference: DbReference, top_db: f64) -> Array2<f64> {
    let ref_power = match reference {
        DbReference::Max => power.iter().copied().fold(0.0, f64::max),
        DbReference::Absolute(r) => r,
    };
    if matches!(reference, DbReference::Max) && ref_power <= AMIN {
        return Array2::from_elem(power.dim(), -top_db);
    }
    let ref_db = 10.0 * ref_power.max(AMIN).log10();
    let mut db = power.mapv(|p| 10.0 * p.max(AMIN).log10() - ref_db);
    let peak = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = peak - top_db;
    db.mapv_inplace(|v| v.max(floor));
    db
}

/// Mel-band power, frames x n_mels.
pub(crate) fn mel_power(
    samples: &[f64],
    sample_rate: u32,
    stft_params: &StftParams,
    mel_params: &MelParams,
) -> Result<Array2<f64>, FeatureError> {
    let spec = stft(samples, stft_params)?;
    let power = spec.mapv(|c| c.norm_sqr());
    let bank = mel_filterbank(sample_rate, mel_params, stft_params.n_fft)?;
    Ok(power.dot(&bank.t()))
}

/// Log-power mel spectrogram in dB relative to its own maximum, floored at -80 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// frames x n_mels
    pub grid: Array2<f64>,
    pub stft: StftParams,
    pub mel: MelParams,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    pub const FLOOR_DB: f64 = 80.0;

    pub fn n_frames(&self) -> usize {
        self.grid.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.grid.ncols()
    }
}

pub fn mel_spectrogram(clip: &AudioClip, stft_params: &StftParams, mel_params: &MelParams) -> Result<MelSpectrogram, FeatureError> {
    let samples: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let power = mel_power(&samples, clip.sample_rate, stft_params, mel_params)?;
    Ok(MelSpectrogram {
        grid: power_to_db(&power, DbReference::Max, MelSpectrogram::FLOOR_DB),
        stft: *stft_params,
        mel: *mel_params,
        sample_rate: clip.sample_rate,
    })
}
