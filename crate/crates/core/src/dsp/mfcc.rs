use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mel::{mel_power, power_to_db, DbReference, MelParams, MelScale};
use super::stft::{frame_count, StftParams};
use super::FeatureError;
use crate::audio_io::{AudioClip, CANONICAL_SAMPLE_RATE};

fn dct_basis(n: usize, n_keep: usize) -> Array2<f64> {
    let mut basis = Array2::zeros((n_keep, n));
    let s0 = (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    for k in 0..n_keep {
        let scale = if k == 0 { s0 } else { s };
        for i in 0..n {
            basis[[k, i]] = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    basis
}

/// Orthonormal DCT-II of every row, keeping the first `n_keep` coefficients.
///
/// Panics if `n_keep` exceeds the row length.
pub fn dct_ii_ortho(rows: &Array2<f64>, n_keep: usize) -> Array2<f64> {
    let n = rows.ncols();
    assert!(n_keep <= n, "n_keep {n_keep} exceeds row length {n}");
    rows.dot(&dct_basis(n, n_keep).t())
}

/// Inverse of the full-length [`dct_ii_ortho`] (orthonormal DCT-III).
pub fn idct_ii_ortho(coeffs: &Array2<f64>) -> Array2<f64> {
    let n = coeffs.ncols();
    coeffs.dot(&dct_basis(n, n))
}

/// Segmented MFCC extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccParams {
    pub sample_rate: u32,
    pub n_mfcc: usize,
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_segments: usize,
    pub n_mels: usize,
    /// Nominal track length; each segment spans `track_seconds / n_segments`.
    pub track_seconds: f64,
    pub mel_scale: MelScale,
}

impl Default for MfccParams {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_SAMPLE_RATE,
            n_mfcc: 13,
            n_fft: 2048,
            hop_length: 512,
            n_segments: 10,
            n_mels: 128,
            track_seconds: 30.0,
            mel_scale: MelScale::Slaney,
        }
    }
}

impl MfccParams {
    pub fn samples_per_segment(&self) -> usize {
        (self.sample_rate as f64 * self.track_seconds / self.n_segments as f64).round() as usize
    }

    pub fn stft(&self) -> StftParams {
        StftParams {
            n_fft: self.n_fft,
            hop_length: self.hop_length,
            ..Default::default()
        }
    }

    pub fn mel(&self) -> MelParams {
        MelParams {
            n_mels: self.n_mels,
            scale: self.mel_scale,
            ..Default::default()
        }
    }

    /// Frames in a full segment (130 for the defaults).
    pub fn frames_per_segment(&self) -> usize {
        frame_count(self.samples_per_segment(), &self.stft())
    }

    fn validate(&self) -> Result<(), FeatureError> {
        self.stft().validate()?;
        self.mel().validate(self.sample_rate)?;
        if self.n_segments == 0 || self.samples_per_segment() == 0 {
            return Err(FeatureError::InvalidParams("segments must be non-empty".into()));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(FeatureError::InvalidParams(format!("n_mfcc {} must be in 1..={}", self.n_mfcc, self.n_mels)));
        }
        Ok(())
    }
}

/// MFCC matrix (frames x n_mfcc) of a raw sample span.
pub fn mfcc(samples: &[f64], params: &MfccParams) -> Result<Array2<f64>, FeatureError> {
    params.validate()?;
    let power = mel_power(samples, params.sample_rate, &params.stft(), &params.mel())?;
    let db = power_to_db(&power, DbReference::Absolute(1.0), 80.0);
    Ok(dct_ii_ortho(&db, params.n_mfcc))
}

/// One fixed-length slice of a track as a frames x coefficients matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccSegment {
    pub matrix: Array2<f64>,
    pub genre: Option<String>,
    pub track_id: String,
    pub segment_index: usize,
}

/// Cut a clip into `n_segments` spans of `track_seconds / n_segments` and
/// compute MFCCs for each. Spans that produce fewer than the full frame count
/// (a short tail) are dropped.
pub fn extract_mfcc_segments(clip: &AudioClip, params: &MfccParams) -> Result<Vec<MfccSegment>, FeatureError> {
    params.validate()?;
    if clip.sample_rate != params.sample_rate {
        return Err(FeatureError::SampleRateMismatch {
            expected: params.sample_rate,
            found: clip.sample_rate,
        });
    }
    let span = params.samples_per_segment();
    let want_frames = params.frames_per_segment();
    let samples: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let track_id = std::path::Path::new(&clip.source_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut out = Vec::with_capacity(params.n_segments);
    for d in 0..params.n_segments {
        let start = d * span;
        if start >= samples.len() {
            break;
        }
        let end = (start + span).min(samples.len());
        if frame_count(end - start, &params.stft()) < want_frames {
            continue;
        }
        let matrix = mfcc(&samples[start..end], params)?;
        debug_assert_eq!(matrix.nrows(), want_frames);
        out.push(MfccSegment {
            matrix,
            genre: clip.genre.clone(),
            track_id: track_id.clone(),
            segment_index: d,
        });
    }
    Ok(out)
}
