//! Spectral features: framing and STFT, mel filterbanks, log-mel
//! spectrograms, segmented MFCCs and image rendering for the CNN input.

mod mel;
mod mfcc;
mod render;
mod stft;

pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, power_to_db, DbReference, MelNorm, MelParams, MelScale, MelSpectrogram};
pub use mfcc::{dct_ii_ortho, extract_mfcc_segments, idct_ii_ortho, mfcc, MfccParams, MfccSegment};
pub use render::{render_melspec_tensor, render_or_blank, IMAGE_HEIGHT, IMAGE_WIDTH};
pub use stft::{frame_count, hann_window, one_sided_energy, stft, StftParams, Window};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty input signal")]
    EmptyInput,
    #[error("clip sample rate {found} Hz differs from the extraction rate {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("spectrogram has a degenerate dynamic range (max == min)")]
    DegenerateRange,
}
