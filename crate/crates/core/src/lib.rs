//! Music genre classification from raw audio.
//!
//! The pipeline decodes WAV files ([`audio_io`]), extracts segmented MFCCs and
//! log-mel images ([`dsp`]), trains either a small CNN ([`nn`]) or a
//! multiclass gradient-boosted tree ensemble ([`gbdt`]), and evaluates with
//! accuracy, one-vs-rest AUC and proportional confusion matrices ([`eval`]).

pub mod audio_io;
pub mod dsp;
pub mod nn;
pub mod gbdt;
pub mod eval;
pub mod pipeline;
