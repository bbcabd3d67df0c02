//! WAV decoding, mono mixdown, linear resampling and GTZAN directory indexing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rate every clip is brought to before feature extraction. At this rate a
/// 3 s span holds 66150 samples, which frames into exactly 130 hops of 512.
pub const CANONICAL_SAMPLE_RATE: u32 = 22050;

/// The ten GTZAN genres, in label order.
pub const GENRES: [&str; 10] = [
    "blues",
    "classical",
    "country",
    "disco",
    "hiphop",
    "jazz",
    "metal",
    "pop",
    "reggae",
    "rock",
];

/// Label id of a genre directory name, if it is one of [`GENRES`].
pub fn genre_id(name: &str) -> Option<u8> {
    GENRES.iter().position(|g| *g == name).map(|i| i as u8)
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("corrupted file {path}: {reason}")]
    CorruptedFile { path: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("no usable audio files found under {0}")]
    EmptyDataset(String),
}

/// Mono float audio with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_path: String,
    pub genre: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            source_path: String::new(),
            genre: None,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    Int,
    Float,
}

struct FmtChunk {
    format: SampleFormat,
    channels: u16,
    sample_rate: u32,
    bits: u16,
    block_align: u16,
}

fn corrupted(path: &str, reason: impl Into<String>) -> AudioError {
    AudioError::CorruptedFile {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn parse_fmt(body: &[u8], path: &str) -> Result<FmtChunk, AudioError> {
    if body.len() < 16 {
        return Err(corrupted(path, "fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);
    if tag == 0xFFFE {
        // WAVE_FORMAT_EXTENSIBLE: the real tag leads the sub-format GUID.
        if body.len() < 26 {
            return Err(corrupted(path, "truncated extensible fmt chunk"));
        }
        tag = u16_at(body, 24);
    }
    let format = match (tag, bits) {
        (1, 8 | 16 | 24 | 32) => SampleFormat::Int,
        (3, 32) => SampleFormat::Float,
        (1 | 3, b) => return Err(corrupted(path, format!("unsupported bit depth {b}"))),
        (t, _) => return Err(corrupted(path, format!("unsupported codec tag {t:#06x}"))),
    };
    if channels == 0 {
        return Err(corrupted(path, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(corrupted(path, "zero sample rate"));
    }
    if block_align as usize != channels as usize * (bits as usize / 8) {
        return Err(corrupted(path, "block align does not match channels and bit depth"));
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits,
        block_align,
    })
}

/// Decode a RIFF/WAVE byte buffer. `path` is only used for provenance and
/// error messages.
pub fn decode_wav(bytes: &[u8], path: &str) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 {
        return Err(corrupted(path, "truncated RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupted(path, "missing RIFF/WAVE signature"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body_start = off + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                corrupted(
                    path,
                    format!(
                        "chunk '{}' declares {} bytes but only {} remain",
                        String::from_utf8_lossy(id),
                        size,
                        bytes.len() - body_start
                    ),
                )
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body, path)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        off = body_end + (size & 1);
        if data.is_some() && fmt.is_some() {
            break;
        }
    }

    let fmt = fmt.ok_or_else(|| corrupted(path, "no fmt chunk"))?;
    let data = data.ok_or_else(|| corrupted(path, "no data chunk"))?;
    if data.len() % fmt.block_align as usize != 0 {
        return Err(corrupted(path, "data chunk is not a whole number of frames"));
    }

    let channels = fmt.channels as usize;
    let width = fmt.bits as usize / 8;
    let n_frames = data.len() / fmt.block_align as usize;
    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(fmt.block_align as usize) {
        let mut acc = 0.0f64;
        for ch in frame.chunks_exact(width) {
            acc += decode_sample(ch, fmt.format);
        }
        let v = acc / channels as f64;
        if !v.is_finite() {
            return Err(corrupted(path, "non-finite sample"));
        }
        samples.push(v.clamp(-1.0, 1.0) as f32);
    }

    Ok(AudioClip {
        samples,
        sample_rate: fmt.sample_rate,
        source_path: path.to_string(),
        genre: None,
    })
}

fn decode_sample(b: &[u8], format: SampleFormat) -> f64 {
    match (format, b.len()) {
        (SampleFormat::Int, 1) => (b[0] as f64 - 128.0) / 128.0,
        (SampleFormat::Int, 2) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (SampleFormat::Int, 3) => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        (SampleFormat::Int, 4) => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        (SampleFormat::Float, 4) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        _ => unreachable!("sample width validated in parse_fmt"),
    }
}

/// Read and decode a WAV file at its native sample rate.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: shown.clone(),
        source,
    })?;
    decode_wav(&bytes, &shown)
}

/// Load a WAV file and resample it to `sample_rate`.
pub fn load_wav_at(path: impl AsRef<Path>, sample_rate: u32) -> Result<AudioClip, AudioError> {
    let clip = load_wav(path)?;
    resample_linear(&clip, sample_rate)
}

/// Linear-interpolation resampler. Output length is `floor(n * target / source)`.
pub fn resample_linear(clip: &AudioClip, target_sr: u32) -> Result<AudioClip, AudioError> {
    if target_sr == 0 {
        return Err(AudioError::InvalidSampleRate(target_sr));
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidSampleRate(clip.sample_rate));
    }
    if target_sr == clip.sample_rate {
        return Ok(clip.clone());
    }
    let n = clip.samples.len();
    let n_out = (n as u64 * target_sr as u64 / clip.sample_rate as u64) as usize;
    let ratio = clip.sample_rate as f64 / target_sr as f64;
    let src = &clip.samples;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            let a = src[lo.min(n - 1)] as f64;
            let b = src[(lo + 1).min(n - 1)] as f64;
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_sr,
        source_path: clip.source_path.clone(),
        genre: clip.genre.clone(),
    })
}

/// Encode mono samples as 16-bit PCM WAV bytes.
pub fn encode_wav_pcm16(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<(), AudioError> {
    let path = path.as_ref();
    let io = |source| AudioError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_wav_pcm16(samples, sample_rate)).map_err(io)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub genre: String,
    pub label: u8,
    /// File stem, e.g. `jazz.00054`.
    pub track_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Usable tracks of a GTZAN-style directory, sorted by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
    /// Genres that contributed at least one entry, in label order.
    pub genres: Vec<String>,
    pub excluded: Vec<ExcludedFile>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_for(&self, genre: &str) -> usize {
        self.entries.iter().filter(|e| e.genre == genre).count()
    }
}

/// Index `<root>/<genre>/*.wav`. Every candidate is decoded; files that fail
/// are excluded and listed in [`DatasetIndex::excluded`]. Directories that are
/// not one of [`GENRES`] are ignored.
pub fn scan_gtzan(root: impl AsRef<Path>) -> Result<DatasetIndex, AudioError> {
    let root = root.as_ref();
    let shown = root.display().to_string();
    let io = |source| AudioError::Io {
        path: shown.clone(),
        source,
    };

    let mut candidates: Vec<(PathBuf, String)> = Vec::new();
    for dir in fs::read_dir(root).map_err(io)? {
        let dir = dir.map_err(io)?;
        let name = dir.file_name().to_string_lossy().into_owned();
        if !dir.path().is_dir() {
            continue;
        }
        if genre_id(&name).is_none() {
            log::warn!("ignoring non-genre directory {}", dir.path().display());
            continue;
        }
        for file in fs::read_dir(dir.path()).map_err(io)? {
            let p = file.map_err(io)?.path();
            let is_wav = p
                .extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false);
            if p.is_file() && is_wav {
                candidates.push((p, name.clone()));
            }
        }
    }
    candidates.sort();

    let outcomes: Vec<Result<(), String>> = candidates
        .par_iter()
        .map(|(p, _)| load_wav(p).map(|_| ()).map_err(|e| e.to_string()))
        .collect();

    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for ((path, genre), outcome) in candidates.into_iter().zip(outcomes) {
        match outcome {
            Ok(()) => {
                let track_id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let label = genre_id(&genre).expect("filtered above");
                entries.push(DatasetEntry {
                    path,
                    genre,
                    label,
                    track_id,
                });
            }
            Err(reason) => {
                log::warn!("excluding {}: {}", path.display(), reason);
                excluded.push(ExcludedFile { path, reason });
            }
        }
    }

    if entries.is_empty() {
        return Err(AudioError::EmptyDataset(shown));
    }
    // stems are unique within a genre dir; prefix on collision across dirs
    let mut seen = std::collections::BTreeSet::new();
    for e in &mut entries {
        if !seen.insert(e.track_id.clone()) {
            e.track_id = format!("{}/{}", e.genre, e.track_id);
            seen.insert(e.track_id.clone());
        }
    }
    let genres = GENRES
        .iter()
        .filter(|g| entries.iter().any(|e| e.genre == **g))
        .map(|g| g.to_string())
        .collect();
    Ok(DatasetIndex {
        entries,
        genres,
        excluded,
    })
}
