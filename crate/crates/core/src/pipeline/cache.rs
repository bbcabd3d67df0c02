//! `GFC1` feature cache: a little-endian binary tensor plus a JSON sidecar.
//!
//! ```text
//! "GFC1" | version u32 | dtype u32 | ndim u32 | dims u32 x ndim
//! payload f32 x prod(dims) | labels u8 x dims[0]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::audio_io::ExcludedFile;
use crate::dsp::MelScale;

pub const CACHE_MAGIC: &[u8; 4] = b"GFC1";
pub const CACHE_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Melspec,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mfcc => "mfcc",
            Self::Melspec => "melspec",
        }
    }
}

/// Everything needed to re-run extraction and get the same payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    pub sample_rate: u32,
    pub n_mfcc: usize,
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_segments: usize,
    pub n_mels: usize,
    pub track_seconds: f64,
    pub mel_scale: MelScale,
    pub image_height: usize,
    pub image_width: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        let m = crate::dsp::MfccParams::default();
        Self {
            sample_rate: m.sample_rate,
            n_mfcc: m.n_mfcc,
            n_fft: m.n_fft,
            hop_length: m.hop_length,
            n_segments: m.n_segments,
            n_mels: m.n_mels,
            track_seconds: m.track_seconds,
            mel_scale: m.mel_scale,
            image_height: crate::dsp::IMAGE_HEIGHT,
            image_width: crate::dsp::IMAGE_WIDTH,
        }
    }
}

impl ExtractParams {
    pub fn mfcc(&self) -> crate::dsp::MfccParams {
        crate::dsp::MfccParams {
            sample_rate: self.sample_rate,
            n_mfcc: self.n_mfcc,
            n_fft: self.n_fft,
            hop_length: self.hop_length,
            n_segments: self.n_segments,
            n_mels: self.n_mels,
            track_seconds: self.track_seconds,
            mel_scale: self.mel_scale,
        }
    }

    /// Item shape (without the leading count) for a feature kind.
    pub fn item_dims(&self, kind: FeatureKind) -> Vec<usize> {
        match kind {
            FeatureKind::Mfcc => vec![self.mfcc().frames_per_segment(), self.n_mfcc],
            FeatureKind::Melspec => vec![self.image_height, self.image_width, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub format: String,
    pub version: u32,
    pub feature: FeatureKind,
    pub dims: Vec<usize>,
    pub params: ExtractParams,
    /// label id -> genre name
    pub genres: Vec<String>,
    /// per item
    pub track_ids: Vec<String>,
    /// per item; 0 for whole-track features
    pub segment_index: Vec<usize>,
    pub excluded: Vec<ExcludedFile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub meta: CacheMeta,
    pub data: Vec<f32>,
    pub labels: Vec<u8>,
}

pub fn sidecar_path(cache: &Path) -> PathBuf {
    cache.with_extension("json")
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{}: {msg}", path.display()))
}

impl FeatureCache {
    pub fn n_items(&self) -> usize {
        self.meta.dims.first().copied().unwrap_or(0)
    }

    pub fn item_len(&self) -> usize {
        self.meta.dims[1..].iter().product()
    }

    pub fn item(&self, i: usize) -> &[f32] {
        let d = self.item_len();
        &self.data[i * d..(i + 1) * d]
    }

    fn check(&self) -> Result<(), String> {
        let n: usize = self.meta.dims.iter().product();
        if self.data.len() != n {
            return Err(format!("payload holds {} values, dims {:?} need {n}", self.data.len(), self.meta.dims));
        }
        let items = self.n_items();
        if self.labels.len() != items || self.meta.track_ids.len() != items || self.meta.segment_index.len() != items {
            return Err(format!("per-item sections disagree with {items} items"));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.meta.genres.len()) {
            return Err(format!("label {l} has no genre"));
        }
        if self.meta.dims[1..] != self.meta.params.item_dims(self.meta.feature)[..] {
            return Err(format!("dims {:?} disagree with extraction parameters", self.meta.dims));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let dims = &self.meta.dims;
        let mut out = Vec::with_capacity(16 + 4 * dims.len() + 4 * self.data.len() + self.labels.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        out
    }

    /// Decode the binary part; returns dims, payload and labels.
    pub fn decode(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>, Vec<u8>), String> {
        let u32_at = |off: usize| -> Result<u32, String> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| "truncated header".to_string())
        };
        if bytes.get(..4) != Some(CACHE_MAGIC) {
            return Err("not a GFC1 cache".into());
        }
        let version = u32_at(4)?;
        if version != CACHE_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let dtype = u32_at(8)?;
        if dtype != DTYPE_F32 {
            return Err(format!("unsupported dtype {dtype}"));
        }
        let ndim = u32_at(12)? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(format!("bad ndim {ndim}"));
        }
        let dims: Vec<usize> = (0..ndim).map(|i| u32_at(16 + 4 * i).map(|d| d as usize)).collect::<Result<_, _>>()?;
        let n: usize = dims.iter().product();
        let start = 16 + 4 * ndim;
        let expect = start + 4 * n + dims[0];
        if bytes.len() != expect {
            return Err(format!("file is {} bytes, header implies {expect}", bytes.len()));
        }
        let data = bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = bytes[start + 4 * n..].to_vec();
        Ok((dims, data, labels))
    }

    /// Write the cache and its sidecar.
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        self.check().map_err(PipelineError::Internal)?;
        fs::write(path, self.encode()).map_err(|e| PipelineError::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| PipelineError::Internal(e.to_string()))?;
        fs::write(&side, json + "\n").map_err(|e| PipelineError::io(&side, e))
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        let (dims, data, labels) = Self::decode(&bytes).map_err(|m| format_err(path, m))?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| PipelineError::io(&side, e))?;
        let meta: CacheMeta = serde_json::from_str(&text).map_err(|e| format_err(&side, e))?;
        if meta.dims != dims {
            return Err(format_err(path, format!("header dims {dims:?} but sidecar says {:?}", meta.dims)));
        }
        let cache = Self { meta, data, labels };
        cache.check().map_err(|m| format_err(path, m))?;
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FeatureCache {
        let params = ExtractParams {
            image_height: 2,
            image_width: 3,
            ..Default::default()
        };
        FeatureCache {
            meta: CacheMeta {
                format: "GFC1".into(),
                version: 1,
                feature: FeatureKind::Melspec,
                dims: vec![2, 2, 3, 3],
                params,
                genres: vec!["blues".into(), "rock".into()],
                track_ids: vec!["a".into(), "b".into()],
                segment_index: vec![0, 0],
                excluded: vec![],
            },
            data: (0..36).map(|i| i as f32 * 0.5).collect(),
            labels: vec![1, 0],
        }
    }

    #[test]
    fn header_layout() {
        let b = tiny().encode();
        assert_eq!(&b[..4], b"GFC1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[4, 0, 0, 0]);
        assert_eq!(&b[16..20], &[2, 0, 0, 0]);
        assert_eq!(&b[28..32], &[3, 0, 0, 0]);
        assert_eq!(b.len(), 32 + 4 * 36 + 2);
        assert_eq!(&b[b.len() - 2..], &[1, 0]);
        assert_eq!(&b[36..40], &0.5f32.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.gfc");
        let c = tiny();
        c.write(&p).unwrap();
        assert!(sidecar_path(&p).exists());
        assert_eq!(FeatureCache::read(&p).unwrap(), c);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let b = tiny().encode();
        assert!(FeatureCache::decode(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(FeatureCache::decode(&bad).is_err());
        let mut bad = b;
        bad[8] = 2;
        assert!(FeatureCache::decode(&bad).unwrap_err().contains("dtype"));
    }
}
