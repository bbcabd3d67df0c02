//! Extraction, training, evaluation and comparison commands.

mod cache;
mod commands;
mod synthetic;

pub use cache::{sidecar_path, CacheMeta, ExtractParams, FeatureCache, FeatureKind, CACHE_MAGIC, CACHE_VERSION, DTYPE_F32};
pub use commands::{
    cmd_compare, cmd_evaluate, cmd_extract, cmd_train, load_report, ComparisonRow, ExtractOptions, GbdtModelFile, ModelKind, TrainOptions,
    TrainOutcome, COMPARE_HEADERS,
};
pub use synthetic::{generate_corpus, synth_clip, SyntheticSpec};

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbdt::{GbdtConfig, Tabularization};
use crate::nn::TrainConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("cache does not fit the model: {0}")]
    CacheMismatch(String),
    #[error("schema error in {path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 user/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 1,
            Self::Data(_) | Self::CacheMismatch(_) | Self::Schema { .. } => 2,
            Self::Internal(_) => 3,
        }
    }
}

/// Line-delimited JSON event log. Timestamps live only here.
pub struct RunLog {
    path: PathBuf,
}

impl RunLog {
    pub const FILE: &'static str = "run.log.jsonl";

    pub fn in_dir(dir: &Path) -> Self {
        Self { path: dir.join(Self::FILE) }
    }

    pub fn event(&self, event: &str, fields: serde_json::Value) {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let mut obj = serde_json::json!({ "ts": ts, "event": event });
        if let (Some(o), serde_json::Value::Object(extra)) = (obj.as_object_mut(), fields) {
            o.extend(extra);
        }
        let line = obj.to_string();
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("could not append to {}: {e}", self.path.display());
        }
    }
}

/// TOML run configuration; every field optional, command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: Option<Vec<FeatureKind>>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub fractions: Option<[f64; 3]>,
    pub group_by_track: Option<bool>,
    pub tabularization: Option<Tabularization>,
    pub extract: ExtractParams,
    pub gbdt: GbdtConfig,
    pub cnn: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(f) = self.fractions {
            if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(PipelineError::Config(format!("fractions {f:?} must be positive and sum to 1")));
            }
        }
        self.gbdt.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| PipelineError::Internal(e.to_string()))
}
