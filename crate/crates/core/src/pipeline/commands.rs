use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{CacheMeta, ExtractParams, FeatureCache, FeatureKind, CACHE_VERSION};
use super::{ensure_dir, to_json, write_file, PipelineError, RunLog};
use crate::audio_io::{load_wav_at, scan_gtzan, AudioError, DatasetEntry, ExcludedFile, GENRES};
use crate::dsp::{mel_spectrogram, render_or_blank, MelSpectrogram};
use crate::eval::{confusion_ppm, curves_csv, fmt_sig9, grouped_split, log_curves, stratified_split, EvalReport, SplitIndices};
use crate::gbdt::{fit_boosted_with, tabularize_matrix, BoostMode, BoostedClassifier, GbdtConfig, Tabularization};
use crate::nn::{build_melspec_cnn, build_mfcc_cnn, load_network, predict_proba, save_network, train_with, History, ModelSpec, Network, SampleSet, TrainConfig};

pub const THREADS_ENV: &str = "GENREFORGE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MfccCnn,
    MelspecCnn,
    Gbdt,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MfccCnn => "mfcc-cnn",
            Self::MelspecCnn => "melspec-cnn",
            Self::Gbdt => "gbdt",
        }
    }

    fn spec(self) -> Option<ModelSpec> {
        match self {
            Self::MfccCnn => Some(build_mfcc_cnn()),
            Self::MelspecCnn => Some(build_melspec_cnn()),
            Self::Gbdt => None,
        }
    }

    fn feature(self) -> FeatureKind {
        match self {
            Self::MelspecCnn => FeatureKind::Melspec,
            _ => FeatureKind::Mfcc,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mfcc-cnn" => Ok(Self::MfccCnn),
            "melspec-cnn" => Ok(Self::MelspecCnn),
            "gbdt" => Ok(Self::Gbdt),
            _ => Err(format!("unknown model {s:?} (mfcc-cnn, melspec-cnn, gbdt)")),
        }
    }
}

fn audio_err(e: AudioError) -> PipelineError {
    match e {
        AudioError::Io { path, source } => PipelineError::Io {
            path: path.into(),
            source,
        },
        AudioError::InvalidSampleRate(_) => PipelineError::Config(e.to_string()),
        other => PipelineError::Data(other.to_string()),
    }
}

fn worker_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| PipelineError::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| PipelineError::Internal(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub features: Vec<FeatureKind>,
    pub params: ExtractParams,
    /// overrides the environment; 0 or `None` defers to it / the core count
    pub threads: Option<usize>,
}

struct Item {
    values: Vec<f32>,
    segment: usize,
}

fn extract_one(entry: &DatasetEntry, kind: FeatureKind, params: &ExtractParams) -> Result<Vec<Item>, String> {
    let clip = load_wav_at(&entry.path, params.sample_rate).map_err(|e| e.to_string())?;
    let mp = params.mfcc();
    match kind {
        FeatureKind::Mfcc => {
            let segs = crate::dsp::extract_mfcc_segments(&clip, &mp).map_err(|e| e.to_string())?;
            Ok(segs
                .into_iter()
                .map(|s| Item {
                    values: s.matrix.iter().map(|&v| v as f32).collect(),
                    segment: s.segment_index,
                })
                .collect())
        }
        FeatureKind::Melspec => {
            let spec: MelSpectrogram = mel_spectrogram(&clip, &mp.stft(), &mp.mel()).map_err(|e| e.to_string())?;
            let img = render_or_blank(&spec, params.image_height, params.image_width).map_err(|e| e.to_string())?;
            Ok(vec![Item {
                values: img.iter().copied().collect(),
                segment: 0,
            }])
        }
    }
}

fn relative(path: &Path, root: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

pub fn cache_file_name(kind: FeatureKind) -> String {
    format!("{}.gfc", kind.as_str())
}

/// Scan the dataset, extract each requested feature kind and write one cache
/// per kind into `out`. Returns the cache paths.
pub fn cmd_extract(opts: &ExtractOptions) -> Result<Vec<PathBuf>, PipelineError> {
    if opts.features.is_empty() {
        return Err(PipelineError::Config("no feature kind selected".into()));
    }
    if !opts.dataset.is_dir() {
        return Err(PipelineError::Config(format!("dataset {} is not a directory", opts.dataset.display())));
    }
    ensure_dir(&opts.out)?;
    let log = RunLog::in_dir(&opts.out);
    let pool = worker_pool(opts.threads)?;
    let index = pool.install(|| scan_gtzan(&opts.dataset)).map_err(audio_err)?;
    log.event("scan_finished", json!({ "tracks": index.len(), "excluded": index.excluded.len() }));
    let scan_excluded: Vec<ExcludedFile> = index
        .excluded
        .iter()
        .map(|x| ExcludedFile {
            path: relative(&x.path, &opts.dataset),
            reason: x.reason.clone(),
        })
        .collect();
    for x in &scan_excluded {
        log.event("file_excluded", json!({ "path": x.path, "reason": x.reason }));
    }

    let mut written = Vec::new();
    for &kind in &opts.features {
        let results: Vec<Result<Vec<Item>, String>> = pool.install(|| index.entries.par_iter().map(|e| extract_one(e, kind, &opts.params)).collect());
        let mut excluded = scan_excluded.clone();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut track_ids = Vec::new();
        let mut segment_index = Vec::new();
        for (entry, result) in index.entries.iter().zip(results) {
            match result {
                Ok(items) => {
                    for it in items {
                        data.extend(it.values);
                        labels.push(entry.label);
                        track_ids.push(entry.track_id.clone());
                        segment_index.push(it.segment);
                    }
                }
                Err(reason) => {
                    let path = relative(&entry.path, &opts.dataset);
                    log.event("file_excluded", json!({ "path": path, "reason": reason }));
                    excluded.push(ExcludedFile { path, reason });
                }
            }
        }
        if labels.is_empty() {
            return Err(PipelineError::Data(format!("no {} features extracted from {}", kind.as_str(), opts.dataset.display())));
        }
        let mut dims = vec![labels.len()];
        dims.extend(opts.params.item_dims(kind));
        let cache = FeatureCache {
            meta: CacheMeta {
                format: "GFC1".into(),
                version: CACHE_VERSION,
                feature: kind,
                dims: dims.clone(),
                params: opts.params.clone(),
                genres: GENRES.iter().map(|g| g.to_string()).collect(),
                track_ids,
                segment_index,
                excluded,
            },
            data,
            labels,
        };
        let path = opts.out.join(cache_file_name(kind));
        cache.write(&path)?;
        log.event("cache_written", json!({ "path": path, "dims": dims }));
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub features: PathBuf,
    pub model: ModelKind,
    pub seed: u64,
    pub out: PathBuf,
    pub fractions: [f64; 3],
    pub group_by_track: bool,
    pub tabularization: Tabularization,
    pub gbdt: GbdtConfig,
    pub cnn: TrainConfig,
}

impl TrainOptions {
    pub fn new(features: PathBuf, model: ModelKind, out: PathBuf) -> Self {
        Self {
            features,
            model,
            seed: 42,
            out,
            fractions: crate::eval::DEFAULT_FRACTIONS,
            group_by_track: false,
            tabularization: Tabularization::Flatten,
            gbdt: GbdtConfig::default(),
            cnn: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModelFile {
    pub format: String,
    pub kind: String,
    pub arch: String,
    pub seed: u64,
    pub tabularization: Tabularization,
    /// cache item shape the model was trained on
    pub item_dims: Vec<usize>,
    pub genres: Vec<String>,
    pub model: BoostedClassifier,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub split: SplitIndices,
    pub history: Option<History>,
    pub n_trees: Option<usize>,
    pub param_count: Option<usize>,
}

pub const MODEL_FILE: &str = "model.json";
pub const SPLIT_FILE: &str = "split.json";
pub const HISTORY_FILE: &str = "history.json";
pub const CURVES_FILE: &str = "curves.csv";

fn check_feature(cache: &FeatureCache, model: ModelKind) -> Result<(), PipelineError> {
    let want = model.feature();
    if cache.meta.feature != want {
        return Err(PipelineError::CacheMismatch(format!(
            "{model} needs a {} cache, got {}",
            want.as_str(),
            cache.meta.feature.as_str()
        )));
    }
    if let Some(spec) = model.spec() {
        let item: usize = spec.input_shape.iter().product();
        let dims = &cache.meta.dims[1..];
        let trimmed: Vec<usize> = spec.input_shape.iter().copied().filter(|&d| d != 1).collect();
        let cache_trimmed: Vec<usize> = dims.iter().copied().filter(|&d| d != 1).collect();
        if cache.item_len() != item || trimmed != cache_trimmed {
            return Err(PipelineError::CacheMismatch(format!("{model} expects items of shape {:?}, cache holds {dims:?}", spec.input_shape)));
        }
    }
    Ok(())
}

fn track_groups(meta: &CacheMeta) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    meta.track_ids
        .iter()
        .map(|t| {
            let next = ids.len();
            *ids.entry(t.as_str()).or_insert(next)
        })
        .collect()
}

fn tabular(cache: &FeatureCache, idx: &[usize], how: Tabularization) -> Result<Array2<f64>, PipelineError> {
    let (rows, cols) = (cache.meta.dims[1], cache.item_len() / cache.meta.dims[1]);
    let mut out: Vec<f64> = Vec::new();
    let mut width = 0;
    for &i in idx {
        let m = Array2::from_shape_vec((rows, cols), cache.item(i).iter().map(|&v| v as f64).collect()).map_err(|e| PipelineError::Internal(e.to_string()))?;
        let row = tabularize_matrix(&m, how, None).map_err(|e| PipelineError::Data(e.to_string()))?;
        width = row.len();
        out.extend(row);
    }
    Array2::from_shape_vec((idx.len(), width), out).map_err(|e| PipelineError::Internal(e.to_string()))
}

fn sample_set(cache: &FeatureCache, idx: &[usize], shape: &[usize]) -> Result<SampleSet, PipelineError> {
    let mut data = Vec::with_capacity(idx.len() * cache.item_len());
    for &i in idx {
        data.extend_from_slice(cache.item(i));
    }
    let labels = idx.iter().map(|&i| cache.labels[i] as usize).collect();
    SampleSet::new(shape.to_vec(), data, labels).map_err(|e| PipelineError::Internal(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Split the cache, train the selected model on the training part and write
/// the model, split indices and (for CNNs) learning curves into `out`.
pub fn cmd_train(opts: &TrainOptions) -> Result<TrainOutcome, PipelineError> {
    let cache = FeatureCache::read(&opts.features)?;
    check_feature(&cache, opts.model)?;
    ensure_dir(&opts.out)?;
    let log = RunLog::in_dir(&opts.out);
    let labels: Vec<usize> = cache.labels.iter().map(|&l| l as usize).collect();
    let split = if opts.group_by_track {
        grouped_split(&labels, &track_groups(&cache.meta), opts.fractions, opts.seed)
    } else {
        stratified_split(&labels, opts.fractions, opts.seed)
    }
    .map_err(|e| PipelineError::Config(e.to_string()))?;
    if split.train.is_empty() {
        return Err(PipelineError::Data("training split is empty".into()));
    }
    write_file(&opts.out.join(SPLIT_FILE), to_json(&split)?)?;
    log.event(
        "split",
        json!({ "train": split.train.len(), "test": split.test.len(), "val": split.val.len(), "grouped": split.grouped, "seed": opts.seed }),
    );
    let model_path = opts.out.join(MODEL_FILE);

    match opts.model.spec() {
        None => {
            let x = tabular(&cache, &split.train, opts.tabularization)?;
            let y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
            let cfg = GbdtConfig {
                seed: opts.seed,
                mode: BoostMode::Classification,
                ..opts.gbdt.clone()
            };
            let model = fit_boosted_with(&x, &y, cache.meta.genres.len(), &cfg, |round, loss| {
                log.event("round_finished", json!({ "round": round, "train_loss": loss }));
            })
            .map_err(|e| PipelineError::Data(e.to_string()))?;
            let n_trees = model.n_trees();
            let file = GbdtModelFile {
                format: "genreforge-gbdt".into(),
                kind: "gbdt".into(),
                arch: opts.model.as_str().into(),
                seed: opts.seed,
                tabularization: opts.tabularization,
                item_dims: cache.meta.dims[1..].to_vec(),
                genres: cache.meta.genres.clone(),
                model,
            };
            write_file(&model_path, to_json(&file)?)?;
            log.event("model_written", json!({ "path": model_path, "trees": n_trees }));
            Ok(TrainOutcome {
                model_path,
                split,
                history: None,
                n_trees: Some(n_trees),
                param_count: None,
            })
        }
        Some(spec) => {
            let shape = spec.input_shape.clone();
            let train_set = sample_set(&cache, &split.train, &shape)?;
            let val_set = sample_set(&cache, &split.val, &shape)?;
            let cfg = TrainConfig {
                seed: opts.seed,
                ..opts.cnn.clone()
            };
            let mut net = Network::new(spec, opts.seed).map_err(|e| PipelineError::Internal(e.to_string()))?;
            let history = train_with(&mut net, &train_set, &val_set, &cfg, |h| {
                let e = h.train_loss.len() - 1;
                log.event(
                    "epoch_finished",
                    json!({ "epoch": e + 1, "train_loss": h.train_loss[e], "train_acc": h.train_accuracy[e], "val_loss": h.val_loss[e], "val_acc": h.val_accuracy[e] }),
                );
            })
            .map_err(|e| PipelineError::Data(e.to_string()))?;
            let manifest = save_network(&net, opts.model.as_str(), opts.seed, Some(&cfg), &model_path).map_err(|e| PipelineError::Internal(e.to_string()))?;
            write_file(&opts.out.join(HISTORY_FILE), to_json(&history)?)?;
            let rows = log_curves(&history).map_err(|e| PipelineError::Internal(e.to_string()))?;
            write_file(&opts.out.join(CURVES_FILE), curves_csv(&rows))?;
            log.event("model_written", json!({ "path": model_path, "params": manifest.param_count, "best_epoch": history.best_epoch }));
            Ok(TrainOutcome {
                model_path,
                split,
                history: Some(history),
                n_trees: None,
                param_count: Some(manifest.param_count),
            })
        }
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_PPM: &str = "confusion.ppm";

/// Evaluate a trained model on one partition (`train`, `test`, `val` or
/// `all`) of the cache it was trained on.
pub fn cmd_evaluate(model_path: &Path, features: &Path, split_name: &str, out: &Path) -> Result<EvalReport, PipelineError> {
    let header: serde_json::Value = read_json(model_path)?;
    let kind = header.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
    let model_dir = model_path.parent().unwrap_or(Path::new("."));
    let cache = FeatureCache::read(features)?;
    let idx: Vec<usize> = if split_name == "all" {
        (0..cache.n_items()).collect()
    } else {
        let split: SplitIndices = read_json(&model_dir.join(SPLIT_FILE))?;
        split
            .partition(split_name)
            .ok_or_else(|| PipelineError::Config(format!("unknown split {split_name:?} (train, test, val, all)")))?
            .to_vec()
    };
    if let Some(&bad) = idx.iter().find(|&&i| i >= cache.n_items()) {
        return Err(PipelineError::CacheMismatch(format!("split index {bad} beyond {} cached items", cache.n_items())));
    }
    if idx.is_empty() {
        return Err(PipelineError::Data(format!("split {split_name:?} is empty")));
    }
    let labels: Vec<usize> = idx.iter().map(|&i| cache.labels[i] as usize).collect();

    let (arch, probs, is_cnn) = match kind.as_str() {
        "gbdt" => {
            let file: GbdtModelFile = read_json(model_path)?;
            check_feature(&cache, ModelKind::Gbdt)?;
            if file.item_dims != cache.meta.dims[1..] {
                return Err(PipelineError::CacheMismatch(format!("model trained on items {:?}, cache holds {:?}", file.item_dims, &cache.meta.dims[1..])));
            }
            let x = tabular(&cache, &idx, file.tabularization)?;
            let p = file.model.predict_proba(&x).map_err(|e| PipelineError::CacheMismatch(e.to_string()))?;
            (file.arch, p, false)
        }
        "cnn" => {
            let (net, manifest) = load_network(model_path).map_err(|e| PipelineError::Schema {
                path: model_path.to_path_buf(),
                reason: e.to_string(),
            })?;
            let model: ModelKind = manifest.arch.parse().map_err(|e: String| PipelineError::Schema {
                path: model_path.to_path_buf(),
                reason: e,
            })?;
            check_feature(&cache, model)?;
            let set = sample_set(&cache, &idx, net.input_shape())?;
            let p = predict_proba(&net, &set).map_err(|e| PipelineError::Internal(e.to_string()))?;
            (manifest.arch, p, true)
        }
        other => {
            return Err(PipelineError::Schema {
                path: model_path.to_path_buf(),
                reason: format!("unknown model kind {other:?}"),
            })
        }
    };

    let report = EvalReport::from_probabilities(arch, split_name, &probs, &labels, cache.meta.genres.clone()).map_err(|e| PipelineError::Data(e.to_string()))?;
    ensure_dir(out)?;
    write_file(&out.join(REPORT_FILE), to_json(&report)?)?;
    write_file(&out.join(CONFUSION_CSV), report.confusion_csv())?;
    write_file(&out.join(CONFUSION_PPM), confusion_ppm(&report.confusion))?;
    if is_cnn {
        let hist_path = model_dir.join(HISTORY_FILE);
        if hist_path.exists() {
            let history: History = read_json(&hist_path)?;
            let rows = log_curves(&history).map_err(|e| PipelineError::Schema {
                path: hist_path.clone(),
                reason: e.to_string(),
            })?;
            write_file(&out.join(CURVES_FILE), curves_csv(&rows))?;
        }
    }
    RunLog::in_dir(out).event(
        "evaluated",
        json!({ "model": report.model, "split": split_name, "n": report.n_samples, "accuracy": report.accuracy, "auc_macro": report.auc_macro }),
    );
    Ok(report)
}

pub const COMPARE_HEADERS: [&str; 3] = ["Model", "AUC", "Testing Accuracy"];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub auc: f64,
    pub accuracy: f64,
}

pub fn load_report(path: &Path) -> Result<EvalReport, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Tabulate reports as (aligned text, CSV), optionally writing both to `out`.
pub fn cmd_compare(reports: &[PathBuf], out: Option<&Path>) -> Result<(Vec<ComparisonRow>, String, String), PipelineError> {
    if reports.is_empty() {
        return Err(PipelineError::Config("compare needs at least one report".into()));
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|p| {
            load_report(p).map(|r| ComparisonRow {
                model: r.model,
                auc: r.auc_macro,
                accuracy: r.accuracy,
            })
        })
        .collect::<Result<_, _>>()?;

    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|r| [r.model.clone(), format!("{:.4}", r.auc), format!("{:.2}%", 100.0 * r.accuracy)])
        .collect();
    let mut widths = COMPARE_HEADERS.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |c: [&str; 3]| format!("{:<w0$}  {:>w1$}  {:>w2$}\n", c[0], c[1], c[2], w0 = widths[0], w1 = widths[1], w2 = widths[2]);
    let mut text = line(COMPARE_HEADERS);
    for c in &cells {
        text.push_str(&line([&c[0], &c[1], &c[2]]));
    }
    let mut csv = COMPARE_HEADERS.join(",") + "\n";
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.model, fmt_sig9(r.auc), fmt_sig9(r.accuracy)));
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_file(&dir.join("comparison.csv"), &csv)?;
        write_file(&dir.join("comparison.txt"), &text)?;
    }
    Ok((rows, text, csv))
}
