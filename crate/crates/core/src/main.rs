use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use genreforge::dsp::MelScale;
use genreforge::gbdt::{SplitMethod, Tabularization};
use genreforge::pipeline::{
    cmd_compare, cmd_evaluate, cmd_extract, cmd_train, generate_corpus, ExtractOptions, FeatureKind, ModelKind, PipelineError, RunConfig,
    SyntheticSpec, TrainOptions,
};

#[derive(Parser)]
#[command(name = "genreforge", version, about = "Music genre classification: feature extraction, training and evaluation")]
struct Cli {
    /// TOML run configuration; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// -v info, -vv debug
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a genre-per-directory dataset and write feature caches
    Extract(ExtractArgs),
    /// Train a model on a feature cache
    Train(TrainArgs),
    /// Evaluate a trained model on one split of its cache
    Evaluate(EvaluateArgs),
    /// Tabulate evaluation reports
    Compare(CompareArgs),
    /// Write a synthetic tone/noise corpus in the dataset layout
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    Mfcc,
    Melspec,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    MfccCnn,
    MelspecCnn,
    Gbdt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Slaney,
    Htk,
}

#[derive(Clone, Copy, ValueEnum)]
enum TabularArg {
    Flatten,
    MeanStd,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    features: Option<FeatureArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sr: Option<u32>,
    #[arg(long)]
    n_mfcc: Option<usize>,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    n_mels: Option<usize>,
    /// nominal track length used to size segments
    #[arg(long)]
    track_seconds: Option<f64>,
    #[arg(long, value_enum)]
    mel_scale: Option<ScaleArg>,
    /// worker threads (default: GENREFORGE_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// feature cache (.gfc)
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// shrinkage for gbdt, Adam step for CNNs
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// exact greedy splits instead of histograms
    #[arg(long)]
    exact: bool,
    #[arg(long, value_enum)]
    tabularize: Option<TabularArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// keep every segment of a track in one partition
    #[arg(long)]
    group_by_track: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// also write comparison.csv and comparison.txt here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    clips: usize,
    #[arg(long, default_value_t = 6.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn required<T>(v: Option<T>, what: &str) -> Result<T, PipelineError> {
    v.ok_or_else(|| PipelineError::Config(format!("missing {what} (flag or config)")))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    match cli.command {
        Command::Extract(a) => {
            let mut params = cfg.extract.clone();
            if let Some(v) = a.sr {
                params.sample_rate = v;
            }
            if let Some(v) = a.n_mfcc {
                params.n_mfcc = v;
            }
            if let Some(v) = a.n_fft {
                params.n_fft = v;
            }
            if let Some(v) = a.hop {
                params.hop_length = v;
            }
            if let Some(v) = a.segments {
                params.n_segments = v;
            }
            if let Some(v) = a.n_mels {
                params.n_mels = v;
            }
            if let Some(v) = a.track_seconds {
                params.track_seconds = v;
            }
            if let Some(s) = a.mel_scale {
                params.mel_scale = match s {
                    ScaleArg::Slaney => MelScale::Slaney,
                    ScaleArg::Htk => MelScale::Htk,
                };
            }
            let features = match a.features {
                Some(FeatureArg::Mfcc) => vec![FeatureKind::Mfcc],
                Some(FeatureArg::Melspec) => vec![FeatureKind::Melspec],
                Some(FeatureArg::Both) => vec![FeatureKind::Mfcc, FeatureKind::Melspec],
                None => cfg.features.clone().unwrap_or_else(|| vec![FeatureKind::Mfcc]),
            };
            let opts = ExtractOptions {
                dataset: required(a.dataset.or(cfg.dataset.clone()), "--dataset")?,
                out: required(a.out.or(cfg.out.clone()), "--out")?,
                features,
                params,
                threads: a.threads,
            };
            for p in cmd_extract(&opts)? {
                println!("{}", p.display());
            }
        }
        Command::Train(a) => {
            let model = match a.model {
                Some(ModelArg::MfccCnn) => ModelKind::MfccCnn,
                Some(ModelArg::MelspecCnn) => ModelKind::MelspecCnn,
                Some(ModelArg::Gbdt) => ModelKind::Gbdt,
                None => required(cfg.model, "--model")?,
            };
            let mut opts = TrainOptions::new(a.features, model, required(a.out.or(cfg.out.clone()), "--out")?);
            opts.seed = a.seed.or(cfg.seed).unwrap_or(42);
            opts.fractions = cfg.fractions.unwrap_or(opts.fractions);
            opts.group_by_track = a.group_by_track || cfg.group_by_track.unwrap_or(false);
            opts.tabularization = match a.tabularize {
                Some(TabularArg::Flatten) => Tabularization::Flatten,
                Some(TabularArg::MeanStd) => Tabularization::MeanStd,
                None => cfg.tabularization.unwrap_or_default(),
            };
            opts.gbdt = cfg.gbdt.clone();
            opts.cnn = cfg.cnn.clone();
            if let Some(v) = a.rounds {
                opts.gbdt.n_rounds = v;
            }
            if let Some(v) = a.depth {
                opts.gbdt.max_depth = v;
            }
            if let Some(v) = a.bins {
                opts.gbdt.n_bins = v;
            }
            if a.exact {
                opts.gbdt.split_method = SplitMethod::Exact;
            }
            if let Some(v) = a.lr {
                opts.gbdt.learning_rate = v;
                opts.cnn.learning_rate = v;
            }
            if let Some(v) = a.epochs {
                opts.cnn.max_epochs = v;
            }
            if let Some(v) = a.batch {
                opts.cnn.batch_size = v;
            }
            if let Some(v) = a.patience {
                opts.cnn.early_stop_patience = v;
            }
            opts.gbdt.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            let outcome = cmd_train(&opts)?;
            println!("{}", outcome.model_path.display());
        }
        Command::Evaluate(a) => {
            let r = cmd_evaluate(&a.model, &a.features, &a.split, &a.out)?;
            println!("{}: accuracy {:.4}  macro AUC {:.4}  (n = {})", r.model, r.accuracy, r.auc_macro, r.n_samples);
        }
        Command::Compare(a) => {
            let (_, text, _) = cmd_compare(&a.reports, a.out.as_deref())?;
            print!("{text}");
        }
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                clips_per_class: a.clips,
                seconds: a.seconds,
                seed: a.seed,
                ..Default::default()
            };
            generate_corpus(&a.out, &spec)?;
            println!("{}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
