//! Acceptance suite. One line per criterion: status, id, measured values
//! against pinned tolerances, elapsed time against the time budget.
//!
//! Runs as a plain binary (`harness = false`); exits non-zero if any
//! criterion fails. Set `GENREFORGE_GTZAN=<dataset root>` to enable the
//! long-running full-dataset targets.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use genreforge::audio_io::AudioClip;
use genreforge::dsp::{
    dct_ii_ortho, extract_mfcc_segments, hann_window, hz_to_mel, idct_ii_ortho, one_sided_energy, stft, MelScale, MfccParams, StftParams, Window,
};
use genreforge::eval::{binary_auc, confusion_proportional, roc_auc_ovr};
use genreforge::gbdt::{
    fit_boosted, fit_gbm_regression, fit_regression_tree, BinnedMatrix, BoostMode, GbdtConfig, StepRule, TreeNode, TreeParams,
};
use genreforge::nn::gradcheck::{check_gradients, random_case};
use genreforge::nn::{build_melspec_cnn, build_mfcc_cnn, train, ModelSpec, Network, SampleSet, TrainConfig};
use genreforge::pipeline::{
    cmd_evaluate, cmd_extract, cmd_train, generate_corpus, ExtractOptions, ExtractParams, FeatureCache, FeatureKind, ModelKind, SyntheticSpec, TrainOptions,
};

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_FLOOR: f64 = 1e-5;
const PARSEVAL_REL_TOL: f64 = 1e-6;
const DCT_ROUND_TRIP_TOL: f64 = 1e-9;
const HTK_1000_TOL: f64 = 0.01;
const LEAF_VALUE_TOL: f64 = 1e-12;
const CONFUSION_ROW_TOL: f64 = 1e-12;
const RANDOM_AUC_RANGE: (f64, f64) = (0.45, 0.55);
const RANDOM_AUC_MIN_SEEDS: usize = 95;
const SMOKE_MIN_ACCURACY: f64 = 0.95;
const SMOKE_MIN_AUC: f64 = 0.99;
const GTZAN_GBDT_MIN: (f64, f64) = (0.90, 0.96);
const GTZAN_MFCC_CNN_MIN: (f64, f64) = (0.80, 0.97);

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let caught = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let mut out = caught.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        if matches!(out.status, Status::Pass) && elapsed > budget {
            out.status = Status::Fail;
            out.detail.push_str("; over time budget");
        }
        let tag = match out.status {
            Status::Pass => "PASS",
            Status::Fail => {
                self.failures += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!(
            "{tag} {id:<26} {} [{:.2} s / {} s]",
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// 1. Architecture tables.

type Row = (Vec<usize>, usize);

fn rows(shapes: &[&[usize]], params: &[usize]) -> Vec<Row> {
    shapes.iter().map(|s| s.to_vec()).zip(params.iter().copied()).collect()
}

fn mfcc_table() -> (Vec<Row>, usize) {
    let shapes: [&[usize]; 13] = [
        &[128, 11, 32],
        &[64, 6, 32],
        &[64, 6, 32],
        &[62, 4, 32],
        &[31, 2, 32],
        &[31, 2, 32],
        &[30, 1, 32],
        &[15, 1, 32],
        &[15, 1, 32],
        &[15, 1, 32],
        &[480],
        &[64],
        &[10],
    ];
    let params = [320, 0, 128, 9248, 0, 128, 4128, 0, 128, 0, 0, 30784, 650];
    (rows(&shapes, &params), 45_514)
}

fn melspec_table() -> (Vec<Row>, usize) {
    let shapes: [&[usize]; 16] = [
        &[288, 432, 3],
        &[288, 432, 32],
        &[143, 215, 32],
        &[141, 213, 32],
        &[70, 106, 32],
        &[68, 104, 32],
        &[34, 52, 32],
        &[32, 50, 32],
        &[16, 25, 32],
        &[14, 23, 64],
        &[7, 11, 64],
        &[4928],
        &[128],
        &[128],
        &[128],
        &[10],
    ];
    let params = [12, 896, 0, 9248, 0, 9248, 0, 9248, 0, 18496, 0, 0, 630912, 0, 512, 1290];
    (rows(&shapes, &params), 679_862)
}

fn table_matches(spec: &ModelSpec, expected: &(Vec<Row>, usize)) -> Result<String, String> {
    let summary = spec.summary().map_err(|e| e.to_string())?;
    let got: Vec<Row> = summary.iter().map(|l| (l.output_shape.clone(), l.params)).collect();
    let total = spec.count_params().map_err(|e| e.to_string())?.total;
    if got.len() != expected.0.len() {
        return Err(format!("{} rows, expected {}", got.len(), expected.0.len()));
    }
    for (i, (g, e)) in got.iter().zip(&expected.0).enumerate() {
        if g != e {
            return Err(format!("row {i}: {g:?} != {e:?}"));
        }
    }
    if total != expected.1 {
        return Err(format!("total {total} != {}", expected.1));
    }
    Ok(format!("{} rows, total {total}", got.len()))
}

fn architecture() -> Outcome {
    let a = table_matches(&build_mfcc_cnn(), &mfcc_table());
    let b = table_matches(&build_melspec_cnn(), &melspec_table());
    let ok = a.is_ok() && b.is_ok();
    let show = |r: Result<String, String>| r.unwrap_or_else(|e| e);
    check(ok, format!("mfcc-cnn: {}; melspec-cnn: {}; exact", show(a), show(b)))
}

// 2. Gradients.

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut layer_kinds = std::collections::BTreeSet::new();
    for i in 0..25 {
        let (net, x, labels) = match random_case(i) {
            Ok(c) => c,
            Err(e) => return check(false, format!("case {i}: {e}")),
        };
        for l in &net.spec().layers {
            layer_kinds.insert(l.name());
        }
        match check_gradients(&net, &x, &labels, 1000 + i, GRAD_STEP, GRAD_FLOOR) {
            Ok(r) => {
                worst = worst.max(r.max_rel_error);
                checked += r.n_checked;
            }
            Err(e) => return check(false, format!("case {i}: {e}")),
        }
    }
    check(
        worst < GRAD_REL_TOL && layer_kinds.len() == 6,
        format!(
            "25 models, {} layer types, {checked} params, max rel err {worst:.3e} < {GRAD_REL_TOL:e}",
            layer_kinds.len()
        ),
    )
}

// 3. Segment geometry.

fn feature_shape() -> Outcome {
    let sr = 22050u32;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<f32> = (0..30 * sr as usize)
        .map(|i| (0.3 * (i as f64 * 0.05).sin() + 0.05 * rng.gen_range(-1.0..1.0)) as f32)
        .collect();
    let clip = AudioClip::new(samples, sr);
    let segs = match extract_mfcc_segments(&clip, &MfccParams::default()) {
        Ok(s) => s,
        Err(e) => return check(false, e.to_string()),
    };
    let dims: Vec<(usize, usize)> = segs.iter().map(|s| s.matrix.dim()).collect();
    let ok = segs.len() == 10 && dims.iter().all(|&d| d == (130, 13));
    check(ok, format!("{} segments of {:?}; expected 10 x (130, 13), exact", segs.len(), dims.first()))
}

// 4. DSP invariants.

fn dsp_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut parseval = 0.0f64;
    let mut frames = 0;
    for trial in 0..200 {
        let n_fft = 1usize << rng.gen_range(3..=11);
        let window = if trial % 2 == 0 { Window::Rectangular } else { Window::Hann };
        let count = rng.gen_range(1..=4);
        let amp = 10f64.powf(rng.gen_range(-3.0..2.0));
        let x: Vec<f64> = (0..n_fft * count).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
        let p = StftParams {
            n_fft,
            hop_length: n_fft,
            window,
            centered: false,
        };
        let w = match window {
            Window::Hann => hann_window(n_fft),
            Window::Rectangular => vec![1.0; n_fft],
        };
        let s = stft(&x, &p).expect("stft");
        for (t, row) in s.rows().into_iter().enumerate() {
            let time: f64 = x[t * n_fft..(t + 1) * n_fft].iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum();
            let freq = one_sided_energy(&row.to_vec(), n_fft);
            parseval = parseval.max(((freq - time) / time).abs());
            frames += 1;
        }
    }

    let mut dct = 0.0f64;
    for _ in 0..50 {
        let (r, c) = (rng.gen_range(1..20), rng.gen_range(2..200));
        let x = Array2::from_shape_fn((r, c), |_| rng.gen_range(-100.0..100.0));
        let back = idct_ii_ortho(&dct_ii_ortho(&x, c));
        dct = dct.max((&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    let htk = (hz_to_mel(1000.0, MelScale::Htk) - 1000.0).abs();
    check(
        parseval < PARSEVAL_REL_TOL && dct < DCT_ROUND_TRIP_TOL && htk < HTK_1000_TOL,
        format!(
            "parseval {parseval:.2e} < {PARSEVAL_REL_TOL:e} over {frames} frames; dct {dct:.2e} < {DCT_ROUND_TRIP_TOL:e}; |htk(1000)-1000| {htk:.4} < {HTK_1000_TOL}"
        ),
    )
}

// 5. Stump oracle.

#[derive(Debug, PartialEq)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Exhaustive search over every feature and every distinct value as a
/// `<=` threshold. Strict improvement in (feature, threshold) order, so ties
/// go to the lowest feature then the lowest threshold.
fn oracle_stump(x: &Array2<f64>, y: &[f64]) -> Option<Stump> {
    let n = y.len() as f64;
    let total: f64 = y.iter().sum();
    let min_gain = 1e-12 * y.iter().map(|t| t * t).sum::<f64>();
    let mut best: Option<(f64, Stump)> = None;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        values.pop();
        for &v in &values {
            let (mut sl, mut nl) = (0.0, 0.0);
            for (i, &t) in y.iter().enumerate() {
                if x[[i, f]] <= v {
                    sl += t;
                    nl += 1.0;
                }
            }
            let sr = total - sl;
            let nr = n - nl;
            let gain = sl * sl / nl + sr * sr / nr - total * total / n;
            if gain > min_gain && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((
                    gain,
                    Stump {
                        feature: f,
                        threshold: v,
                        left: sl / nl,
                        right: sr / nr,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

fn tree_stump(x: &Array2<f64>, y: &[f64]) -> Option<Stump> {
    let binned = BinnedMatrix::new(x, None);
    let tree = fit_regression_tree(
        &binned,
        y,
        None,
        TreeParams {
            max_depth: 1,
            min_samples_leaf: 1,
            lambda: 0.0,
        },
    );
    match tree.nodes[0] {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let value = |i: usize| match tree.nodes[i] {
                TreeNode::Leaf { value, .. } => value,
                TreeNode::Split { .. } => f64::NAN,
            };
            Some(Stump {
                feature,
                threshold,
                left: value(left),
                right: value(right),
            })
        }
        TreeNode::Leaf { .. } => None,
    }
}

/// Instance `i`: even instances use small integers (exact sums, many real
/// ties), odd ones continuous values.
fn stump_instance(i: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
    let rows = rng.gen_range(2..=100);
    let cols = rng.gen_range(1..=5);
    let discrete = i % 2 == 0;
    let x = Array2::from_shape_fn((rows, cols), |_| {
        if discrete {
            rng.gen_range(0..6) as f64
        } else {
            rng.gen_range(-1.0..1.0)
        }
    });
    let y = (0..rows)
        .map(|_| if discrete { rng.gen_range(-3..=3) as f64 } else { rng.gen_range(-2.0..2.0) })
        .collect();
    (x, y)
}

fn stumps() -> (Outcome, String) {
    let mut mismatches = Vec::new();
    let mut fingerprint = String::new();
    for i in 0..50 {
        let (x, y) = stump_instance(i);
        let got = tree_stump(&x, &y);
        let want = oracle_stump(&x, &y);
        let same = match (&got, &want) {
            (Some(g), Some(w)) => {
                g.feature == w.feature
                    && g.threshold == w.threshold
                    && (g.left - w.left).abs() <= LEAF_VALUE_TOL
                    && (g.right - w.right).abs() <= LEAF_VALUE_TOL
            }
            (None, None) => true,
            _ => false,
        };
        if !same {
            mismatches.push(i);
        }
        fingerprint.push_str(&format!("{got:?}\n"));
    }
    (
        check(
            mismatches.is_empty(),
            format!("50 instances, mismatches {mismatches:?}; split exact, leaves within {LEAF_VALUE_TOL:e}"),
        ),
        fingerprint,
    )
}

// 6. Boosting behavior.

fn regression_suite() -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Array2<f64> = Array2::from_shape_fn((300, 4), |_| rng.gen_range(-2.0..2.0));
    let y = (0..300)
        .map(|i| (x[[i, 0]] * 1.5).sin() + 0.5 * x[[i, 1]] * x[[i, 1]] - x[[i, 2]] + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    (x, y)
}

fn boosting() -> (Outcome, String) {
    let (x, y) = regression_suite();
    let cfg = GbdtConfig {
        n_rounds: 50,
        max_depth: 3,
        mode: BoostMode::Regression,
        step: StepRule::LineSearch,
        ..Default::default()
    };
    let reg = fit_gbm_regression(&x, &y, &cfg).expect("regression fit");
    let rises = reg.train_mse.windows(2).filter(|w| w[1] > w[0]).count();
    let (first, last) = (reg.train_mse[0], *reg.train_mse.last().unwrap());

    let xs = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 * 0.25);
    let ys: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
    let ccfg = GbdtConfig {
        n_rounds: 20,
        learning_rate: 0.3,
        max_depth: 2,
        ..Default::default()
    };
    let clf = fit_boosted(&xs, &ys, 2, &ccfg).expect("classifier fit");
    let pred = clf.predict(&xs).expect("predict");
    let acc = pred.iter().zip(&ys).filter(|(p, y)| p == y).count() as f64 / ys.len() as f64;

    let fingerprint = format!(
        "{}\n{}\n",
        serde_json::to_string(&reg).unwrap(),
        serde_json::to_string(&clf).unwrap()
    );
    (
        check(
            reg.trees.len() == 50 && reg.train_mse.len() == 51 && rises == 0 && acc == 1.0,
            format!(
                "line-search mse {first:.4} -> {last:.4} over {} rounds, {rises} increases (0 allowed); separable 2-class accuracy {acc} after 20 rounds (1.0 required)",
                reg.trees.len()
            ),
        ),
        fingerprint,
    )
}

// 7. Metrics.

fn metrics() -> (Outcome, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k = 5;
    let labels: Vec<usize> = (0..500).map(|i| i % k).collect();
    let preds: Vec<usize> = labels.iter().map(|&l| if rng.gen_bool(0.7) { l } else { rng.gen_range(0..k) }).collect();
    let conf = confusion_proportional(&preds, &labels, k).expect("confusion");
    let row_err = conf.matrix.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0f64, f64::max);

    let perfect_scores: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..k).map(|c| if c == l { 0.9 } else { 0.1 / (k - 1) as f64 }).collect())
        .collect();
    let perfect = roc_auc_ovr(&perfect_scores, &labels).expect("auc").macro_auc;
    let perfect_binary = binary_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]);

    // Positives score 0.35 and 0.8, negatives 0.1 and 0.4: three of the four
    // positive/negative pairs are ordered correctly.
    let four = binary_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]);

    let mut inside = 0;
    let mut aucs = Vec::new();
    for seed in 0..100 {
        let mut r = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let pos: Vec<bool> = (0..1000).map(|_| r.gen_bool(0.5)).collect();
        let scores: Vec<f64> = (0..1000).map(|_| r.gen::<f64>()).collect();
        let a = binary_auc(&scores, &pos).expect("both classes present");
        if (RANDOM_AUC_RANGE.0..=RANDOM_AUC_RANGE.1).contains(&a) {
            inside += 1;
        }
        aucs.push(a);
    }
    let ok = row_err <= CONFUSION_ROW_TOL && perfect == 1.0 && perfect_binary == Some(1.0) && four == Some(0.75) && inside >= RANDOM_AUC_MIN_SEEDS;
    (
        check(
            ok,
            format!(
                "row-sum err {row_err:.1e} <= {CONFUSION_ROW_TOL:e}; perfect auc {perfect}; 4-sample auc {four:?} (0.75); random auc in {RANDOM_AUC_RANGE:?} for {inside}/100 (>= {RANDOM_AUC_MIN_SEEDS})"
            ),
        ),
        format!("{:?}\n{aucs:?}\n", conf.matrix),
    )
}

// 8. End to end.

struct Smoke {
    accuracy: f64,
    auc: f64,
    artifacts: Vec<(String, Vec<u8>)>,
}

fn smoke_run(root: &Path) -> Result<Smoke, String> {
    let data = root.join("corpus");
    let feats = root.join("features");
    let model_dir = root.join("model");
    let eval_dir = root.join("eval");
    generate_corpus(&data, &SyntheticSpec::default()).map_err(|e| e.to_string())?;
    let params = ExtractParams {
        n_segments: 2,
        track_seconds: 6.0,
        ..Default::default()
    };
    let caches = cmd_extract(&ExtractOptions {
        dataset: data,
        out: feats,
        features: vec![FeatureKind::Mfcc],
        params,
        threads: None,
    })
    .map_err(|e| e.to_string())?;
    let cache = caches.first().cloned().ok_or("no cache written")?;
    let mut opts = TrainOptions::new(cache.clone(), ModelKind::Gbdt, model_dir);
    opts.seed = 42;
    opts.gbdt.n_rounds = 50;
    let trained = cmd_train(&opts).map_err(|e| e.to_string())?;
    let report = cmd_evaluate(&trained.model_path, &cache, "test", &eval_dir).map_err(|e| e.to_string())?;
    let mut artifacts = Vec::new();
    for p in [
        trained.model_path.clone(),
        trained.model_path.with_file_name("split.json"),
        eval_dir.join("report.json"),
        eval_dir.join("confusion.csv"),
        eval_dir.join("confusion.ppm"),
    ] {
        let bytes = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        artifacts.push((p.file_name().unwrap().to_string_lossy().into_owned(), bytes));
    }
    Ok(Smoke {
        accuracy: report.accuracy,
        auc: report.auc_macro,
        artifacts,
    })
}

fn smoke(root: &Path) -> (Outcome, Option<Smoke>) {
    match smoke_run(root) {
        Ok(s) => {
            let ok = s.accuracy >= SMOKE_MIN_ACCURACY && s.auc >= SMOKE_MIN_AUC;
            (
                check(
                    ok,
                    format!(
                        "test accuracy {:.4} >= {SMOKE_MIN_ACCURACY}, macro auc {:.4} >= {SMOKE_MIN_AUC}",
                        s.accuracy, s.auc
                    ),
                ),
                Some(s),
            )
        }
        Err(e) => (check(false, e), None),
    }
}

// 9. Full dataset targets and the mel-spectrogram convergence check.

fn gtzan_targets(root: &Path, work: &Path) -> Vec<(String, Outcome)> {
    let feats = work.join("features");
    let caches = match cmd_extract(&ExtractOptions {
        dataset: root.to_path_buf(),
        out: feats,
        features: vec![FeatureKind::Mfcc],
        params: ExtractParams::default(),
        threads: None,
    }) {
        Ok(c) => c,
        Err(e) => return vec![("9 gtzan extract".into(), check(false, e.to_string()))],
    };
    let cache = caches[0].clone();
    let mut out = Vec::new();
    for (kind, min) in [(ModelKind::Gbdt, GTZAN_GBDT_MIN), (ModelKind::MfccCnn, GTZAN_MFCC_CNN_MIN)] {
        let dir = work.join(kind.as_str());
        let mut opts = TrainOptions::new(cache.clone(), kind, dir.join("model"));
        opts.seed = 42;
        opts.gbdt.n_rounds = 300;
        opts.gbdt.max_depth = 6;
        let result = cmd_train(&opts).and_then(|t| cmd_evaluate(&t.model_path, &cache, "test", &dir.join("eval")));
        let outcome = match result {
            Ok(r) => check(
                r.accuracy >= min.0 && r.auc_macro >= min.1,
                format!("test accuracy {:.4} >= {}, macro auc {:.4} >= {}", r.accuracy, min.0, r.auc_macro, min.1),
            ),
            Err(e) => check(false, e.to_string()),
        };
        out.push((format!("9 gtzan {}", kind.as_str()), outcome));
    }
    out
}

/// 60 rendered mel images of 3 s synthetic clips (6 per genre); 50 train,
/// 10 validation, default batch size.
fn melspec_convergence(root: &Path) -> Outcome {
    let data = root.join("corpus");
    let spec = SyntheticSpec {
        clips_per_class: 6,
        seconds: 3.0,
        ..Default::default()
    };
    generate_corpus(&data, &spec).expect("corpus");
    let caches = cmd_extract(&ExtractOptions {
        dataset: data,
        out: root.join("features"),
        features: vec![FeatureKind::Melspec],
        params: ExtractParams {
            n_segments: 1,
            track_seconds: 3.0,
            ..Default::default()
        },
        threads: None,
    })
    .expect("extract");
    let cache = FeatureCache::read(&caches[0]).expect("cache");
    let labels = cache.labels.iter().map(|&l| l as usize).collect();
    let set = SampleSet::new(cache.meta.dims[1..].to_vec(), cache.data, labels).expect("sample set");
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) = (0..set.len()).partition(|i| i % 6 != 5);
    let mut net = Network::new(build_melspec_cnn(), 9).expect("network");
    let cfg = TrainConfig {
        max_epochs: 3,
        seed: 9,
        ..Default::default()
    };
    match train(&mut net, &set.subset(&train_idx), &set.subset(&val_idx), &cfg) {
        Ok(h) => {
            let l = &h.train_loss;
            let decreasing = l.len() == 3 && l.windows(2).all(|w| w[1] < w[0]);
            check(
                decreasing,
                format!("melspec-cnn training loss {l:.4?} strictly decreasing over 3 epochs ({} train images)", train_idx.len()),
            )
        }
        Err(e) => check(false, e.to_string()),
    }
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let work = tempfile::tempdir().expect("tempdir");

    suite.run("1 architecture", secs(1), architecture);
    suite.run("2 gradients", secs(60), gradients);
    suite.run("3 feature shape", secs(5), feature_shape);
    suite.run("4 dsp invariants", secs(10), dsp_invariants);

    let mut first = Vec::new();
    suite.run("5 gbdt stump oracle", secs(30), || {
        let (o, f) = stumps();
        first.push(f);
        o
    });
    suite.run("6 boosting", secs(60), || {
        let (o, f) = boosting();
        first.push(f);
        o
    });
    suite.run("7 metrics", secs(60), || {
        let (o, f) = metrics();
        first.push(f);
        o
    });
    let mut smoke_first = None;
    suite.run("8 synthetic end to end", secs(300), || {
        let (o, s) = smoke(&work.path().join("run1"));
        smoke_first = s;
        o
    });

    match std::env::var_os("GENREFORGE_GTZAN").map(PathBuf::from) {
        Some(root) => {
            let results = std::cell::RefCell::new(None);
            suite.run("9 gtzan extract+train", secs(3 * 3600), || {
                let r = gtzan_targets(&root, &work.path().join("gtzan"));
                let ok = r.iter().all(|(_, o)| matches!(o.status, Status::Pass));
                *results.borrow_mut() = Some(r);
                check(ok, "see per-model lines".into())
            });
            for (id, o) in results.into_inner().unwrap_or_default() {
                suite.run(&id, secs(3 * 3600), || o);
            }
        }
        None => suite.run("9 gtzan targets", secs(1), || Outcome {
            status: Status::Skip,
            detail: "GENREFORGE_GTZAN not set".into(),
        }),
    }
    suite.run("9 melspec convergence", secs(300), || melspec_convergence(&work.path().join("mel")));

    suite.run("10 determinism", secs(420), || {
        let second = [stumps().1, boosting().1, metrics().1];
        let mut diffs: Vec<String> = ["5", "6", "7"]
            .iter()
            .zip(first.iter().zip(&second))
            .filter(|(_, (a, b))| a != b)
            .map(|(id, _)| id.to_string())
            .collect();
        let again = smoke_run(&work.path().join("run2"));
        match (&smoke_first, &again) {
            (Some(a), Ok(b)) => {
                for ((name, x), (_, y)) in a.artifacts.iter().zip(&b.artifacts) {
                    if x != y {
                        diffs.push(name.clone());
                    }
                }
            }
            _ => diffs.push("8 (run failed)".into()),
        }
        check(
            diffs.is_empty() && first.len() == 3,
            format!("criteria 5-8 rerun with same seeds; byte differences: {diffs:?}"),
        )
    });

    println!("{} failure(s)", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
