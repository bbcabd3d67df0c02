use std::fs;
use std::path::Path;

use genreforge::eval::parse_curves_csv;
use genreforge::pipeline::{
    cmd_evaluate, cmd_extract, cmd_train, generate_corpus, ExtractOptions, ExtractParams, FeatureKind, ModelKind, PipelineError, SyntheticSpec,
    TrainOptions,
};

fn extract(root: &Path, features: Vec<FeatureKind>) -> Vec<std::path::PathBuf> {
    let data = root.join("corpus");
    generate_corpus(
        &data,
        &SyntheticSpec {
            clips_per_class: 2,
            seconds: 6.0,
            ..Default::default()
        },
    )
    .unwrap();
    cmd_extract(&ExtractOptions {
        dataset: data,
        out: root.join("feats"),
        features,
        params: ExtractParams {
            n_segments: 2,
            track_seconds: 6.0,
            ..Default::default()
        },
        threads: Some(1),
    })
    .unwrap()
}

#[test]
fn mfcc_cnn_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cache = extract(dir.path(), vec![FeatureKind::Mfcc]).remove(0);
    let out = dir.path().join("model");
    let mut opts = TrainOptions::new(cache.clone(), ModelKind::MfccCnn, out.clone());
    opts.cnn.max_epochs = 2;
    opts.cnn.batch_size = 8;
    let trained = cmd_train(&opts).unwrap();
    assert_eq!(trained.param_count, Some(45_514));
    let history = trained.history.unwrap();
    assert_eq!(history.train_loss.len(), 2);
    for f in ["model.json", "model.bin", "split.json", "history.json", "curves.csv", "run.log.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let curves = parse_curves_csv(&fs::read_to_string(out.join("curves.csv")).unwrap()).unwrap();
    assert_eq!(curves.len(), 2);

    let eval = dir.path().join("eval");
    let report = cmd_evaluate(&trained.model_path, &cache, "all", &eval).unwrap();
    assert_eq!(report.n_samples, 40);
    assert!(report.accuracy >= 0.0 && report.accuracy <= 1.0);
    assert!(eval.join("curves.csv").exists());

    // same seed, same bytes
    let again = dir.path().join("again");
    let mut opts2 = TrainOptions::new(cache, ModelKind::MfccCnn, again.clone());
    opts2.cnn = opts.cnn.clone();
    cmd_train(&opts2).unwrap();
    assert_eq!(fs::read(out.join("model.bin")).unwrap(), fs::read(again.join("model.bin")).unwrap());
}

#[test]
fn model_and_cache_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let caches = extract(dir.path(), vec![FeatureKind::Mfcc, FeatureKind::Melspec]);
    let (mfcc, mel) = (&caches[0], &caches[1]);
    let gbdt_on_mel = TrainOptions::new(mel.clone(), ModelKind::Gbdt, dir.path().join("g"));
    assert!(matches!(cmd_train(&gbdt_on_mel), Err(PipelineError::CacheMismatch(_))));
    let mel_cnn_on_mfcc = TrainOptions::new(mfcc.clone(), ModelKind::MelspecCnn, dir.path().join("m"));
    assert!(matches!(cmd_train(&mel_cnn_on_mfcc), Err(PipelineError::CacheMismatch(_))));

    let mut ok = TrainOptions::new(mfcc.clone(), ModelKind::Gbdt, dir.path().join("ok"));
    ok.gbdt.n_rounds = 2;
    ok.gbdt.max_depth = 2;
    let trained = cmd_train(&ok).unwrap();
    let err = cmd_evaluate(&trained.model_path, mel, "test", &dir.path().join("e")).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    let err = cmd_evaluate(&trained.model_path, mfcc, "bogus", &dir.path().join("e")).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}
