use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn genreforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genreforge")).args(args).output().expect("spawn genreforge")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(code(&genreforge(&["--help"])), 0);
    assert_eq!(code(&genreforge(&["bogus-subcommand"])), 1);
    assert_eq!(code(&genreforge(&["extract", "--out", "/tmp/x"])), 1, "missing --dataset");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(code(&genreforge(&["--config", p(&cfg), "compare", "x.json"])), 1);
    fs::write(&cfg, "fractions = [0.5, 0.5, 0.5]\n").unwrap();
    assert_eq!(code(&genreforge(&["--config", p(&cfg), "compare", "x.json"])), 1);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    fs::write(&report, "{ not json").unwrap();
    let out = genreforge(&["compare", p(&report)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("report.json"));

    let cache = dir.path().join("mfcc.gfc");
    fs::write(&cache, b"GFC0garbage").unwrap();
    let out = genreforge(&["train", "--features", p(&cache), "--model", "gbdt", "--out", p(&dir.path().join("m"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tiny_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let feats = dir.path().join("feats");
    let model = dir.path().join("model");
    let eval = dir.path().join("eval");
    let ok = |args: &[&str]| {
        let out = genreforge(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(&["synth", "--out", p(&corpus), "--clips", "4", "--seconds", "3"]);
    ok(&[
        "extract",
        "--dataset",
        p(&corpus),
        "--out",
        p(&feats),
        "--features",
        "mfcc",
        "--segments",
        "1",
        "--track-seconds",
        "3",
    ]);
    let cache = feats.join("mfcc.gfc");
    assert!(cache.exists() && feats.join("mfcc.json").exists());
    ok(&[
        "train",
        "--features",
        p(&cache),
        "--model",
        "gbdt",
        "--out",
        p(&model),
        "--rounds",
        "3",
        "--depth",
        "2",
        "--tabularize",
        "mean-std",
    ]);
    let stdout = ok(&[
        "evaluate",
        "--model",
        p(&model.join("model.json")),
        "--features",
        p(&cache),
        "--split",
        "all",
        "--out",
        p(&eval),
    ]);
    assert!(stdout.contains("accuracy"));
    for f in ["report.json", "confusion.csv", "confusion.ppm"] {
        assert!(eval.join(f).exists(), "{f}");
    }
    let table = ok(&["compare", p(&eval.join("report.json"))]);
    assert!(table.starts_with("Model"));

    // missing feature file
    let out = genreforge(&["evaluate", "--model", p(&model.join("model.json")), "--features", p(&dir.path().join("missing.gfc")), "--out", p(&eval)]);
    assert_eq!(code(&out), 1);
}
