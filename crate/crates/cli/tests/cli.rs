//! End-to-end tests of the ugcrank binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ugcrank::fixture::{generate_corpus, CorpusSpec};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ugcrank")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(bin())
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// One corpus + generate-pairs + train run shared by the read-only tests.
struct Pipeline {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
    pairs_file: PathBuf,
    checkpoint: PathBuf,
    clean_image: PathBuf,
    distorted_image: PathBuf,
}

static PIPELINE: OnceLock<Pipeline> = OnceLock::new();

fn pipeline() -> &'static Pipeline {
    PIPELINE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            train_studio: 8,
            train_good: 8,
            train_bad: 4,
            val_styles: 3,
            test_clean: 6,
            test_tiered: 0,
            image_size: 64,
            seed: 77,
        };
        let manifest_data = generate_corpus(dir.path(), &spec).unwrap();
        let manifest = dir.path().join("manifest.jsonl");

        let pairs_dir = dir.path().join("pairs");
        let out = run(&[
            "generate-pairs",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            pairs_dir.to_str().unwrap(),
            "--n-pairs",
            "40",
            "--seed",
            "3",
        ]);
        assert_eq!(code(&out), 0, "generate-pairs failed: {}", stderr_of(&out));
        let pairs_file = pairs_dir.join("pairs.jsonl");

        let train_dir = dir.path().join("train");
        let out = run(&[
            "train",
            "--manifest",
            manifest.to_str().unwrap(),
            "--pairs",
            pairs_file.to_str().unwrap(),
            "--out",
            train_dir.to_str().unwrap(),
            "--max-epochs",
            "4",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&out), 0, "train failed: {}", stderr_of(&out));
        let checkpoint = train_dir.join("checkpoint.rnkr");
        assert!(checkpoint.exists());
        assert!(train_dir.join("history.jsonl").exists());
        assert!(train_dir.join("features.ugcf").exists());
        assert!(train_dir.join("run_config.json").exists());

        let clean_image = PathBuf::from(&manifest_data.records[0].path);
        let distorted = manifest_data
            .records
            .iter()
            .find(|r| r.id.starts_with("bad-"))
            .expect("fixture has bad records");
        Pipeline {
            _dir: dir,
            manifest,
            pairs_file,
            checkpoint,
            clean_image,
            distorted_image: PathBuf::from(&distorted.path),
        }
    })
}

#[test]
fn generate_pairs_writes_n_lines_and_reruns_identically() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let args = [
        "generate-pairs",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--n-pairs",
        "10",
        "--seed",
        "9",
    ];
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let pair_path = out_dir.join("pairs.jsonl");
    let first = std::fs::read(&pair_path).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 10);
    assert!(out_dir.join("run_config.json").exists());

    let out = run(&args);
    assert_eq!(code(&out), 0);
    let second = std::fs::read(&pair_path).unwrap();
    assert_eq!(first, second, "re-run changed the pair file");
}

#[test]
fn missing_manifest_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate-pairs",
        "--manifest",
        "/nonexistent/manifest.jsonl",
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--n-pairs",
        "5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr_of(&out).contains("manifest"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn invalid_lr_is_a_usage_error() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--pairs",
        p.pairs_file.to_str().unwrap(),
        "--out",
        dir.path().join("t").to_str().unwrap(),
        "--lr",
        "0.0",
    ]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr_of(&out).contains("lr"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn score_prints_descending_tab_separated_lines() {
    let p = pipeline();
    let second_clean = p.clean_image.parent().unwrap().join("studio-001.png");
    let out = run(&[
        "score",
        "--model",
        p.checkpoint.to_str().unwrap(),
        p.clean_image.to_str().unwrap(),
        second_clean.to_str().unwrap(),
        p.distorted_image.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let stdout = stdout_of(&out);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    let mut prev = f64::INFINITY;
    for line in &lines {
        let (score, path) = line.split_once('\t').expect("score<TAB>path");
        let score: f64 = score.parse().unwrap();
        assert!(score <= prev, "not descending: {stdout}");
        assert!(Path::new(path).exists());
        prev = score;
    }
}

#[test]
fn evaluate_detects_leakage_and_reports_otherwise() {
    let p = pipeline();
    // The corpus manifest doubles as its own train manifest: every test id
    // is "reserved", so this must fail loudly.
    let out = run(&[
        "evaluate",
        "--model",
        p.checkpoint.to_str().unwrap(),
        "--test-manifest",
        p.manifest.to_str().unwrap(),
        "--train-manifest",
        p.manifest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr_of(&out).contains("shares"),
        "stderr: {}",
        stderr_of(&out)
    );

    // Without the overlap the report renders, with baselines.
    let dir = tempfile::tempdir().unwrap();
    let report_dir = dir.path().join("report");
    let out = run(&[
        "evaluate",
        "--model",
        p.checkpoint.to_str().unwrap(),
        "--test-manifest",
        p.manifest.to_str().unwrap(),
        "--baselines",
        "--seed",
        "11",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("ranker"));
    assert!(stdout.contains("baseline-aesthetic"));
    assert!(stdout.contains("baseline-technical"));
    assert!(report_dir.join("report.txt").exists());
    assert!(report_dir.join("run_config.json").exists());
    let json = std::fs::read_to_string(report_dir.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["models"].as_array().unwrap().len(), 3);
}

#[test]
fn distort_applies_a_spec() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out_img = dir.path().join("cropped.png");
    let out = run(&[
        "distort",
        "--input",
        p.clean_image.to_str().unwrap(),
        "--spec",
        r#"{"kind":"vertical_crop","param":0.5,"seed":13}"#,
        "--out",
        out_img.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let img = ugcrank::imgio::load_rgb(&out_img).unwrap();
    assert_eq!((img.width(), img.height()), (64, 32));

    // Structurally invalid spec is a usage error.
    let out = run(&[
        "distort",
        "--input",
        p.clean_image.to_str().unwrap(),
        "--spec",
        r#"{"kind":"grayscale","param":0.5,"seed":1}"#,
        "--out",
        out_img.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn extract_features_builds_a_loadable_store() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("features.ugcf");
    let out = run_env(
        &[
            "extract-features",
            "--manifest",
            p.manifest.to_str().unwrap(),
            "--pairs",
            p.pairs_file.to_str().unwrap(),
            "--out",
            store_path.to_str().unwrap(),
        ],
        "UGCRANK_THREADS",
        "2",
    );
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let store = ugcrank::features::store::FeatureStore::load(&store_path).unwrap();
    assert!(store.len() >= 29, "store holds {} vectors", store.len());
    assert_eq!(store.header.dim, 55);
    assert!(Path::new(&format!("{}.run.json", store_path.display())).exists());
}

#[test]
fn unknown_and_unbuilt_extractors_are_usage_errors() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("f.ugcf");
    let base = [
        "extract-features",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--out",
        store.to_str().unwrap(),
    ];
    let mut with_neural = base.to_vec();
    with_neural.extend(["--extractor", "neural"]);
    let out = run(&with_neural);
    assert_eq!(code(&out), 1);

    let mut with_onnx = base.to_vec();
    with_onnx.extend(["--extractor", "onnx:/m/a.onnx,/m/t.onnx"]);
    let out = run(&with_onnx);
    assert_eq!(code(&out), 1);
    assert!(
        stderr_of(&out).contains("onnx"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn config_file_defaults_yield_to_flags() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"n_pairs": 7, "seed": 21}"#).unwrap();

    let out_a = dir.path().join("a");
    let out = run(&[
        "generate-pairs",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let lines = std::fs::read_to_string(out_a.join("pairs.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 7, "config file n_pairs ignored");

    let out_b = dir.path().join("b");
    let out = run(&[
        "generate-pairs",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--n-pairs",
        "5",
    ]);
    assert_eq!(code(&out), 0);
    let lines = std::fs::read_to_string(out_b.join("pairs.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 5, "flag should override config file");

    // Typos in the config are rejected.
    std::fs::write(&config, r#"{"n_paris": 7}"#).unwrap();
    let out = run(&[
        "generate-pairs",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn train_rerun_reproduces_checkpoint_bytes() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let mut checkpoints = Vec::new();
    for name in ["first", "second"] {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "train",
            "--manifest",
            p.manifest.to_str().unwrap(),
            "--pairs",
            p.pairs_file.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--max-epochs",
            "3",
            "--seed",
            "17",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr_of(&out));
        checkpoints.push(std::fs::read(out_dir.join("checkpoint.rnkr")).unwrap());
    }
    assert_eq!(
        checkpoints[0], checkpoints[1],
        "same seed produced different checkpoints"
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let args = |threads: &'static str| {
        vec![
            "generate-pairs".to_string(),
            "--manifest".into(),
            p.manifest.display().to_string(),
            "--out".into(),
            out_dir.display().to_string(),
            "--n-pairs".into(),
            "30".into(),
            "--seed".into(),
            "4".into(),
            "--threads".into(),
            threads.into(),
        ]
    };
    let single: Vec<String> = args("1");
    let out = Command::new(bin()).args(&single).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let first = std::fs::read(out_dir.join("pairs.jsonl")).unwrap();

    std::fs::remove_dir_all(&out_dir).unwrap();
    let multi: Vec<String> = args("4");
    let out = Command::new(bin()).args(&multi).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let second = std::fs::read(out_dir.join("pairs.jsonl")).unwrap();
    assert_eq!(first, second, "thread count changed the output");
}

#[test]
fn train_reuses_a_prebuilt_feature_store() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("features.ugcf");
    let out = run(&[
        "extract-features",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--pairs",
        p.pairs_file.to_str().unwrap(),
        "--out",
        store.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let train_dir = dir.path().join("train");
    let out = run(&[
        "train",
        "--manifest",
        p.manifest.to_str().unwrap(),
        "--pairs",
        p.pairs_file.to_str().unwrap(),
        "--features",
        store.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--max-epochs",
        "2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(train_dir.join("checkpoint.rnkr").exists());
}
