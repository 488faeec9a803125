mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::tiny_arch;
use efficientad::io::image::save_unit_png;
use efficientad::metrics::EvalReport;
use efficientad::synthetic::{
    clutter_corpus, export_features, generate, reference_backbone, write_dataset, SyntheticConfig,
};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efficientad"))
        .env("RUST_LOG", "warn")
        .env_remove("EFFICIENTAD_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

const ARCH: [&str; 6] = [
    "--image-size",
    "128",
    "--width-divisor",
    "32",
    "--feature-channels",
    "8",
];

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let set = generate(&SyntheticConfig {
            size: 128,
            train_normals: 4,
            test_normals: 2,
            blobs: 2,
            layouts: 1,
            seed: 1,
        });
        write_dataset(&set, &root.join("data")).unwrap();
        let corpus = clutter_corpus(3, 128, 2);
        let backbone = reference_backbone(&tiny_arch(), 3).unwrap();
        export_features(&backbone, &corpus, &root.join("features"), true).unwrap();
        std::fs::create_dir_all(root.join("penalty")).unwrap();
        for (i, img) in clutter_corpus(2, 256, 4).iter().enumerate() {
            save_unit_png(img, &root.join(format!("penalty/{i}.png"))).unwrap();
        }
        Fixture { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> String {
        s(&self.root.join(rel))
    }

    fn distill(&self, out: &str) {
        let (manifest, out) = (self.p("features/manifest.tsv"), self.p(out));
        let mut args = vec![
            "distill",
            "--manifest",
            &manifest,
            "--out",
            &out,
            "--iterations",
            "3",
            "--batch-size",
            "2",
        ];
        args.extend(ARCH);
        ok(&args);
    }

    fn train(&self, teacher: &str, out: &str) {
        ok(&[
            "train",
            "--dataset",
            &self.p("data"),
            "--teacher",
            &self.p(teacher),
            "--penalty-dir",
            &self.p("penalty"),
            "--out",
            &self.p(out),
            "--iterations",
            "3",
            "--p-hard",
            "0.99",
            "--quantile-a",
            "0.8",
            "--quantile-b",
            "0.99",
        ]);
    }

    fn eval(&self, bundle: &str, out: &str) {
        ok(&[
            "eval",
            "--bundle",
            &self.p(bundle),
            "--dataset",
            &self.p("data"),
            "--out",
            &self.p(out),
        ]);
    }
}

fn listed(run_dir: &str) -> Vec<String> {
    let text = std::fs::read_to_string(Path::new(run_dir).join("run.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect()
}

fn read(path: String) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn full_pipeline_is_reproducible() {
    let fx = Fixture::new();
    fx.distill("distill");
    assert_eq!(
        listed(&fx.p("distill")),
        vec!["distill_loss.csv", "teacher.ead1"]
    );

    fx.train("distill/teacher.ead1", "train_a");
    fx.train("distill/teacher.ead1", "train_b");
    assert_eq!(
        listed(&fx.p("train_a")),
        vec!["bundle.ead1", "loss.csv", "train_config.json"]
    );
    let loss = String::from_utf8(read(fx.p("train_a/loss.csv"))).unwrap();
    assert_eq!(loss.lines().count(), 4);
    assert_eq!(
        read(fx.p("train_a/bundle.ead1")),
        read(fx.p("train_b/bundle.ead1"))
    );

    ok(&[
        "infer",
        "--bundle",
        &fx.p("train_a/bundle.ead1"),
        "--input",
        &fx.p("data/test/blob"),
        "--out",
        &fx.p("infer"),
    ]);
    let files = listed(&fx.p("infer"));
    for f in [
        "maps/000.png",
        "maps/000.png.txt",
        "maps/000.ead1",
        "maps/001.ead1",
        "scores.json",
    ] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
        assert!(Path::new(&fx.p("infer")).join(f).exists());
    }
    let scores: serde_json::Value =
        serde_json::from_slice(&read(fx.p("infer/scores.json"))).unwrap();
    assert_eq!(scores.as_array().unwrap().len(), 2);

    fx.eval("train_a/bundle.ead1", "eval_a");
    fx.eval("train_a/bundle.ead1", "eval_b");
    assert_eq!(
        read(fx.p("eval_a/metrics.json")),
        read(fx.p("eval_b/metrics.json"))
    );
    let report = EvalReport::read_json(Path::new(&fx.p("eval_a/metrics.json"))).unwrap();
    assert!((0.0..=1.0).contains(&report.metrics.auroc));
    assert_eq!(report.images.len(), 5);
    assert!(report.metrics.aupro.is_some());
}

#[test]
fn bench_report_echoes_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let mut args = vec![
        "bench",
        "--out",
        &out,
        "--warmup",
        "1",
        "--timed",
        "2",
        "--batch-size",
        "2",
        "--csv",
    ];
    args.extend(ARCH);
    args.extend(["--padding", "false"]);
    ok(&args);
    let v: serde_json::Value = serde_json::from_slice(&read(format!("{out}/bench.json"))).unwrap();
    assert_eq!(v["warmup"], 1);
    assert_eq!(v["timed"], 2);
    assert_eq!(v["padding"], false);
    assert_eq!(v["samples_ms"].as_array().unwrap().len(), 2);
    assert!(v["latency_ms_mean"].as_f64().unwrap() > 0.0);
    let csv = String::from_utf8(read(format!("{out}/latency.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn help_exits_zero() {
    for sub in ["distill", "train", "infer", "eval", "bench"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_one() {
    let out = run(&[
        "train",
        "--dataset",
        "/nonexistent",
        "--teacher",
        "t",
        "--penalty-dir",
        "p",
        "--out",
        "o",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent"));

    let out = run(&["eval", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus-flag"));

    let dir = tempfile::tempdir().unwrap();
    let out_dir = s(dir.path());
    assert_eq!(
        run(&["bench", "--out", &out_dir, "--image-size", "100"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["bench", "--out", &out_dir, "--threads", "zero"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("broken.ead1");
    std::fs::write(&bundle, b"EAD1 but not really").unwrap();
    let out = run(&[
        "infer",
        "--bundle",
        &s(&bundle),
        "--input",
        &s(dir.path()),
        "--out",
        &s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.ead1"));
}
