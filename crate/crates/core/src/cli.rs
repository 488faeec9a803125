//! Command-line surface: `distill`, `train`, `infer`, `eval` and `bench`.
//!
//! Every command writes into one output directory and finishes by writing
//! `run.json`, which lists the produced files. Exit status is 0 on success,
//! 1 for invalid arguments or inputs, and 2 for failures during the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::bench::{measure_latency, BatchMode, BenchOptions};
use crate::distill::{distill, load_pairs, DistillConfig};
use crate::error::Error;
use crate::inference::{infer, resize_map_to_original, ImageScore};
use crate::io::dataset::{index_dataset, list_images, Label};
use crate::io::image::{decode_unit, load_mask, standardize};
use crate::io::maps::{write_map_ead1, write_map_png16};
use crate::io::{load_bundle, load_teacher, read_manifest, save_bundle, save_teacher};
use crate::metrics::{EvalOptions, Mask};
use crate::model::ModelBundle;
use crate::nets::{ArchConfig, Variant};
use crate::pipeline::{score_images, LabeledImage};
use crate::tensor::{bilinear_resize, set_num_threads, Tensor};
use crate::training::{train, TrainConfig};

/// Environment variable supplying the default worker-thread count.
pub const THREADS_ENV: &str = "EFFICIENTAD_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "efficientad",
    version,
    about = "Student-teacher anomaly detection"
)]
struct Cli {
    /// Worker threads for convolutions and batch-parallel work.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distill a teacher from precomputed backbone features.
    Distill(DistillArgs),
    /// Train student and autoencoder against a distilled teacher.
    Train(TrainArgs),
    /// Write anomaly maps and scores for images.
    Infer(InferArgs),
    /// Score a labeled test split and write metrics.
    Eval(EvalArgs),
    /// Measure latency, throughput, parameters and FLOPs.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    S,
    M,
}

#[derive(Args, Debug, Clone)]
struct ArchArgs {
    /// Network size: s (small) or m (medium).
    #[arg(long, value_enum, default_value = "s")]
    variant: VariantArg,
    /// Zero-padding in convolutions and pooling.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    padding: bool,
    /// Input resolution; a multiple of 64.
    #[arg(long, default_value_t = 256)]
    image_size: usize,
    /// Divides every hidden layer width (1 = full size).
    #[arg(long, default_value_t = 1)]
    width_divisor: usize,
    /// Channels of the teacher feature map.
    #[arg(long, default_value_t = 384)]
    feature_channels: usize,
}

impl ArchArgs {
    fn config(&self) -> ArchConfig {
        ArchConfig {
            variant: match self.variant {
                VariantArg::S => Variant::S,
                VariantArg::M => Variant::M,
            },
            feature_channels: self.feature_channels,
            width_divisor: self.width_divisor,
            image_size: self.image_size,
            padding: self.padding,
        }
    }
}

#[derive(Args, Debug)]
struct DistillArgs {
    /// TSV manifest of image and feature-file paths.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Optimization steps.
    #[arg(long, default_value_t = 60_000)]
    iterations: usize,
    /// Pairs per step.
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Probability of using the gray variant where one was exported.
    #[arg(long, default_value_t = 0.1)]
    gray_prob: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    arch: ArchArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset root with train/good.
    #[arg(long)]
    dataset: PathBuf,
    /// Teacher checkpoint written by `distill`.
    #[arg(long)]
    teacher: PathBuf,
    /// Directory of generic images for the pretraining penalty.
    #[arg(long)]
    penalty_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Optimization steps; the learning-rate drop moves to 95% of this.
    #[arg(long, default_value_t = 70_000)]
    iterations: usize,
    /// Quantile of squared feature differences kept by the hard loss.
    #[arg(long, default_value_t = 0.999)]
    p_hard: f64,
    /// Validation-map quantile mapped to 0.
    #[arg(long, default_value_t = 0.9)]
    quantile_a: f64,
    /// Validation-map quantile mapped to 0.1.
    #[arg(long, default_value_t = 0.995)]
    quantile_b: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Trained bundle written by `train`.
    #[arg(long)]
    bundle: PathBuf,
    /// An image file or a directory of images.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Trained bundle written by `train`.
    #[arg(long)]
    bundle: PathBuf,
    /// Dataset root with test/ and ground_truth/.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// FPR limit for AU-PRO and pixel AU-ROC.
    #[arg(long, default_value_t = 0.3)]
    fpr_limit: f64,
    /// Use this many score bins instead of exact curves.
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Trained bundle; freshly initialized networks are timed if omitted.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Untimed runs before measuring.
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    /// Timed runs.
    #[arg(long, default_value_t = 1000)]
    timed: usize,
    /// Images per timed run.
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Run the images of a batch in parallel instead of one after another.
    #[arg(long)]
    parallel_batch: bool,
    /// Also write individual latencies as CSV.
    #[arg(long)]
    csv: bool,
    /// Seed of the random weights and input image.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    arch: ArchArgs,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_file(flag: &str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("--{flag}: {} is not a file", path.display())))
    }
}

fn require_dir(flag: &str, path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "--{flag}: {} is not a directory",
            path.display()
        )))
    }
}

/// Configuration checks are usage errors, not runtime failures.
fn validated(r: crate::Result<()>) -> Result<(), Failure> {
    r.map_err(|e| usage(e.to_string()))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    command: &'a str,
    files: Vec<String>,
}

/// Tracks files written into the output directory.
struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> Result<RunDir, Failure> {
        std::fs::create_dir_all(root).map_err(|e| Failure::Runtime(Error::io(root, e)))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf, Failure> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::Runtime(Error::io(parent, e)))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn finish(mut self, command: &str) -> Result<(), Failure> {
        self.files.sort();
        let manifest = RunManifest {
            schema_version: 1,
            command,
            files: self.files,
        };
        let path = self.root.join("run.json");
        write_json(&path, &manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Runtime(Error::format(path, e.to_string())))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

fn run_distill(args: DistillArgs) -> Result<(), Failure> {
    require_file("manifest", &args.manifest)?;
    let config = DistillConfig {
        arch: args.arch.config(),
        iterations: args.iterations,
        batch_size: args.batch_size,
        gray_prob: args.gray_prob,
        seed: args.seed,
        ..DistillConfig::default()
    };
    validated(config.arch.validate())?;
    if config.batch_size == 0 {
        return Err(usage("--batch-size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&config.gray_prob) {
        return Err(usage("--gray-prob must lie in [0, 1]"));
    }
    let rows = read_manifest(&args.manifest)?;
    let f = config.arch.feature_size();
    let pairs = load_pairs(
        &rows,
        config.arch.image_size,
        &[config.arch.feature_channels, f, f],
    )?;
    info!("distilling from {} pairs", pairs.len());
    let output = distill(&pairs, &config)?;
    let mut run = RunDir::create(&args.out)?;
    save_teacher(&output.teacher, &config.arch, &run.path("teacher.ead1")?)?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in output.losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    let loss_path = run.path("distill_loss.csv")?;
    std::fs::write(&loss_path, csv).map_err(|e| Failure::Runtime(Error::io(&loss_path, e)))?;
    run.finish("distill")
}

fn run_train(args: TrainArgs) -> Result<(), Failure> {
    require_dir("dataset", &args.dataset)?;
    require_file("teacher", &args.teacher)?;
    require_dir("penalty-dir", &args.penalty_dir)?;
    let index = index_dataset(&args.dataset).map_err(|e| usage(e.to_string()))?;
    let (teacher, arch) = load_teacher(&args.teacher)?;
    let config = TrainConfig {
        arch,
        p_hard: args.p_hard,
        quantile_a: args.quantile_a,
        quantile_b: args.quantile_b,
        seed: args.seed,
        ..TrainConfig::default()
    }
    .with_iterations(args.iterations);
    validated(config.validate())?;
    let penalty_paths = list_images(&args.penalty_dir)?;
    if penalty_paths.is_empty() {
        return Err(usage(format!(
            "--penalty-dir: no images in {}",
            args.penalty_dir.display()
        )));
    }
    let images = index
        .train
        .iter()
        .map(|p| crate::io::load_unit_image(p, arch.image_size))
        .collect::<crate::Result<Vec<_>>>()?;
    let penalty = penalty_paths
        .iter()
        .map(|p| decode_unit(p))
        .collect::<crate::Result<Vec<_>>>()?;
    let output = train(teacher, &images, &penalty, &config)?;
    let mut run = RunDir::create(&args.out)?;
    save_bundle(&output.bundle, &run.path("bundle.ead1")?)?;
    output.history.write_csv(&run.path("loss.csv")?)?;
    write_json(&run.path("train_config.json")?, &config)?;
    run.finish("train")
}

fn run_infer(args: InferArgs) -> Result<(), Failure> {
    require_file("bundle", &args.bundle)?;
    let inputs = if args.input.is_dir() {
        list_images(&args.input)?
    } else if args.input.is_file() {
        vec![args.input.clone()]
    } else {
        return Err(usage(format!(
            "--input: {} does not exist",
            args.input.display()
        )));
    };
    let bundle = load_bundle(&args.bundle)?;
    let s = bundle.arch.image_size;
    let mut run = RunDir::create(&args.out)?;
    let mut scores = Vec::new();
    for path in &inputs {
        let unit = decode_unit(path)?;
        let (_, h, w) = unit.chw()?;
        let result = infer(&bundle, &standardize(&bilinear_resize(&unit, s, s)?))?;
        let map = resize_map_to_original(&result.combined, h, w)?;
        let name = stem(path);
        write_map_png16(&map, &run.path(&format!("maps/{name}.png"))?)?;
        run.files.push(format!("maps/{name}.png.txt"));
        write_map_ead1(&map, &run.path(&format!("maps/{name}.ead1"))?)?;
        scores.push(ImageScore {
            path: path.display().to_string(),
            score: result.image_score,
        });
    }
    write_json(&run.path("scores.json")?, &scores)?;
    run.finish("infer")
}

fn labeled_test_set(root: &Path) -> Result<Vec<LabeledImage>, Failure> {
    let index = index_dataset(root).map_err(|e| usage(e.to_string()))?;
    if index.test.is_empty() {
        return Err(usage(format!(
            "--dataset: no test images under {}",
            root.display()
        )));
    }
    let mut out = Vec::with_capacity(index.test.len());
    for entry in &index.test {
        let image = decode_unit(&entry.path)?;
        let mask = match &entry.mask {
            Some(p) => {
                let (data, h, w) = load_mask(p)?;
                Some(Mask::new(h, w, data)?)
            }
            None => None,
        };
        out.push(LabeledImage {
            name: format!("{}/{}", entry.category, stem(&entry.path)),
            category: entry.category.clone(),
            anomalous: entry.label == Label::Anomalous,
            image,
            mask,
        });
    }
    Ok(out)
}

fn run_eval(args: EvalArgs) -> Result<(), Failure> {
    require_file("bundle", &args.bundle)?;
    require_dir("dataset", &args.dataset)?;
    if !(args.fpr_limit > 0.0 && args.fpr_limit <= 1.0) {
        return Err(usage("--fpr-limit must lie in (0, 1]"));
    }
    if args.bins == Some(0) {
        return Err(usage("--bins must be at least 1"));
    }
    let test = labeled_test_set(&args.dataset)?;
    let bundle = load_bundle(&args.bundle)?;
    let set = score_images(&bundle, &test)?;
    let options = EvalOptions {
        pro_fpr_limit: args.fpr_limit,
        pixel_fpr_limit: args.fpr_limit,
        bins: args.bins,
    };
    let config = serde_json::json!({
        "bundle": args.bundle.display().to_string(),
        "dataset": args.dataset.display().to_string(),
        "arch": bundle.arch,
        "quantiles": bundle.quantiles,
    });
    let report = set.evaluate(&options, config)?;
    let mut run = RunDir::create(&args.out)?;
    report.write_json(&run.path("metrics.json")?)?;
    run.finish("eval")
}

fn run_bench(args: BenchArgs, threads: usize) -> Result<(), Failure> {
    if args.timed == 0 || args.batch_size == 0 {
        return Err(usage("--timed and --batch-size must be at least 1"));
    }
    let bundle = match &args.bundle {
        Some(p) => {
            require_file("bundle", p)?;
            load_bundle(p)?
        }
        None => {
            let arch = args.arch.config();
            validated(arch.validate())?;
            ModelBundle::init(arch, args.seed)?
        }
    };
    let s = bundle.arch.image_size;
    let image = standardize(&Tensor::filled(&[3, s, s], 0.5));
    let options = BenchOptions {
        warmup: args.warmup,
        timed: args.timed,
        batch_size: args.batch_size,
        batch_mode: if args.parallel_batch {
            BatchMode::Parallel
        } else {
            BatchMode::Sequential
        },
    };
    let mut report = measure_latency(&bundle, &image, &options)?;
    report.threads = threads;
    let mut run = RunDir::create(&args.out)?;
    report.write_json(&run.path("bench.json")?)?;
    if args.csv {
        report.write_samples_csv(&run.path("latency.csv")?)?;
    }
    run.finish("bench")
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.max(1);
    set_num_threads(threads);
    // Fails only if a global pool already exists, e.g. when called twice in-process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let result = match cli.command {
        Command::Distill(a) => run_distill(a),
        Command::Train(a) => run_train(a),
        Command::Infer(a) => run_infer(a),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench(a, threads),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
