//! Times inference of a freshly initialized model and prints parameter and FLOP counts.
//!
//! cargo run --release --example latency_bench -- [image_size] [width_divisor]

use efficientad::bench::{count_flops, count_params, measure_latency, BatchMode, BenchOptions};
use efficientad::{ArchConfig, ModelBundle, Tensor};

fn main() -> efficientad::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let arch = ArchConfig {
        image_size: args.next().unwrap_or(128),
        width_divisor: args.next().unwrap_or(8),
        feature_channels: 32,
        ..ArchConfig::default()
    };
    let bundle = ModelBundle::init(arch, 0)?;
    let s = arch.image_size;
    let image = Tensor::filled(&[3, s, s], 0.0);
    let options = BenchOptions {
        warmup: 5,
        timed: 20,
        batch_size: 4,
        batch_mode: BatchMode::Sequential,
    };
    let report = measure_latency(&bundle, &image, &options)?;
    let flops = count_flops(&bundle)?;
    println!(
        "{} parameters, {:.3} GFLOPs per image",
        count_params(&bundle),
        flops.total as f64 / 1e9
    );
    println!(
        "latency {:.2} +- {:.2} ms, throughput {:.1} img/s",
        report.latency_ms_mean, report.latency_ms_std, report.throughput_img_per_s
    );
    Ok(())
}
