//! Latency, throughput, parameter and FLOP accounting.
//!
//! FLOPs follow the 2·MAC convention: a convolution costs
//! `2 * C_in * Kh * Kw` per output element plus one per element for the bias
//! and one for a ReLU. Pooling, resizing and other elementwise steps count
//! one operation per output element.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::infer;
use crate::model::ModelBundle;
use crate::nets::{Layer, Network, Variant};
use crate::tensor::{num_threads, Activation, ConvSpec, Tensor};

/// FLOPs of one convolution producing `out_h`×`out_w` maps from `in_channels`.
pub fn conv_flops(spec: &ConvSpec, in_channels: usize, out_h: usize, out_w: usize) -> u64 {
    let (kh, kw) = spec.kernel;
    let out = (spec.out_channels * out_h * out_w) as u64;
    let relu = u64::from(spec.activation == Activation::Relu);
    out * (2 * (in_channels * kh * kw) as u64 + 1 + relu)
}

/// Forward FLOPs of `net` on a 3×`h`×`w` input.
pub fn network_flops(net: &Network, h: usize, w: usize) -> Result<u64> {
    let shapes = net
        .shape_trace(h, w)
        .ok_or_else(|| Error::invalid("count_flops", format!("input {h}x{w} too small")))?;
    let mut total = 0u64;
    for (layer, pair) in net.layers().iter().zip(shapes.windows(2)) {
        let (cin, _, _) = pair[0];
        let (c, oh, ow) = pair[1];
        let out = (c * oh * ow) as u64;
        total += match layer {
            Layer::Conv { spec, .. } => conv_flops(spec, cin, oh, ow),
            Layer::AvgPool(_) | Layer::Resize { .. } => out,
            // Identity at inference time.
            Layer::Dropout { .. } => 0,
        };
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    pub teacher: u64,
    pub student: u64,
    pub autoencoder: u64,
    /// Teacher normalization, squared differences, map resizing,
    /// normalization and combination.
    pub maps: u64,
    pub total: u64,
}

/// FLOPs of one full inference on an `image_size` input.
pub fn count_flops(bundle: &ModelBundle) -> Result<FlopCount> {
    let s = bundle.arch.image_size;
    let teacher = network_flops(&bundle.teacher, s, s)?;
    let student = network_flops(&bundle.student, s, s)?;
    let autoencoder = network_flops(&bundle.autoencoder, s, s)?;
    let c = bundle.arch.feature_channels as u64;
    let f = bundle.arch.feature_size() as u64;
    let feat = c * f * f;
    let pixels = (s * s) as u64;
    // normalize teacher (2), two squared-difference means (3 each),
    // two resizes, two normalizations, one combination.
    let maps = 2 * feat + 2 * 3 * feat + 2 * pixels + 2 * pixels + pixels;
    Ok(FlopCount {
        teacher,
        student,
        autoencoder,
        maps,
        total: teacher + student + autoencoder + maps,
    })
}

/// Weights and biases of all three networks.
pub fn count_params(bundle: &ModelBundle) -> usize {
    bundle.param_count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub timed: usize,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            warmup: 1000,
            timed: 1000,
            batch_size: 16,
            batch_mode: BatchMode::Sequential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub variant: Variant,
    pub padding: bool,
    pub image_size: usize,
    pub threads: usize,
    pub warmup: usize,
    pub timed: usize,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub throughput_img_per_s: f64,
    pub param_count: usize,
    pub flops: FlopCount,
    /// Individual single-image latencies in milliseconds.
    pub samples_ms: Vec<f64>,
}

impl BenchReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("run,latency_ms\n");
        for (i, s) in self.samples_ms.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn run_batch(bundle: &ModelBundle, image: &Tensor, size: usize, mode: BatchMode) -> Result<()> {
    match mode {
        BatchMode::Sequential => (0..size).try_for_each(|_| infer(bundle, image).map(drop)),
        BatchMode::Parallel => (0..size)
            .into_par_iter()
            .try_for_each(|_| infer(bundle, image).map(drop)),
    }
}

/// Times full inference (networks plus map combination) on a standardized
/// image. Single-image latency is measured over `timed` runs after `warmup`
/// untimed ones; throughput is `batch_size * timed` images over the total
/// time of `timed` batches.
pub fn measure_latency(
    bundle: &ModelBundle,
    image: &Tensor,
    options: &BenchOptions,
) -> Result<BenchReport> {
    if options.timed == 0 || options.batch_size == 0 {
        return Err(Error::invalid(
            "measure_latency",
            "timed runs and batch size must be at least 1",
        ));
    }
    for _ in 0..options.warmup {
        infer(bundle, image)?;
    }
    let mut samples = Vec::with_capacity(options.timed);
    for _ in 0..options.timed {
        let t = Instant::now();
        let result = infer(bundle, image)?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(result);
    }
    let mut batch_seconds = 0.0;
    for _ in 0..options.timed {
        let t = Instant::now();
        run_batch(bundle, image, options.batch_size, options.batch_mode)?;
        batch_seconds += t.elapsed().as_secs_f64();
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(BenchReport {
        variant: bundle.arch.variant,
        padding: bundle.arch.padding,
        image_size: bundle.arch.image_size,
        threads: num_threads(),
        warmup: options.warmup,
        timed: options.timed,
        batch_size: options.batch_size,
        batch_mode: options.batch_mode,
        latency_ms_mean: mean,
        latency_ms_std: var.sqrt(),
        throughput_img_per_s: (options.batch_size * options.timed) as f64 / batch_seconds,
        param_count: count_params(bundle),
        flops: count_flops(bundle)?,
        samples_ms: samples,
    })
}
