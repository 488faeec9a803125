#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use efficientad::nets::ArchConfig;
use efficientad::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values with magnitude at least `floor`, keeping ReLU kinks away
/// from finite-difference probes.
pub fn random_away_from_zero(dims: &[usize], floor: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let len = dims.iter().product();
    let data = (0..len)
        .map(|_| {
            let m = rng.gen_range(floor..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// `sum_i w_i * y_i` accumulated in f64.
pub fn project(y: &Tensor, w: &Tensor) -> f64 {
    y.data()
        .iter()
        .zip(w.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Central differences of `f` at every element of `x`.
pub fn numeric_grad(x: &Tensor, eps: f32, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            let (hi, lo) = (orig + eps, orig - eps);
            probe.data_mut()[i] = hi;
            let plus = f(&probe);
            probe.data_mut()[i] = lo;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            // Divide by the step actually taken after f32 rounding.
            (plus - minus) / (hi as f64 - lo as f64)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_rel_err(analytic: &[f32], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let a = a as f64;
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Small architecture used wherever a full pipeline has to run quickly.
pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_size: 128,
        width_divisor: 32,
        feature_channels: 8,
        ..ArchConfig::default()
    }
}

/// Architecture of the end-to-end benchmark.
pub fn desk_arch() -> ArchConfig {
    efficientad::pipeline::BenchmarkConfig::default().arch
}
