//! Distilling a pretrained feature extractor into a patch description network.
//!
//! Targets are precomputed raw backbone features read from EAD1 files. They
//! are standardized per channel with statistics estimated from random draws,
//! and the teacher regresses them with a batch-averaged squared error.

use std::path::PathBuf;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::image::{load_unit_image, standardize, to_gray};
use crate::io::{read_features, ManifestRow};
use crate::nets::{normalize_channels, pdn, ArchConfig, ChannelNorm, Network, PdnRole};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::Tensor;
use crate::training::mse_pair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub arch: ArchConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub weight_decay: f32,
    /// Probability of using the gray variant; only pairs that carry a gray
    /// target are ever converted.
    pub gray_prob: f64,
    /// Draws used to estimate the target channel statistics; `None` means
    /// `min(10000, 10 * pairs)`.
    pub norm_sample_count: Option<usize>,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            arch: ArchConfig::default(),
            iterations: 60_000,
            batch_size: 16,
            lr: 1e-4,
            weight_decay: 1e-5,
            gray_prob: 0.1,
            norm_sample_count: None,
            seed: 42,
        }
    }
}

/// One distillation image with its raw backbone features.
#[derive(Clone, Debug)]
pub struct FeaturePair {
    pub image_path: PathBuf,
    /// Unit-range RGB image at the teacher's input size.
    pub image: Tensor,
    pub target: Tensor,
    /// Features of the grayscale version of the image, if exported.
    pub gray_target: Option<Tensor>,
}

impl FeaturePair {
    fn draw<R: Rng + ?Sized>(&self, gray_prob: f64, rng: &mut R) -> (bool, &Tensor) {
        match &self.gray_target {
            Some(g) if gray_prob > 0.0 && rng.gen_bool(gray_prob) => (true, g),
            _ => (false, &self.target),
        }
    }
}

/// Loads every manifest row, resizing images to `image_size` and checking
/// that targets have the expected C×H×W extents.
pub fn load_pairs(
    rows: &[ManifestRow],
    image_size: usize,
    expected: &[usize],
) -> Result<Vec<FeaturePair>> {
    rows.iter()
        .map(|row| {
            Ok(FeaturePair {
                image_path: row.image.clone(),
                image: load_unit_image(&row.image, image_size)?,
                target: read_features(&row.features, Some(expected))?,
                gray_target: row
                    .gray_features
                    .as_deref()
                    .map(|p| read_features(p, Some(expected)))
                    .transpose()?,
            })
        })
        .collect()
}

/// Per-channel statistics of `sample_count` target maps drawn with replacement.
pub fn fit_backbone_norm<R: Rng + ?Sized>(
    pairs: &[FeaturePair],
    sample_count: usize,
    gray_prob: f64,
    rng: &mut R,
) -> Result<ChannelNorm> {
    if pairs.is_empty() {
        return Err(Error::Empty {
            op: "fit_backbone_norm",
        });
    }
    let drawn: Vec<&Tensor> = (0..sample_count.max(1))
        .map(|_| pairs[rng.gen_range(0..pairs.len())].draw(gray_prob, rng).1)
        .collect();
    ChannelNorm::fit(drawn)
}

pub struct DistillOutput {
    pub teacher: Network,
    pub backbone_norm: ChannelNorm,
    /// Batch loss per iteration.
    pub losses: Vec<f32>,
}

/// Mean squared error between the teacher output and a normalized target,
/// with the parameter gradient of that single-sample loss.
fn sample_loss(teacher: &Network, image: &Tensor, target: &Tensor) -> Result<(f32, Vec<Tensor>)> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let trace = teacher.forward_trace(image, true, &mut rng)?;
    if trace.output().dims() != target.dims() {
        return Err(Error::shape(
            "distill",
            "target",
            format!("{:?}", trace.output().dims()),
            format!("{:?}", target.dims()),
        ));
    }
    let (loss, grad_out, _) = mse_pair(trace.output(), target)?;
    let mut grads = teacher.zero_grads();
    teacher.backward(&trace, &grad_out, &mut grads, false)?;
    Ok((loss, grads))
}

/// Batch loss `(1/B) sum_b mse(T(x_b), norm(y_b))` and its gradient.
///
/// Samples are evaluated in parallel but summed in batch order.
pub fn batch_loss(teacher: &Network, samples: &[(Tensor, Tensor)]) -> Result<(f32, Vec<Tensor>)> {
    let results: Vec<Result<(f32, Vec<Tensor>)>> = samples
        .par_iter()
        .map(|(image, target)| sample_loss(teacher, image, target))
        .collect();
    let inv = 1.0 / samples.len() as f32;
    let mut total = 0.0f64;
    let mut grads = teacher.zero_grads();
    for r in results {
        let (loss, g) = r?;
        total += loss as f64;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi)?;
        }
    }
    for g in &mut grads {
        g.scale(inv);
    }
    Ok(((total * inv as f64) as f32, grads))
}

/// Trains a fresh teacher to regress normalized backbone features.
pub fn distill(pairs: &[FeaturePair], config: &DistillConfig) -> Result<DistillOutput> {
    config.arch.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty { op: "distill" });
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("distill", "batch_size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut teacher = pdn(&config.arch, PdnRole::Teacher, &mut rng)?;
    let s = config.arch.image_size;
    let f = config.arch.feature_size();
    let expected = [config.arch.feature_channels, f, f];
    for p in pairs {
        if p.target.dims() != expected {
            return Err(Error::shape(
                "distill",
                "target",
                format!("{expected:?}"),
                format!("{:?}", p.target.dims()),
            ));
        }
        if p.image.dims() != [3, s, s] {
            return Err(Error::shape(
                "distill",
                "image",
                format!("3x{s}x{s}"),
                format!("{:?}", p.image.dims()),
            ));
        }
    }
    let samples = config
        .norm_sample_count
        .unwrap_or((10 * pairs.len()).min(10_000));
    let norm = fit_backbone_norm(pairs, samples, config.gray_prob, &mut rng)?;

    let mut optimizer = AdamState::new(
        AdamConfig::new(config.lr, config.weight_decay),
        teacher.params(),
    );
    let mut losses = Vec::with_capacity(config.iterations);
    let log_every = (config.iterations / 20).max(1);
    for it in 1..=config.iterations {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let pair = &pairs[rng.gen_range(0..pairs.len())];
            let (gray, target) = pair.draw(config.gray_prob, &mut rng);
            let image = if gray {
                to_gray(&pair.image)
            } else {
                pair.image.clone()
            };
            batch.push((standardize(&image), normalize_channels(target, &norm)?));
        }
        let (loss, grads) = batch_loss(&teacher, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                detail: format!("distillation loss {loss}"),
            });
        }
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        adam_step(&mut teacher.params_mut(), &grad_refs, &mut optimizer)?;
        losses.push(loss);
        if it % log_every == 0 {
            info!(
                "distill iteration {it}/{}: loss {loss:.4}",
                config.iterations
            );
        }
    }
    Ok(DistillOutput {
        teacher,
        backbone_norm: norm,
        losses,
    })
}
