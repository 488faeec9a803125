//! End-to-end runs: scoring a test set and the synthetic benchmark.

use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::distill::{distill, DistillConfig, FeaturePair};
use crate::error::Result;
use crate::inference::{infer, resize_map_to_original};
use crate::io::image::standardize;
use crate::metrics::{EvalImage, EvalOptions, EvalReport, EvalSet, Mask};
use crate::model::ModelBundle;
use crate::nets::ArchConfig;
use crate::synthetic::{
    backbone_features, clutter_corpus, generate, reference_backbone, SyntheticConfig,
};
use crate::tensor::{bilinear_resize, Tensor};
use crate::training::{train, TrainConfig, TrainOutput};

/// A test image as a unit-range tensor with its ground truth.
pub struct LabeledImage {
    pub name: String,
    pub category: String,
    pub anomalous: bool,
    pub image: Tensor,
    pub mask: Option<Mask>,
}

/// Scores every image. Maps are resized to the mask resolution (or the
/// image's own resolution) before pixel metrics.
pub fn score_images(bundle: &ModelBundle, images: &[LabeledImage]) -> Result<EvalSet> {
    let s = bundle.arch.image_size;
    let mut set = EvalSet::default();
    for item in images {
        let (_, h, w) = item.image.chw()?;
        let input = if (h, w) == (s, s) {
            item.image.clone()
        } else {
            bilinear_resize(&item.image, s, s)?
        };
        let result = infer(bundle, &standardize(&input))?;
        let (mh, mw) = item
            .mask
            .as_ref()
            .map_or((h, w), |m| (m.height(), m.width()));
        let map = if (mh, mw) == (s, s) {
            result.combined
        } else {
            resize_map_to_original(&result.combined, mh, mw)?
        };
        set.push(EvalImage {
            name: item.name.clone(),
            category: item.category.clone(),
            anomalous: item.anomalous,
            score: result.image_score as f64,
            map: Some(map),
            mask: item.mask.clone(),
        });
    }
    Ok(set)
}

/// Settings of the synthetic benchmark. Defaults are the desk-scale run.
#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkConfig {
    pub arch: ArchConfig,
    pub distill_images: usize,
    pub distill_iterations: usize,
    pub distill_batch: usize,
    pub penalty_images: usize,
    pub train_iterations: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            arch: ArchConfig {
                image_size: 128,
                width_divisor: 8,
                feature_channels: 32,
                ..ArchConfig::default()
            },
            distill_images: 64,
            distill_iterations: 1000,
            distill_batch: 4,
            penalty_images: 64,
            train_iterations: 3000,
            seed: 42,
        }
    }
}

pub struct BenchmarkOutcome {
    pub report: EvalReport,
    pub trained: TrainOutput,
    pub distill_losses: Vec<f32>,
    pub seconds: f64,
}

/// Generate data, distill a teacher from a seeded reference backbone, train,
/// and evaluate on the synthetic test split.
pub fn run_synthetic_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    let arch = config.arch;
    let size = arch.image_size;
    let data = generate(&SyntheticConfig {
        size,
        seed: config.seed,
        ..SyntheticConfig::default()
    });

    let backbone = reference_backbone(&arch, config.seed.wrapping_add(1))?;
    let pairs = clutter_corpus(config.distill_images, size, config.seed.wrapping_add(2))
        .into_iter()
        .enumerate()
        .map(|(i, image)| {
            Ok(FeaturePair {
                image_path: format!("clutter{i:04}").into(),
                target: backbone_features(&backbone, &image)?,
                image,
                gray_target: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let distilled = distill(
        &pairs,
        &DistillConfig {
            arch,
            iterations: config.distill_iterations,
            batch_size: config.distill_batch,
            seed: config.seed,
            ..DistillConfig::default()
        },
    )?;
    info!(
        "distillation done after {:.1}s",
        start.elapsed().as_secs_f64()
    );

    let penalty = clutter_corpus(config.penalty_images, 2 * size, config.seed.wrapping_add(3));
    let train_config = TrainConfig {
        arch,
        seed: config.seed,
        ..TrainConfig::default()
    }
    .with_iterations(config.train_iterations);
    let trained = train(distilled.teacher, &data.train, &penalty, &train_config)?;
    info!("training done after {:.1}s", start.elapsed().as_secs_f64());

    let test: Vec<LabeledImage> = data
        .test
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let anomalous = s.defect != crate::synthetic::Defect::None;
            Ok(LabeledImage {
                name: format!("{}/{i:03}", s.defect.category()),
                category: s.defect.category().to_string(),
                anomalous,
                mask: anomalous
                    .then(|| Mask::new(size, size, s.mask))
                    .transpose()?,
                image: s.image,
            })
        })
        .collect::<Result<_>>()?;
    let set = score_images(&trained.bundle, &test)?;
    let report = set.evaluate(
        &EvalOptions::default(),
        serde_json::json!({ "benchmark": config, "train": train_config }),
    )?;
    Ok(BenchmarkOutcome {
        report,
        trained,
        distill_losses: distilled.losses,
        seconds: start.elapsed().as_secs_f64(),
    })
}
