use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, penalty_from_resized};
use super::config::TrainConfig;
use super::losses::{step_losses, LossReport, StepOutputs};
use crate::error::{Error, Result};
use crate::inference::infer_raw_maps;
use crate::io::image::standardize;
use crate::model::{MapQuantiles, ModelBundle};
use crate::nets::{autoencoder, fit_channel_norm, normalize_channels, pdn, Network, PdnRole};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::{bilinear_resize, quantile, Tensor};

/// Mutable state carried across training steps.
pub struct TrainState {
    pub optimizer: AdamState,
    /// Number of completed steps.
    pub iteration: usize,
    /// Forward passes of the frozen teacher so far.
    pub teacher_forwards: usize,
}

impl TrainState {
    pub fn new(bundle: &ModelBundle, config: &TrainConfig) -> Self {
        let params = bundle
            .student
            .params()
            .into_iter()
            .chain(bundle.autoencoder.params());
        TrainState {
            optimizer: AdamState::new(AdamConfig::new(config.lr, config.weight_decay), params),
            iteration: 0,
            teacher_forwards: 0,
        }
    }
}

fn teacher_features(
    bundle: &ModelBundle,
    state: &mut TrainState,
    image: &Tensor,
) -> Result<Tensor> {
    state.teacher_forwards += 1;
    normalize_channels(&bundle.teacher.forward(image)?, &bundle.channel_norm)
}

/// One optimization step on a unit-range training image and a prepared
/// (standardized) penalty image.
///
/// The student–teacher branch sees the raw image; only the autoencoder branch
/// sees the color-augmented copy. Student and autoencoder are updated jointly
/// by one Adam step on `L_total`.
pub fn train_step<R: Rng + ?Sized>(
    bundle: &mut ModelBundle,
    state: &mut TrainState,
    image: &Tensor,
    penalty: &Tensor,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<LossReport> {
    let iteration = state.iteration + 1;
    let raw = standardize(image);
    let teacher_raw = teacher_features(bundle, state, &raw)?;
    let trace_raw = bundle.student.forward_trace(&raw, true, rng)?;
    let trace_penalty = bundle.student.forward_trace(penalty, true, rng)?;

    let (augmented, _, _) = augment(image, config.aug_range, rng);
    let aug = standardize(&augmented);
    let trace_ae = bundle.autoencoder.forward_trace(&aug, true, rng)?;
    let teacher_aug = teacher_features(bundle, state, &aug)?;
    let trace_aug = bundle.student.forward_trace(&aug, true, rng)?;

    for (name, t) in [
        ("teacher features", &teacher_raw),
        ("student output", trace_raw.output()),
        ("student penalty output", trace_penalty.output()),
        ("autoencoder output", trace_ae.output()),
        ("augmented teacher features", &teacher_aug),
        ("augmented student output", trace_aug.output()),
    ] {
        if !t.all_finite() {
            return Err(Error::NonFinite {
                iteration,
                detail: format!("non-finite {name}"),
            });
        }
    }
    let (report, grads) = step_losses(
        &StepOutputs {
            teacher_raw: &teacher_raw,
            student_raw: trace_raw.output(),
            student_penalty: trace_penalty.output(),
            teacher_aug: &teacher_aug,
            autoencoder_aug: trace_ae.output(),
            student_aug: trace_aug.output(),
        },
        config.p_hard,
    )?;
    if !report.all_finite() {
        return Err(Error::NonFinite {
            iteration,
            detail: format!("{report:?}"),
        });
    }

    let mut student_grads = bundle.student.zero_grads();
    bundle
        .student
        .backward(&trace_raw, &grads.student_raw, &mut student_grads, false)?;
    drop(trace_raw);
    bundle.student.backward(
        &trace_penalty,
        &grads.student_penalty,
        &mut student_grads,
        false,
    )?;
    drop(trace_penalty);
    bundle
        .student
        .backward(&trace_aug, &grads.student_aug, &mut student_grads, false)?;
    let mut ae_grads = bundle.autoencoder.zero_grads();
    bundle
        .autoencoder
        .backward(&trace_ae, &grads.autoencoder_aug, &mut ae_grads, false)?;

    state.optimizer.set_lr(config.lr_at(iteration));
    let mut params: Vec<&mut Tensor> = bundle.student.params_mut();
    params.extend(bundle.autoencoder.params_mut());
    let grad_refs: Vec<&Tensor> = student_grads.iter().chain(&ae_grads).collect();
    adam_step(&mut params, &grad_refs, &mut state.optimizer)?;
    state.iteration = iteration;
    Ok(report)
}

/// Fits the four map-normalization quantiles on validation images.
///
/// Raw local and global maps are resized to the input resolution and pooled
/// across images; `a` and `b` quantiles are taken per pool.
pub fn fit_map_normalization(
    bundle: &ModelBundle,
    validation: &[Tensor],
    a: f64,
    b: f64,
) -> Result<MapQuantiles> {
    if validation.is_empty() {
        return Err(Error::Empty {
            op: "fit_map_normalization",
        });
    }
    let size = bundle.arch.image_size;
    let mut st_pool = Vec::with_capacity(validation.len() * size * size);
    let mut ae_pool = Vec::with_capacity(validation.len() * size * size);
    for image in validation {
        let maps = infer_raw_maps(bundle, image)?;
        st_pool.extend_from_slice(bilinear_resize(&maps.st, size, size)?.data());
        ae_pool.extend_from_slice(bilinear_resize(&maps.ae, size, size)?.data());
    }
    let (st_a, st_b) = quantile_pair(&st_pool, a, b, "local")?;
    let (ae_a, ae_b) = quantile_pair(&ae_pool, a, b, "global")?;
    Ok(MapQuantiles {
        st_a,
        st_b,
        ae_a,
        ae_b,
    })
}

/// `a`- and `b`-quantiles of a pool, widened apart if they coincide.
pub fn quantile_pair(pool: &[f32], a: f64, b: f64, label: &str) -> Result<(f32, f32)> {
    let qa = quantile(pool, a)?;
    let mut qb = quantile(pool, b)?;
    if qb <= qa {
        let eps = (qa.abs() * 1e-6).max(1e-6);
        warn!("{label} map quantiles coincide at {qa}; widening by {eps}");
        qb = qa + eps;
    }
    Ok((qa, qb))
}

/// Raw and exponentially smoothed per-iteration losses.
#[derive(Clone, Debug, Default)]
pub struct LossHistory {
    pub raw: Vec<LossReport>,
    pub smoothed: Vec<LossReport>,
}

impl LossHistory {
    pub fn push(&mut self, report: LossReport, alpha: f64) {
        let next = match self.smoothed.last() {
            None => report,
            Some(prev) => {
                let s = |p: f32, x: f32| ((1.0 - alpha) * p as f64 + alpha * x as f64) as f32;
                LossReport {
                    l_hard: s(prev.l_hard, report.l_hard),
                    l_st: s(prev.l_st, report.l_st),
                    l_ae: s(prev.l_ae, report.l_ae),
                    l_stae: s(prev.l_stae, report.l_stae),
                    l_total: s(prev.l_total, report.l_total),
                }
            }
        };
        self.raw.push(report);
        self.smoothed.push(next);
    }

    /// `iteration,l_hard,l_st,l_ae,l_stae,l_total` rows of raw values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,l_hard,l_st,l_ae,l_stae,l_total\n");
        for (i, r) in self.raw.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                r.l_hard,
                r.l_st,
                r.l_ae,
                r.l_stae,
                r.l_total
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub history: LossHistory,
    /// Indices (into the input image list) used for map normalization.
    pub validation_indices: Vec<usize>,
}

/// Seeded split into (training pool, validation holdout); the holdout takes
/// `fraction` of the images, at least one.
pub fn split_holdout<R: Rng + ?Sized>(
    n: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 training images, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let holdout = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - holdout);
    idx.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    Ok((idx, val))
}

/// Trains student and autoencoder against a frozen teacher.
///
/// `images` are unit-range `image_size` RGB images; `penalty_corpus` holds
/// unit-range pretraining images of any size. Deterministic given the seed.
pub fn train(
    teacher: Network,
    images: &[Tensor],
    penalty_corpus: &[Tensor],
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Dataset("no training images".into()));
    }
    if penalty_corpus.is_empty() {
        return Err(Error::Dataset("empty pretraining corpus".into()));
    }
    let arch = config.arch;
    if teacher.out_channels() != arch.feature_channels {
        return Err(Error::shape(
            "train",
            "teacher channels",
            arch.feature_channels,
            teacher.out_channels(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (pool, holdout) = split_holdout(images.len(), config.validation_fraction, &mut rng)?;
    let student = pdn(&arch, PdnRole::Student, &mut rng)?;
    let autoencoder = autoencoder(&arch, &mut rng)?;

    let train_std: Vec<Tensor> = pool.iter().map(|&i| standardize(&images[i])).collect();
    let channel_norm = fit_channel_norm(&teacher, &train_std)?;
    drop(train_std);
    let mut bundle = ModelBundle {
        arch,
        teacher,
        student,
        autoencoder,
        channel_norm,
        quantiles: MapQuantiles::default(),
    };

    let size = arch.image_size;
    let corpus: Vec<Tensor> = penalty_corpus
        .iter()
        .map(|p| bilinear_resize(p, 2 * size, 2 * size))
        .collect::<Result<_>>()?;

    let mut state = TrainState::new(&bundle, config);
    let mut history = LossHistory::default();
    let log_every = (config.iterations / 20).max(1);
    for it in 1..=config.iterations {
        let image = &images[pool[rng.gen_range(0..pool.len())]];
        let source = &corpus[rng.gen_range(0..corpus.len())];
        let penalty = penalty_from_resized(source, size, config.penalty_gray_prob, &mut rng)?;
        let report = train_step(&mut bundle, &mut state, image, &penalty, config, &mut rng)?;
        history.push(report, config.smoothing);
        if it % log_every == 0 {
            let s = history.smoothed.last().expect("pushed");
            info!(
                "iteration {it}/{}: l_hard {:.4} l_st {:.4} l_ae {:.4} l_stae {:.4}",
                config.iterations, s.l_hard, s.l_st, s.l_ae, s.l_stae
            );
        }
    }

    let validation: Vec<Tensor> = holdout.iter().map(|&i| standardize(&images[i])).collect();
    bundle.quantiles =
        fit_map_normalization(&bundle, &validation, config.quantile_a, config.quantile_b)?;
    Ok(TrainOutput {
        bundle,
        history,
        validation_indices: holdout,
    })
}
