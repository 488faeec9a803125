mod common;

use common::{random, rng, tiny_arch};
use efficientad::io::checkpoint::bundle_container;
use efficientad::io::image::standardize;
use efficientad::nets::{autoencoder, pdn, PdnRole};
use efficientad::synthetic::{clutter_corpus, generate, SyntheticConfig};
use efficientad::training::{
    split_holdout, step_losses, train, train_step, StepOutputs, TrainState,
};
use efficientad::{Error, ModelBundle, Tensor, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn images(n: usize) -> Vec<Tensor> {
    generate(&SyntheticConfig {
        size: 128,
        train_normals: n,
        test_normals: 0,
        blobs: 0,
        layouts: 0,
        seed: 5,
    })
    .train
}

fn config(iterations: usize) -> TrainConfig {
    TrainConfig {
        arch: tiny_arch(),
        seed: 11,
        ..TrainConfig::default()
    }
    .with_iterations(iterations)
}

fn penalty() -> Tensor {
    standardize(&clutter_corpus(1, 128, 3).remove(0))
}

#[test]
fn two_teacher_forwards_per_step() {
    let cfg = config(10);
    let mut bundle = ModelBundle::init(cfg.arch, 1).unwrap();
    let mut state = TrainState::new(&bundle, &cfg);
    let image = images(1).remove(0);
    let pen = penalty();
    let mut r = rng(2);
    for step in 1..=3 {
        train_step(&mut bundle, &mut state, &image, &pen, &cfg, &mut r).unwrap();
        assert_eq!(state.teacher_forwards, 2 * step);
        assert_eq!(state.iteration, step);
    }
}

#[test]
fn step_updates_student_and_autoencoder_only() {
    let cfg = config(10);
    let mut bundle = ModelBundle::init(cfg.arch, 1).unwrap();
    let before = bundle.clone();
    let mut state = TrainState::new(&bundle, &cfg);
    train_step(
        &mut bundle,
        &mut state,
        &images(1)[0],
        &penalty(),
        &cfg,
        &mut rng(3),
    )
    .unwrap();
    assert_eq!(bundle.teacher, before.teacher);
    assert_ne!(bundle.student, before.student);
    assert_ne!(bundle.autoencoder, before.autoencoder);
}

#[test]
fn learning_rate_follows_schedule() {
    let mut cfg = config(4);
    cfg.lr_decay_at = 2;
    let mut bundle = ModelBundle::init(cfg.arch, 1).unwrap();
    let mut state = TrainState::new(&bundle, &cfg);
    let image = images(1).remove(0);
    let pen = penalty();
    let mut r = rng(4);
    let mut seen = Vec::new();
    for _ in 0..4 {
        train_step(&mut bundle, &mut state, &image, &pen, &cfg, &mut r).unwrap();
        seen.push(state.optimizer.lr());
    }
    assert_eq!(seen, vec![1e-4, 1e-4, 1e-5, 1e-5]);
}

#[test]
fn non_finite_input_aborts_before_update() {
    let cfg = config(10);
    let mut bundle = ModelBundle::init(cfg.arch, 1).unwrap();
    let before = bundle.clone();
    let mut state = TrainState::new(&bundle, &cfg);
    let mut image = images(1).remove(0);
    image.data_mut()[7] = f32::NAN;
    let err = train_step(
        &mut bundle,
        &mut state,
        &image,
        &penalty(),
        &cfg,
        &mut rng(5),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::NonFinite { iteration: 1, .. }),
        "{err}"
    );
    assert_eq!(bundle, before);
    assert_eq!(state.iteration, 0);
}

#[test]
fn hard_loss_gradient_vanishes_off_mask() {
    let mut r = rng(6);
    let c = 4;
    let teacher = random(&[c, 6, 6], &mut r);
    let student = random(&[2 * c, 6, 6], &mut r);
    let other = random(&[2 * c, 6, 6], &mut r);
    let half = random(&[c, 6, 6], &mut r);
    let out = StepOutputs {
        teacher_raw: &teacher,
        student_raw: &student,
        student_penalty: &other,
        teacher_aug: &half,
        autoencoder_aug: &half,
        student_aug: &other,
    };
    let (_, grads) = step_losses(&out, 0.9).unwrap();
    let g = grads.student_raw.data();
    let plane = 36 * c;
    for (i, &selected) in grads.hard.mask.iter().enumerate() {
        if !selected {
            assert_eq!(g[i], 0.0);
        }
    }
    // The autoencoder-matching half never sees the hard loss.
    assert!(g[plane..].iter().all(|&x| x == 0.0));
    assert!(grads.hard.selected > 0 && grads.hard.selected < plane);
}

#[test]
fn zero_iterations_leave_fresh_networks() {
    let cfg = config(0);
    let imgs = images(4);
    let teacher = ModelBundle::init(cfg.arch, 9).unwrap().teacher;
    let out = train(teacher.clone(), &imgs, &clutter_corpus(2, 64, 1), &cfg).unwrap();
    // Rebuild the initialization sequence train() follows.
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    split_holdout(imgs.len(), cfg.validation_fraction, &mut r).unwrap();
    let student = pdn(&cfg.arch, PdnRole::Student, &mut r).unwrap();
    let ae = autoencoder(&cfg.arch, &mut r).unwrap();
    assert_eq!(out.bundle.student, student);
    assert_eq!(out.bundle.autoencoder, ae);
    assert_eq!(out.bundle.teacher, teacher);
    assert!(out.history.raw.is_empty());
}

#[test]
fn training_is_deterministic_and_keeps_teacher() {
    let cfg = config(5);
    let imgs = images(4);
    let corpus = clutter_corpus(2, 64, 1);
    let teacher = ModelBundle::init(cfg.arch, 9).unwrap().teacher;
    let a = train(teacher.clone(), &imgs, &corpus, &cfg).unwrap();
    let b = train(teacher.clone(), &imgs, &corpus, &cfg).unwrap();
    assert_eq!(a.bundle.teacher, teacher);
    let bytes_a = bundle_container(&a.bundle).unwrap().to_bytes().unwrap();
    let bytes_b = bundle_container(&b.bundle).unwrap().to_bytes().unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(a.history.raw.len(), 5);
    assert_eq!(a.validation_indices, b.validation_indices);
    let q = a.bundle.quantiles;
    assert!(q.st_b > q.st_a && q.ae_b > q.ae_a);
}

#[test]
fn invalid_configs_rejected() {
    let imgs = images(2);
    let teacher = ModelBundle::init(tiny_arch(), 0).unwrap().teacher;
    let mut cfg = config(1);
    cfg.quantile_a = 0.99;
    cfg.quantile_b = 0.9;
    assert!(train(teacher.clone(), &imgs, &clutter_corpus(1, 64, 1), &cfg).is_err());
    assert!(train(
        teacher.clone(),
        &imgs[..1],
        &clutter_corpus(1, 64, 1),
        &config(1)
    )
    .is_err());
    assert!(train(teacher, &imgs, &[], &config(1)).is_err());
}
