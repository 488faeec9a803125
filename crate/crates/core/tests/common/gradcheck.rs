//! Finite-difference checks of every hand-written backward pass. Each
//! function returns the largest relative error it observed.

use efficientad::nets::{pdn, ArchConfig, PdnRole};
use efficientad::tensor::{
    avgpool2d, avgpool2d_backward, bilinear_resize, bilinear_resize_backward, conv2d,
    conv2d_backward, relu, relu_backward, Activation, ConvSpec, PoolSpec,
};
use efficientad::training::{step_losses, StepOutputs};
use efficientad::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{max_rel_err, numeric_grad, project, random, random_away_from_zero, rng};

/// Relative error floor for gradients that are numerically zero.
const FLOOR: f64 = 1e-4;

pub fn conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for (cin, cout, k, s, p, hw) in [
        (2, 3, 3, 1, 1, 4),
        (3, 2, 2, 2, 0, 4),
        (1, 2, 4, 1, 3, 3),
        (3, 3, 1, 1, 0, 4),
    ] {
        let spec = ConvSpec::new(cout, k, s, p, Activation::None);
        let x = random(&[cin, hw, hw], &mut r);
        let w = random(&[cout, cin, k, k], &mut r);
        let b = random(&[cout], &mut r);
        let y = conv2d(&x, &w, &b, &spec).unwrap();
        let proj = random(y.dims(), &mut r);
        let g = conv2d_backward(&x, &w, &b, &spec, &y, &proj, true).unwrap();
        // The map is linear in each argument, so a large step is exact.
        let eps = 0.25;
        let nx = numeric_grad(&x, eps, |x| {
            project(&conv2d(x, &w, &b, &spec).unwrap(), &proj)
        });
        let nw = numeric_grad(&w, eps, |w| {
            project(&conv2d(&x, w, &b, &spec).unwrap(), &proj)
        });
        let nb = numeric_grad(&b, eps, |b| {
            project(&conv2d(&x, &w, b, &spec).unwrap(), &proj)
        });
        worst = worst
            .max(max_rel_err(g.input.unwrap().data(), &nx, FLOOR))
            .max(max_rel_err(g.weights.data(), &nw, FLOOR))
            .max(max_rel_err(g.bias.data(), &nb, FLOOR));
    }
    worst
}

/// Convolution with a fused ReLU; pre-activations are kept away from zero.
pub fn conv_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let spec = ConvSpec::new(2, 1, 1, 0, Activation::Relu);
    let x = random_away_from_zero(&[3, 4, 4], 0.2, &mut r);
    // A single nonzero input weight per output keeps every pre-activation
    // at least 0.2 * 0.5 away from the kink.
    let w = Tensor::from_vec(&[2, 3, 1, 1], vec![0.5, 0.0, 0.0, 0.0, -0.7, 0.0]).unwrap();
    let b = Tensor::zeros(&[2]);
    let y = conv2d(&x, &w, &b, &spec).unwrap();
    let proj = random(y.dims(), &mut r);
    let g = conv2d_backward(&x, &w, &b, &spec, &y, &proj, true).unwrap();
    let nx = numeric_grad(&x, 0.05, |x| {
        project(&conv2d(x, &w, &b, &spec).unwrap(), &proj)
    });
    max_rel_err(g.input.unwrap().data(), &nx, FLOOR)
}

pub fn pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for (k, s, p, hw) in [(2, 2, 1, 4), (3, 1, 1, 4), (2, 1, 0, 3)] {
        let spec = PoolSpec {
            kernel: k,
            stride: s,
            padding: p,
        };
        let x = random(&[2, hw, hw], &mut r);
        let y = avgpool2d(&x, &spec).unwrap();
        let proj = random(y.dims(), &mut r);
        let g = avgpool2d_backward(x.dims(), &spec, &proj).unwrap();
        let n = numeric_grad(&x, 0.25, |x| project(&avgpool2d(x, &spec).unwrap(), &proj));
        worst = worst.max(max_rel_err(g.data(), &n, FLOOR));
    }
    worst
}

pub fn resize(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for (ih, iw, oh, ow) in [(3, 4, 4, 4), (4, 4, 2, 3), (2, 2, 4, 3), (1, 3, 4, 2)] {
        let x = random(&[3, ih, iw], &mut r);
        let y = bilinear_resize(&x, oh, ow).unwrap();
        let proj = random(y.dims(), &mut r);
        let g = bilinear_resize_backward(x.dims(), &proj).unwrap();
        let n = numeric_grad(&x, 0.25, |x| {
            project(&bilinear_resize(x, oh, ow).unwrap(), &proj)
        });
        worst = worst.max(max_rel_err(g.data(), &n, FLOOR));
    }
    worst
}

pub fn relu_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_away_from_zero(&[3, 4, 4], 0.1, &mut r);
    let proj = random(x.dims(), &mut r);
    let g = relu_backward(&x, &proj).unwrap();
    let n = numeric_grad(&x, 0.05, |x| project(&relu(x), &proj));
    max_rel_err(g.data(), &n, FLOOR)
}

/// Student features whose squared distances to the teacher are well
/// separated, so small probes never change the hard-loss selection.
fn separated_student(teacher: &Tensor, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    let mut offsets: Vec<f32> = (0..teacher.len()).map(|i| 0.5 + 0.15 * i as f32).collect();
    offsets.shuffle(rng);
    let data = teacher
        .data()
        .iter()
        .zip(offsets)
        .map(|(&t, d)| if rng.gen_bool(0.5) { t + d } else { t - d })
        .collect();
    Tensor::from_vec(teacher.dims(), data).unwrap()
}

/// `L_total` of the training step, differentiated with respect to each
/// network output it consumes.
pub fn step_loss_wiring(seed: u64, p_hard: f64) -> f64 {
    let mut r = rng(seed);
    let (c, h, w) = (2, 3, 3);
    let teacher_raw = random(&[c, h, w], &mut r);
    let st_half = separated_student(&teacher_raw, &mut r);
    let mut student_raw = st_half.data().to_vec();
    student_raw.extend(random(&[c, h, w], &mut r).data());
    let student_raw = Tensor::from_vec(&[2 * c, h, w], student_raw).unwrap();
    let student_penalty = random(&[2 * c, h, w], &mut r);
    let teacher_aug = random(&[c, h, w], &mut r);
    let autoencoder_aug = random(&[c, h, w], &mut r);
    let student_aug = random(&[2 * c, h, w], &mut r);

    let total = |sr: &Tensor, sp: &Tensor, ae: &Tensor, sa: &Tensor| -> f64 {
        let out = StepOutputs {
            teacher_raw: &teacher_raw,
            student_raw: sr,
            student_penalty: sp,
            teacher_aug: &teacher_aug,
            autoencoder_aug: ae,
            student_aug: sa,
        };
        step_losses(&out, p_hard).unwrap().0.l_total as f64
    };
    let (_, grads) = step_losses(
        &StepOutputs {
            teacher_raw: &teacher_raw,
            student_raw: &student_raw,
            student_penalty: &student_penalty,
            teacher_aug: &teacher_aug,
            autoencoder_aug: &autoencoder_aug,
            student_aug: &student_aug,
        },
        p_hard,
    )
    .unwrap();
    // Every term is piecewise quadratic and a probe moves a squared distance
    // by at most a third of the gap to its neighbours, so the selection is
    // stable and central differences are exact up to f32 rounding.
    let eps = 0.05;
    let n_sr = numeric_grad(&student_raw, eps, |x| {
        total(x, &student_penalty, &autoencoder_aug, &student_aug)
    });
    let n_sp = numeric_grad(&student_penalty, eps, |x| {
        total(&student_raw, x, &autoencoder_aug, &student_aug)
    });
    let n_ae = numeric_grad(&autoencoder_aug, eps, |x| {
        total(&student_raw, &student_penalty, x, &student_aug)
    });
    let n_sa = numeric_grad(&student_aug, eps, |x| {
        total(&student_raw, &student_penalty, &autoencoder_aug, x)
    });
    // Loss values are f32, so gradients below ~1e-3 are lost in rounding.
    let floor = 1e-2;
    [
        max_rel_err(grads.student_raw.data(), &n_sr, floor),
        max_rel_err(grads.student_penalty.data(), &n_sp, floor),
        max_rel_err(grads.autoencoder_aug.data(), &n_ae, floor),
        max_rel_err(grads.student_aug.data(), &n_sa, floor),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Parameter gradients of a whole patch description network at sampled
/// weights, as `|a - n| / |n|` over the sample vector. Probes can cross ReLU
/// kinks, so single entries are noisy while a wrong formula is off by O(1).
pub fn network(seed: u64, samples: usize) -> f64 {
    let arch = ArchConfig {
        image_size: 128,
        width_divisor: 32,
        feature_channels: 4,
        ..ArchConfig::default()
    };
    let mut r = rng(seed);
    let mut net = pdn(&arch, PdnRole::Teacher, &mut r).unwrap();
    let x = random(&[3, 40, 40], &mut r);
    let trace = net.forward_trace(&x, true, &mut r).unwrap();
    let proj = random(trace.output().dims(), &mut r);
    let mut grads = net.zero_grads();
    net.backward(&trace, &proj, &mut grads, false).unwrap();
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let pi = r.gen_range(0..grads.len());
        let ei = r.gen_range(0..grads[pi].len());
        let analytic = grads[pi].data()[ei] as f64;
        let orig = net.params()[pi].data()[ei];
        let mut eval = |v: f32| {
            net.params_mut()[pi].data_mut()[ei] = v;
            project(&net.forward(&x).unwrap(), &proj)
        };
        let (hi, lo) = (orig + 1e-3, orig - 1e-3);
        let numeric = (eval(hi) - eval(lo)) / (hi as f64 - lo as f64);
        eval(orig);
        diff += (analytic - numeric).powi(2);
        norm += numeric.powi(2);
    }
    (diff / norm.max(1e-12)).sqrt()
}
