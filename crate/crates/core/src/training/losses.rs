//! Student–teacher and autoencoder losses with their output gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{quantile, Tensor};

/// Hard feature loss: mean of the squared differences at or above their
/// `p_hard`-quantile.
#[derive(Clone, Debug)]
pub struct HardLoss {
    pub loss: f32,
    pub threshold: f32,
    /// True for every element that contributes to the loss.
    pub mask: Vec<bool>,
    pub selected: usize,
    /// Gradient of the loss with respect to the student output; zero off-mask.
    pub grad_student: Tensor,
}

pub fn hard_feature_loss(
    teacher_norm: &Tensor,
    student_st: &Tensor,
    p_hard: f64,
) -> Result<HardLoss> {
    teacher_norm.expect_same_dims("hard_feature_loss", student_st)?;
    let diff: Vec<f32> = teacher_norm
        .data()
        .iter()
        .zip(student_st.data())
        .map(|(&t, &s)| (t - s) * (t - s))
        .collect();
    let threshold = quantile(&diff, p_hard)?;
    let mask: Vec<bool> = diff.iter().map(|&d| d >= threshold).collect();
    let selected = mask.iter().filter(|&&m| m).count();
    let sum: f64 = diff
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(&d, _)| d as f64)
        .sum();
    let loss = (sum / selected as f64) as f32;
    let scale = 2.0 / selected as f32;
    let grad = teacher_norm
        .data()
        .iter()
        .zip(student_st.data())
        .zip(&mask)
        .map(|((&t, &s), &m)| if m { scale * (s - t) } else { 0.0 })
        .collect();
    Ok(HardLoss {
        loss,
        threshold,
        mask,
        selected,
        grad_student: Tensor::from_vec(student_st.dims(), grad)?,
    })
}

/// Mean of squares over the first `channels` channels of the student output
/// on a pretraining image. Returns the loss and its gradient over the full output.
pub fn penalty_loss(student_out: &Tensor, channels: usize) -> Result<(f32, Tensor)> {
    let (c, h, w) = student_out.chw()?;
    if channels == 0 || channels > c {
        return Err(Error::shape(
            "penalty_loss",
            "channels",
            format!("1..={c}"),
            channels,
        ));
    }
    let n = channels * h * w;
    let head = &student_out.data()[..n];
    let loss = head.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / n as f64;
    let mut grad = vec![0.0f32; student_out.len()];
    let scale = 2.0 / n as f32;
    for (g, &x) in grad.iter_mut().zip(head) {
        *g = scale * x;
    }
    Ok((loss as f32, Tensor::from_vec(student_out.dims(), grad)?))
}

/// `mean((a - b)^2)` with gradients for both arguments.
pub fn mse_pair(a: &Tensor, b: &Tensor) -> Result<(f32, Tensor, Tensor)> {
    a.expect_same_dims("mse_pair", b)?;
    let n = a.len() as f64;
    let loss = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / n;
    let scale = (2.0 / n) as f32;
    let grad_a = a.zip_map(b, |x, y| scale * (x - y))?;
    let grad_b = grad_a.map(|g| -g);
    Ok((loss as f32, grad_a, grad_b))
}

/// Per-iteration loss values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_hard: f32,
    pub l_st: f32,
    pub l_ae: f32,
    pub l_stae: f32,
    pub l_total: f32,
}

impl LossReport {
    pub fn all_finite(&self) -> bool {
        [self.l_hard, self.l_st, self.l_ae, self.l_stae, self.l_total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Network outputs of one training step, in the order the losses consume them.
pub struct StepOutputs<'a> {
    /// Normalized teacher features of the raw training image.
    pub teacher_raw: &'a Tensor,
    /// Student output (2C channels) on the raw training image.
    pub student_raw: &'a Tensor,
    /// Student output on the pretraining penalty image.
    pub student_penalty: &'a Tensor,
    /// Normalized teacher features of the augmented image.
    pub teacher_aug: &'a Tensor,
    /// Autoencoder output on the augmented image.
    pub autoencoder_aug: &'a Tensor,
    /// Student output on the augmented image.
    pub student_aug: &'a Tensor,
}

/// Gradients of `L_total` with respect to each differentiable network output.
pub struct StepGrads {
    pub student_raw: Tensor,
    pub student_penalty: Tensor,
    pub autoencoder_aug: Tensor,
    pub student_aug: Tensor,
    pub hard: HardLoss,
}

fn concat_channels(first: &Tensor, second: &Tensor) -> Result<Tensor> {
    let (c1, h, w) = first.chw()?;
    let (c2, h2, w2) = second.chw()?;
    if (h, w) != (h2, w2) {
        return Err(Error::shape(
            "concat_channels",
            "spatial",
            format!("{h}x{w}"),
            format!("{h2}x{w2}"),
        ));
    }
    let mut data = first.data().to_vec();
    data.extend_from_slice(second.data());
    Tensor::from_vec(&[c1 + c2, h, w], data)
}

/// Total loss `L_ST + L_AE + L_STAE` and its output gradients.
///
/// The first half of the student channels regresses the teacher, the second
/// half the autoencoder. `L_STAE` differentiates through both the student and
/// the autoencoder output.
pub fn step_losses(out: &StepOutputs<'_>, p_hard: f64) -> Result<(LossReport, StepGrads)> {
    let (c2, _, _) = out.student_raw.chw()?;
    let c = c2 / 2;
    if out.teacher_raw.chw()?.0 != c {
        return Err(Error::shape(
            "step_losses",
            "teacher channels",
            c,
            out.teacher_raw.chw()?.0,
        ));
    }
    let st_raw = out.student_raw.channels(0, c)?;
    let hard = hard_feature_loss(out.teacher_raw, &st_raw, p_hard)?;
    let zeros_half = Tensor::zeros(hard.grad_student.dims());
    let student_raw = concat_channels(&hard.grad_student, &zeros_half)?;

    let (l_penalty, student_penalty) = penalty_loss(out.student_penalty, c)?;
    let l_st = hard.loss + l_penalty;

    let (l_ae, _, mut autoencoder_aug) = mse_pair(out.teacher_aug, out.autoencoder_aug)?;
    let stae = out.student_aug.channels(c, 2 * c)?;
    let (l_stae, grad_ae_from_stae, grad_stae) = mse_pair(out.autoencoder_aug, &stae)?;
    autoencoder_aug.add_assign(&grad_ae_from_stae)?;
    let student_aug = concat_channels(&Tensor::zeros(grad_stae.dims()), &grad_stae)?;

    let report = LossReport {
        l_hard: hard.loss,
        l_st,
        l_ae,
        l_stae,
        l_total: l_st + l_ae + l_stae,
    };
    Ok((
        report,
        StepGrads {
            student_raw,
            student_penalty,
            autoencoder_aug,
            student_aug,
            hard,
        },
    ))
}
