use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::image::{center_crop, luma, standardize, to_gray};
use crate::tensor::{bilinear_resize, Tensor};

/// Color augmentation applied to the autoencoder branch input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Augmentation {
    Brightness,
    Contrast,
    Saturation,
}

fn blend(a: f32, b: f32, lambda: f32) -> f32 {
    (lambda * a + (1.0 - lambda) * b).clamp(0.0, 1.0)
}

/// Applies one augmentation with coefficient `lambda` to a unit-range RGB image.
pub fn apply_augmentation(unit: &Tensor, kind: Augmentation, lambda: f32) -> Tensor {
    match kind {
        Augmentation::Brightness => unit.map(|x| blend(x, 0.0, lambda)),
        Augmentation::Contrast => {
            let gray = luma(unit);
            let mean = (gray.iter().map(|&g| g as f64).sum::<f64>() / gray.len() as f64) as f32;
            unit.map(|x| blend(x, mean, lambda))
        }
        Augmentation::Saturation => {
            let gray = luma(unit);
            let plane = gray.len();
            let mut out = unit.clone();
            for (i, x) in out.data_mut().iter_mut().enumerate() {
                *x = blend(*x, gray[i % plane], lambda);
            }
            out
        }
    }
}

/// Draws the augmentation kind uniformly and `lambda ~ U(lo, hi)`.
pub fn augment<R: Rng + ?Sized>(
    unit: &Tensor,
    range: (f32, f32),
    rng: &mut R,
) -> (Tensor, Augmentation, f32) {
    let kind = match rng.gen_range(0..3) {
        0 => Augmentation::Brightness,
        1 => Augmentation::Contrast,
        _ => Augmentation::Saturation,
    };
    let lambda = if range.0 < range.1 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    };
    (apply_augmentation(unit, kind, lambda), kind, lambda)
}

/// Resizes a pretraining image to twice the network input size, converts it
/// to gray with probability `gray_prob`, center-crops `size`×`size`, and
/// standardizes it.
pub fn prepare_penalty_image<R: Rng + ?Sized>(
    unit: &Tensor,
    size: usize,
    gray_prob: f64,
    rng: &mut R,
) -> Result<Tensor> {
    let resized = bilinear_resize(unit, 2 * size, 2 * size)?;
    penalty_from_resized(&resized, size, gray_prob, rng)
}

/// [`prepare_penalty_image`] for an image already resized to `2 * size`.
pub(crate) fn penalty_from_resized<R: Rng + ?Sized>(
    resized: &Tensor,
    size: usize,
    gray_prob: f64,
    rng: &mut R,
) -> Result<Tensor> {
    let colored = if rng.gen_bool(gray_prob) {
        to_gray(resized)
    } else {
        resized.clone()
    };
    Ok(standardize(&center_crop(&colored, size)?))
}
