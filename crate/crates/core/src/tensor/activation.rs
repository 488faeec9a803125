use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// `max(x, 0)` that lets NaN through so non-finite values stay visible.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| if x < 0.0 { 0.0 } else { x })
}

/// Gradient of ReLU given its input.
pub fn relu_backward(input: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    input.zip_map(grad_output, |x, g| if x > 0.0 { g } else { 0.0 })
}

/// Gradient of ReLU given its output; `y > 0` exactly where `x > 0`.
pub fn relu_backward_from_output(output: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    relu_backward(output, grad_output)
}

/// Survivor scaling of an inverted-dropout draw; zero marks a dropped element.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f32>,
}

impl DropoutMask {
    pub fn zero_fraction(&self) -> f64 {
        self.scale.iter().filter(|&&s| s == 0.0).count() as f64 / self.scale.len() as f64
    }
}

/// Inverted dropout. In training mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f32,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(
            "dropout",
            format!("rate {rate} not in [0, 1)"),
        ));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f32> = (0..input.len())
        .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&scale)
        .map(|(x, s)| x * s)
        .collect();
    Ok((
        Tensor::from_vec(input.dims(), data)?,
        Some(DropoutMask { scale }),
    ))
}

pub fn dropout_backward(mask: Option<&DropoutMask>, grad_output: &Tensor) -> Result<Tensor> {
    match mask {
        None => Ok(grad_output.clone()),
        Some(mask) => {
            if mask.scale.len() != grad_output.len() {
                return Err(Error::shape(
                    "dropout_backward",
                    "length",
                    mask.scale.len(),
                    grad_output.len(),
                ));
            }
            let data = grad_output
                .data()
                .iter()
                .zip(&mask.scale)
                .map(|(g, s)| g * s)
                .collect();
            Tensor::from_vec(grad_output.dims(), data)
        }
    }
}
