//! Adam with coupled L2 weight decay (`g += wd * theta` before the moment update).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl AdamConfig {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.dims()))
            .collect();
        let second = first.clone();
        AdamState {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f32 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.config.lr = lr;
    }

    pub fn num_params(&self) -> usize {
        self.first.len()
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != state.first.len() || grads.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            "parameter count",
            state.first.len(),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        if p.dims() != g.dims() || p.dims() != m.dims() {
            return Err(Error::shape(
                "adam_step",
                "parameter dims",
                format!("{:?}", m.dims()),
                format!("{:?} / grad {:?}", p.dims(), g.dims()),
            ));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        weight_decay,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let correction1 = 1.0 - (beta1 as f64).powi(t);
    let correction2 = 1.0 - (beta2 as f64).powi(t);
    let step_size = (lr as f64 / correction1) as f32;
    let inv_sqrt_c2 = (1.0 / correction2.sqrt()) as f32;

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        let theta = p.data_mut();
        for (((x, &gi), mi), vi) in theta
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let grad = gi + weight_decay * *x;
            *mi = beta1 * *mi + (1.0 - beta1) * grad;
            *vi = beta2 * *vi + (1.0 - beta2) * grad * grad;
            let denom = vi.sqrt() * inv_sqrt_c2 + epsilon;
            *x -= step_size * *mi / denom;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(theta: f32, grad: f32, lr: f32, wd: f32, steps: usize) -> Vec<f32> {
        let mut p = Tensor::from_vec(&[1], vec![theta]).unwrap();
        let g = Tensor::from_vec(&[1], vec![grad]).unwrap();
        let mut state = AdamState::new(AdamConfig::new(lr, wd), [&p]);
        let mut trace = Vec::new();
        for _ in 0..steps {
            adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
            trace.push(p.data()[0]);
        }
        trace
    }

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        assert!(run(0.7, 0.0, 0.1, 0.0, 5).iter().all(|&x| x == 0.7));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        let after = run(1.0, 1.0, 0.1, 0.0, 1)[0];
        assert!((after - 0.9).abs() < 1e-6, "{after}");
    }

    #[test]
    fn weight_decay_shrinks_monotonically() {
        let trace = run(0.5, 0.0, 1e-3, 1e-5, 50);
        let mut prev = 0.5;
        for x in trace {
            assert!(x < prev && x > 0.0);
            prev = x;
        }
        let neg = run(-0.5, 0.0, 1e-3, 1e-5, 10);
        assert!(neg.iter().all(|&x| x > -0.5 && x < 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::new(0.1, 0.0), [&Tensor::zeros(&[2])]);
        assert!(adam_step(&mut [&mut p], &[&g], &mut state).is_err());
    }
}
