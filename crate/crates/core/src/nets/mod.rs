//! Patch description networks, the autoencoder, and teacher feature normalization.
//!
//! Every network is a flat list of layers interpreted by one forward routine
//! and one reverse routine; the architectures differ only in their layer data.

mod arch;
mod norm;

pub use arch::{autoencoder, pdn, ArchConfig, PdnRole, Variant};
pub use norm::{denormalize_channels, fit_channel_norm, normalize_channels, ChannelNorm};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    avgpool2d, avgpool2d_backward, bilinear_resize, bilinear_resize_backward, conv2d,
    conv2d_backward, dropout, dropout_backward, ConvSpec, DropoutMask, PoolSpec, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        name: String,
        spec: ConvSpec,
        weight: Tensor,
        bias: Tensor,
    },
    AvgPool(PoolSpec),
    Resize {
        height: usize,
        width: usize,
    },
    Dropout {
        rate: f32,
    },
}

/// Which architecture a network was built as.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetKind {
    Teacher,
    Student,
    Autoencoder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub kind: NetKind,
    layers: Vec<Layer>,
    /// Exact input extents (H, W) the network accepts, if fixed.
    fixed_input: Option<(usize, usize)>,
}

/// Activations recorded by [`Network::forward_trace`] for the reverse pass.
pub struct Trace {
    inputs: Vec<Tensor>,
    masks: Vec<Option<DropoutMask>>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn into_output(self) -> Tensor {
        self.output
    }
}

impl Network {
    pub(crate) fn new(
        kind: NetKind,
        layers: Vec<Layer>,
        fixed_input: Option<(usize, usize)>,
    ) -> Self {
        Network {
            kind,
            layers,
            fixed_input,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn fixed_input(&self) -> Option<(usize, usize)> {
        self.fixed_input
    }

    /// Number of output channels of the last convolution.
    pub fn out_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv { spec, .. } => Some(spec.out_channels),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Weights and biases in layer order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv { weight, bias, .. } => vec![weight, bias],
                _ => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Conv { weight, bias, .. } => vec![weight, bias],
                _ => vec![],
            })
            .collect()
    }

    /// `(record name, tensor)` pairs, e.g. `("conv1.weight", w)`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv {
                    name, weight, bias, ..
                } => vec![
                    (format!("{name}.weight"), weight),
                    (format!("{name}.bias"), bias),
                ],
                _ => vec![],
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params()
            .iter()
            .map(|p| Tensor::zeros(p.dims()))
            .collect()
    }

    /// Spatial output extents for an input of `h`×`w`, or `None` if some
    /// layer would produce an empty map.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let mut hw = (h, w);
        for layer in &self.layers {
            hw = match layer {
                Layer::Conv { spec, .. } => spec.output_hw(hw.0, hw.1)?,
                Layer::AvgPool(p) => p.output_hw(hw.0, hw.1)?,
                Layer::Resize { height, width } => (*height, *width),
                Layer::Dropout { .. } => hw,
            };
        }
        Some(hw)
    }

    /// Spatial extents after every layer, starting with the input.
    pub fn shape_trace(&self, h: usize, w: usize) -> Option<Vec<(usize, usize, usize)>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut chw = (3, h, w);
        out.push(chw);
        for layer in &self.layers {
            chw = match layer {
                Layer::Conv { spec, .. } => {
                    let (oh, ow) = spec.output_hw(chw.1, chw.2)?;
                    (spec.out_channels, oh, ow)
                }
                Layer::AvgPool(p) => {
                    let (oh, ow) = p.output_hw(chw.1, chw.2)?;
                    (chw.0, oh, ow)
                }
                Layer::Resize { height, width } => (chw.0, *height, *width),
                Layer::Dropout { .. } => chw,
            };
            out.push(chw);
        }
        Some(out)
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let (c, h, w) = input.chw()?;
        if c != 3 {
            return Err(Error::shape("network", "image channels", 3, c));
        }
        if let Some((fh, fw)) = self.fixed_input {
            if (h, w) != (fh, fw) {
                return Err(Error::shape(
                    "network",
                    "image size",
                    format!("{fh}x{fw}"),
                    format!("{h}x{w}"),
                ));
            }
        }
        if self.output_hw(h, w).is_none() {
            return Err(Error::shape(
                "network",
                "image size",
                "large enough for every layer",
                format!("{h}x{w}"),
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout disabled).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    spec, weight, bias, ..
                } => conv2d(&x, weight, bias, spec)?,
                Layer::AvgPool(p) => avgpool2d(&x, p)?,
                Layer::Resize { height, width } => bilinear_resize(&x, *height, *width)?,
                Layer::Dropout { .. } => x,
            };
        }
        Ok(x)
    }

    /// Forward pass that records what the reverse pass needs. Dropout is
    /// active only when `training` is set.
    pub fn forward_trace<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<Trace> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, mask) = match layer {
                Layer::Conv {
                    spec, weight, bias, ..
                } => (conv2d(&x, weight, bias, spec)?, None),
                Layer::AvgPool(p) => (avgpool2d(&x, p)?, None),
                Layer::Resize { height, width } => (bilinear_resize(&x, *height, *width)?, None),
                Layer::Dropout { rate } => dropout(&x, *rate, training, rng)?,
            };
            inputs.push(x);
            masks.push(mask);
            x = y;
        }
        Ok(Trace {
            inputs,
            masks,
            output: x,
        })
    }

    /// Reverse pass: adds parameter gradients into `grads` (ordered like
    /// [`Network::params`]) and optionally returns the input gradient.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &Tensor,
        grads: &mut [Tensor],
        want_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if grads.len() != self.params().len() {
            return Err(Error::shape(
                "backward",
                "gradient buffers",
                self.params().len(),
                grads.len(),
            ));
        }
        trace.output.expect_same_dims("backward", grad_output)?;
        let mut grad = grad_output.clone();
        let mut slot = grads.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let need_input = i > 0 || want_input_grad;
            grad = match layer {
                Layer::Conv {
                    spec, weight, bias, ..
                } => {
                    let output = trace.inputs.get(i + 1).unwrap_or(&trace.output);
                    let g = conv2d_backward(input, weight, bias, spec, output, &grad, need_input)?;
                    slot -= 2;
                    grads[slot].add_assign(&g.weights)?;
                    grads[slot + 1].add_assign(&g.bias)?;
                    match g.input {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                Layer::AvgPool(p) => avgpool2d_backward(input.dims(), p, &grad)?,
                Layer::Resize { .. } => bilinear_resize_backward(input.dims(), &grad)?,
                Layer::Dropout { .. } => dropout_backward(trace.masks[i].as_ref(), &grad)?,
            };
            if i == 0 {
                return Ok(Some(grad));
            }
        }
        Ok(None)
    }

    /// Re-draws every weight and bias from `U(-b, b)` with `b = 1/sqrt(fan_in)`.
    pub fn init_params<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            if let Layer::Conv { weight, bias, .. } = layer {
                let dims = weight.dims();
                let fan_in = dims[1] * dims[2] * dims[3];
                let bound = 1.0 / (fan_in as f32).sqrt();
                for x in weight.data_mut() {
                    *x = rng.gen_range(-bound..bound);
                }
                for x in bias.data_mut() {
                    *x = rng.gen_range(-bound..bound);
                }
            }
        }
    }
}
