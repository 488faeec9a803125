use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Layer, NetKind, Network};
use crate::error::{Error, Result};
use crate::tensor::{Activation, ConvSpec, PoolSpec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Four convolutions, 128/256/256 kernels.
    S,
    /// Six convolutions, 256/512/512/512 kernels.
    M,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdnRole {
    Teacher,
    Student,
}

/// Architecture hyperparameters shared by the teacher, student, and autoencoder.
///
/// The default is the full-size model: 384 feature channels, 256×256 input,
/// padding on. `width_divisor` shrinks every hidden layer width, and
/// `feature_channels` sets the teacher/autoencoder output width (the student
/// has twice as many); both exist to run the pipeline at reduced cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub variant: Variant,
    pub feature_channels: usize,
    pub width_divisor: usize,
    pub image_size: usize,
    pub padding: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            variant: Variant::S,
            feature_channels: 384,
            width_divisor: 1,
            image_size: 256,
            padding: true,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "arch";
        if self.feature_channels == 0 {
            return Err(Error::invalid(op, "feature_channels must be positive"));
        }
        if self.width_divisor == 0 || 32 % self.width_divisor != 0 {
            return Err(Error::invalid(
                op,
                format!("width_divisor {} must divide 32", self.width_divisor),
            ));
        }
        if self.image_size < 128 || !self.image_size.is_multiple_of(64) {
            return Err(Error::invalid(
                op,
                format!(
                    "image_size {} must be a multiple of 64 and at least 128",
                    self.image_size
                ),
            ));
        }
        Ok(())
    }

    fn width(&self, full: usize) -> usize {
        full / self.width_divisor
    }

    /// Spatial size of the teacher output for a square `image_size` input.
    pub fn feature_size(&self) -> usize {
        pdn_layers(self, self.feature_channels)
            .iter()
            .try_fold(self.image_size, |n, l| match l {
                LayerPlan::Conv(spec) => spec.output_hw(n, n).map(|(h, _)| h),
                LayerPlan::Pool(p) => p.output_hw(n, n).map(|(h, _)| h),
            })
            .unwrap_or(0)
    }
}

enum LayerPlan {
    Conv(ConvSpec),
    Pool(PoolSpec),
}

fn pdn_layers(cfg: &ArchConfig, out: usize) -> Vec<LayerPlan> {
    use Activation::{None as Linear, Relu};
    let p = usize::from(cfg.padding);
    let conv = |o, k, pad, act| LayerPlan::Conv(ConvSpec::new(o, k, 1, pad, act));
    let pool = LayerPlan::Pool(PoolSpec {
        kernel: 2,
        stride: 2,
        padding: p,
    });
    match cfg.variant {
        Variant::S => vec![
            conv(cfg.width(128), 4, 3 * p, Relu),
            pool,
            conv(cfg.width(256), 4, 3 * p, Relu),
            LayerPlan::Pool(PoolSpec {
                kernel: 2,
                stride: 2,
                padding: p,
            }),
            conv(cfg.width(256), 3, p, Relu),
            conv(out, 4, 0, Linear),
        ],
        Variant::M => vec![
            conv(cfg.width(256), 4, 3 * p, Relu),
            pool,
            conv(cfg.width(512), 4, 3 * p, Relu),
            LayerPlan::Pool(PoolSpec {
                kernel: 2,
                stride: 2,
                padding: p,
            }),
            conv(cfg.width(512), 1, 0, Relu),
            conv(cfg.width(512), 3, p, Relu),
            conv(out, 4, 0, Relu),
            conv(out, 1, 0, Linear),
        ],
    }
}

fn conv_layer(name: String, spec: ConvSpec, in_channels: usize) -> Layer {
    Layer::Conv {
        name,
        weight: Tensor::zeros(&[spec.out_channels, in_channels, spec.kernel.0, spec.kernel.1]),
        bias: Tensor::zeros(&[spec.out_channels]),
        spec,
    }
}

/// Builds a patch description network with freshly initialized parameters.
///
/// The student differs from the teacher only in the width of its final
/// layers: twice the feature channels, the first half regressing the teacher
/// and the second half the autoencoder.
pub fn pdn<R: Rng + ?Sized>(cfg: &ArchConfig, role: PdnRole, rng: &mut R) -> Result<Network> {
    cfg.validate()?;
    let (kind, out) = match role {
        PdnRole::Teacher => (NetKind::Teacher, cfg.feature_channels),
        PdnRole::Student => (NetKind::Student, 2 * cfg.feature_channels),
    };
    let mut layers = Vec::new();
    let mut channels = 3;
    let mut index = 0;
    for plan in pdn_layers(cfg, out) {
        match plan {
            LayerPlan::Conv(spec) => {
                index += 1;
                layers.push(conv_layer(format!("conv{index}"), spec, channels));
                channels = spec.out_channels;
            }
            LayerPlan::Pool(p) => layers.push(Layer::AvgPool(p)),
        }
    }
    let mut net = Network::new(kind, layers, None);
    net.init_params(rng);
    Ok(net)
}

/// Builds the encoder-decoder that reconstructs teacher features from a
/// 64-dimensional bottleneck.
///
/// Five stride-2 convolutions reduce the image to `image_size / 32`, a final
/// convolution of that kernel size yields the 1×1 latent code. The decoder
/// alternates bilinear upsampling, a 4×4 convolution that grows the map by
/// one pixel, and dropout, then resizes to the teacher's feature size.
pub fn autoencoder<R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Result<Network> {
    use Activation::{None as Linear, Relu};
    cfg.validate()?;
    let s = cfg.image_size;
    let mut layers = Vec::new();
    let mut channels = 3;
    let mut push_conv = |layers: &mut Vec<Layer>, name: String, spec: ConvSpec| {
        layers.push(conv_layer(name, spec, channels));
        channels = spec.out_channels;
    };

    let enc = [32, 32, 64, 64, 64];
    for (i, &full) in enc.iter().enumerate() {
        push_conv(
            &mut layers,
            format!("enc{}", i + 1),
            ConvSpec::new(cfg.width(full), 4, 2, 1, Relu),
        );
    }
    push_conv(
        &mut layers,
        "enc6".into(),
        ConvSpec::new(cfg.width(64), s / 32, 1, 0, Linear),
    );

    let upsample = [s / 64 - 1, s / 32, s / 16 - 1, s / 8, s / 4 - 1, s / 2 - 1];
    for (i, &size) in upsample.iter().enumerate() {
        layers.push(Layer::Resize {
            height: size,
            width: size,
        });
        push_conv(
            &mut layers,
            format!("dec{}", i + 1),
            ConvSpec::new(cfg.width(64), 4, 1, 2, Relu),
        );
        layers.push(Layer::Dropout { rate: 0.2 });
    }
    let f = cfg.feature_size();
    layers.push(Layer::Resize {
        height: f,
        width: f,
    });
    push_conv(
        &mut layers,
        "dec7".into(),
        ConvSpec::new(cfg.width(64), 3, 1, 1, Relu),
    );
    push_conv(
        &mut layers,
        "dec8".into(),
        ConvSpec::new(cfg.feature_channels, 3, 1, 1, Linear),
    );

    let mut net = Network::new(NetKind::Autoencoder, layers, Some((s, s)));
    net.init_params(rng);
    Ok(net)
}
