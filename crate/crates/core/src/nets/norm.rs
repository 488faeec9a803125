use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on every channel standard deviation.
pub const SIGMA_FLOOR: f32 = 1e-6;

/// Per-channel mean and standard deviation of feature maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ChannelNorm {
    pub fn identity(channels: usize) -> Self {
        ChannelNorm {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Pools every spatial element of channel `c` across all maps and takes
    /// the mean and population standard deviation.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut acc = PooledMoments::default();
        for f in features {
            acc.push(f)?;
        }
        acc.finish()
    }
}

/// Streaming per-channel sums in `f64`.
#[derive(Default)]
pub(crate) struct PooledMoments {
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl PooledMoments {
    pub fn push(&mut self, features: &Tensor) -> Result<()> {
        let (c, h, w) = features.chw()?;
        if self.sum.is_empty() {
            self.sum = vec![0.0; c];
            self.sum_sq = vec![0.0; c];
        } else if self.sum.len() != c {
            return Err(Error::shape("channel_norm", "channels", self.sum.len(), c));
        }
        for ch in 0..c {
            let (s, q) = features
                .channel(ch)
                .iter()
                .fold((0.0f64, 0.0f64), |(s, q), &x| {
                    let x = x as f64;
                    (s + x, q + x * x)
                });
            self.sum[ch] += s;
            self.sum_sq[ch] += q;
        }
        self.count += (h * w) as u64;
        Ok(())
    }

    pub fn finish(self) -> Result<ChannelNorm> {
        if self.count == 0 {
            return Err(Error::Empty { op: "channel_norm" });
        }
        let n = self.count as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut std = Vec::with_capacity(self.sum.len());
        for (s, q) in self.sum.iter().zip(&self.sum_sq) {
            let m = s / n;
            let var = (q / n - m * m).max(0.0);
            mean.push(m as f32);
            std.push((var.sqrt() as f32).max(SIGMA_FLOOR));
        }
        Ok(ChannelNorm { mean, std })
    }
}

/// Runs the (frozen) teacher over standardized images and fits its channel statistics.
pub fn fit_channel_norm<'a>(
    teacher: &Network,
    images: impl IntoIterator<Item = &'a Tensor>,
) -> Result<ChannelNorm> {
    let mut acc = PooledMoments::default();
    for image in images {
        acc.push(&teacher.forward(image)?)?;
    }
    acc.finish()
}

fn check_channels(
    op: &'static str,
    features: &Tensor,
    norm: &ChannelNorm,
) -> Result<(usize, usize)> {
    let (c, h, w) = features.chw()?;
    if c != norm.channels() {
        return Err(Error::shape(op, "channels", norm.channels(), c));
    }
    Ok((c, h * w))
}

/// `(x_c - mean_c) / std_c` for every channel.
pub fn normalize_channels(features: &Tensor, norm: &ChannelNorm) -> Result<Tensor> {
    let (_, plane) = check_channels("normalize_channels", features, norm)?;
    let mut out = features.clone();
    for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let (m, s) = (norm.mean[ch], norm.std[ch]);
        for x in chunk {
            *x = (*x - m) / s;
        }
    }
    Ok(out)
}

pub fn denormalize_channels(features: &Tensor, norm: &ChannelNorm) -> Result<Tensor> {
    let (_, plane) = check_channels("denormalize_channels", features, norm)?;
    let mut out = features.clone();
    for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let (m, s) = (norm.mean[ch], norm.std[ch]);
        for x in chunk {
            *x = *x * s + m;
        }
    }
    Ok(out)
}
