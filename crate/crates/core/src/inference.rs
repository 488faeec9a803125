//! Local, global, and combined anomaly maps for one image.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MapQuantiles, ModelBundle};
use crate::nets::normalize_channels;
use crate::tensor::{bilinear_resize, Tensor};

/// Smallest denominator used when a quantile pair collapses.
pub const MIN_QUANTILE_SPAN: f32 = 1e-12;

/// Output of [`infer`]. All maps are `image_size`×`image_size`, stored as 1×H×W.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyResult {
    pub combined: Tensor,
    pub local: Tensor,
    pub global: Tensor,
    pub image_score: f32,
}

/// Anomaly maps before resizing and quantile normalization, at feature resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMaps {
    pub st: Tensor,
    pub ae: Tensor,
}

/// Channel-mean of `(a - b)^2` as a 1×H×W map.
pub fn channel_mean_sq_diff(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_same_dims("channel_mean_sq_diff", b)?;
    let (c, h, w) = a.chw()?;
    let plane = h * w;
    let mut acc = vec![0.0f64; plane];
    for ch in 0..c {
        for ((s, &x), &y) in acc.iter_mut().zip(a.channel(ch)).zip(b.channel(ch)) {
            let d = (x - y) as f64;
            *s += d * d;
        }
    }
    let inv = 1.0 / c as f64;
    Tensor::from_vec(
        &[1, h, w],
        acc.into_iter().map(|s| (s * inv) as f32).collect(),
    )
}

fn check_image(bundle: &ModelBundle, image: &Tensor) -> Result<()> {
    let s = bundle.arch.image_size;
    let (c, h, w) = image.chw()?;
    if (c, h, w) != (3, s, s) {
        return Err(Error::shape(
            "infer",
            "image",
            format!("3x{s}x{s}"),
            format!("{c}x{h}x{w}"),
        ));
    }
    Ok(())
}

/// `M_ST` and `M_AE` from a standardized image.
pub fn infer_raw_maps(bundle: &ModelBundle, image: &Tensor) -> Result<RawMaps> {
    check_image(bundle, image)?;
    let c = bundle.arch.feature_channels;
    let teacher = normalize_channels(&bundle.teacher.forward(image)?, &bundle.channel_norm)?;
    let student = bundle.student.forward(image)?;
    let ae = bundle.autoencoder.forward(image)?;
    let st_half = student.channels(0, c)?;
    let stae_half = student.channels(c, 2 * c)?;
    Ok(RawMaps {
        st: channel_mean_sq_diff(&teacher, &st_half)?,
        ae: channel_mean_sq_diff(&ae, &stae_half)?,
    })
}

/// `0.1 * (m - q_a) / (q_b - q_a)`, unclamped.
pub fn normalize_map(map: &Tensor, q_a: f32, q_b: f32) -> Tensor {
    let span = q_b - q_a;
    let span = if span.abs() < MIN_QUANTILE_SPAN || !span.is_finite() {
        warn!("degenerate map quantiles ({q_a}, {q_b}); using span {MIN_QUANTILE_SPAN}");
        MIN_QUANTILE_SPAN
    } else {
        span
    };
    map.map(|m| 0.1 * (m - q_a) / span)
}

/// Combines normalized local and global maps with equal weight.
pub fn combine_maps(raw: &RawMaps, quantiles: &MapQuantiles, size: usize) -> Result<AnomalyResult> {
    let st = bilinear_resize(&raw.st, size, size)?;
    let ae = bilinear_resize(&raw.ae, size, size)?;
    let local = normalize_map(&st, quantiles.st_a, quantiles.st_b);
    let global = normalize_map(&ae, quantiles.ae_a, quantiles.ae_b);
    let combined = local.zip_map(&global, |l, g| 0.5 * l + 0.5 * g)?;
    let image_score = combined.max();
    Ok(AnomalyResult {
        combined,
        local,
        global,
        image_score,
    })
}

/// Full inference on one standardized `image_size`×`image_size` image.
pub fn infer(bundle: &ModelBundle, image: &Tensor) -> Result<AnomalyResult> {
    let raw = infer_raw_maps(bundle, image)?;
    combine_maps(&raw, &bundle.quantiles, bundle.arch.image_size)
}

/// Resizes a 1×H×W map back to the original image resolution.
pub fn resize_map_to_original(map: &Tensor, orig_h: usize, orig_w: usize) -> Result<Tensor> {
    bilinear_resize(map, orig_h, orig_w)
}

/// Per-image record written by the `infer` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageScore {
    pub path: String,
    pub score: f32,
}
