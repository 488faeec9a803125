//! Decoding, resizing, and standardizing images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, Tensor};

/// Per-channel mean and standard deviation applied to every network input.
pub const CHANNEL_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Decodes an image file into a 3×H×W tensor with values in `[0, 1]`.
///
/// Grayscale sources are replicated to three channels.
pub fn decode_unit(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            msg: "zero-size image".into(),
        });
    }
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px.0[c];
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Decodes and bilinearly resizes to `size`×`size`, values in `[0, 1]`.
pub fn load_unit_image(path: &Path, size: usize) -> Result<Tensor> {
    bilinear_resize(&decode_unit(path)?, size, size)
}

/// Network-ready image: decoded, resized to `size`×`size`, and standardized.
pub fn load_image(path: &Path, size: usize) -> Result<Tensor> {
    Ok(standardize(&load_unit_image(path, size)?))
}

/// `(x_c - mean_c) / std_c` with the fixed channel statistics.
pub fn standardize(unit: &Tensor) -> Tensor {
    let mut out = unit.clone();
    let plane = unit.len() / 3;
    for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        for x in chunk {
            *x = (*x - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
        }
    }
    out
}

/// Luma `0.299 R + 0.587 G + 0.114 B` as an H×W plane.
pub fn luma(unit: &Tensor) -> Vec<f32> {
    let (r, g, b) = (unit.channel(0), unit.channel(1), unit.channel(2));
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect()
}

/// Grayscale conversion replicated to three channels.
pub fn to_gray(unit: &Tensor) -> Tensor {
    let y = luma(unit);
    let mut data = Vec::with_capacity(3 * y.len());
    for _ in 0..3 {
        data.extend_from_slice(&y);
    }
    Tensor::from_vec(unit.dims(), data).expect("same extents")
}

/// Centered `size`×`size` crop of a C×H×W tensor.
pub fn center_crop(input: &Tensor, size: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if size == 0 || size > h || size > w {
        return Err(Error::invalid(
            "center_crop",
            format!("crop {size} from {h}x{w}"),
        ));
    }
    let top = (h - size) / 2;
    let left = (w - size) / 2;
    let mut data = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        let plane = input.channel(ch);
        for y in top..top + size {
            data.extend_from_slice(&plane[y * w + left..y * w + left + size]);
        }
    }
    Tensor::from_vec(&[c, size, size], data)
}

/// Writes a 3×H×W unit-range tensor as an 8-bit RGB PNG.
pub fn save_unit_png(unit: &Tensor, path: &Path) -> Result<()> {
    let (_, h, w) = unit.chw()?;
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (unit.data()[c * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Writes a binary mask (nonzero = foreground) as an 8-bit grayscale PNG.
pub fn save_mask_png(mask: &[bool], height: usize, width: usize, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_fn(width as u32, height as u32, |x, y| {
        image::Luma([if mask[y as usize * width + x as usize] {
            255
        } else {
            0
        }])
    });
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Reads a mask PNG; any nonzero pixel is foreground.
pub fn load_mask(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Ok((gray.pixels().map(|p| p.0[0] > 0).collect(), h, w))
}

/// Resizes a mask to `size`×`size` by bilinear resampling and thresholding at 0.5.
pub fn resize_mask(mask: &[bool], h: usize, w: usize, size: usize) -> Result<Vec<bool>> {
    if (h, w) == (size, size) {
        return Ok(mask.to_vec());
    }
    let t = Tensor::from_vec(
        &[1, h, w],
        mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )?;
    Ok(bilinear_resize(&t, size, size)?
        .data()
        .iter()
        .map(|&v| v >= 0.5)
        .collect())
}
