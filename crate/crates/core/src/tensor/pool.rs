use super::{window_output_len, Tensor};
use crate::error::{Error, Result};

/// Square average-pooling window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            window_output_len(h, self.kernel, self.stride, self.padding)?,
            window_output_len(w, self.kernel, self.stride, self.padding)?,
        ))
    }
}

fn output_hw(
    op: &'static str,
    input: &Tensor,
    spec: &PoolSpec,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (c, h, w) = input
        .chw()
        .map_err(|_| Error::shape(op, "input rank", 3, input.rank()))?;
    if spec.stride == 0 || spec.kernel == 0 {
        return Err(Error::invalid(op, "kernel and stride must be at least 1"));
    }
    let Some((oh, ow)) = spec.output_hw(h, w) else {
        return Err(Error::shape(
            op,
            "spatial size",
            format!("H + 2*{} >= {}", spec.padding, spec.kernel),
            format!("{h}x{w}"),
        ));
    };
    Ok((c, h, w, oh, ow))
}

/// Average pooling. Zero-padded cells count toward the divisor, which is
/// always `kernel * kernel`.
pub fn avgpool2d(input: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    let (c, h, w, oh, ow) = output_hw("avgpool2d", input, spec)?;
    let inv = 1.0 / (spec.kernel * spec.kernel) as f32;
    let pad = spec.padding as isize;
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        let plane = input.channel(ch);
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for i in 0..spec.kernel {
                    let iy = (oy * spec.stride + i) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for j in 0..spec.kernel {
                        let ix = (ox * spec.stride + j) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            acc += plane[iy as usize * w + ix as usize];
                        }
                    }
                }
                dst[oy * ow + ox] = acc * inv;
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out)
}

pub fn avgpool2d_backward(
    input_dims: &[usize],
    spec: &PoolSpec,
    grad_output: &Tensor,
) -> Result<Tensor> {
    let probe = Tensor::zeros(input_dims);
    let (c, h, w, oh, ow) = output_hw("avgpool2d_backward", &probe, spec)?;
    if grad_output.dims() != [c, oh, ow] {
        return Err(Error::shape(
            "avgpool2d_backward",
            "grad_output",
            format!("{:?}", [c, oh, ow]),
            format!("{:?}", grad_output.dims()),
        ));
    }
    let inv = 1.0 / (spec.kernel * spec.kernel) as f32;
    let pad = spec.padding as isize;
    let mut dx = probe.into_vec();
    for ch in 0..c {
        let g = grad_output.channel(ch);
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let share = g[oy * ow + ox] * inv;
                for i in 0..spec.kernel {
                    let iy = (oy * spec.stride + i) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for j in 0..spec.kernel {
                        let ix = (ox * spec.stride + j) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += share;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_dims, dx)
}
