use super::Tensor;
use crate::error::{Error, Result};

/// Per-output-index source taps along one axis: `(i0, i1, w1)` with the
/// sample equal to `(1 - w1) * x[i0] + w1 * x[i1]`.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// `a + (b - a) * t`; exact when `a == b`.
#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn check(
    op: &'static str,
    input: &Tensor,
    out_h: usize,
    out_w: usize,
) -> Result<(usize, usize, usize)> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(op, format!("output size {out_h}x{out_w}")));
    }
    input
        .chw()
        .map_err(|_| Error::shape(op, "input rank", 3, input.rank()))
}

/// Bilinear resize with half-pixel centers (`align_corners = false`).
///
/// Source coordinates `(d + 0.5) * in / out - 0.5` are clamped to the valid
/// range. Resizing to the same size returns an exact copy.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = check("bilinear_resize", input, out_h, out_w)?;
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let mut out = vec![0.0f32; c * out_h * out_w];
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = &mut out[ch * out_h * out_w..(ch + 1) * out_h * out_w];
        for (oy, &(y0, y1, wy)) in rows.iter().enumerate() {
            let r0 = &src[y0 * w..(y0 + 1) * w];
            let r1 = &src[y1 * w..(y1 + 1) * w];
            for (ox, &(x0, x1, wx)) in cols.iter().enumerate() {
                let top = lerp(r0[x0], r0[x1], wx);
                let bottom = lerp(r1[x0], r1[x1], wx);
                dst[oy * out_w + ox] = lerp(top, bottom, wy);
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Adjoint of [`bilinear_resize`] with respect to its input.
pub fn bilinear_resize_backward(input_dims: &[usize], grad_output: &Tensor) -> Result<Tensor> {
    let (c, oh, ow) = grad_output.chw().map_err(|_| {
        Error::shape(
            "bilinear_resize_backward",
            "grad rank",
            3,
            grad_output.rank(),
        )
    })?;
    let [ic, h, w] = input_dims[..] else {
        return Err(Error::shape(
            "bilinear_resize_backward",
            "input rank",
            3,
            input_dims.len(),
        ));
    };
    if ic != c {
        return Err(Error::shape("bilinear_resize_backward", "channels", ic, c));
    }
    if (h, w) == (oh, ow) {
        return Ok(grad_output.clone());
    }
    let rows = axis_taps(h, oh);
    let cols = axis_taps(w, ow);
    let mut dx = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let g = grad_output.channel(ch);
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, wy)) in rows.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in cols.iter().enumerate() {
                let v = g[oy * ow + ox];
                let top = v * (1.0 - wy);
                let bottom = v * wy;
                plane[y0 * w + x0] += top * (1.0 - wx);
                plane[y0 * w + x1] += top * wx;
                plane[y1 * w + x0] += bottom * (1.0 - wx);
                plane[y1 * w + x1] += bottom * wx;
            }
        }
    }
    Tensor::from_vec(input_dims, dx)
}
