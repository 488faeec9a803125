use serde::{Deserialize, Serialize};

use super::activation::relu_backward_from_output;
use super::gemm::{gemm, MatRef};
use super::{window_output_len, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    None,
}

/// Hyperparameters of one 2D convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// Zero rows/cols added at every border.
    pub padding: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub fn new(
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> Self {
        ConvSpec {
            out_channels,
            kernel: (kernel, kernel),
            stride: (stride, stride),
            padding,
            activation,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.out_channels == 0 {
            return None;
        }
        Some((
            window_output_len(h, self.kernel.0, self.stride.0, self.padding)?,
            window_output_len(w, self.kernel.1, self.stride.1, self.padding)?,
        ))
    }
}

/// Gradients of a scalar loss with respect to the three conv inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for it (e.g. the image layer).
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
}

fn geometry(
    op: &'static str,
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Geometry> {
    let (c, h, w) = input
        .chw()
        .map_err(|_| Error::shape(op, "input rank", 3, input.rank()))?;
    let [o, wc, kh, kw] = weights.dims()[..] else {
        return Err(Error::shape(op, "weights rank", 4, weights.rank()));
    };
    if wc != c {
        return Err(Error::shape(op, "input channels", wc, c));
    }
    if o != spec.out_channels {
        return Err(Error::shape(op, "output channels", spec.out_channels, o));
    }
    if (kh, kw) != spec.kernel {
        return Err(Error::shape(
            op,
            "kernel",
            format!("{:?}", spec.kernel),
            format!("{:?}", (kh, kw)),
        ));
    }
    if bias.dims() != [o] {
        return Err(Error::shape(
            op,
            "bias",
            format!("[{o}]"),
            format!("{:?}", bias.dims()),
        ));
    }
    if spec.stride.0 == 0 || spec.stride.1 == 0 {
        return Err(Error::invalid(op, "stride must be at least 1"));
    }
    if h + 2 * spec.padding < kh {
        return Err(Error::shape(
            op,
            "height",
            format!("H + 2*{} >= {kh}", spec.padding),
            h,
        ));
    }
    if w + 2 * spec.padding < kw {
        return Err(Error::shape(
            op,
            "width",
            format!("W + 2*{} >= {kw}", spec.padding),
            w,
        ));
    }
    let (oh, ow) = spec.output_hw(h, w).expect("checked above");
    Ok(Geometry {
        c,
        h,
        w,
        oh,
        ow,
        kh,
        kw,
        sh: spec.stride.0,
        sw: spec.stride.1,
        pad: spec.padding,
    })
}

/// Unfolds the input into a (C·Kh·Kw) × (H'·W') patch matrix.
fn im2col(x: &[f32], g: &Geometry) -> Vec<f32> {
    let n = g.oh * g.ow;
    let mut col = vec![0.0f32; g.col_rows() * n];
    let pad = g.pad as isize;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut col[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + i) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.sw + j) as isize - pad;
                        if ix >= 0 && ix < g.w as isize {
                            *o = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input.
fn col2im(col: &[f32], g: &Geometry) -> Vec<f32> {
    let n = g.oh * g.ow;
    let mut x = vec![0.0f32; g.c * g.h * g.w];
    let pad = g.pad as isize;
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &col[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + i) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + j) as isize - pad;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2D cross-correlation plus bias, followed by the spec's activation.
///
/// `input` is C×H×W, `weights` O×C×Kh×Kw, `bias` has O entries. Output
/// extents follow `floor((H + 2p - Kh) / Sh) + 1`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let g = geometry("conv2d", input, weights, bias, spec)?;
    let o = spec.out_channels;
    let n = g.oh * g.ow;
    let k = g.col_rows();
    let mut out = vec![0.0f32; o * n];
    for (row, &b) in out.chunks_mut(n).zip(bias.data()) {
        row.fill(b);
    }
    if g.is_pointwise() {
        gemm(
            o,
            k,
            n,
            MatRef::rows(weights.data(), k),
            MatRef::rows(input.data(), n),
            1.0,
            &mut out,
        );
    } else {
        let col = im2col(input.data(), &g);
        gemm(
            o,
            k,
            n,
            MatRef::rows(weights.data(), k),
            MatRef::rows(&col, n),
            1.0,
            &mut out,
        );
    }
    if spec.activation == Activation::Relu {
        for x in &mut out {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
    }
    Tensor::from_vec(&[o, g.oh, g.ow], out)
}

/// Reverse pass of [`conv2d`].
///
/// `output` is the forward result (post-activation); it is only read when the
/// activation is ReLU. Set `want_input` to false to skip the input gradient.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    output: &Tensor,
    grad_output: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let g = geometry("conv2d_backward", input, weights, bias, spec)?;
    let o = spec.out_channels;
    let n = g.oh * g.ow;
    let k = g.col_rows();
    let expected = [o, g.oh, g.ow];
    if grad_output.dims() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            "grad_output",
            format!("{expected:?}"),
            format!("{:?}", grad_output.dims()),
        ));
    }
    let pre_grad;
    let dy: &Tensor = match spec.activation {
        Activation::Relu => {
            pre_grad = relu_backward_from_output(output, grad_output)?;
            &pre_grad
        }
        Activation::None => grad_output,
    };

    let bias_grad: Vec<f32> = dy
        .data()
        .chunks(n)
        .map(|row| row.iter().map(|&x| x as f64).sum::<f64>() as f32)
        .collect();

    let col_owned;
    let col: &[f32] = if g.is_pointwise() {
        input.data()
    } else {
        col_owned = im2col(input.data(), &g);
        &col_owned
    };
    let mut weight_grad = vec![0.0f32; o * k];
    gemm(
        o,
        n,
        k,
        MatRef::rows(dy.data(), n),
        MatRef::transposed(col, n),
        0.0,
        &mut weight_grad,
    );

    let input_grad = if want_input {
        let mut dcol = vec![0.0f32; k * n];
        gemm(
            k,
            o,
            n,
            MatRef::transposed(weights.data(), k),
            MatRef::rows(dy.data(), n),
            0.0,
            &mut dcol,
        );
        let dx = if g.is_pointwise() {
            dcol
        } else {
            col2im(&dcol, &g)
        };
        Some(Tensor::from_vec(input.dims(), dx)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        weights: Tensor::from_vec(weights.dims(), weight_grad)?,
        bias: Tensor::from_vec(&[o], bias_grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let len = dims.iter().product();
        Tensor::from_vec(
            dims,
            (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        )
        .unwrap()
    }

    /// Six nested loops over (o, oy, ox, c, i, j).
    fn direct_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (c, h, wd) = x.chw().unwrap();
        let [o, _, kh, kw] = w.dims()[..] else {
            unreachable!()
        };
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0f64; o * oh * ow];
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[oc] as f64;
                    for ic in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * stride + i) as isize - pad as isize;
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[(ic * h + iy as usize) * wd + ix as usize] as f64
                                    * w.data()[((oc * c + ic) * kh + i) * kw + j] as f64;
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn scalar_multiply_add() {
        let x = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let y = conv2d(&x, &w, &b, &ConvSpec::new(1, 1, 1, 0, Activation::None)).unwrap();
        assert_eq!(y.data(), &[6.5]);
    }

    #[test]
    fn constant_field() {
        let x = Tensor::filled(&[1, 3, 3], 1.0);
        let w = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b, &ConvSpec::new(1, 2, 1, 0, Activation::None)).unwrap();
        assert_eq!(y.dims(), &[1, 2, 2]);
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let y = conv2d(&x, &w, &b, &ConvSpec::new(3, 3, 1, 1, Activation::None)).unwrap();
        assert_eq!(y.dims(), &[3, 5, 5]);
        for (got, want) in y.data().iter().zip(direct_conv(&x, &w, &b, 1, 1)) {
            assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
        }
        // strided, padded, non-square remainder
        let x = random(&[3, 9, 7], &mut rng);
        let w = random(&[4, 3, 4, 4], &mut rng);
        let b = random(&[4], &mut rng);
        let y = conv2d(&x, &w, &b, &ConvSpec::new(4, 4, 2, 1, Activation::None)).unwrap();
        for (got, want) in y.data().iter().zip(direct_conv(&x, &w, &b, 2, 1)) {
            assert!((*got as f64 - want).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_activation_applied() {
        let x = Tensor::from_vec(&[1, 1, 2], vec![1.0, -1.0]).unwrap();
        let w = Tensor::filled(&[1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b, &ConvSpec::new(1, 1, 1, 0, Activation::Relu)).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 2, 2]);
        let b = Tensor::zeros(&[1]);
        let err = conv2d(&x, &w, &b, &ConvSpec::new(1, 2, 1, 0, Activation::None)).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");

        let x = Tensor::zeros(&[1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 4, 4]);
        let err = conv2d(&x, &w, &b, &ConvSpec::new(1, 4, 1, 0, Activation::None)).unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
        // padding makes it legal
        assert!(conv2d(&x, &w, &b, &ConvSpec::new(1, 4, 1, 1, Activation::None)).is_ok());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 6, 5], &mut rng);
        let g = Geometry {
            c: 2,
            h: 6,
            w: 5,
            oh: 3,
            ow: 3,
            kh: 3,
            kw: 2,
            sh: 2,
            sw: 2,
            pad: 1,
        };
        let col = im2col(x.data(), &g);
        let y: Vec<f32> = (0..col.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| *a as f64 * *b as f64).sum();
        let back = col2im(&y, &g);
        let rhs: f64 = x
            .data()
            .iter()
            .zip(&back)
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum();
        assert!((lhs - rhs).abs() < 1e-5);
    }
}
