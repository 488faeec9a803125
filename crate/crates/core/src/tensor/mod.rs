//! Dense CPU tensors and the differentiable operations the networks are built from.
//!
//! Every operation comes as a forward function plus an explicit backward
//! function. The networks are static layer lists, so the backward pass is a
//! hand-chained walk over the recorded layer inputs rather than a general
//! autodiff graph.

mod activation;
mod conv;
mod gemm;
mod pool;
mod resize;
mod stats;

pub use activation::{
    dropout, dropout_backward, relu, relu_backward, relu_backward_from_output, DropoutMask,
};
pub use conv::{conv2d, conv2d_backward, Activation, ConvGrads, ConvSpec};
pub use gemm::{num_threads, set_num_threads};
pub use pool::{avgpool2d, avgpool2d_backward, PoolSpec};
pub use resize::{bilinear_resize, bilinear_resize_backward};
pub use stats::{quantile, quantile_sorted};

use crate::error::{Error, Result};

/// Dense row-major `f32` array of rank 1 to 4.
///
/// Image-like tensors use the C×H×W layout; convolution weights use O×I×Kh×Kw.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f32) -> Self {
        check_dims(dims);
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::invalid(
                "tensor",
                format!("rank {} not in 1..=4", dims.len()),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("tensor", format!("zero extent in {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape("tensor", "length", len, data.len()));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the same data under new extents.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Tensor::from_vec(dims, self.data)
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape("tensor", "rank", 3, self.rank())),
        }
    }

    /// Contiguous slice holding channel `c` of a C×H×W tensor.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.dims[1..].iter().product::<usize>();
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Channels `start..end` of a C×H×W tensor as a new tensor.
    pub fn channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if start >= end || end > c {
            return Err(Error::invalid(
                "channels",
                format!("range {start}..{end} out of 0..{c}"),
            ));
        }
        let plane = h * w;
        Tensor::from_vec(
            &[end - start, h, w],
            self.data[start * plane..end * plane].to_vec(),
        )
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.expect_same_dims("zip_map", other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_dims("add_assign", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    /// Mean accumulated in `f64`.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn expect_same_dims(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(
                op,
                "dims",
                format!("{:?}", self.dims),
                format!("{:?}", other.dims),
            ));
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize]) {
    assert!(
        !dims.is_empty() && dims.len() <= 4,
        "tensor rank {} not in 1..=4",
        dims.len()
    );
    assert!(dims.iter().all(|&d| d > 0), "zero extent in {dims:?}");
}

/// Output extent of a sliding window: `floor((n + 2p - k) / s) + 1`.
pub fn window_output_len(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}
