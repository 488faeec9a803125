//! Single-precision matrix multiply with optional row-block parallelism.
//!
//! Rows of the output are split into contiguous blocks, one `sgemm` call per
//! block. Each output element is reduced over the inner dimension in the same
//! order regardless of the split, so threaded and sequential results are
//! bit-identical.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the number of worker threads used by convolution matrix multiplies.
pub fn set_num_threads(threads: usize) {
    THREADS.store(threads.max(1), Ordering::Relaxed);
}

pub fn num_threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Strided view of a row-major or transposed matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f32], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }
}

const MIN_ROWS_PER_TASK: usize = 16;

/// `c (m×n, row-major) = beta * c + a (m×k) * b (k×n)`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: MatRef<'_>,
    b: MatRef<'_>,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    let threads = num_threads();
    if threads <= 1 || m < 2 * MIN_ROWS_PER_TASK {
        gemm_block(0, m, k, n, a, b, beta, c);
        return;
    }
    let rows_per = m.div_ceil(threads).max(MIN_ROWS_PER_TASK);
    c.par_chunks_mut(rows_per * n)
        .enumerate()
        .for_each(|(i, chunk)| {
            let row0 = i * rows_per;
            let rows = chunk.len() / n;
            gemm_block(row0, rows, k, n, a, b, beta, chunk);
        });
}

#[allow(clippy::too_many_arguments)]
fn gemm_block(
    row0: usize,
    rows: usize,
    k: usize,
    n: usize,
    a: MatRef<'_>,
    b: MatRef<'_>,
    beta: f32,
    c: &mut [f32],
) {
    let a_off = row0 * a.row_stride;
    // Bounds of the strided views, checked once so the raw call stays in range.
    let a_last = a_off + (rows - 1) * a.row_stride + (k - 1) * a.col_stride;
    let b_last = (k - 1) * b.row_stride + (n - 1) * b.col_stride;
    assert!(a_last < a.data.len(), "gemm: lhs view out of bounds");
    assert!(b_last < b.data.len(), "gemm: rhs view out of bounds");
    assert!(c.len() >= rows * n, "gemm: output too small");
    unsafe {
        matrixmultiply::sgemm(
            rows,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a_off),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
