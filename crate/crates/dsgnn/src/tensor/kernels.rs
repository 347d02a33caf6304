//! Hot dense kernels, each in a sequential and a rayon row-parallel form.
//!
//! Every parallel kernel assigns whole output rows to threads and keeps the
//! per-row accumulation order identical to the sequential form, so results
//! are bit-identical regardless of thread count. The `parallel` feature
//! selects the dispatching behaviour; the sequential forms always exist and
//! are what the `--no-default-features` build runs.

use super::{Scalar, Tensor};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work threshold (multiply-accumulate count) below which dispatch stays
/// sequential; desk-scale training matrices never benefit from fan-out.
const PAR_MIN_WORK: usize = 1 << 15;

#[inline]
fn mm_row<T: Scalar>(a_row: &[T], b: &Tensor<T>, out_row: &mut [T]) {
    for (k, &av) in a_row.iter().enumerate() {
        let b_row = b.row(k);
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// `a (m x k) * b (k x n)`, sequential.
pub fn matmul_seq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(a.rows(), b.cols());
    for r in 0..a.rows() {
        mm_row(a.row(r), b, out.row_mut(r));
    }
    out
}

/// `a (m x k) * b (k x n)`, row-parallel.
#[cfg(feature = "parallel")]
pub fn matmul_par<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let cols = b.cols();
    let mut out = Tensor::zeros(a.rows(), cols);
    out.data_mut()
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(r, out_row)| mm_row(a.row(r), b, out_row));
    out
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    #[cfg(feature = "parallel")]
    {
        if a.rows() * a.cols() * b.cols() >= PAR_MIN_WORK {
            return matmul_par(a, b);
        }
    }
    matmul_seq(a, b)
}

#[inline]
fn mm_tn_row<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, i: usize, out_row: &mut [T]) {
    // out[i][j] = sum_v a[v][i] * b[v][j], v ascending
    for v in 0..a.rows() {
        let av = a.get(v, i);
        let b_row = b.row(v);
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// `a^T (k x m) * b (m x n)`, sequential.
pub fn matmul_tn_seq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(a.cols(), b.cols());
    for i in 0..a.cols() {
        mm_tn_row(a, b, i, out.row_mut(i));
    }
    out
}

/// `a^T * b`, row-parallel over output rows.
#[cfg(feature = "parallel")]
pub fn matmul_tn_par<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let cols = b.cols();
    let mut out = Tensor::zeros(a.cols(), cols);
    out.data_mut()
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(i, out_row)| mm_tn_row(a, b, i, out_row));
    out
}

pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    #[cfg(feature = "parallel")]
    {
        if a.rows() * a.cols() * b.cols() >= PAR_MIN_WORK {
            return matmul_tn_par(a, b);
        }
    }
    matmul_tn_seq(a, b)
}

#[inline]
fn mm_nt_row<T: Scalar>(a_row: &[T], b: &Tensor<T>, out_row: &mut [T]) {
    for (j, o) in out_row.iter_mut().enumerate() {
        let b_row = b.row(j);
        let mut acc = T::ZERO;
        for (&av, &bv) in a_row.iter().zip(b_row) {
            acc += av * bv;
        }
        *o = acc;
    }
}

/// `a (m x k) * b^T (k x n)`, sequential.
pub fn matmul_nt_seq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(a.rows(), b.rows());
    for r in 0..a.rows() {
        mm_nt_row(a.row(r), b, out.row_mut(r));
    }
    out
}

/// `a * b^T`, row-parallel.
#[cfg(feature = "parallel")]
pub fn matmul_nt_par<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let cols = b.rows();
    let mut out = Tensor::zeros(a.rows(), cols);
    out.data_mut()
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(r, out_row)| mm_nt_row(a.row(r), b, out_row));
    out
}

pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    #[cfg(feature = "parallel")]
    {
        if a.rows() * a.cols() * b.rows() >= PAR_MIN_WORK {
            return matmul_nt_par(a, b);
        }
    }
    matmul_nt_seq(a, b)
}
