//! Dense and sparse product kernels.
//!
//! Each output row is produced by one worker with a fixed summation order,
//! so [`par`] and [`seq`] return bit-identical results. The dispatching
//! functions at the top of this module pick [`par`] when the `parallel`
//! feature is enabled.

use super::sparse::CsrMatrix;
use super::tensor::{Scalar, Tensor};

/// `out_i += sum_k a_ik * b_k` for one output row. Zero entries of `a` are skipped,
/// which matters for bag-of-words feature matrices.
#[inline]
fn dense_row<T: Scalar>(a_row: &[T], b: &Tensor<T>, out: &mut [T]) {
    for (k, &a) in a_row.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (o, &bv) in out.iter_mut().zip(b.row(k)) {
            *o = *o + a * bv;
        }
    }
}

#[inline]
fn dense_row_bt<T: Scalar>(a_row: &[T], b: &Tensor<T>, out: &mut [T]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = a_row
            .iter()
            .zip(b.row(j))
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    }
}

#[inline]
fn sparse_row<T: Scalar>(m: &CsrMatrix<T>, i: usize, x: &Tensor<T>, out: &mut [T]) {
    for (j, w) in m.row_entries(i) {
        for (o, &xv) in out.iter_mut().zip(x.row(j)) {
            *o = *o + w * xv;
        }
    }
}

pub mod seq {
    use super::*;

    pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        let n = b.cols();
        if n == 0 {
            return out;
        }
        for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
            dense_row(a.row(i), b, row);
        }
        out
    }

    pub fn matmul_bt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(a.rows(), b.rows());
        let n = b.rows();
        if n == 0 {
            return out;
        }
        for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
            dense_row_bt(a.row(i), b, row);
        }
        out
    }

    pub fn spmm<T: Scalar>(m: &CsrMatrix<T>, x: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(m.n_rows(), x.cols());
        let n = x.cols();
        if n == 0 {
            return out;
        }
        for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
            sparse_row(m, i, x, row);
        }
        out
    }
}

#[cfg(feature = "parallel")]
pub mod par {
    use rayon::prelude::*;

    use super::*;

    pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        let n = b.cols();
        if n == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| dense_row(a.row(i), b, row));
        out
    }

    pub fn matmul_bt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(a.rows(), b.rows());
        let n = b.rows();
        if n == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| dense_row_bt(a.row(i), b, row));
        out
    }

    pub fn spmm<T: Scalar>(m: &CsrMatrix<T>, x: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::zeros(m.n_rows(), x.cols());
        let n = x.cols();
        if n == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| sparse_row(m, i, x, row));
        out
    }
}

#[cfg(feature = "parallel")]
use par as active;
#[cfg(not(feature = "parallel"))]
use seq as active;

/// `a · b`. Shapes are checked by the caller.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.cols(), b.rows());
    active::matmul(a, b)
}

/// `a · bᵀ`.
pub fn matmul_bt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.cols(), b.cols());
    active::matmul_bt(a, b)
}

/// `aᵀ · b`.
pub fn matmul_at<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.rows(), b.rows());
    active::matmul(&a.transpose(), b)
}

/// Sparse-dense product `m · x`.
pub fn spmm<T: Scalar>(m: &CsrMatrix<T>, x: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(m.n_cols(), x.rows());
    active::spmm(m, x)
}
