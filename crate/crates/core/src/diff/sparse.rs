use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Weighted compressed-sparse-row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 {
            return Err(Error::Validation(format!(
                "row offsets must have length {} and start at 0",
                n_rows + 1
            )));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) || indptr[n_rows] != indices.len() {
            return Err(Error::Validation("row offsets are not monotone".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::Validation(format!(
                "{} column indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= n_cols) {
            return Err(Error::Validation(format!(
                "column index {bad} out of range for {n_cols} columns"
            )));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Assemble from `(row, col, value)` triplets; duplicate coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_rows];
        for (i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Validation(format!(
                    "entry ({i}, {j}) out of range for {n_rows}x{n_cols}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    let end = values.len() - 1;
                    values[end] = values[end] + v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Self::new(n_rows, n_cols, indptr, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row_entries(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    pub fn row_sum(&self, i: usize) -> T {
        self.row_entries(i).map(|(_, v)| v).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row_entries(i) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn cast<U: Scalar>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row_entries(i) {
                out.set(i, j, v);
            }
        }
        out
    }
}

/// A sparse operator with its transpose cached for the backward pass.
#[derive(Clone, Debug)]
pub struct SparseOperator<T> {
    pub forward: CsrMatrix<T>,
    pub adjoint: CsrMatrix<T>,
}

impl<T: Scalar> SparseOperator<T> {
    pub fn new(forward: CsrMatrix<T>) -> Self {
        let adjoint = forward.transpose();
        SparseOperator { forward, adjoint }
    }

    pub fn cast<U: Scalar>(&self) -> SparseOperator<U> {
        SparseOperator {
            forward: self.forward.cast(),
            adjoint: self.adjoint.cast(),
        }
    }
}
