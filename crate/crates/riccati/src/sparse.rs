//! Minimal compressed sparse row (CSR) matrices.
//!
//! The solver needs little from its sparse type: assembly from triplets,
//! products against dense blocks (plain and transposed), transposition,
//! bandwidth inspection for the banded factorization path, and densification
//! for small problems. This module provides exactly that, with `f64` entries.

use std::fmt;

use ndarray::{Array2, ArrayView2};

/// Errors from sparse-matrix construction and arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum SparseError {
    /// A triplet addresses a row or column outside the declared shape.
    IndexOutOfBounds { row: usize, col: usize, nrows: usize, ncols: usize },
    /// Operand shapes are incompatible for the requested operation.
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
}

impl fmt::Display for SparseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparseError::IndexOutOfBounds { row, col, nrows, ncols } => write!(
                f,
                "triplet ({row}, {col}) outside matrix shape {nrows}x{ncols}"
            ),
            SparseError::ShapeMismatch { expected, got } => write!(
                f,
                "shape mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
        }
    }
}

impl std::error::Error for SparseError {}

/// Compressed sparse row matrix with `f64` entries.
///
/// Duplicate triplets are summed during assembly. Explicit zeros are kept;
/// they are harmless for every consumer in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from coordinate triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::IndexOutOfBounds { row: r, col: c, nrows, ncols });
            }
        }
        // Count, prefix-sum, scatter; then sort each row and sum duplicates.
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut col_buf = vec![0usize; triplets.len()];
        let mut val_buf = vec![0.0f64; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            let k = next[r];
            col_buf[k] = c;
            val_buf[k] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row_entries: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row_entries.clear();
            for k in counts[r]..counts[r + 1] {
                row_entries.push((col_buf[k], val_buf[k]));
            }
            row_entries.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row_entries.len() {
                let (c, mut v) = row_entries[i];
                let mut j = i + 1;
                while j < row_entries.len() && row_entries[j].0 == c {
                    v += row_entries[j].1;
                    j += 1;
                }
                indices.push(c);
                data.push(v);
                i = j;
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix { nrows, ncols, indptr, indices, data })
    }

    /// Build from a dense array, keeping only nonzero entries.
    pub fn from_dense(a: ArrayView2<'_, f64>) -> Self {
        let (nrows, ncols) = a.dim();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = a[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    /// The `n`-by-`n` identity.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterate stored entries as `(row, col, value)`.
    pub fn triplet_iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1])
                .map(move |k| (r, self.indices[k], self.data[k]))
        })
    }

    /// Dense copy.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.triplet_iter() {
            out[(r, c)] += v;
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<(usize, usize, f64)> =
            self.triplet_iter().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }

    /// `self * x` against a dense block.
    pub fn matmul(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SparseError> {
        if x.nrows() != self.ncols {
            return Err(SparseError::ShapeMismatch {
                expected: (self.ncols, x.ncols()),
                got: (x.nrows(), x.ncols()),
            });
        }
        let q = x.ncols();
        let mut out = Array2::zeros((self.nrows, q));
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let v = self.data[k];
                for j in 0..q {
                    out[(r, j)] += v * x[(c, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self^T * x` against a dense block, without materializing the transpose.
    pub fn tr_matmul(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SparseError> {
        if x.nrows() != self.nrows {
            return Err(SparseError::ShapeMismatch {
                expected: (self.nrows, x.ncols()),
                got: (x.nrows(), x.ncols()),
            });
        }
        let q = x.ncols();
        let mut out = Array2::zeros((self.ncols, q));
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let v = self.data[k];
                for j in 0..q {
                    out[(c, j)] += v * x[(r, j)];
                }
            }
        }
        Ok(out)
    }

    /// Lower and upper bandwidths `(kl, ku)` of the stored pattern.
    ///
    /// `kl` is the furthest stored entry below the diagonal, `ku` above.
    /// Explicit zeros count; an empty matrix has bandwidths `(0, 0)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for (r, c, _) in self.triplet_iter() {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        (kl, ku)
    }

    /// One-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut col_sums = vec![0.0f64; self.ncols];
        for (_, c, v) in self.triplet_iter() {
            col_sums[c] += v.abs();
        }
        col_sums.iter().cloned().fold(0.0, f64::max)
    }

    /// Infinity-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k].abs();
            }
            worst = worst.max(s);
        }
        worst
    }
}
