//! Symmetric low-rank factors `L D L^T`.
//!
//! Iterates, residuals, and right-hand sides in the solver are all
//! symmetric matrices of low numerical rank, kept in the factored form
//!
//! ```text
//!     X = L D L^T,     L: n x r,   D: r x r symmetric (often indefinite)
//! ```
//!
//! so that an `n x n` matrix is never formed for large problems. The inner
//! iteration grows factors block by block; [`LdlFactor::compress`] then
//! prunes the accumulated redundancy with a QR + spectral truncation that
//! preserves the indefinite part of `D` exactly (only eigenvalues that are
//! negligible relative to the largest magnitude are dropped).

use ndarray::{Array2, ArrayView2};

use crate::linalg::{self, LinalgError};

/// Error type for factor construction and compression.
#[derive(Debug)]
pub enum FactorError {
    /// The pieces of a factor have inconsistent dimensions.
    Shape {
        context: &'static str,
        detail: String,
    },
    /// A dense kernel failed during compression or norm evaluation.
    Linalg(LinalgError),
}

impl std::fmt::Display for FactorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorError::Shape { context, detail } => write!(f, "{context}: {detail}"),
            FactorError::Linalg(e) => write!(f, "factor operation failed: {e}"),
        }
    }
}

impl std::error::Error for FactorError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FactorError::Shape { .. } => None,
            FactorError::Linalg(e) => Some(e),
        }
    }
}

impl From<LinalgError> for FactorError {
    fn from(e: LinalgError) -> Self {
        FactorError::Linalg(e)
    }
}

/// A symmetric matrix in factored form `L D L^T`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    l: Array2<f64>,
    d: Array2<f64>,
}

impl LdlFactor {
    /// Build a factor from its parts. `l` is `n x r`, `d` must be `r x r`.
    pub fn new(l: Array2<f64>, d: Array2<f64>) -> Result<Self, FactorError> {
        if d.nrows() != d.ncols() {
            return Err(FactorError::Shape {
                context: "LdlFactor::new",
                detail: format!("kernel must be square, got {} x {}", d.nrows(), d.ncols()),
            });
        }
        if l.ncols() != d.nrows() {
            return Err(FactorError::Shape {
                context: "LdlFactor::new",
                detail: format!(
                    "factor has {} columns but kernel is {} x {}",
                    l.ncols(),
                    d.nrows(),
                    d.ncols()
                ),
            });
        }
        Ok(LdlFactor { l, d })
    }

    /// The zero matrix of size `n x n` as an empty factor.
    pub fn zero(n: usize) -> Self {
        LdlFactor {
            l: Array2::zeros((n, 0)),
            d: Array2::zeros((0, 0)),
        }
    }

    /// Factor a dense symmetric matrix through its eigendecomposition,
    /// dropping eigenvalues of magnitude at most `rel_tol` times the
    /// largest. The input is symmetrized first.
    pub fn from_dense_sym(x: ArrayView2<'_, f64>, rel_tol: f64) -> Result<Self, FactorError> {
        let n = x.nrows();
        if x.ncols() != n {
            return Err(FactorError::Shape {
                context: "LdlFactor::from_dense_sym",
                detail: format!("matrix must be square, got {} x {}", n, x.ncols()),
            });
        }
        let mut sym = x.to_owned();
        linalg::symmetrize(&mut sym);
        let (w, vecs) = linalg::eig_sym(sym.view())?;
        let wmax = w.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        if wmax == 0.0 {
            return Ok(LdlFactor::zero(n));
        }
        let keep: Vec<usize> = (0..w.len())
            .filter(|&i| w[i].abs() > rel_tol * wmax)
            .collect();
        let mut l = Array2::zeros((n, keep.len()));
        let mut d = Array2::zeros((keep.len(), keep.len()));
        for (out, &i) in keep.iter().enumerate() {
            l.column_mut(out).assign(&vecs.column(i));
            d[[out, out]] = w[i];
        }
        Ok(LdlFactor { l, d })
    }

    /// Concatenate factors: `sum_i L_i D_i L_i^T` as a single factor with
    /// `L = [L_1, ..., L_k]` and `D = blkdiag(D_1, ..., D_k)`.
    pub fn from_blocks(
        ls: &[ArrayView2<'_, f64>],
        ds: &[ArrayView2<'_, f64>],
    ) -> Result<Self, FactorError> {
        if ls.len() != ds.len() {
            return Err(FactorError::Shape {
                context: "LdlFactor::from_blocks",
                detail: format!("{} factor blocks but {} kernel blocks", ls.len(), ds.len()),
            });
        }
        if ls.is_empty() {
            return Err(FactorError::Shape {
                context: "LdlFactor::from_blocks",
                detail: "at least one block is required (use LdlFactor::zero)".to_string(),
            });
        }
        let n = ls[0].nrows();
        let mut r_total = 0;
        for (lb, db) in ls.iter().zip(ds) {
            if lb.nrows() != n {
                return Err(FactorError::Shape {
                    context: "LdlFactor::from_blocks",
                    detail: format!("factor blocks disagree on row count: {} vs {n}", lb.nrows()),
                });
            }
            if db.nrows() != db.ncols() || db.nrows() != lb.ncols() {
                return Err(FactorError::Shape {
                    context: "LdlFactor::from_blocks",
                    detail: format!(
                        "block kernel is {} x {} for a factor block with {} columns",
                        db.nrows(),
                        db.ncols(),
                        lb.ncols()
                    ),
                });
            }
            r_total += lb.ncols();
        }
        let mut l = Array2::zeros((n, r_total));
        let mut d = Array2::zeros((r_total, r_total));
        let mut offset = 0;
        for (lb, db) in ls.iter().zip(ds) {
            let r = lb.ncols();
            l.slice_mut(ndarray::s![.., offset..offset + r]).assign(lb);
            d.slice_mut(ndarray::s![offset..offset + r, offset..offset + r])
                .assign(db);
            offset += r;
        }
        Ok(LdlFactor { l, d })
    }

    /// Row dimension `n` of the represented matrix.
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// Current number of columns in `L`.
    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    /// The tall factor `L`.
    pub fn l(&self) -> &Array2<f64> {
        &self.l
    }

    /// The small symmetric kernel `D`.
    pub fn d(&self) -> &Array2<f64> {
        &self.d
    }

    /// Consume the factor, returning `(L, D)`.
    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.l, self.d)
    }

    /// The same matrix with the kernel scaled: `L (alpha D) L^T`.
    pub fn scaled(&self, alpha: f64) -> Self {
        LdlFactor {
            l: self.l.clone(),
            d: self.d.mapv(|x| alpha * x),
        }
    }

    /// Assemble the dense `n x n` matrix `L D L^T` (small problems only).
    pub fn dense(&self) -> Array2<f64> {
        self.l.dot(&self.d).dot(&self.l.t())
    }

    /// Default relative truncation tolerance for [`compress`](Self::compress)
    /// on a problem of size `n`.
    pub fn default_truncation(n: usize) -> f64 {
        f64::EPSILON * n as f64
    }

    /// Rank-compress the factor without changing the matrix it represents
    /// (up to `rel_tol` relative to its spectral norm).
    ///
    /// With the thin QR factorization `L = Q R`, the represented matrix is
    /// `Q (R D R^T) Q^T`; an eigendecomposition of the small symmetric
    /// matrix `R D R^T = V diag(w) V^T` then gives the spectrally exact
    /// representation `(Q V) diag(w) (Q V)^T`, and eigenvalues with
    /// `|w_i| <= rel_tol * max|w|` are dropped. Both signs are kept, so an
    /// indefinite kernel survives compression.
    pub fn compress(&self, rel_tol: f64) -> Result<Self, FactorError> {
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        let (q, r) = linalg::thin_qr(self.l.view())?;
        let mut m = r.dot(&self.d).dot(&r.t());
        linalg::symmetrize(&mut m);
        let (w, v) = linalg::eig_sym(m.view())?;
        let wmax = w.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
        if wmax == 0.0 {
            return Ok(LdlFactor::zero(self.n()));
        }
        let keep: Vec<usize> = (0..w.len())
            .filter(|&i| w[i].abs() > rel_tol * wmax)
            .collect();
        let mut l = Array2::zeros((self.n(), keep.len()));
        let mut d = Array2::zeros((keep.len(), keep.len()));
        for (out, &i) in keep.iter().enumerate() {
            let qv = q.dot(&v.column(i));
            l.column_mut(out).assign(&qv);
            d[[out, out]] = w[i];
        }
        Ok(LdlFactor { l, d })
    }

    /// Spectral norm of the represented matrix, computed from the factor:
    /// `|| L D L^T ||_2 = max |eig(R D R^T)|` with `L = Q R`.
    pub fn sym_two_norm(&self) -> Result<f64, FactorError> {
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let (_, r) = linalg::thin_qr(self.l.view())?;
        let mut m = r.dot(&self.d).dot(&r.t());
        linalg::symmetrize(&mut m);
        let (w, _) = linalg::eig_sym(m.view())?;
        Ok(w.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs())))
    }

    /// Frobenius norm of the represented matrix, without densifying.
    ///
    /// Uses the invariance of `||.||_F` under the orthogonal factor of a
    /// thin QR of `L`: `||L D L^T||_F = ||R D R^T||_F`.
    pub fn sym_frobenius_norm(&self) -> Result<f64, FactorError> {
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let (_, r) = linalg::thin_qr(self.l.view())?;
        let mut m = r.dot(&self.d).dot(&r.t());
        linalg::symmetrize(&mut m);
        Ok(linalg::frobenius_norm(m.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn from_blocks_matches_dense_sum() {
        let l1 = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let d1 = array![[2.0, 0.5], [0.5, -1.0]];
        let l2 = array![[1.0], [2.0], [3.0]];
        let d2 = array![[-0.25]];
        let f = LdlFactor::from_blocks(&[l1.view(), l2.view()], &[d1.view(), d2.view()]).unwrap();
        assert_eq!(f.rank(), 3);
        let expect = l1.dot(&d1).dot(&l1.t()) + l2.dot(&d2).dot(&l2.t());
        let diff = f.dense() - expect;
        assert!(linalg::frobenius_norm(diff.view()) < 1e-14);
    }

    #[test]
    fn compress_prunes_redundant_columns_and_keeps_signs() {
        // Duplicate columns: true rank 2, stored rank 4, indefinite kernel.
        let l = array![
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [2.0, -1.0, 2.0, -1.0]
        ];
        let mut d = Array2::zeros((4, 4));
        d[[0, 0]] = 3.0;
        d[[1, 1]] = -2.0;
        d[[2, 2]] = 1.5;
        d[[3, 3]] = -1.0;
        let f = LdlFactor::new(l, d).unwrap();
        let c = f.compress(1e-12).unwrap();
        assert_eq!(c.rank(), 2);
        let diff = c.dense() - f.dense();
        assert!(linalg::frobenius_norm(diff.view()) < 1e-12);
        // One positive and one negative eigenvalue must survive.
        let (w, _) = linalg::eig_sym(c.d().view()).unwrap();
        assert!(w[0] < 0.0 && w[1] > 0.0);
    }

    #[test]
    fn zero_factor_behaves() {
        let z = LdlFactor::zero(5);
        assert_eq!(z.rank(), 0);
        assert_eq!(z.dense(), Array2::<f64>::zeros((5, 5)));
        assert_eq!(z.sym_two_norm().unwrap(), 0.0);
        let c = z.compress(1e-12).unwrap();
        assert_eq!(c.rank(), 0);
    }

    #[test]
    fn sym_two_norm_matches_dense() {
        let l = array![[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]];
        let d = array![[2.0, 0.0], [0.0, -5.0]];
        let f = LdlFactor::new(l, d).unwrap();
        let dense_norm = linalg::two_norm(f.dense().view()).unwrap();
        assert!((f.sym_two_norm().unwrap() - dense_norm).abs() < 1e-10 * dense_norm);
    }

    #[test]
    fn mismatched_kernel_rejected() {
        let l = Array2::<f64>::zeros((4, 3));
        let d = Array2::<f64>::zeros((2, 2));
        assert!(matches!(
            LdlFactor::new(l, d),
            Err(FactorError::Shape { .. })
        ));
    }

    proptest! {
        /// Compression never changes the represented matrix beyond the
        /// truncation tolerance, never increases the rank, and is idempotent.
        #[test]
        fn compress_preserves_matrix(
            n in 1usize..10,
            r in 1usize..8,
            seed_l in prop::collection::vec(-5.0f64..5.0, 80),
            seed_d in prop::collection::vec(-3.0f64..3.0, 8),
        ) {
            let l = Array2::from_shape_fn((n, r), |(i, j)| seed_l[i * 8 + j]);
            let d = Array2::from_diag(&ndarray::Array1::from_iter(
                seed_d.iter().take(r).copied(),
            ));
            let f = LdlFactor::new(l, d).unwrap();
            let c = f.compress(1e-13).unwrap();
            prop_assert!(c.rank() <= f.rank());

            let scale = f.sym_two_norm().unwrap().max(1.0);
            let diff = c.dense() - f.dense();
            prop_assert!(linalg::frobenius_norm(diff.view()) <= 1e-10 * scale);

            let cc = c.compress(1e-13).unwrap();
            prop_assert_eq!(cc.rank(), c.rank());
            let diff2 = cc.dense() - c.dense();
            prop_assert!(linalg::frobenius_norm(diff2.view()) <= 1e-10 * scale);
        }

        /// The factored two-norm agrees with the dense spectral norm.
        #[test]
        fn factored_norm_matches_dense(
            n in 1usize..9,
            r in 1usize..6,
            seed_l in prop::collection::vec(-2.0f64..2.0, 54),
            seed_d in prop::collection::vec(-4.0f64..4.0, 6),
        ) {
            let l = Array2::from_shape_fn((n, r), |(i, j)| seed_l[i * 6 + j]);
            let d = Array2::from_diag(&ndarray::Array1::from_iter(
                seed_d.iter().take(r).copied(),
            ));
            let f = LdlFactor::new(l, d).unwrap();
            let dense_norm = linalg::two_norm(f.dense().view()).unwrap();
            let factored = f.sym_two_norm().unwrap();
            prop_assert!((factored - dense_norm).abs() <= 1e-9 * dense_norm.max(1.0));
        }
    }
}
