//! Shifted solves with the closed-loop operator.
//!
//! The inner low-rank ADI iteration repeatedly needs products and solves
//! with a matrix of the form
//!
//! ```text
//!     A_c = A + U V^T          (sparse plus a thin low-rank correction)
//! ```
//!
//! and its shifted variants `A_c + p E`, plain and transposed, for real
//! and complex shift values `p`. [`ShiftedOperator`] bundles the pieces
//! and picks a solve strategy per request:
//!
//! * for small systems (`n <= dense_cutoff`) the shifted matrix, low-rank
//!   part included, is assembled densely and LU-factored;
//! * for large systems the sparse part `A + p E` is assembled into LAPACK
//!   band storage using the exact bandwidths of `A` and `E`, factored with
//!   the banded LU, and the low-rank correction is folded in through the
//!   Sherman-Morrison-Woodbury identity.
//!
//! Transposed solves assemble the transposed matrix directly from the CSR
//! triplets (indices swapped), so no transpose is ever materialized.
//! Factorizations are cached per `(shift, transposed)` pair; the ADI sweep
//! cycles through a handful of shifts many times, so each factorization is
//! built once and reused for the rest of the operator's life. The operator
//! is rebuilt at every Newton step anyway (the feedback changes), which
//! keeps the cache naturally bounded.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::linalg::{
    BandMatrix, BandMatrixComplex, BandedLu, BandedLuComplex, DenseLu, DenseLuComplex,
    LinalgError,
};
use crate::sparse::{CsrMatrix, SparseError};

/// Default system size below which shifted solves assemble a dense matrix
/// instead of the banded-plus-Woodbury path. Dense factorization of a few
/// hundred unknowns is cheap and free of bandwidth concerns.
pub const DENSE_CUTOFF_DEFAULT: usize = 500;

/// Error type for operator assembly and solves.
#[derive(Debug)]
pub enum OperatorError {
    /// A dense kernel failed underneath (singular shifted matrix, LAPACK
    /// breakdown, ...).
    Linalg(LinalgError),
    /// Sparse matrix product with mismatched shapes.
    Sparse(SparseError),
    /// The operator pieces have inconsistent dimensions.
    Shape {
        context: &'static str,
        detail: String,
    },
}

impl std::fmt::Display for OperatorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorError::Linalg(e) => write!(f, "shifted solve failed: {e}"),
            OperatorError::Sparse(e) => write!(f, "sparse product failed: {e}"),
            OperatorError::Shape { context, detail } => write!(f, "{context}: {detail}"),
        }
    }
}

impl std::error::Error for OperatorError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            OperatorError::Linalg(e) => Some(e),
            OperatorError::Sparse(e) => Some(e),
            OperatorError::Shape { .. } => None,
        }
    }
}

impl From<LinalgError> for OperatorError {
    fn from(e: LinalgError) -> Self {
        OperatorError::Linalg(e)
    }
}

impl From<SparseError> for OperatorError {
    fn from(e: SparseError) -> Self {
        OperatorError::Sparse(e)
    }
}

/// Woodbury data for one cached banded factorization: with `M = A + p E`
/// already factored, a solve with `M + U' V'^T` needs `Y = M^{-1} U'`, the
/// factored capacitance `I + V'^T Y`, and `V'` itself.
struct WoodburyReal {
    y: Array2<f64>,
    v_eff: Array2<f64>,
    capacitance: DenseLu,
}

enum RealFactorization {
    /// Dense LU of the full shifted matrix, low-rank part included.
    Dense(DenseLu),
    /// Banded LU of the sparse part, with an optional low-rank correction.
    Banded {
        lu: BandedLu,
        woodbury: Option<WoodburyReal>,
    },
}

struct WoodburyComplex {
    y: Array2<Complex64>,
    v_eff: Array2<Complex64>,
    capacitance: DenseLuComplex,
}

enum ComplexFactorization {
    Dense(DenseLuComplex),
    Banded {
        lu: BandedLuComplex,
        woodbury: Option<WoodburyComplex>,
    },
}

type RealKey = (u64, bool);
type ComplexKey = (u64, u64, bool);

/// Sparse-plus-low-rank operator `A + U V^T` with mass matrix `E`, offering
/// cached shifted solves for the ADI iteration.
pub struct ShiftedOperator {
    a: CsrMatrix,
    e: CsrMatrix,
    low_rank: Option<(Array2<f64>, Array2<f64>)>,
    dense_cutoff: usize,
    real_cache: Mutex<HashMap<RealKey, Arc<RealFactorization>>>,
    complex_cache: Mutex<HashMap<ComplexKey, Arc<ComplexFactorization>>>,
}

impl std::fmt::Debug for ShiftedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedOperator")
            .field("n", &self.a.nrows())
            .field("nnz", &self.a.nnz())
            .field(
                "low_rank_cols",
                &self.low_rank.as_ref().map_or(0, |(u, _)| u.ncols()),
            )
            .finish_non_exhaustive()
    }
}

impl ShiftedOperator {
    /// Operator `A + p E` without a low-rank part.
    pub fn new(a: CsrMatrix, e: CsrMatrix) -> Result<Self, OperatorError> {
        Self::build(a, e, None)
    }

    /// Operator `A + U V^T + p E`. `u` and `v` must both be `n x r`.
    pub fn with_low_rank(
        a: CsrMatrix,
        e: CsrMatrix,
        u: Array2<f64>,
        v: Array2<f64>,
    ) -> Result<Self, OperatorError> {
        Self::build(a, e, Some((u, v)))
    }

    fn build(
        a: CsrMatrix,
        e: CsrMatrix,
        low_rank: Option<(Array2<f64>, Array2<f64>)>,
    ) -> Result<Self, OperatorError> {
        if !a.is_square() {
            return Err(OperatorError::Shape {
                context: "ShiftedOperator",
                detail: format!("A must be square, got {} x {}", a.nrows(), a.ncols()),
            });
        }
        let n = a.nrows();
        if e.nrows() != n || e.ncols() != n {
            return Err(OperatorError::Shape {
                context: "ShiftedOperator",
                detail: format!(
                    "mass matrix is {} x {}, expected {n} x {n}",
                    e.nrows(),
                    e.ncols()
                ),
            });
        }
        if let Some((u, v)) = &low_rank {
            if u.nrows() != n || v.nrows() != n || u.ncols() != v.ncols() {
                return Err(OperatorError::Shape {
                    context: "ShiftedOperator",
                    detail: format!(
                        "low-rank factors are {} x {} and {} x {}, expected {n} rows and equal ranks",
                        u.nrows(),
                        u.ncols(),
                        v.nrows(),
                        v.ncols()
                    ),
                });
            }
        }
        Ok(ShiftedOperator {
            a,
            e,
            low_rank,
            dense_cutoff: DENSE_CUTOFF_DEFAULT,
            real_cache: Mutex::new(HashMap::new()),
            complex_cache: Mutex::new(HashMap::new()),
        })
    }

    /// System size.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// The sparse part `A`.
    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    /// The mass matrix `E`.
    pub fn e(&self) -> &CsrMatrix {
        &self.e
    }

    /// The low-rank factors `(U, V)`, if any.
    pub fn low_rank(&self) -> Option<(&Array2<f64>, &Array2<f64>)> {
        self.low_rank.as_ref().map(|(u, v)| (u, v))
    }

    /// Override the dense-path cutoff (mainly for tests that force the
    /// banded path on small systems). Clears cached factorizations.
    pub fn set_dense_cutoff(&mut self, cutoff: usize) {
        self.dense_cutoff = cutoff;
        self.real_cache.lock().unwrap().clear();
        self.complex_cache.lock().unwrap().clear();
    }

    /// Product `(A + U V^T) X`.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, OperatorError> {
        let mut y = self.a.matmul(x)?;
        if let Some((u, v)) = &self.low_rank {
            y += &u.dot(&v.t().dot(&x));
        }
        Ok(y)
    }

    /// Product `(A + U V^T)^T X`.
    pub fn apply_transposed(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, OperatorError> {
        let mut y = self.a.tr_matmul(x)?;
        if let Some((u, v)) = &self.low_rank {
            y += &v.dot(&u.t().dot(&x));
        }
        Ok(y)
    }

    /// Product `E X`.
    pub fn apply_e(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, OperatorError> {
        Ok(self.e.matmul(x)?)
    }

    /// Product `E^T X`.
    pub fn apply_e_transposed(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>, OperatorError> {
        Ok(self.e.tr_matmul(x)?)
    }

    /// Solve `(A + U V^T + p E) X = B`, or the transposed system when
    /// `transposed` is set. Factorizations are cached per shift.
    pub fn solve_shifted(
        &self,
        p: f64,
        b: ArrayView2<'_, f64>,
        transposed: bool,
    ) -> Result<Array2<f64>, OperatorError> {
        let n = self.n();
        if b.nrows() != n {
            return Err(OperatorError::Shape {
                context: "solve_shifted",
                detail: format!("right-hand side has {} rows, expected {n}", b.nrows()),
            });
        }
        let fact = self.real_factorization(p, transposed)?;
        match fact.as_ref() {
            RealFactorization::Dense(lu) => Ok(lu.solve(b)?),
            RealFactorization::Banded { lu, woodbury } => {
                let x0 = lu.solve(b)?;
                match woodbury {
                    None => Ok(x0),
                    Some(w) => {
                        let t = w.v_eff.t().dot(&x0);
                        let s = w.capacitance.solve(t.view())?;
                        Ok(x0 - w.y.dot(&s))
                    }
                }
            }
        }
    }

    /// Solve `(A + U V^T + p E) X = B` for a complex shift `p` and a real
    /// right-hand side, or the transposed system when `transposed` is set.
    ///
    /// The ADI iteration handles a conjugate shift pair with a single
    /// complex solve, so only one of the pair is ever factored.
    pub fn solve_shifted_complex(
        &self,
        p: Complex64,
        b: ArrayView2<'_, f64>,
        transposed: bool,
    ) -> Result<Array2<Complex64>, OperatorError> {
        let n = self.n();
        if b.nrows() != n {
            return Err(OperatorError::Shape {
                context: "solve_shifted_complex",
                detail: format!("right-hand side has {} rows, expected {n}", b.nrows()),
            });
        }
        let bc = b.mapv(|x| Complex64::new(x, 0.0));
        let fact = self.complex_factorization(p, transposed)?;
        match fact.as_ref() {
            ComplexFactorization::Dense(lu) => Ok(lu.solve(bc.view())?),
            ComplexFactorization::Banded { lu, woodbury } => {
                let x0 = lu.solve(bc.view())?;
                match woodbury {
                    None => Ok(x0),
                    Some(w) => {
                        let t = w.v_eff.t().dot(&x0);
                        let s = w.capacitance.solve(t.view())?;
                        Ok(x0 - w.y.dot(&s))
                    }
                }
            }
        }
    }

    fn real_factorization(
        &self,
        p: f64,
        transposed: bool,
    ) -> Result<Arc<RealFactorization>, OperatorError> {
        let key = (p.to_bits(), transposed);
        let mut cache = self.real_cache.lock().unwrap();
        if let Some(f) = cache.get(&key) {
            return Ok(Arc::clone(f));
        }
        let fact = Arc::new(self.build_real(p, transposed)?);
        cache.insert(key, Arc::clone(&fact));
        Ok(fact)
    }

    fn complex_factorization(
        &self,
        p: Complex64,
        transposed: bool,
    ) -> Result<Arc<ComplexFactorization>, OperatorError> {
        let key = (p.re.to_bits(), p.im.to_bits(), transposed);
        let mut cache = self.complex_cache.lock().unwrap();
        if let Some(f) = cache.get(&key) {
            return Ok(Arc::clone(f));
        }
        let fact = Arc::new(self.build_complex(p, transposed)?);
        cache.insert(key, Arc::clone(&fact));
        Ok(fact)
    }

    fn build_real(&self, p: f64, transposed: bool) -> Result<RealFactorization, OperatorError> {
        let n = self.n();
        if n <= self.dense_cutoff {
            let mut dense = Array2::zeros((n, n));
            for (i, j, v) in self.a.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                dense[[r, c]] += v;
            }
            for (i, j, v) in self.e.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                dense[[r, c]] += p * v;
            }
            if let Some((u, v)) = &self.low_rank {
                let update = if transposed {
                    v.dot(&u.t())
                } else {
                    u.dot(&v.t())
                };
                dense += &update;
            }
            return Ok(RealFactorization::Dense(DenseLu::factor(dense.view())?));
        }

        let lu = {
            let mut band = self.empty_band(transposed);
            for (i, j, v) in self.a.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                band.add(r, c, v);
            }
            for (i, j, v) in self.e.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                band.add(r, c, p * v);
            }
            band.factor()?
        };
        let woodbury = match &self.low_rank {
            None => None,
            Some((u, v)) => {
                let (u_eff, v_eff) = if transposed { (v, u) } else { (u, v) };
                let y = lu.solve(u_eff.view())?;
                let r = u_eff.ncols();
                let capacitance = Array2::eye(r) + v_eff.t().dot(&y);
                Some(WoodburyReal {
                    y,
                    v_eff: v_eff.clone(),
                    capacitance: DenseLu::factor(capacitance.view())?,
                })
            }
        };
        Ok(RealFactorization::Banded { lu, woodbury })
    }

    fn build_complex(
        &self,
        p: Complex64,
        transposed: bool,
    ) -> Result<ComplexFactorization, OperatorError> {
        let n = self.n();
        if n <= self.dense_cutoff {
            let mut dense = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
            for (i, j, v) in self.a.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                dense[[r, c]] += Complex64::new(v, 0.0);
            }
            for (i, j, v) in self.e.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                dense[[r, c]] += p * v;
            }
            if let Some((u, v)) = &self.low_rank {
                let update = if transposed {
                    v.dot(&u.t())
                } else {
                    u.dot(&v.t())
                };
                dense += &update.mapv(|x| Complex64::new(x, 0.0));
            }
            return Ok(ComplexFactorization::Dense(DenseLuComplex::factor(
                dense.view(),
            )?));
        }

        let lu = {
            let mut band = self.empty_band_complex(transposed);
            for (i, j, v) in self.a.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                band.add(r, c, Complex64::new(v, 0.0));
            }
            for (i, j, v) in self.e.triplet_iter() {
                let (r, c) = if transposed { (j, i) } else { (i, j) };
                band.add(r, c, p * v);
            }
            band.factor()?
        };
        let woodbury = match &self.low_rank {
            None => None,
            Some((u, v)) => {
                let (u_eff, v_eff) = if transposed { (v, u) } else { (u, v) };
                let u_c = u_eff.mapv(|x| Complex64::new(x, 0.0));
                let v_c = v_eff.mapv(|x| Complex64::new(x, 0.0));
                let y = lu.solve(u_c.view())?;
                let r = u_eff.ncols();
                let capacitance =
                    Array2::from_diag_elem(r, Complex64::new(1.0, 0.0)) + v_c.t().dot(&y);
                Some(WoodburyComplex {
                    y,
                    v_eff: v_c,
                    capacitance: DenseLuComplex::factor(capacitance.view())?,
                })
            }
        };
        Ok(ComplexFactorization::Banded { lu, woodbury })
    }

    /// Combined band profile of `A` and `E`, swapped for transposed solves.
    fn band_profile(&self, transposed: bool) -> (usize, usize) {
        let (kla, kua) = self.a.bandwidths();
        let (kle, kue) = self.e.bandwidths();
        let (kl, ku) = (kla.max(kle), kua.max(kue));
        if transposed {
            (ku, kl)
        } else {
            (kl, ku)
        }
    }

    fn empty_band(&self, transposed: bool) -> BandMatrix {
        let (kl, ku) = self.band_profile(transposed);
        BandMatrix::new(self.n(), kl, ku)
    }

    fn empty_band_complex(&self, transposed: bool) -> BandMatrixComplex {
        let (kl, ku) = self.band_profile(transposed);
        BandMatrixComplex::new(self.n(), kl, ku)
    }

    #[cfg(test)]
    fn cached_counts(&self) -> (usize, usize) {
        (
            self.real_cache.lock().unwrap().len(),
            self.complex_cache.lock().unwrap().len(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    /// Tridiagonal test matrix with the given diagonal base value.
    fn tridiag(n: usize, diag: f64) -> CsrMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, diag + 0.1 * i as f64));
            if i + 1 < n {
                triplets.push((i, i + 1, 0.7));
                triplets.push((i + 1, i, -1.3));
            }
        }
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    fn mass(n: usize) -> CsrMatrix {
        let triplets: Vec<_> = (0..n)
            .map(|i| (i, i, 1.0 + 0.05 * i as f64))
            .collect();
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    fn low_rank(n: usize) -> (Array2<f64>, Array2<f64>) {
        let u = Array2::from_shape_fn((n, 2), |(i, j)| 0.3 * (i as f64 - j as f64) / n as f64);
        let v = Array2::from_shape_fn((n, 2), |(i, j)| if i % 3 == j { 1.0 } else { 0.2 });
        (u, v)
    }

    /// Dense assembly of A + U V^T + p E, optionally transposed.
    fn dense_shifted(
        a: &CsrMatrix,
        e: &CsrMatrix,
        lr: Option<&(Array2<f64>, Array2<f64>)>,
        p: f64,
        transposed: bool,
    ) -> Array2<f64> {
        let mut m = a.to_dense() + &e.to_dense().mapv(|x| p * x);
        if let Some((u, v)) = lr {
            m += &u.dot(&v.t());
        }
        if transposed {
            m.t().to_owned()
        } else {
            m
        }
    }

    fn backward_error(m: &Array2<f64>, x: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let r = m.dot(x) - b;
        linalg::frobenius_norm(r.view())
            / (linalg::frobenius_norm(b.view()) + linalg::frobenius_norm(x.view()))
    }

    #[test]
    fn dense_and_banded_paths_agree_with_direct_solve() {
        let n = 12;
        let a = tridiag(n, -4.0);
        let e = mass(n);
        let lr = low_rank(n);
        let b = Array2::from_shape_fn((n, 3), |(i, j)| (i as f64 * 0.17 - j as f64).sin());

        for &cutoff in &[usize::MAX, 0] {
            let mut op =
                ShiftedOperator::with_low_rank(a.clone(), e.clone(), lr.0.clone(), lr.1.clone())
                    .unwrap();
            op.set_dense_cutoff(cutoff);
            for &p in &[0.0, -2.5, 3.1] {
                for &transposed in &[false, true] {
                    let x = op.solve_shifted(p, b.view(), transposed).unwrap();
                    let m = dense_shifted(&a, &e, Some(&lr), p, transposed);
                    assert!(
                        backward_error(&m, &x, &b) < 1e-12,
                        "cutoff {cutoff}, shift {p}, transposed {transposed}"
                    );
                }
            }
        }
    }

    #[test]
    fn complex_solves_agree_with_dense_reference() {
        let n = 10;
        let a = tridiag(n, -3.0);
        let e = mass(n);
        let lr = low_rank(n);
        let b = Array2::from_shape_fn((n, 2), |(i, j)| 1.0 / (1.0 + i as f64 + j as f64));
        let p = Complex64::new(-1.5, 2.0);

        for &cutoff in &[usize::MAX, 0] {
            let mut op =
                ShiftedOperator::with_low_rank(a.clone(), e.clone(), lr.0.clone(), lr.1.clone())
                    .unwrap();
            op.set_dense_cutoff(cutoff);
            for &transposed in &[false, true] {
                let x = op.solve_shifted_complex(p, b.view(), transposed).unwrap();
                let mut m = dense_shifted(&a, &e, Some(&lr), 0.0, transposed)
                    .mapv(|v| Complex64::new(v, 0.0));
                let et = if transposed {
                    e.to_dense().t().to_owned()
                } else {
                    e.to_dense()
                };
                m += &et.mapv(|v| p * v);
                let bc = b.mapv(|v| Complex64::new(v, 0.0));
                let x_ref = linalg::solve_lu_complex(m.view(), bc.view()).unwrap();
                let err: f64 = x
                    .iter()
                    .zip(x_ref.iter())
                    .map(|(u, w)| (u - w).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(err < 1e-10, "cutoff {cutoff}, transposed {transposed}");
            }
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let n = 9;
        let a = tridiag(n, 2.0);
        let e = mass(n);
        let lr = low_rank(n);
        let op =
            ShiftedOperator::with_low_rank(a.clone(), e.clone(), lr.0.clone(), lr.1.clone())
                .unwrap();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i + 2 * j) as f64 * 0.1);

        let dense = dense_shifted(&a, &e, Some(&lr), 0.0, false);
        let y = op.apply(x.view()).unwrap();
        assert!(linalg::frobenius_norm((y - dense.dot(&x)).view()) < 1e-12);

        let yt = op.apply_transposed(x.view()).unwrap();
        assert!(linalg::frobenius_norm((yt - dense.t().dot(&x)).view()) < 1e-12);

        let ye = op.apply_e(x.view()).unwrap();
        assert!(linalg::frobenius_norm((ye - e.to_dense().dot(&x)).view()) < 1e-13);
    }

    #[test]
    fn factorizations_are_cached_per_shift_and_side() {
        let n = 8;
        let op = ShiftedOperator::new(tridiag(n, -5.0), mass(n)).unwrap();
        let b = Array2::ones((n, 1));
        op.solve_shifted(-1.0, b.view(), false).unwrap();
        op.solve_shifted(-1.0, b.view(), false).unwrap();
        op.solve_shifted(-1.0, b.view(), true).unwrap();
        op.solve_shifted(-2.0, b.view(), false).unwrap();
        op.solve_shifted_complex(Complex64::new(-1.0, 1.0), b.view(), true)
            .unwrap();
        assert_eq!(op.cached_counts(), (3, 1));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = tridiag(4, 1.0);
        let e = mass(5);
        match ShiftedOperator::new(a, e) {
            Err(OperatorError::Shape { .. }) => {}
            other => panic!("expected shape error, got {:?}", other.map(|_| ())),
        }
        let op = ShiftedOperator::new(tridiag(4, 1.0), mass(4)).unwrap();
        let b = Array2::ones((3, 1));
        assert!(matches!(
            op.solve_shifted(0.0, b.view(), false),
            Err(OperatorError::Shape { .. })
        ));
    }

    #[test]
    fn singular_shift_reports_error() {
        // A = I, E = I, shift -1 makes A + pE exactly singular.
        let a = CsrMatrix::identity(4);
        let e = CsrMatrix::identity(4);
        let mut op = ShiftedOperator::new(a, e).unwrap();
        let b = Array2::ones((4, 1));
        for cutoff in [usize::MAX, 0] {
            op.set_dense_cutoff(cutoff);
            match op.solve_shifted(-1.0, b.view(), false) {
                Err(OperatorError::Linalg(LinalgError::Singular { .. })) => {}
                other => panic!("expected singular error, got {:?}", other.map(|_| ())),
            }
        }
    }
}
