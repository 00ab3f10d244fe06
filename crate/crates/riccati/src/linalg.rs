//! Dense linear-algebra kernels on top of LAPACK.
//!
//! Everything in this module is a thin, safe wrapper over the Fortran
//! routines exposed by the `lapack` crate: packing into column-major
//! buffers, workspace queries, and `info` checks all happen here so that
//! the numerical modules above can stay free of FFI details.
//!
//! Conventions:
//!
//! * Inputs are borrowed `ndarray` views in any layout; the buffers handed
//!   to LAPACK are always freshly packed column-major copies.
//! * Routines that produce several related quantities return small structs
//!   ([`RealSchur`], [`StableQz`], [`GeneralizedEigen`]) rather than tuples.
//! * Any unexpected nonzero `info` surfaces as [`LinalgError::Lapack`]
//!   carrying the routine name; exactly singular factorizations get the
//!   more specific [`LinalgError::Singular`].

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

/// Error type for the LAPACK-backed kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// A LAPACK routine reported failure through its `info` flag.
    Lapack { routine: &'static str, info: i32 },
    /// A factorization encountered an exactly singular pivot.
    Singular { routine: &'static str, pivot: usize },
    /// Inputs have inconsistent or unsupported dimensions.
    Shape {
        context: &'static str,
        detail: String,
    },
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinalgError::Lapack { routine, info } => {
                write!(f, "LAPACK routine {routine} failed with info = {info}")
            }
            LinalgError::Singular { routine, pivot } => write!(
                f,
                "{routine}: matrix is singular (zero pivot at position {pivot})"
            ),
            LinalgError::Shape { context, detail } => {
                write!(f, "{context}: {detail}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

fn check_info(routine: &'static str, info: i32) -> Result<(), LinalgError> {
    if info == 0 {
        Ok(())
    } else {
        Err(LinalgError::Lapack { routine, info })
    }
}

fn square_dim(context: &'static str, a: &ArrayView2<'_, f64>) -> Result<usize, LinalgError> {
    let (m, n) = a.dim();
    if m != n {
        return Err(LinalgError::Shape {
            context,
            detail: format!("expected a square matrix, got {m} x {n}"),
        });
    }
    Ok(n)
}

fn to_col_major(a: ArrayView2<'_, f64>) -> Vec<f64> {
    let (m, n) = a.dim();
    let mut buf = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            buf.push(a[[i, j]]);
        }
    }
    buf
}

fn from_col_major(m: usize, n: usize, buf: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((m, n), |(i, j)| buf[j * m + i])
}

fn to_col_major_c64(a: ArrayView2<'_, Complex64>) -> Vec<Complex64> {
    let (m, n) = a.dim();
    let mut buf = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            buf.push(a[[i, j]]);
        }
    }
    buf
}

fn from_col_major_c64(m: usize, n: usize, buf: &[Complex64]) -> Array2<Complex64> {
    Array2::from_shape_fn((m, n), |(i, j)| buf[j * m + i])
}

/// Replace `a` by its symmetric part `(a + a^T) / 2` in place.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = s;
            a[[j, i]] = s;
        }
    }
}

/// Frobenius norm of a dense matrix.
pub fn frobenius_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stack square blocks into one block-diagonal matrix.
pub(crate) fn blkdiag(blocks: &[ArrayView2<'_, f64>]) -> Array2<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Array2::zeros((total, total));
    let mut off = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), b.ncols());
        out.slice_mut(ndarray::s![off..off + b.nrows(), off..off + b.ncols()])
            .assign(b);
        off += b.nrows();
    }
    out
}

/// Spectral norm of a dense matrix, computed as `sqrt(lambda_max(A^T A))`.
///
/// Forms the `n x n` Gram matrix explicitly, so this is intended for the
/// small dense matrices that appear in reports and tests, not for large
/// operators (those use the low-rank two-norm in the factor module).
pub fn two_norm(a: ArrayView2<'_, f64>) -> Result<f64, LinalgError> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Ok(0.0);
    }
    let gram = a.t().dot(&a);
    let (w, _) = eig_sym(gram.view())?;
    Ok(w.iter().fold(0.0_f64, |acc, &x| acc.max(x.max(0.0))).sqrt())
}

/// Eigendecomposition of a symmetric matrix via `dsyev`.
///
/// Returns the eigenvalues in ascending order and the matrix of
/// eigenvectors stored as columns, so that `a = v * diag(w) * v^T`.
/// Only the lower triangle of `a` is referenced; the caller is expected
/// to pass a numerically symmetric matrix.
pub fn eig_sym(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>), LinalgError> {
    let n = square_dim("eig_sym", &a)?;
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mut buf = to_col_major(a);
    let mut w = vec![0.0; n];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dsyev(
            b'V', b'L', n as i32, &mut buf, n as i32, &mut w, &mut query, -1, &mut info,
        );
    }
    check_info("dsyev", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dsyev(
            b'V', b'L', n as i32, &mut buf, n as i32, &mut w, &mut work, lwork, &mut info,
        );
    }
    check_info("dsyev", info)?;
    Ok((Array1::from_vec(w), from_col_major(n, n, &buf)))
}

/// Eigenvalues of a general real matrix via `dgeev`.
pub fn eigvals(a: ArrayView2<'_, f64>) -> Result<Vec<Complex64>, LinalgError> {
    let n = square_dim("eigvals", &a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut buf = to_col_major(a);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vl_dummy = [0.0];
    let mut vr_dummy = [0.0];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgeev(
            b'N',
            b'N',
            n as i32,
            &mut buf,
            n as i32,
            &mut wr,
            &mut wi,
            &mut vl_dummy,
            1,
            &mut vr_dummy,
            1,
            &mut query,
            -1,
            &mut info,
        );
    }
    check_info("dgeev", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dgeev(
            b'N',
            b'N',
            n as i32,
            &mut buf,
            n as i32,
            &mut wr,
            &mut wi,
            &mut vl_dummy,
            1,
            &mut vr_dummy,
            1,
            &mut work,
            lwork,
            &mut info,
        );
    }
    check_info("dgeev", info)?;
    Ok(wr
        .iter()
        .zip(&wi)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect())
}

/// Eigenvalues of the matrix pencil `(A, E)` in homogeneous form.
///
/// Produced by `dggev`: eigenvalue `j` is `alpha[j] / beta[j]` whenever
/// `beta[j]` is meaningfully nonzero; a vanishing `beta[j]` marks an
/// infinite eigenvalue of the pencil.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<f64>,
}

impl GeneralizedEigen {
    /// The finite eigenvalues `alpha / beta`, skipping entries whose `beta`
    /// is negligible relative to `alpha` (infinite pencil eigenvalues).
    pub fn finite(&self) -> Vec<Complex64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .filter(|(a, b)| b.abs() > f64::EPSILON * (a.norm() + 1.0))
            .map(|(a, b)| a / b)
            .collect()
    }
}

/// Generalized (pencil) eigenvalues of `(A, E)` via `dggev`.
pub fn eigvals_gen(
    a: ArrayView2<'_, f64>,
    e: ArrayView2<'_, f64>,
) -> Result<GeneralizedEigen, LinalgError> {
    let n = square_dim("eigvals_gen", &a)?;
    let ne = square_dim("eigvals_gen", &e)?;
    if n != ne {
        return Err(LinalgError::Shape {
            context: "eigvals_gen",
            detail: format!("pencil matrices differ in size: {n} vs {ne}"),
        });
    }
    if n == 0 {
        return Ok(GeneralizedEigen {
            alpha: Vec::new(),
            beta: Vec::new(),
        });
    }
    let mut abuf = to_col_major(a);
    let mut ebuf = to_col_major(e);
    let mut alphar = vec![0.0; n];
    let mut alphai = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut vl_dummy = [0.0];
    let mut vr_dummy = [0.0];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dggev(
            b'N',
            b'N',
            n as i32,
            &mut abuf,
            n as i32,
            &mut ebuf,
            n as i32,
            &mut alphar,
            &mut alphai,
            &mut beta,
            &mut vl_dummy,
            1,
            &mut vr_dummy,
            1,
            &mut query,
            -1,
            &mut info,
        );
    }
    check_info("dggev", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dggev(
            b'N',
            b'N',
            n as i32,
            &mut abuf,
            n as i32,
            &mut ebuf,
            n as i32,
            &mut alphar,
            &mut alphai,
            &mut beta,
            &mut vl_dummy,
            1,
            &mut vr_dummy,
            1,
            &mut work,
            lwork,
            &mut info,
        );
    }
    check_info("dggev", info)?;
    Ok(GeneralizedEigen {
        alpha: alphar
            .iter()
            .zip(&alphai)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect(),
        beta,
    })
}

/// Thin (economy) QR factorization via `dgeqrf` + `dorgqr`.
///
/// For an `m x n` input returns `(q, r)` with `q` of size `m x k` having
/// orthonormal columns and `r` of size `k x n` upper trapezoidal, where
/// `k = min(m, n)`, such that `a = q * r`.
pub fn thin_qr(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>), LinalgError> {
    let (m, n) = a.dim();
    let k = m.min(n);
    if k == 0 {
        return Ok((Array2::zeros((m, 0)), Array2::zeros((0, n))));
    }
    let mut buf = to_col_major(a);
    let mut tau = vec![0.0; k];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgeqrf(
            m as i32, n as i32, &mut buf, m as i32, &mut tau, &mut query, -1, &mut info,
        );
    }
    check_info("dgeqrf", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dgeqrf(
            m as i32, n as i32, &mut buf, m as i32, &mut tau, &mut work, lwork, &mut info,
        );
    }
    check_info("dgeqrf", info)?;

    let mut r = Array2::zeros((k, n));
    for j in 0..n {
        for i in 0..=j.min(k - 1) {
            r[[i, j]] = buf[j * m + i];
        }
    }

    let mut query = [0.0];
    unsafe {
        lapack::dorgqr(
            m as i32, k as i32, k as i32, &mut buf, m as i32, &tau, &mut query, -1, &mut info,
        );
    }
    check_info("dorgqr", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dorgqr(
            m as i32, k as i32, k as i32, &mut buf, m as i32, &tau, &mut work, lwork, &mut info,
        );
    }
    check_info("dorgqr", info)?;
    let q = from_col_major(m, k, &buf[..m * k]);
    Ok((q, r))
}

/// Solve `A X = B` with a fresh LU factorization (`dgesv`).
pub fn solve_lu(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, LinalgError> {
    let n = square_dim("solve_lu", &a)?;
    if b.nrows() != n {
        return Err(LinalgError::Shape {
            context: "solve_lu",
            detail: format!(
                "right-hand side has {} rows, expected {n}",
                b.nrows()
            ),
        });
    }
    let nrhs = b.ncols();
    if n == 0 || nrhs == 0 {
        return Ok(Array2::zeros((n, nrhs)));
    }
    let mut abuf = to_col_major(a);
    let mut bbuf = to_col_major(b);
    let mut ipiv = vec![0_i32; n];
    let mut info = 0;
    unsafe {
        lapack::dgesv(
            n as i32,
            nrhs as i32,
            &mut abuf,
            n as i32,
            &mut ipiv,
            &mut bbuf,
            n as i32,
            &mut info,
        );
    }
    if info > 0 {
        return Err(LinalgError::Singular {
            routine: "dgesv",
            pivot: info as usize,
        });
    }
    check_info("dgesv", info)?;
    Ok(from_col_major(n, nrhs, &bbuf))
}

/// Solve the complex system `A X = B` with a fresh LU factorization (`zgesv`).
pub fn solve_lu_complex(
    a: ArrayView2<'_, Complex64>,
    b: ArrayView2<'_, Complex64>,
) -> Result<Array2<Complex64>, LinalgError> {
    let (m, n) = a.dim();
    if m != n {
        return Err(LinalgError::Shape {
            context: "solve_lu_complex",
            detail: format!("expected a square matrix, got {m} x {n}"),
        });
    }
    if b.nrows() != n {
        return Err(LinalgError::Shape {
            context: "solve_lu_complex",
            detail: format!(
                "right-hand side has {} rows, expected {n}",
                b.nrows()
            ),
        });
    }
    let nrhs = b.ncols();
    if n == 0 || nrhs == 0 {
        return Ok(Array2::zeros((n, nrhs)));
    }
    let mut abuf = to_col_major_c64(a);
    let mut bbuf = to_col_major_c64(b);
    let mut ipiv = vec![0_i32; n];
    let mut info = 0;
    unsafe {
        lapack::zgesv(
            n as i32,
            nrhs as i32,
            &mut abuf,
            n as i32,
            &mut ipiv,
            &mut bbuf,
            n as i32,
            &mut info,
        );
    }
    if info > 0 {
        return Err(LinalgError::Singular {
            routine: "zgesv",
            pivot: info as usize,
        });
    }
    check_info("zgesv", info)?;
    Ok(from_col_major_c64(n, nrhs, &bbuf))
}

/// Real Schur decomposition `A = Z T Z^T` produced by `dgees`.
#[derive(Debug, Clone)]
pub struct RealSchur {
    /// Quasi upper-triangular Schur factor.
    pub t: Array2<f64>,
    /// Orthogonal transformation matrix.
    pub z: Array2<f64>,
    /// Eigenvalues of `A`, read off the diagonal blocks of `t`.
    pub eigenvalues: Vec<Complex64>,
}

/// Real Schur decomposition via `dgees` (no eigenvalue reordering).
pub fn real_schur(a: ArrayView2<'_, f64>) -> Result<RealSchur, LinalgError> {
    let n = square_dim("real_schur", &a)?;
    if n == 0 {
        return Ok(RealSchur {
            t: Array2::zeros((0, 0)),
            z: Array2::zeros((0, 0)),
            eigenvalues: Vec::new(),
        });
    }
    let mut buf = to_col_major(a);
    let mut sdim = 0;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vs = vec![0.0; n * n];
    let mut bwork = vec![0_i32; n];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgees(
            b'V', b'N', None, n as i32, &mut buf, n as i32, &mut sdim, &mut wr, &mut wi, &mut vs,
            n as i32, &mut query, -1, &mut bwork, &mut info,
        );
    }
    check_info("dgees", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dgees(
            b'V', b'N', None, n as i32, &mut buf, n as i32, &mut sdim, &mut wr, &mut wi, &mut vs,
            n as i32, &mut work, lwork, &mut bwork, &mut info,
        );
    }
    check_info("dgees", info)?;
    Ok(RealSchur {
        t: from_col_major(n, n, &buf),
        z: from_col_major(n, n, &vs),
        eigenvalues: wr
            .iter()
            .zip(&wi)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect(),
    })
}

/// Solve the quasi-triangular Sylvester equation via `dtrsyl`:
///
/// ```text
///     op(A) X + isgn * X op(B) = scale * C
/// ```
///
/// `a` and `b` must be in real Schur (quasi upper-triangular) form, as
/// produced by [`real_schur`]. Returns `(x, scale)`; `scale <= 1` is chosen
/// by LAPACK to avoid overflow, so the caller must divide by it. A
/// perturbed solve (LAPACK `info == 1`, near-common eigenvalues) is
/// accepted here; downstream residual checks are responsible for catching
/// an unusable result.
pub fn trsyl(
    transpose_a: bool,
    transpose_b: bool,
    isgn: i32,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, f64), LinalgError> {
    let m = square_dim("trsyl", &a)?;
    let n = square_dim("trsyl", &b)?;
    if c.dim() != (m, n) {
        return Err(LinalgError::Shape {
            context: "trsyl",
            detail: format!(
                "right-hand side is {} x {}, expected {m} x {n}",
                c.nrows(),
                c.ncols()
            ),
        });
    }
    if m == 0 || n == 0 {
        return Ok((Array2::zeros((m, n)), 1.0));
    }
    let abuf = to_col_major(a);
    let bbuf = to_col_major(b);
    let mut cbuf = to_col_major(c);
    let mut scale = [1.0];
    let mut info = 0;
    let trana = if transpose_a { b'T' } else { b'N' };
    let tranb = if transpose_b { b'T' } else { b'N' };
    unsafe {
        lapack::dtrsyl(
            trana,
            tranb,
            &[isgn],
            m as i32,
            n as i32,
            &abuf,
            m as i32,
            &bbuf,
            n as i32,
            &mut cbuf,
            m as i32,
            &mut scale,
            &mut info,
        );
    }
    if info < 0 {
        return Err(LinalgError::Lapack {
            routine: "dtrsyl",
            info,
        });
    }
    Ok((from_col_major(m, n, &cbuf), scale[0]))
}

extern "C" fn selctg_stable(alphar: *const f64, _alphai: *const f64, beta: *const f64) -> i32 {
    // Select eigenvalues with Re(alpha / beta) < 0. `beta` is real here, so
    // the sign of the quotient is the sign of the product, which avoids the
    // division for tiny `beta` (infinite eigenvalues are never selected).
    let (ar, b) = unsafe { (*alphar, *beta) };
    i32::from(ar * b < 0.0)
}

/// Ordered generalized Schur decomposition with the stable eigenvalues
/// leading, produced by `dgges`.
#[derive(Debug, Clone)]
pub struct StableQz {
    /// Number of selected eigenvalues with `Re(alpha / beta) < 0`.
    pub sdim: usize,
    /// Orthonormal basis (`n x sdim`) of the right deflating subspace
    /// associated with the selected eigenvalues.
    pub basis: Array2<f64>,
    /// Homogeneous eigenvalue numerators, ordered as in the Schur form.
    pub alpha: Vec<Complex64>,
    /// Homogeneous eigenvalue denominators.
    pub beta: Vec<f64>,
}

/// QZ decomposition of the pencil `(A, E)` with the open-left-half-plane
/// eigenvalues reordered to the top, via `dgges`.
///
/// The first `sdim` right Schur vectors span the deflating subspace for
/// the stable eigenvalues; that basis is what the dense Riccati solver
/// consumes. LAPACK's benign reordering warning (`info == n + 2`, roundoff
/// moved an eigenvalue across the selection boundary) is tolerated since
/// the subspace is still returned; all other failures are errors.
pub fn qz_stable(
    a: ArrayView2<'_, f64>,
    e: ArrayView2<'_, f64>,
) -> Result<StableQz, LinalgError> {
    let n = square_dim("qz_stable", &a)?;
    let ne = square_dim("qz_stable", &e)?;
    if n != ne {
        return Err(LinalgError::Shape {
            context: "qz_stable",
            detail: format!("pencil matrices differ in size: {n} vs {ne}"),
        });
    }
    if n == 0 {
        return Ok(StableQz {
            sdim: 0,
            basis: Array2::zeros((0, 0)),
            alpha: Vec::new(),
            beta: Vec::new(),
        });
    }
    let mut abuf = to_col_major(a);
    let mut ebuf = to_col_major(e);
    let mut sdim = 0;
    let mut alphar = vec![0.0; n];
    let mut alphai = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut vsl = [0.0];
    let mut vsr = vec![0.0; n * n];
    let mut bwork = vec![0_i32; n];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgges(
            b'N',
            b'V',
            b'S',
            Some(selctg_stable),
            n as i32,
            &mut abuf,
            n as i32,
            &mut ebuf,
            n as i32,
            &mut sdim,
            &mut alphar,
            &mut alphai,
            &mut beta,
            &mut vsl,
            1,
            &mut vsr,
            n as i32,
            &mut query,
            -1,
            &mut bwork,
            &mut info,
        );
    }
    check_info("dgges", info)?;
    let lwork = (query[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack::dgges(
            b'N',
            b'V',
            b'S',
            Some(selctg_stable),
            n as i32,
            &mut abuf,
            n as i32,
            &mut ebuf,
            n as i32,
            &mut sdim,
            &mut alphar,
            &mut alphai,
            &mut beta,
            &mut vsl,
            1,
            &mut vsr,
            n as i32,
            &mut work,
            lwork,
            &mut bwork,
            &mut info,
        );
    }
    if info != 0 && info != (n as i32) + 2 {
        return Err(LinalgError::Lapack {
            routine: "dgges",
            info,
        });
    }
    let sdim = sdim as usize;
    let z = from_col_major(n, n, &vsr);
    let basis = z.slice(ndarray::s![.., ..sdim]).to_owned();
    Ok(StableQz {
        sdim,
        basis,
        alpha: alphar
            .iter()
            .zip(&alphai)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect(),
        beta,
    })
}

/// LU factorization of a general dense matrix, reusable across solves.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    ipiv: Vec<i32>,
}

impl DenseLu {
    /// Factor `a` with `dgetrf`.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self, LinalgError> {
        let n = square_dim("DenseLu::factor", &a)?;
        let mut lu = to_col_major(a);
        let mut ipiv = vec![0_i32; n.max(1)];
        let mut info = 0;
        unsafe {
            lapack::dgetrf(n as i32, n as i32, &mut lu, n.max(1) as i32, &mut ipiv, &mut info);
        }
        if info > 0 {
            return Err(LinalgError::Singular {
                routine: "dgetrf",
                pivot: info as usize,
            });
        }
        check_info("dgetrf", info)?;
        Ok(DenseLu { n, lu, ipiv })
    }

    fn solve_impl(&self, b: ArrayView2<'_, f64>, trans: u8) -> Result<Array2<f64>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::Shape {
                context: "DenseLu::solve",
                detail: format!(
                    "right-hand side has {} rows, expected {}",
                    b.nrows(),
                    self.n
                ),
            });
        }
        let nrhs = b.ncols();
        if self.n == 0 || nrhs == 0 {
            return Ok(Array2::zeros((self.n, nrhs)));
        }
        let mut bbuf = to_col_major(b);
        let mut info = 0;
        unsafe {
            lapack::dgetrs(
                trans,
                self.n as i32,
                nrhs as i32,
                &self.lu,
                self.n as i32,
                &self.ipiv,
                &mut bbuf,
                self.n as i32,
                &mut info,
            );
        }
        check_info("dgetrs", info)?;
        Ok(from_col_major(self.n, nrhs, &bbuf))
    }

    /// Solve `A X = B` using the stored factorization.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>, LinalgError> {
        self.solve_impl(b, b'N')
    }

    /// Solve `A^T X = B` using the stored factorization.
    pub fn solve_transposed(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>, LinalgError> {
        self.solve_impl(b, b'T')
    }

    /// Reciprocal condition estimate in the 1-norm via `dgecon`.
    ///
    /// `anorm_one` must be the 1-norm of the matrix that was factored.
    pub fn recip_condition(&self, anorm_one: f64) -> Result<f64, LinalgError> {
        if self.n == 0 {
            return Ok(1.0);
        }
        let mut rcond = 0.0;
        let mut work = vec![0.0; 4 * self.n];
        let mut iwork = vec![0_i32; self.n];
        let mut info = 0;
        unsafe {
            lapack::dgecon(
                b'1',
                self.n as i32,
                &self.lu,
                self.n as i32,
                anorm_one,
                &mut rcond,
                &mut work,
                &mut iwork,
                &mut info,
            );
        }
        check_info("dgecon", info)?;
        Ok(rcond)
    }
}

/// LU factorization of a general dense complex matrix.
#[derive(Debug, Clone)]
pub struct DenseLuComplex {
    n: usize,
    lu: Vec<Complex64>,
    ipiv: Vec<i32>,
}

impl DenseLuComplex {
    /// Factor `a` with `zgetrf`.
    pub fn factor(a: ArrayView2<'_, Complex64>) -> Result<Self, LinalgError> {
        let (m, n) = a.dim();
        if m != n {
            return Err(LinalgError::Shape {
                context: "DenseLuComplex::factor",
                detail: format!("expected a square matrix, got {m} x {n}"),
            });
        }
        let mut lu = to_col_major_c64(a);
        let mut ipiv = vec![0_i32; n.max(1)];
        let mut info = 0;
        unsafe {
            lapack::zgetrf(n as i32, n as i32, &mut lu, n.max(1) as i32, &mut ipiv, &mut info);
        }
        if info > 0 {
            return Err(LinalgError::Singular {
                routine: "zgetrf",
                pivot: info as usize,
            });
        }
        check_info("zgetrf", info)?;
        Ok(DenseLuComplex { n, lu, ipiv })
    }

    /// Solve `A X = B` using the stored factorization.
    pub fn solve(&self, b: ArrayView2<'_, Complex64>) -> Result<Array2<Complex64>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::Shape {
                context: "DenseLuComplex::solve",
                detail: format!(
                    "right-hand side has {} rows, expected {}",
                    b.nrows(),
                    self.n
                ),
            });
        }
        let nrhs = b.ncols();
        if self.n == 0 || nrhs == 0 {
            return Ok(Array2::zeros((self.n, nrhs)));
        }
        let mut bbuf = to_col_major_c64(b);
        let mut info = 0;
        unsafe {
            lapack::zgetrs(
                b'N',
                self.n as i32,
                nrhs as i32,
                &self.lu,
                self.n as i32,
                &self.ipiv,
                &mut bbuf,
                self.n as i32,
                &mut info,
            );
        }
        check_info("zgetrs", info)?;
        Ok(from_col_major_c64(self.n, nrhs, &bbuf))
    }
}

/// Builder for LAPACK general band storage (`dgbtrf` layout).
///
/// Entry `(i, j)` of the logical matrix lives at `ab[j * ldab + kl + ku + i - j]`
/// with `ldab = 2 kl + ku + 1`; the extra `kl` leading rows per column hold
/// the fill-in produced by partial pivoting during factorization.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    /// Create an empty `n x n` band matrix with `kl` sub- and `ku`
    /// super-diagonals.
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    /// Accumulate `v` into entry `(i, j)`.
    ///
    /// Panics if `(i, j)` lies outside the declared band: assembly feeding
    /// this builder is expected to have computed the bandwidths exactly.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n,
            "band entry ({i}, {j}) out of bounds for size {}",
            self.n
        );
        let (ii, jj) = (i as isize, j as isize);
        assert!(
            jj - ii <= self.ku as isize && ii - jj <= self.kl as isize,
            "entry ({i}, {j}) lies outside the band (kl = {}, ku = {})",
            self.kl,
            self.ku
        );
        let row = (self.kl + self.ku) as isize + ii - jj;
        self.ab[j * self.ldab + row as usize] += v;
    }

    /// Factor the assembled band with `dgbtrf`.
    pub fn factor(mut self) -> Result<BandedLu, LinalgError> {
        let mut ipiv = vec![0_i32; self.n.max(1)];
        let mut info = 0;
        unsafe {
            lapack::dgbtrf(
                self.n as i32,
                self.n as i32,
                self.kl as i32,
                self.ku as i32,
                &mut self.ab,
                self.ldab as i32,
                &mut ipiv,
                &mut info,
            );
        }
        if info > 0 {
            return Err(LinalgError::Singular {
                routine: "dgbtrf",
                pivot: info as usize,
            });
        }
        check_info("dgbtrf", info)?;
        Ok(BandedLu {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            ldab: self.ldab,
            ab: self.ab,
            ipiv,
        })
    }
}

/// Banded LU factorization, reusable across solves (`dgbtrf`/`dgbtrs`).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<i32>,
}

impl BandedLu {
    /// Solve `A X = B` using the stored factorization.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::Shape {
                context: "BandedLu::solve",
                detail: format!(
                    "right-hand side has {} rows, expected {}",
                    b.nrows(),
                    self.n
                ),
            });
        }
        let nrhs = b.ncols();
        if self.n == 0 || nrhs == 0 {
            return Ok(Array2::zeros((self.n, nrhs)));
        }
        let mut bbuf = to_col_major(b);
        let mut info = 0;
        unsafe {
            lapack::dgbtrs(
                b'N',
                self.n as i32,
                self.kl as i32,
                self.ku as i32,
                nrhs as i32,
                &self.ab,
                self.ldab as i32,
                &self.ipiv,
                &mut bbuf,
                self.n as i32,
                &mut info,
            );
        }
        check_info("dgbtrs", info)?;
        Ok(from_col_major(self.n, nrhs, &bbuf))
    }
}

/// Builder for complex band storage (`zgbtrf` layout); see [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandMatrixComplex {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
}

impl BandMatrixComplex {
    /// Create an empty `n x n` complex band matrix with `kl` sub- and `ku`
    /// super-diagonals.
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrixComplex {
            n,
            kl,
            ku,
            ldab,
            ab: vec![Complex64::new(0.0, 0.0); ldab * n],
        }
    }

    /// Accumulate `v` into entry `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(
            i < self.n && j < self.n,
            "band entry ({i}, {j}) out of bounds for size {}",
            self.n
        );
        let (ii, jj) = (i as isize, j as isize);
        assert!(
            jj - ii <= self.ku as isize && ii - jj <= self.kl as isize,
            "entry ({i}, {j}) lies outside the band (kl = {}, ku = {})",
            self.kl,
            self.ku
        );
        let row = (self.kl + self.ku) as isize + ii - jj;
        self.ab[j * self.ldab + row as usize] += v;
    }

    /// Factor the assembled band with `zgbtrf`.
    pub fn factor(mut self) -> Result<BandedLuComplex, LinalgError> {
        let mut ipiv = vec![0_i32; self.n.max(1)];
        let mut info = 0;
        unsafe {
            lapack::zgbtrf(
                self.n as i32,
                self.n as i32,
                self.kl as i32,
                self.ku as i32,
                &mut self.ab,
                self.ldab as i32,
                &mut ipiv,
                &mut info,
            );
        }
        if info > 0 {
            return Err(LinalgError::Singular {
                routine: "zgbtrf",
                pivot: info as usize,
            });
        }
        check_info("zgbtrf", info)?;
        Ok(BandedLuComplex {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            ldab: self.ldab,
            ab: self.ab,
            ipiv,
        })
    }
}

/// Complex banded LU factorization (`zgbtrf`/`zgbtrs`).
#[derive(Debug, Clone)]
pub struct BandedLuComplex {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
    ipiv: Vec<i32>,
}

impl BandedLuComplex {
    /// Solve `A X = B` using the stored factorization.
    pub fn solve(
        &self,
        b: ArrayView2<'_, Complex64>,
    ) -> Result<Array2<Complex64>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::Shape {
                context: "BandedLuComplex::solve",
                detail: format!(
                    "right-hand side has {} rows, expected {}",
                    b.nrows(),
                    self.n
                ),
            });
        }
        let nrhs = b.ncols();
        if self.n == 0 || nrhs == 0 {
            return Ok(Array2::zeros((self.n, nrhs)));
        }
        let mut bbuf = to_col_major_c64(b);
        let mut info = 0;
        unsafe {
            lapack::zgbtrs(
                b'N',
                self.n as i32,
                self.kl as i32,
                self.ku as i32,
                nrhs as i32,
                &self.ab,
                self.ldab as i32,
                &self.ipiv,
                &mut bbuf,
                self.n as i32,
                &mut info,
            );
        }
        check_info("zgbtrs", info)?;
        Ok(from_col_major_c64(self.n, nrhs, &bbuf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim(), "shape mismatch");
        for ((i, j), &x) in a.indexed_iter() {
            assert!(
                (x - b[[i, j]]).abs() <= tol,
                "entry ({i}, {j}): {x} vs {} (tol {tol})",
                b[[i, j]]
            );
        }
    }

    #[test]
    fn eig_sym_reconstructs() {
        let a = array![[3.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, -2.0]];
        let (w, v) = eig_sym(a.view()).unwrap();
        assert!(w.windows(2).into_iter().all(|p| p[0] <= p[1]));
        let lam = Array2::from_diag(&w);
        let rebuilt = v.dot(&lam).dot(&v.t());
        assert_close(&rebuilt, &a, 1e-12);
        let vtv = v.t().dot(&v);
        assert_close(&vtv, &Array2::eye(3), 1e-12);
    }

    #[test]
    fn eigvals_rotation_gives_conjugate_pair() {
        let a = array![[0.0, 1.0], [-1.0, 0.0]];
        let mut ev = eigvals(a.view()).unwrap();
        ev.sort_by(|p, q| p.im.partial_cmp(&q.im).unwrap());
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn eigvals_gen_filters_infinite() {
        let a = array![[2.0, 0.0], [0.0, 3.0]];
        let e = array![[1.0, 0.0], [0.0, 0.0]];
        let pencil = eigvals_gen(a.view(), e.view()).unwrap();
        let finite = pencil.finite();
        assert_eq!(finite.len(), 1);
        assert!((finite[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn thin_qr_tall_and_wide() {
        let a = array![
            [1.0, 2.0, 3.0],
            [4.0, 5.0, 6.0],
            [7.0, 8.0, 10.0],
            [1.0, -1.0, 0.5],
            [0.0, 2.0, -3.0]
        ];
        let (q, r) = thin_qr(a.view()).unwrap();
        assert_eq!(q.dim(), (5, 3));
        assert_eq!(r.dim(), (3, 3));
        assert_close(&q.t().dot(&q), &Array2::eye(3), 1e-12);
        assert_close(&q.dot(&r), &a, 1e-12);

        let wide = a.t().to_owned();
        let (q, r) = thin_qr(wide.view()).unwrap();
        assert_eq!(q.dim(), (3, 3));
        assert_eq!(r.dim(), (3, 5));
        assert_close(&q.dot(&r), &wide, 1e-12);
    }

    #[test]
    fn solve_lu_round_trip() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let x_true = array![[1.0, 0.5], [-2.0, 1.0], [3.0, -1.5]];
        let b = a.dot(&x_true);
        let x = solve_lu(a.view(), b.view()).unwrap();
        assert_close(&x, &x_true, 1e-12);
    }

    #[test]
    fn solve_lu_reports_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![[1.0], [1.0]];
        match solve_lu(a.view(), b.view()) {
            Err(LinalgError::Singular { routine, .. }) => assert_eq!(routine, "dgesv"),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_lu_complex_round_trip() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = array![[one * 2.0 + i, one], [one * 0.5, one * 3.0 - i]];
        let x_true = array![[one + i], [one * -2.0]];
        let b = a.dot(&x_true);
        let x = solve_lu_complex(a.view(), b.view()).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).norm() < 1e-12);
        }
    }

    #[test]
    fn real_schur_reconstructs() {
        let a = array![
            [0.2, -1.3, 0.7, 0.0],
            [1.1, 0.4, -0.2, 0.5],
            [0.0, 0.8, -1.5, 2.0],
            [0.3, 0.0, -0.7, -0.9]
        ];
        let schur = real_schur(a.view()).unwrap();
        let rebuilt = schur.z.dot(&schur.t).dot(&schur.z.t());
        assert_close(&rebuilt, &a, 1e-12);
        assert_close(&schur.z.t().dot(&schur.z), &Array2::eye(4), 1e-12);

        let mut direct = eigvals(a.view()).unwrap();
        let mut from_schur = schur.eigenvalues.clone();
        let key = |z: &Complex64| (z.re, z.im);
        direct.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
        from_schur.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
        for (p, q) in direct.iter().zip(&from_schur) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn trsyl_solves_triangular_lyapunov() {
        // A is already quasi-triangular (here strictly triangular), stable.
        let a = array![[-1.0, 2.0, -0.5], [0.0, -3.0, 1.0], [0.0, 0.0, -0.7]];
        let c = array![[1.0, 0.2, 0.0], [0.2, 2.0, -0.3], [0.0, -0.3, 0.5]];
        let (x, scale) = trsyl(true, false, 1, a.view(), a.view(), c.view()).unwrap();
        let x = x.mapv(|v| v / scale);
        let residual = a.t().dot(&x) + x.dot(&a) - &c;
        assert!(frobenius_norm(residual.view()) < 1e-12);
    }

    #[test]
    fn qz_stable_extracts_stable_subspace() {
        // Rotate diag(-1, 2) by a fixed Givens rotation; with E = I the
        // stable deflating subspace is the eigenvector for eigenvalue -1.
        let (c, s) = (0.6, 0.8);
        let q = array![[c, -s], [s, c]];
        let d = array![[-1.0, 0.0], [0.0, 2.0]];
        let a = q.t().dot(&d).dot(&q);
        let e = Array2::eye(2);
        let qz = qz_stable(a.view(), e.view()).unwrap();
        assert_eq!(qz.sdim, 1);
        let z = qz.basis.column(0).to_owned();
        let az = a.dot(&z);
        // A z should equal -z for the stable eigenvector.
        for (p, q) in az.iter().zip(z.iter()) {
            assert!((p + q).abs() < 1e-12);
        }
        let stable_count = qz
            .alpha
            .iter()
            .zip(&qz.beta)
            .filter(|(al, be)| al.re * *be < 0.0)
            .count();
        assert_eq!(stable_count, 1);
    }

    #[test]
    fn dense_lu_matches_direct_solve() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [-1.0, 3.0]];
        let lu = DenseLu::factor(a.view()).unwrap();
        let x = lu.solve(b.view()).unwrap();
        assert_close(&x, &solve_lu(a.view(), b.view()).unwrap(), 1e-13);
        let xt = lu.solve_transposed(b.view()).unwrap();
        let at = a.t().to_owned();
        assert_close(&xt, &solve_lu(at.view(), b.view()).unwrap(), 1e-13);
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        let n = 8;
        let mut dense = Array2::zeros((n, n));
        let mut band = BandMatrix::new(n, 1, 1);
        for i in 0..n {
            let d = 2.5 + i as f64 * 0.1;
            dense[[i, i]] = d;
            band.add(i, i, d);
            if i + 1 < n {
                dense[[i, i + 1]] = -1.0;
                band.add(i, i + 1, -1.0);
                dense[[i + 1, i]] = -0.5;
                band.add(i + 1, i, -0.5);
            }
        }
        let b = Array2::from_shape_fn((n, 2), |(i, j)| (i + 1) as f64 * 0.3 - j as f64);
        let lu = band.factor().unwrap();
        let x = lu.solve(b.view()).unwrap();
        assert_close(&x, &solve_lu(dense.view(), b.view()).unwrap(), 1e-12);
    }

    #[test]
    fn banded_lu_complex_matches_dense_solve() {
        let n = 6;
        let i_unit = Complex64::new(0.0, 1.0);
        let mut dense = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        let mut band = BandMatrixComplex::new(n, 1, 1);
        for i in 0..n {
            let d = Complex64::new(3.0, 0.4 * i as f64);
            dense[[i, i]] = d;
            band.add(i, i, d);
            if i + 1 < n {
                let u = Complex64::new(-1.0, 0.2);
                dense[[i, i + 1]] = u;
                band.add(i, i + 1, u);
                let l = -0.5 * i_unit;
                dense[[i + 1, i]] = l;
                band.add(i + 1, i, l);
            }
        }
        let b = Array2::from_shape_fn((n, 2), |(i, j)| {
            Complex64::new((i + 1) as f64, j as f64 - 0.5)
        });
        let lu = band.factor().unwrap();
        let x = lu.solve(b.view()).unwrap();
        let x_dense = solve_lu_complex(dense.view(), b.view()).unwrap();
        for (p, q) in x.iter().zip(x_dense.iter()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "outside the band")]
    fn band_matrix_rejects_out_of_band_entry() {
        let mut band = BandMatrix::new(5, 1, 1);
        band.add(0, 3, 1.0);
    }

    #[test]
    fn two_norm_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, -7.0]];
        assert!((two_norm(a.view()).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut a = array![[1.0, 2.0], [4.0, 5.0]];
        symmetrize(&mut a);
        assert_eq!(a[[0, 1]], 3.0);
        assert_eq!(a[[1, 0]], 3.0);
    }
}
