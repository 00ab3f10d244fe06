//! Problem families, the dense verification oracle, and residual metrics.
//!
//! Several classical control problems reduce to the same general Riccati
//! equation with particular (often indefinite) choices of `Q`, `R`, and
//! the cross term `S`:
//!
//! * LQG design with cross-weighted cost: `R = R~ + D^T D`, `S = C^T D`;
//! * H-infinity suboptimal state feedback: `B = [B1 B2]` with
//!   `R = blkdiag(-gamma^2 I, R~)` and no cross term;
//! * the bounded-real lemma: `Q = I`, `R = -(gamma^2 I - D^T D)`,
//!   `S = C^T D`;
//! * the positive-real lemma: `Q = 0`, `R = -(D + D^T)`, `S = -C^T`.
//!
//! [`build_family`] performs those translations and records feedthrough
//! structure where it exists so the solver can use the reduced constant
//! term. The rest of the module is the measurement kit: a dense-matrix
//! Riccati operator, a factored residual for arbitrary iterates, the
//! three scaled residual norms `res1`/`res2`/`res3`, a factor-aware
//! relative difference, and an independent dense solver
//! ([`dense_care_oracle`]) based on the stable deflating subspace of the
//! extended Hamiltonian pencil, used to cross-check the Newton iteration.

use std::borrow::Cow;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ldlt::{FactorError, LdlFactor};
use crate::linalg::{self, blkdiag, DenseLu, LinalgError};
use crate::newton::{CoefficientError, CoefficientSet};
use crate::sparse::{CsrMatrix, SparseError};

/// Largest state dimension accepted by the dense oracle and the dense
/// Riccati operator.
pub const DENSE_ORACLE_LIMIT: usize = 500;

/// Relative change below which the power iteration for operator norms is
/// considered converged.
const POWER_TOL: f64 = 1e-8;
/// Iteration cap of the operator-norm power iteration.
const POWER_MAX_ITERS: usize = 500;
/// Fixed seed of the power-iteration start vector, for reproducible
/// metric denominators.
const POWER_SEED: u64 = 0x504f_5752;

/// Error type for family construction, metrics, and the dense oracle.
#[derive(Debug)]
pub enum FormsError {
    /// Inputs have inconsistent dimensions.
    DimensionMismatch {
        context: &'static str,
        detail: String,
    },
    /// A definiteness requirement of the requested family is violated.
    DefinitenessViolation {
        context: &'static str,
        detail: String,
    },
    /// The pencil has no stabilizing solution (or the oracle could not
    /// certify one).
    NoStabilizingSolution { detail: String },
    /// A solve against `R` failed.
    RSolveFailure { detail: String },
    /// The problem exceeds the dense-computation limit.
    DenseLimitExceeded { n: usize, limit: usize },
    /// Coefficient validation failed.
    Coefficient(CoefficientError),
    /// A dense kernel failed.
    Linalg(LinalgError),
    /// Factor plumbing failed.
    Factor(FactorError),
    /// A sparse product failed.
    Sparse(SparseError),
}

impl std::fmt::Display for FormsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormsError::DimensionMismatch { context, detail } => write!(f, "{context}: {detail}"),
            FormsError::DefinitenessViolation { context, detail } => {
                write!(f, "{context}: {detail}")
            }
            FormsError::NoStabilizingSolution { detail } => {
                write!(f, "no stabilizing solution: {detail}")
            }
            FormsError::RSolveFailure { detail } => write!(f, "solve against R failed: {detail}"),
            FormsError::DenseLimitExceeded { n, limit } => {
                write!(f, "problem dimension {n} exceeds the dense limit {limit}")
            }
            FormsError::Coefficient(e) => write!(f, "invalid coefficients: {e}"),
            FormsError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
            FormsError::Factor(e) => write!(f, "factor operation failed: {e}"),
            FormsError::Sparse(e) => write!(f, "sparse product failed: {e}"),
        }
    }
}

impl std::error::Error for FormsError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FormsError::Coefficient(e) => Some(e),
            FormsError::Linalg(e) => Some(e),
            FormsError::Factor(e) => Some(e),
            FormsError::Sparse(e) => Some(e),
            _ => None,
        }
    }
}

impl From<CoefficientError> for FormsError {
    fn from(e: CoefficientError) -> Self {
        FormsError::Coefficient(e)
    }
}
impl From<LinalgError> for FormsError {
    fn from(e: LinalgError) -> Self {
        FormsError::Linalg(e)
    }
}
impl From<FactorError> for FormsError {
    fn from(e: FactorError) -> Self {
        FormsError::Factor(e)
    }
}
impl From<SparseError> for FormsError {
    fn from(e: SparseError) -> Self {
        FormsError::Sparse(e)
    }
}

fn r_solve(coeffs: &CoefficientSet, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>, FormsError> {
    coeffs
        .r_solve(rhs)
        .map_err(|e| FormsError::RSolveFailure {
            detail: e.to_string(),
        })
}

/// The equation variants [`build_family`] can assemble.
#[derive(Debug, Clone)]
pub enum FamilySpec {
    /// Direct choice of the three weight matrices.
    General {
        q: Array2<f64>,
        r: Array2<f64>,
        s: Array2<f64>,
    },
    /// LQG design with feedthrough `D`: `Q = Q~`, `R = R~ + D^T D`,
    /// `S = C^T D`.
    Lqg {
        q_tilde: Array2<f64>,
        r_tilde: Array2<f64>,
        feedthrough: Array2<f64>,
    },
    /// H-infinity state feedback with disturbance/control input split
    /// `B = [B1 B2]`: `R = blkdiag(-gamma^2 I_{m1}, R~)`, `S = 0`.
    Hinf {
        gamma: f64,
        split: (usize, usize),
        q_tilde: Array2<f64>,
        r_tilde: Array2<f64>,
    },
    /// Bounded-real lemma for `||G||_inf < gamma`: `Q = I`,
    /// `R = -(gamma^2 I - D^T D)`, `S = C^T D`; requires
    /// `gamma^2 I - D^T D` positive definite.
    BoundedReal {
        gamma: f64,
        feedthrough: Array2<f64>,
    },
    /// Positive-real lemma (square systems): `Q = 0`, `R = -(D + D^T)`,
    /// `S = -C^T`.
    PositiveReal { feedthrough: Array2<f64> },
}

/// Translate a problem family into a validated [`CoefficientSet`].
pub fn build_family(
    spec: FamilySpec,
    a: CsrMatrix,
    e: CsrMatrix,
    b: Array2<f64>,
    c: Array2<f64>,
) -> Result<CoefficientSet, FormsError> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    match spec {
        FamilySpec::General { q, r, s } => Ok(CoefficientSet::new(a, e, b, c, q, r, s)?),
        FamilySpec::Lqg {
            q_tilde,
            r_tilde,
            feedthrough,
        } => {
            if feedthrough.dim() != (p, m) {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (LQG)",
                    detail: format!(
                        "feedthrough is {:?}, expected {p}x{m}",
                        feedthrough.dim()
                    ),
                });
            }
            let mut r = &r_tilde + &feedthrough.t().dot(&feedthrough);
            linalg::symmetrize(&mut r);
            let s = c.t().dot(&feedthrough);
            Ok(CoefficientSet::new(a, e, b, c, q_tilde, r, s)?
                .with_feedthrough(feedthrough)?)
        }
        FamilySpec::Hinf {
            gamma,
            split,
            q_tilde,
            r_tilde,
        } => {
            if gamma <= 0.0 {
                return Err(FormsError::DefinitenessViolation {
                    context: "build_family (H-infinity)",
                    detail: format!("gamma must be positive, got {gamma}"),
                });
            }
            let (m1, m2) = split;
            if m1 + m2 != m {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (H-infinity)",
                    detail: format!("input split {m1}+{m2} does not cover {m} columns of B"),
                });
            }
            if r_tilde.dim() != (m2, m2) {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (H-infinity)",
                    detail: format!("control weight is {:?}, expected {m2}x{m2}", r_tilde.dim()),
                });
            }
            let disturbance = Array2::from_diag_elem(m1, -gamma * gamma);
            let r = blkdiag(&[disturbance.view(), r_tilde.view()]);
            let s = Array2::zeros((n, m));
            Ok(CoefficientSet::new(a, e, b, c, q_tilde, r, s)?)
        }
        FamilySpec::BoundedReal { gamma, feedthrough } => {
            if gamma <= 0.0 {
                return Err(FormsError::DefinitenessViolation {
                    context: "build_family (bounded-real)",
                    detail: format!("gamma must be positive, got {gamma}"),
                });
            }
            if feedthrough.dim() != (p, m) {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (bounded-real)",
                    detail: format!(
                        "feedthrough is {:?}, expected {p}x{m}",
                        feedthrough.dim()
                    ),
                });
            }
            let mut gap = Array2::from_diag_elem(m, gamma * gamma) - feedthrough.t().dot(&feedthrough);
            linalg::symmetrize(&mut gap);
            let (w, _) = linalg::eig_sym(gap.view())?;
            let min_eig = w.iter().copied().fold(f64::INFINITY, f64::min);
            if m > 0 && min_eig <= 0.0 {
                return Err(FormsError::DefinitenessViolation {
                    context: "build_family (bounded-real)",
                    detail: format!(
                        "gamma^2 I - D^T D must be positive definite \
                         (smallest eigenvalue {min_eig:.3e}); increase gamma"
                    ),
                });
            }
            let r = gap.mapv(|x| -x);
            let s = c.t().dot(&feedthrough);
            Ok(CoefficientSet::new(a, e, b, c, Array2::eye(p), r, s)?
                .with_feedthrough(feedthrough)?)
        }
        FamilySpec::PositiveReal { feedthrough } => {
            if m != p {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (positive-real)",
                    detail: format!("square transfer function required, got m = {m}, p = {p}"),
                });
            }
            if feedthrough.dim() != (p, m) {
                return Err(FormsError::DimensionMismatch {
                    context: "build_family (positive-real)",
                    detail: format!(
                        "feedthrough is {:?}, expected {p}x{m}",
                        feedthrough.dim()
                    ),
                });
            }
            let mut r = (&feedthrough + &feedthrough.t()).mapv(|x| -x);
            linalg::symmetrize(&mut r);
            let s = c.t().mapv(|x| -x);
            // S = C^T * (-I), so the reduced constant term applies with
            // the feedthrough recorded as -I.
            let neg_eye = Array2::from_diag_elem(m, -1.0);
            Ok(
                CoefficientSet::new(a, e, b, c, Array2::zeros((p, p)), r, s)?
                    .with_feedthrough(neg_eye)?,
            )
        }
    }
}

/// Evaluate the Riccati operator at a dense symmetric `X`:
///
/// ```text
/// R(X) = A^T X E + E^T X A + C^T Q C
///        - (B^T X E + S^T)^T R^{-1} (B^T X E + S^T)
/// ```
pub fn riccati_operator(
    coeffs: &CoefficientSet,
    x: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, FormsError> {
    let n = coeffs.n();
    if n > DENSE_ORACLE_LIMIT {
        return Err(FormsError::DenseLimitExceeded {
            n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    if x.dim() != (n, n) {
        return Err(FormsError::DimensionMismatch {
            context: "riccati_operator",
            detail: format!("X is {:?}, expected {n}x{n}", x.dim()),
        });
    }
    let xe = x.dot(&coeffs.e().to_dense());
    let atxe = coeffs.a().tr_matmul(xe.view())?;
    let gain = coeffs.b().t().dot(&xe) + coeffs.s().t(); // B^T X E + S^T
    let k = r_solve(coeffs, gain.view())?;
    let mut res = &atxe + &atxe.t() + coeffs.c().t().dot(coeffs.q()).dot(coeffs.c())
        - gain.t().dot(&k);
    linalg::symmetrize(&mut res);
    Ok(res)
}

/// The factored Riccati residual at an arbitrary iterate `X = L D L^T`:
/// columns `[A^T L, E^T L, C^T, K_X^T]` over the cross-coupled kernel,
/// with `K_X = R^{-1} (B^T X E + S^T)` computed in factored form.
pub fn residual_factor(
    coeffs: &CoefficientSet,
    x: &LdlFactor,
) -> Result<LdlFactor, FormsError> {
    let n = coeffs.n();
    if x.n() != n {
        return Err(FormsError::DimensionMismatch {
            context: "residual_factor",
            detail: format!("factor has dimension {}, expected {n}", x.n()),
        });
    }
    let r = x.rank();
    let p = coeffs.p();
    let m = coeffs.m();

    let mut gain = coeffs.s().t().to_owned(); // m x n
    let blocks;
    if r > 0 {
        let atl = coeffs.a().tr_matmul(x.l().view())?;
        let etl = coeffs.e().tr_matmul(x.l().view())?;
        gain = gain + coeffs.b().t().dot(x.l()).dot(x.d()).dot(&etl.t());
        let k_x = r_solve(coeffs, gain.view())?;
        blocks = concatenate(
            Axis(1),
            &[atl.view(), etl.view(), coeffs.c().t(), k_x.t()],
        )
        .expect("residual blocks share the state dimension");
    } else {
        let k_x = r_solve(coeffs, gain.view())?;
        blocks = concatenate(Axis(1), &[coeffs.c().t(), k_x.t()])
            .expect("residual blocks share the state dimension");
    }

    let total = 2 * r + p + m;
    let mut kernel = Array2::zeros((total, total));
    if r > 0 {
        kernel.slice_mut(s![0..r, r..2 * r]).assign(x.d());
        kernel.slice_mut(s![r..2 * r, 0..r]).assign(x.d());
    }
    kernel
        .slice_mut(s![2 * r..2 * r + p, 2 * r..2 * r + p])
        .assign(coeffs.q());
    kernel
        .slice_mut(s![2 * r + p.., 2 * r + p..])
        .assign(&coeffs.r().mapv(|v| -v));
    Ok(LdlFactor::new(blocks, kernel)?)
}

/// The three scaled residual norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CareMetrics {
    /// `||R(X)||_2 / ||C_hat^T Q_hat C_hat||_2`.
    pub res1: f64,
    /// `||R(X)||_2 / (||A_hat||_2 ||E||_2 ||X||_2 + ||B R^{-1} B^T||_2)`.
    pub res2: f64,
    /// `||R(X)||_2` over the full backward-style denominator.
    pub res3: f64,
}

/// Precomputed denominators of the scaled residual norms.
///
/// The four operator norms depend only on the coefficients, so a solver
/// computes this context once and evaluates the metrics per step. The
/// norms of the symmetric products `B R^{-1} B^T` and `C_hat^T Q_hat
/// C_hat = C^T Q C - S R^{-1} S^T` come from their low-rank factors
/// (exact up to the small eigensolve); the norms of `A_hat = A - B R^{-1}
/// S^T` and `E` come from a deterministic power iteration on the matrix
/// and its transpose.
#[derive(Debug, Clone, Copy)]
pub struct MetricContext {
    a_hat_norm: f64,
    e_norm: f64,
    brb_norm: f64,
    cqc_norm: f64,
}

fn power_norm<F, Ft>(n: usize, apply: F, apply_t: Ft) -> Result<f64, FormsError>
where
    F: Fn(ArrayView2<'_, f64>) -> Result<Array2<f64>, FormsError>,
    Ft: Fn(ArrayView2<'_, f64>) -> Result<Array2<f64>, FormsError>,
{
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-1.0..1.0));
    let vn = linalg::frobenius_norm(v.view());
    v.mapv_inplace(|x| x / vn);
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(v.view())?;
        let sigma_new = linalg::frobenius_norm(w.view());
        if sigma_new == 0.0 {
            return Ok(0.0);
        }
        let u = apply_t(w.view())?;
        let un = linalg::frobenius_norm(u.view());
        if un == 0.0 {
            return Ok(sigma_new);
        }
        v = u.mapv(|x| x / un);
        if (sigma_new - sigma).abs() <= POWER_TOL * sigma_new {
            return Ok(sigma_new);
        }
        sigma = sigma_new;
    }
    Ok(sigma)
}

impl MetricContext {
    /// Compute the denominators for a coefficient set.
    pub fn new(coeffs: &CoefficientSet) -> Result<Self, FormsError> {
        let n = coeffs.n();
        let s_is_zero = coeffs.s().iter().all(|&x| x == 0.0);
        let a_hat_norm = power_norm(
            n,
            |v| {
                let av = coeffs.a().matmul(v)?;
                if s_is_zero {
                    return Ok(av);
                }
                let stv = coeffs.s().t().dot(&v);
                Ok(av - coeffs.b().dot(&r_solve(coeffs, stv.view())?))
            },
            |u| {
                let atu = coeffs.a().tr_matmul(u)?;
                if s_is_zero {
                    return Ok(atu);
                }
                let btu = coeffs.b().t().dot(&u);
                Ok(atu - coeffs.s().dot(&r_solve(coeffs, btu.view())?))
            },
        )?;
        let e_norm = power_norm(
            n,
            |v| Ok(coeffs.e().matmul(v)?),
            |u| Ok(coeffs.e().tr_matmul(u)?),
        )?;
        let brb_norm =
            LdlFactor::new(coeffs.b().clone(), coeffs.r_inv().clone())?.sym_two_norm()?;
        let neg_r_inv = coeffs.r_inv().mapv(|x| -x);
        let cqc_cols = concatenate(Axis(1), &[coeffs.c().t(), coeffs.s().view()])
            .expect("C^T and S share the state dimension");
        let cqc_kernel = blkdiag(&[coeffs.q().view(), neg_r_inv.view()]);
        let cqc_norm = LdlFactor::new(cqc_cols, cqc_kernel)?.sym_two_norm()?;
        Ok(MetricContext {
            a_hat_norm,
            e_norm,
            brb_norm,
            cqc_norm,
        })
    }

    /// `||A_hat||_2` with `A_hat = A - B R^{-1} S^T`.
    pub fn a_hat_norm(&self) -> f64 {
        self.a_hat_norm
    }
    /// `||E||_2`.
    pub fn e_norm(&self) -> f64 {
        self.e_norm
    }
    /// `||B R^{-1} B^T||_2`.
    pub fn brb_norm(&self) -> f64 {
        self.brb_norm
    }
    /// `||C^T Q C - S R^{-1} S^T||_2`, the `res1` denominator.
    pub fn cqc_norm(&self) -> f64 {
        self.cqc_norm
    }

    /// Evaluate all three metrics from a residual norm and `||X||_2`.
    pub fn eval(&self, res_norm: f64, x_norm: f64) -> CareMetrics {
        let axe = self.a_hat_norm * self.e_norm * x_norm;
        CareMetrics {
            res1: res_norm / self.cqc_norm,
            res2: res_norm / (axe + self.brb_norm),
            res3: res_norm
                / (2.0 * axe
                    + self.cqc_norm
                    + self.e_norm * self.e_norm * x_norm * x_norm * self.brb_norm),
        }
    }
}

/// A solution handed to the metric functions, in either representation.
#[derive(Debug, Clone, Copy)]
pub enum SolutionRef<'a> {
    /// A low-rank factor.
    Factored(&'a LdlFactor),
    /// A dense symmetric matrix.
    Dense(ArrayView2<'a, f64>),
}

impl<'a> SolutionRef<'a> {
    fn as_factor(&self) -> Result<Cow<'a, LdlFactor>, FormsError> {
        match self {
            SolutionRef::Factored(f) => Ok(Cow::Borrowed(*f)),
            SolutionRef::Dense(x) => {
                let n = x.nrows();
                if x.ncols() != n {
                    return Err(FormsError::DimensionMismatch {
                        context: "SolutionRef",
                        detail: format!("dense solution is {:?}, expected square", x.dim()),
                    });
                }
                Ok(Cow::Owned(LdlFactor::from_dense_sym(
                    *x,
                    LdlFactor::default_truncation(n),
                )?))
            }
        }
    }
}

/// Scaled residual norms of a candidate solution. The result does not
/// depend on the representation: a dense matrix and a factor of the same
/// `X` produce the same metrics up to roundoff.
pub fn metrics(coeffs: &CoefficientSet, sol: SolutionRef<'_>) -> Result<CareMetrics, FormsError> {
    let ctx = MetricContext::new(coeffs)?;
    let factor = sol.as_factor()?;
    let res_norm = residual_factor(coeffs, &factor)?.sym_two_norm()?;
    let x_norm = factor.sym_two_norm()?;
    Ok(ctx.eval(res_norm, x_norm))
}

/// Relative difference `||X1 - X2||_2 / (0.5 (||X1||_2 + ||X2||_2))`,
/// computed without densifying factored inputs. Two zero matrices have
/// relative difference zero.
pub fn reldiff(x1: SolutionRef<'_>, x2: SolutionRef<'_>) -> Result<f64, FormsError> {
    let f1 = x1.as_factor()?;
    let f2 = x2.as_factor()?;
    if f1.n() != f2.n() {
        return Err(FormsError::DimensionMismatch {
            context: "reldiff",
            detail: format!("dimensions differ: {} vs {}", f1.n(), f2.n()),
        });
    }
    let n1 = f1.sym_two_norm()?;
    let n2 = f2.sym_two_norm()?;
    if n1 == 0.0 && n2 == 0.0 {
        return Ok(0.0);
    }
    let neg_d2 = f2.d().mapv(|x| -x);
    let diff = LdlFactor::from_blocks(
        &[f1.l().view(), f2.l().view()],
        &[f1.d().view(), neg_d2.view()],
    )?
    .sym_two_norm()?;
    Ok(diff / (0.5 * (n1 + n2)))
}

/// Solve the Riccati equation densely through the extended Hamiltonian
/// pencil, independently of the Newton iteration.
///
/// The pencil
///
/// ```text
/// M = [ A_hat      -B R^{-1} B^T ]        N = [ E  0   ]
///     [ -H         -A_hat^T      ]            [ 0  E^T ]
/// ```
///
/// with `A_hat = A - B R^{-1} S^T` and `H = C^T Q C - S R^{-1} S^T` has
/// the closed-loop spectrum among its eigenvalues; the stabilizing
/// solution is `X = Y2 (E Y1)^{-1}` for any basis `[Y1; Y2]` of the
/// stable deflating subspace. Errors if that subspace does not have
/// dimension `n`, if `E Y1` is singular, or if the residual of the
/// reconstructed solution fails the certificate `res1 <= 1e-10`.
///
/// Returns the solution and its certified `res1`.
pub fn dense_care_oracle(coeffs: &CoefficientSet) -> Result<(Array2<f64>, f64), FormsError> {
    let n = coeffs.n();
    if n > DENSE_ORACLE_LIMIT {
        return Err(FormsError::DenseLimitExceeded {
            n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let a_d = coeffs.a().to_dense();
    let e_d = coeffs.e().to_dense();
    let r_inv_st = r_solve(coeffs, coeffs.s().t())?; // R^{-1} S^T, m x n
    let a_hat = &a_d - &coeffs.b().dot(&r_inv_st);
    let r_inv_bt = r_solve(coeffs, coeffs.b().t())?;
    let mut g = coeffs.b().dot(&r_inv_bt); // B R^{-1} B^T
    linalg::symmetrize(&mut g);
    let mut h = coeffs.c().t().dot(coeffs.q()).dot(coeffs.c()) - coeffs.s().dot(&r_inv_st);
    linalg::symmetrize(&mut h);

    let mut pencil_m = Array2::zeros((2 * n, 2 * n));
    pencil_m.slice_mut(s![0..n, 0..n]).assign(&a_hat);
    pencil_m.slice_mut(s![0..n, n..]).assign(&g.mapv(|x| -x));
    pencil_m.slice_mut(s![n.., 0..n]).assign(&h.mapv(|x| -x));
    pencil_m.slice_mut(s![n.., n..]).assign(&a_hat.t().mapv(|x| -x));
    let pencil_n = blkdiag(&[e_d.view(), e_d.t()]);

    let qz = linalg::qz_stable(pencil_m.view(), pencil_n.view())?;
    if qz.sdim != n {
        return Err(FormsError::NoStabilizingSolution {
            detail: format!(
                "stable deflating subspace has dimension {}, expected {n}",
                qz.sdim
            ),
        });
    }
    let y1 = qz.basis.slice(s![0..n, ..]);
    let y2 = qz.basis.slice(s![n.., ..]);
    let ey1 = e_d.dot(&y1);
    let lu = DenseLu::factor(ey1.view()).map_err(|_| FormsError::NoStabilizingSolution {
        detail: "E Y1 is singular; the subspace does not define a solution".to_string(),
    })?;
    let mut anorm_one: f64 = 0.0;
    for j in 0..n {
        anorm_one = anorm_one.max(ey1.column(j).iter().map(|x| x.abs()).sum());
    }
    let rcond = lu.recip_condition(anorm_one)?;
    if rcond < 100.0 * f64::EPSILON {
        return Err(FormsError::NoStabilizingSolution {
            detail: format!(
                "E Y1 is numerically singular (reciprocal condition {rcond:.3e})"
            ),
        });
    }
    // X = Y2 (E Y1)^{-1}  via  (E Y1)^T X^T = Y2^T.
    let mut x = lu.solve_transposed(y2.t())?.t().to_owned();
    linalg::symmetrize(&mut x);

    let res = riccati_operator(coeffs, x.view())?;
    let res_norm = linalg::two_norm(res.view())?;
    let h_norm = linalg::two_norm(h.view())?;
    let res1 = if h_norm == 0.0 {
        res_norm
    } else {
        res_norm / h_norm
    };
    if !res1.is_finite() || res1 > 1e-10 {
        return Err(FormsError::NoStabilizingSolution {
            detail: format!("reconstructed solution fails the residual certificate: {res1:.3e}"),
        });
    }
    Ok((x, res1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense_c(m: &Array2<f64>) -> CsrMatrix {
        CsrMatrix::from_dense(m.view())
    }

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn scalar_system() -> CoefficientSet {
        CoefficientSet::new(
            dense_c(&array![[-1.0]]),
            CsrMatrix::identity(1),
            array![[1.0]],
            array![[1.0]],
            array![[1.0]],
            array![[1.0]],
            Array2::zeros((1, 1)),
        )
        .unwrap()
    }

    #[test]
    fn oracle_solves_scalar_equation_exactly() {
        // x^2 + 2x - 1 = 0 with stabilizing root -1 + sqrt(2).
        let (x, res1) = dense_care_oracle(&scalar_system()).unwrap();
        assert!((x[[0, 0]] - (2.0_f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!(res1 <= 1e-10);
    }

    #[test]
    fn oracle_matches_known_indefinite_spectrum() {
        // 2x2 example with R = diag(-1, 2): closed-loop eigenvalues are
        // known to be {-4.0448, -1.4626}.
        let coeffs = CoefficientSet::new(
            dense_c(&array![[2.0, 1.0], [1.0, -3.0]]),
            CsrMatrix::identity(2),
            array![[1.0, 1.0], [0.0, 2.0]],
            array![[1.0, 1.0]],
            array![[1.0]],
            array![[-1.0, 0.0], [0.0, 2.0]],
            Array2::zeros((2, 2)),
        )
        .unwrap();
        let (x, res1) = dense_care_oracle(&coeffs).unwrap();
        assert!(res1 <= 1e-10);
        let gain = coeffs.b().t().dot(&x); // E = I
        let k = coeffs.r_solve(gain.view()).unwrap();
        let closed = coeffs.a().to_dense() - coeffs.b().dot(&k);
        let mut eigs: Vec<f64> = linalg::eigvals(closed.view())
            .unwrap()
            .iter()
            .map(|z| z.re)
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] - (-4.0448)).abs() < 1e-3, "eigs = {eigs:?}");
        assert!((eigs[1] - (-1.4626)).abs() < 1e-3, "eigs = {eigs:?}");
    }

    #[test]
    fn oracle_rejects_unstabilizable_pair() {
        // A = 1 with B = 0: the unstable mode cannot be moved, so the
        // stable subspace degenerates.
        let coeffs = CoefficientSet::new(
            dense_c(&array![[1.0]]),
            CsrMatrix::identity(1),
            array![[0.0]],
            array![[1.0]],
            array![[1.0]],
            array![[1.0]],
            Array2::zeros((1, 1)),
        )
        .unwrap();
        assert!(matches!(
            dense_care_oracle(&coeffs),
            Err(FormsError::NoStabilizingSolution { .. })
        ));
    }

    #[test]
    fn lqg_family_assembles_cross_term_and_feedthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 5;
        let (m, p) = (2, 3);
        let mut a = random_mat(&mut rng, n, n);
        for i in 0..n {
            a[[i, i]] -= 3.0;
        }
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, p, n);
        let d = random_mat(&mut rng, p, m);
        let coeffs = build_family(
            FamilySpec::Lqg {
                q_tilde: Array2::eye(p),
                r_tilde: Array2::eye(m),
                feedthrough: d.clone(),
            },
            dense_c(&a),
            CsrMatrix::identity(n),
            b.clone(),
            c.clone(),
        )
        .unwrap();
        let r_expect = Array2::<f64>::eye(m) + d.t().dot(&d);
        let s_expect = c.t().dot(&d);
        assert!(linalg::frobenius_norm((coeffs.r() - &r_expect).view()) < 1e-13);
        assert!(linalg::frobenius_norm((coeffs.s() - &s_expect).view()) < 1e-13);
        assert!(coeffs.feedthrough().is_some());
    }

    #[test]
    fn hinf_family_matches_two_sided_display_form() {
        // The assembled general equation must expand to
        //   A^T X E + E^T X A + C^T Q C
        //   + gamma^{-2} E^T X B1 B1^T X E - E^T X B2 R~^{-1} B2^T X E.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 6;
        let (m1, m2, p) = (2, 1, 2);
        let a = random_mat(&mut rng, n, n);
        let b = random_mat(&mut rng, n, m1 + m2);
        let c = random_mat(&mut rng, p, n);
        let gamma = 3.5;
        let coeffs = build_family(
            FamilySpec::Hinf {
                gamma,
                split: (m1, m2),
                q_tilde: Array2::eye(p),
                r_tilde: Array2::eye(m2),
            },
            dense_c(&a),
            CsrMatrix::identity(n),
            b.clone(),
            c.clone(),
        )
        .unwrap();
        let mut x = random_mat(&mut rng, n, n);
        x = &x + &x.t().to_owned();
        let general = riccati_operator(&coeffs, x.view()).unwrap();
        let b1 = b.slice(s![.., 0..m1]);
        let b2 = b.slice(s![.., m1..]);
        let xb1 = x.dot(&b1);
        let xb2 = x.dot(&b2);
        let display = a.t().dot(&x) + x.dot(&a) + c.t().dot(&c)
            + xb1.dot(&xb1.t()).mapv(|v| v / (gamma * gamma))
            - xb2.dot(&xb2.t());
        let diff = &general - &display;
        assert!(
            linalg::frobenius_norm(diff.view())
                < 1e-12 * linalg::frobenius_norm(display.view()),
            "H-infinity assembly diverges from the display form"
        );
    }

    #[test]
    fn bounded_real_family_matches_display_form() {
        // A^T X + X A + C^T C
        //   + (X B + C^T D)(gamma^2 I - D^T D)^{-1} (B^T X + D^T C).
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 5;
        let (m, p) = (2, 2);
        let a = random_mat(&mut rng, n, n);
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, p, n);
        let d = random_mat(&mut rng, p, m).mapv(|v| 0.3 * v);
        let gamma = 2.0;
        let coeffs = build_family(
            FamilySpec::BoundedReal {
                gamma,
                feedthrough: d.clone(),
            },
            dense_c(&a),
            CsrMatrix::identity(n),
            b.clone(),
            c.clone(),
        )
        .unwrap();
        let mut x = random_mat(&mut rng, n, n);
        x = &x + &x.t().to_owned();
        let general = riccati_operator(&coeffs, x.view()).unwrap();
        let gap = Array2::from_diag_elem(m, gamma * gamma) - d.t().dot(&d);
        let gap_lu = DenseLu::factor(gap.view()).unwrap();
        let gain = b.t().dot(&x) + d.t().dot(&c);
        let display =
            a.t().dot(&x) + x.dot(&a) + c.t().dot(&c) + gain.t().dot(&gap_lu.solve(gain.view()).unwrap());
        let diff = &general - &display;
        assert!(
            linalg::frobenius_norm(diff.view())
                < 1e-12 * linalg::frobenius_norm(display.view()),
            "bounded-real assembly diverges from the display form"
        );
    }

    #[test]
    fn bounded_real_rejects_small_gamma() {
        let d = array![[2.0, 0.0], [0.0, 0.5]];
        let err = build_family(
            FamilySpec::BoundedReal {
                gamma: 1.0, // gamma^2 I - D^T D indefinite: 1 - 4 < 0
                feedthrough: d,
            },
            CsrMatrix::identity(3),
            CsrMatrix::identity(3),
            Array2::zeros((3, 2)),
            Array2::zeros((2, 3)),
        )
        .unwrap_err();
        assert!(matches!(err, FormsError::DefinitenessViolation { .. }));
    }

    #[test]
    fn positive_real_family_matches_lemma_form() {
        // A^T X + X A + (C - B^T X)^T (D + D^T)^{-1} (C - B^T X).
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let n = 5;
        let m = 2;
        let a = random_mat(&mut rng, n, n);
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, m, n);
        let mut d = random_mat(&mut rng, m, m).mapv(|v| 0.2 * v);
        for i in 0..m {
            d[[i, i]] += 1.0; // keep D + D^T positive definite
        }
        let coeffs = build_family(
            FamilySpec::PositiveReal {
                feedthrough: d.clone(),
            },
            dense_c(&a),
            CsrMatrix::identity(n),
            b.clone(),
            c.clone(),
        )
        .unwrap();
        let mut x = random_mat(&mut rng, n, n);
        x = &x + &x.t().to_owned();
        let general = riccati_operator(&coeffs, x.view()).unwrap();
        let dd = &d + &d.t();
        let dd_lu = DenseLu::factor(dd.view()).unwrap();
        let gap = &c - &b.t().dot(&x);
        let display = a.t().dot(&x) + x.dot(&a) + gap.t().dot(&dd_lu.solve(gap.view()).unwrap());
        let diff = &general - &display;
        assert!(
            linalg::frobenius_norm(diff.view())
                < 1e-12 * linalg::frobenius_norm(display.view()),
            "positive-real assembly diverges from the lemma form"
        );
        // The recorded feedthrough -I reproduces S = -C^T.
        let rec = coeffs.feedthrough().unwrap();
        assert!(linalg::frobenius_norm((rec + &Array2::<f64>::eye(m)).view()) < 1e-15);
    }

    #[test]
    fn positive_real_requires_square_transfer() {
        let err = build_family(
            FamilySpec::PositiveReal {
                feedthrough: Array2::eye(2),
            },
            CsrMatrix::identity(3),
            CsrMatrix::identity(3),
            Array2::zeros((3, 2)),
            Array2::zeros((1, 3)), // p = 1 != m = 2
        )
        .unwrap_err();
        assert!(matches!(err, FormsError::DimensionMismatch { .. }));
    }

    #[test]
    fn residual_factor_matches_dense_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = 7;
        let (m, p) = (2, 3);
        let a = random_mat(&mut rng, n, n);
        let e = random_mat(&mut rng, n, n) + Array2::from_diag_elem(n, 2.0);
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, p, n);
        let mut q = random_mat(&mut rng, p, p);
        q = &q + &q.t().to_owned();
        let mut r = random_mat(&mut rng, m, m).mapv(|v| 0.2 * v);
        r = &r + &r.t().to_owned() + Array2::<f64>::eye(m);
        let s = random_mat(&mut rng, n, m);
        let coeffs =
            CoefficientSet::new(dense_c(&a), dense_c(&e), b, c, q, r, s).unwrap();

        let l = random_mat(&mut rng, n, 3);
        let mut dk = random_mat(&mut rng, 3, 3);
        dk = &dk + &dk.t().to_owned();
        let x = LdlFactor::new(l, dk).unwrap();
        let factored = residual_factor(&coeffs, &x).unwrap().dense();
        let direct = riccati_operator(&coeffs, x.dense().view()).unwrap();
        let diff = &factored - &direct;
        assert!(
            linalg::frobenius_norm(diff.view())
                < 1e-12 * linalg::frobenius_norm(direct.view()),
            "factored residual diverges from the dense operator"
        );
        // At X = 0 the residual is the constant term C^T Q C - S R^{-1} S^T.
        let zero = LdlFactor::zero(n);
        let at_zero = residual_factor(&coeffs, &zero).unwrap().dense();
        let r_inv_st = coeffs.r_solve(coeffs.s().t()).unwrap();
        let constant = coeffs.c().t().dot(coeffs.q()).dot(coeffs.c())
            - coeffs.s().dot(&r_inv_st);
        let dz = &at_zero - &constant;
        assert!(
            linalg::frobenius_norm(dz.view())
                < 1e-13 * linalg::frobenius_norm(constant.view())
        );
    }

    #[test]
    fn metric_norm_denominators_match_dense_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let n = 12;
        let (m, p) = (2, 2);
        let a = random_mat(&mut rng, n, n);
        let e = random_mat(&mut rng, n, n) + Array2::from_diag_elem(n, 3.0);
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, p, n);
        let s = random_mat(&mut rng, n, m);
        let coeffs = CoefficientSet::new(
            dense_c(&a),
            dense_c(&e),
            b.clone(),
            c,
            Array2::eye(p),
            Array2::eye(m) * 2.0,
            s.clone(),
        )
        .unwrap();
        let ctx = MetricContext::new(&coeffs).unwrap();
        let a_hat = &a - &b.dot(&coeffs.r_solve(s.t().view()).unwrap());
        let a_ref = linalg::two_norm(a_hat.view()).unwrap();
        let e_ref = linalg::two_norm(e.view()).unwrap();
        assert!(
            (ctx.a_hat_norm() - a_ref).abs() < 1e-6 * a_ref,
            "power iteration for A_hat: {} vs {a_ref}",
            ctx.a_hat_norm()
        );
        assert!(
            (ctx.e_norm() - e_ref).abs() < 1e-6 * e_ref,
            "power iteration for E: {} vs {e_ref}",
            ctx.e_norm()
        );
        let brb = b.dot(&coeffs.r_solve(b.t().view()).unwrap());
        let brb_ref = linalg::two_norm(brb.view()).unwrap();
        assert!((ctx.brb_norm() - brb_ref).abs() < 1e-10 * brb_ref);
        let r_inv_st = coeffs.r_solve(s.t().view()).unwrap();
        let cqc = coeffs.c().t().dot(coeffs.q()).dot(coeffs.c()) - s.dot(&r_inv_st);
        let cqc_ref = linalg::two_norm(cqc.view()).unwrap();
        assert!((ctx.cqc_norm() - cqc_ref).abs() < 1e-10 * cqc_ref);
    }

    #[test]
    fn metrics_are_representation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 9;
        let (m, p) = (2, 2);
        let mut a = random_mat(&mut rng, n, n);
        for i in 0..n {
            a[[i, i]] -= 3.0;
        }
        let b = random_mat(&mut rng, n, m);
        let c = random_mat(&mut rng, p, n);
        let s = random_mat(&mut rng, n, m).mapv(|v| 0.2 * v);
        let coeffs = CoefficientSet::new(
            dense_c(&a),
            CsrMatrix::identity(n),
            b,
            c,
            Array2::eye(p),
            Array2::eye(m),
            s,
        )
        .unwrap();
        // A generic low-rank X, far from the solution so the residual is
        // well above roundoff.
        let l = random_mat(&mut rng, n, 4);
        let mut d = random_mat(&mut rng, 4, 4);
        d = &d + &d.t().to_owned();
        let x = LdlFactor::new(l, d).unwrap();
        let dense = x.dense();
        let from_factor = metrics(&coeffs, SolutionRef::Factored(&x)).unwrap();
        let from_dense = metrics(&coeffs, SolutionRef::Dense(dense.view())).unwrap();
        for (lhs, rhs, name) in [
            (from_factor.res1, from_dense.res1, "res1"),
            (from_factor.res2, from_dense.res2, "res2"),
            (from_factor.res3, from_dense.res3, "res3"),
        ] {
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.abs(),
                "{name} differs across representations: {lhs:.16e} vs {rhs:.16e}"
            );
        }
    }

    #[test]
    fn res1_is_one_at_zero_solution() {
        // At X = 0 with S = 0 the residual equals the constant term, so
        // res1 = 1 exactly (up to the norm computation).
        let coeffs = scalar_system();
        let got = metrics(&coeffs, SolutionRef::Factored(&LdlFactor::zero(1))).unwrap();
        assert!((got.res1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reldiff_has_documented_special_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let l = random_mat(&mut rng, 6, 2);
        let d = array![[1.0, 0.0], [0.0, -2.0]];
        let x1 = LdlFactor::new(l.clone(), d.clone()).unwrap();
        let x2 = LdlFactor::new(l, d.mapv(|v| 2.0 * v)).unwrap();
        // ||X1 - X2|| = ||X1||, denominator = 1.5 ||X1||.
        let rd = reldiff(
            SolutionRef::Factored(&x1),
            SolutionRef::Factored(&x2),
        )
        .unwrap();
        assert!((rd - 2.0 / 3.0).abs() < 1e-12, "rd = {rd}");
        let z1 = LdlFactor::zero(6);
        let z2 = LdlFactor::zero(6);
        let rd0 = reldiff(
            SolutionRef::Factored(&z1),
            SolutionRef::Factored(&z2),
        )
        .unwrap();
        assert_eq!(rd0, 0.0);
        // Mixed representations agree with the factored route.
        let dense2 = x2.dense();
        let rd_mixed = reldiff(
            SolutionRef::Factored(&x1),
            SolutionRef::Dense(dense2.view()),
        )
        .unwrap();
        assert!((rd_mixed - rd).abs() < 1e-12);
    }
}
