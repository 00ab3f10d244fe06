//! The outer Newton-Kleinman iteration for general Riccati equations.
//!
//! The equation solved is
//!
//! ```text
//! A^T X E + E^T X A + C^T Q C - (B^T X E + S^T)^T R^{-1} (B^T X E + S^T) = 0
//! ```
//!
//! with sparse `A`, `E`, tall `B`, wide `C`, symmetric `Q` and invertible
//! symmetric `R` (either may be indefinite), and cross term `S`. Each
//! outer step linearizes at the current feedback `K_k` and solves the
//! generalized Lyapunov equation
//!
//! ```text
//! (A - B K_k)^T X E + E^T X (A - B K_k) + W_k T W_k^T = 0
//! ```
//!
//! whose constant term has the block-diagonal center `T = blkdiag(Q, -R,
//! R)` over the stacked rows `[C; R^{-1} S^T; K_k - R^{-1} S^T]`. The next
//! feedback is `K_{k+1} = R^{-1} (B^T X E + S^T)`, applied in factored
//! form. Optional exact or backtracking line searches damp the update,
//! and optional inexact inner solves relax the Lyapunov tolerance by a
//! forcing sequence.
//!
//! Two equivalent routes exist: [`newton_solve`] runs on the plain
//! coefficients, [`newton_solve_reformulated`] first hides the cross term
//! inside a low-rank update `A_hat = A - B R^{-1} S^T` and an extended
//! output block, producing the same iterates step for step. The per-step
//! `res1` values reported are always honest recomputations from the
//! current solution factor, never the iteration's internal bookkeeping.

use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::forms::{self, FormsError};
use crate::ldlt::{FactorError, LdlFactor};
use crate::linalg::{self, blkdiag, DenseLu, LinalgError};
use crate::linesearch::{self, LineSearchError};
use crate::lyapunov::{self, AdiOptions, LyapunovError};
use crate::operator::{OperatorError, ShiftedOperator};
use crate::report::{LineSearchRecord, RunReport, StepRecord};
use crate::sparse::{CsrMatrix, SparseError};

/// Largest dimension for which dense fallbacks (initial feedback, direct
/// inner solves under `InnerSolver::Auto`) are attempted.
pub const DENSE_SOLVE_LIMIT: usize = 500;

/// Error constructing a coefficient set.
#[derive(Debug)]
pub enum CoefficientError {
    /// Dimensions are inconsistent.
    Dimension {
        context: &'static str,
        detail: String,
    },
    /// A matrix required to be symmetric is not.
    NotSymmetric { which: &'static str },
    /// `R` is singular or too ill-conditioned for a reliable solve.
    SingularR { rcond: f64 },
    /// A dense kernel failed.
    Linalg(LinalgError),
}

impl std::fmt::Display for CoefficientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientError::Dimension { context, detail } => {
                write!(f, "{context}: {detail}")
            }
            CoefficientError::NotSymmetric { which } => {
                write!(f, "matrix {which} must be symmetric")
            }
            CoefficientError::SingularR { rcond } => {
                write!(
                    f,
                    "R is numerically singular (reciprocal condition {rcond:.3e})"
                )
            }
            CoefficientError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
        }
    }
}

impl std::error::Error for CoefficientError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoefficientError::Linalg(e) => Some(e),
            _ => None,
        }
    }
}

impl From<LinalgError> for CoefficientError {
    fn from(e: LinalgError) -> Self {
        CoefficientError::Linalg(e)
    }
}

/// Error type for the Newton iteration.
#[derive(Debug)]
pub enum NewtonError {
    /// Invalid coefficient data.
    Coefficient(CoefficientError),
    /// The inner Lyapunov solver failed.
    InnerSolveFailure(LyapunovError),
    /// An inexact step increased the residual and the exact restart did
    /// not recover the decrease.
    InexactBreakdown {
        step: usize,
        res_before: f64,
        res_after: f64,
    },
    /// No stabilizing initial feedback could be constructed.
    StabilizationFailure { detail: String },
    /// A solve against `R` failed.
    RSolveFailure { detail: String },
    /// The line search failed.
    LineSearch(LineSearchError),
    /// The step limit was reached; carries the partial outcome.
    MaxStepsExceeded(Box<NewtonOutcome>),
    /// An error from the forms/metrics layer.
    Forms(FormsError),
    /// A dense kernel failed.
    Linalg(LinalgError),
    /// Factor plumbing failed.
    Factor(FactorError),
    /// An operator apply or solve failed.
    Operator(OperatorError),
    /// A sparse product failed.
    Sparse(SparseError),
}

impl std::fmt::Display for NewtonError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NewtonError::Coefficient(e) => write!(f, "invalid coefficients: {e}"),
            NewtonError::InnerSolveFailure(e) => write!(f, "inner solve failed: {e}"),
            NewtonError::InexactBreakdown {
                step,
                res_before,
                res_after,
            } => write!(
                f,
                "inexact iteration broke down at step {step}: residual went from \
                 {res_before:.3e} to {res_after:.3e} despite an exact restart"
            ),
            NewtonError::StabilizationFailure { detail } => {
                write!(f, "could not construct a stabilizing initial feedback: {detail}")
            }
            NewtonError::RSolveFailure { detail } => write!(f, "solve against R failed: {detail}"),
            NewtonError::LineSearch(e) => write!(f, "line search failed: {e}"),
            NewtonError::MaxStepsExceeded(outcome) => write!(
                f,
                "step limit reached after {} steps at res1 = {:.3e}",
                outcome.report.steps.len(),
                outcome
                    .report
                    .steps
                    .last()
                    .map_or(f64::NAN, |s| s.res1)
            ),
            NewtonError::Forms(e) => write!(f, "metrics layer failed: {e}"),
            NewtonError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
            NewtonError::Factor(e) => write!(f, "factor update failed: {e}"),
            NewtonError::Operator(e) => write!(f, "operator failed: {e}"),
            NewtonError::Sparse(e) => write!(f, "sparse product failed: {e}"),
        }
    }
}

impl std::error::Error for NewtonError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            NewtonError::Coefficient(e) => Some(e),
            NewtonError::InnerSolveFailure(e) => Some(e),
            NewtonError::LineSearch(e) => Some(e),
            NewtonError::Forms(e) => Some(e),
            NewtonError::Linalg(e) => Some(e),
            NewtonError::Factor(e) => Some(e),
            NewtonError::Operator(e) => Some(e),
            NewtonError::Sparse(e) => Some(e),
            _ => None,
        }
    }
}

impl From<CoefficientError> for NewtonError {
    fn from(e: CoefficientError) -> Self {
        NewtonError::Coefficient(e)
    }
}
impl From<LyapunovError> for NewtonError {
    fn from(e: LyapunovError) -> Self {
        NewtonError::InnerSolveFailure(e)
    }
}
impl From<LineSearchError> for NewtonError {
    fn from(e: LineSearchError) -> Self {
        NewtonError::LineSearch(e)
    }
}
impl From<FormsError> for NewtonError {
    fn from(e: FormsError) -> Self {
        NewtonError::Forms(e)
    }
}
impl From<LinalgError> for NewtonError {
    fn from(e: LinalgError) -> Self {
        NewtonError::Linalg(e)
    }
}
impl From<FactorError> for NewtonError {
    fn from(e: FactorError) -> Self {
        NewtonError::Factor(e)
    }
}
impl From<OperatorError> for NewtonError {
    fn from(e: OperatorError) -> Self {
        NewtonError::Operator(e)
    }
}
impl From<SparseError> for NewtonError {
    fn from(e: SparseError) -> Self {
        NewtonError::Sparse(e)
    }
}

/// The seven coefficient matrices of the general Riccati equation.
///
/// Construction validates dimensions, the symmetry of `Q` and `R`, and
/// the conditioning of `R`, and caches an LU factorization of `R` for the
/// many small solves the iteration performs.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    a: CsrMatrix,
    e: CsrMatrix,
    b: Array2<f64>,
    c: Array2<f64>,
    q: Array2<f64>,
    r: Array2<f64>,
    s: Array2<f64>,
    feedthrough: Option<Array2<f64>>,
    r_lu: DenseLu,
    r_inv: Array2<f64>,
}

impl CoefficientSet {
    /// Validate and assemble a coefficient set.
    pub fn new(
        a: CsrMatrix,
        e: CsrMatrix,
        b: Array2<f64>,
        c: Array2<f64>,
        q: Array2<f64>,
        r: Array2<f64>,
        s: Array2<f64>,
    ) -> Result<Self, CoefficientError> {
        if !a.is_square() {
            return Err(CoefficientError::Dimension {
                context: "CoefficientSet",
                detail: format!("A must be square, got {}x{}", a.nrows(), a.ncols()),
            });
        }
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        let check = |cond: bool, detail: String| -> Result<(), CoefficientError> {
            if cond {
                Ok(())
            } else {
                Err(CoefficientError::Dimension {
                    context: "CoefficientSet",
                    detail,
                })
            }
        };
        check(
            e.nrows() == n && e.ncols() == n,
            format!("E is {}x{}, expected {n}x{n}", e.nrows(), e.ncols()),
        )?;
        check(b.nrows() == n, format!("B has {} rows, expected {n}", b.nrows()))?;
        check(c.ncols() == n, format!("C has {} columns, expected {n}", c.ncols()))?;
        check(
            q.dim() == (p, p),
            format!("Q is {:?}, expected {p}x{p}", q.dim()),
        )?;
        check(
            r.dim() == (m, m),
            format!("R is {:?}, expected {m}x{m}", r.dim()),
        )?;
        check(
            s.dim() == (n, m),
            format!("S is {:?}, expected {n}x{m}", s.dim()),
        )?;

        let sym_check = |mat: &Array2<f64>, which: &'static str| -> Result<Array2<f64>, CoefficientError> {
            let scale = linalg::frobenius_norm(mat.view());
            let asym = (mat - &mat.t()).mapv(f64::abs).iter().fold(0.0_f64, |a, &x| a.max(x));
            if asym > 1e-10 * scale.max(1.0) {
                return Err(CoefficientError::NotSymmetric { which });
            }
            let mut out = mat.clone();
            linalg::symmetrize(&mut out);
            Ok(out)
        };
        let q = sym_check(&q, "Q")?;
        let r = sym_check(&r, "R")?;

        let r_lu = DenseLu::factor(r.view()).map_err(|e| match e {
            LinalgError::Singular { .. } => CoefficientError::SingularR { rcond: 0.0 },
            other => CoefficientError::Linalg(other),
        })?;
        // 1-norm of R for the condition estimate.
        let mut anorm: f64 = 0.0;
        for j in 0..m {
            let col_sum: f64 = (0..m).map(|i| r[[i, j]].abs()).sum();
            anorm = anorm.max(col_sum);
        }
        let rcond = r_lu.recip_condition(anorm)?;
        if m > 0 && rcond < 100.0 * f64::EPSILON {
            return Err(CoefficientError::SingularR { rcond });
        }
        let mut r_inv = r_lu.solve(Array2::eye(m).view())?;
        linalg::symmetrize(&mut r_inv);

        Ok(CoefficientSet {
            a,
            e,
            b,
            c,
            q,
            r,
            s,
            feedthrough: None,
            r_lu,
            r_inv,
        })
    }

    /// Record a feedthrough matrix `D` with `S = C^T D`, enabling the
    /// reduced constant term in [`reformulate`]. The structure is checked
    /// numerically before being accepted.
    pub fn with_feedthrough(mut self, d: Array2<f64>) -> Result<Self, CoefficientError> {
        let (p, m) = (self.p(), self.m());
        if d.dim() != (p, m) {
            return Err(CoefficientError::Dimension {
                context: "with_feedthrough",
                detail: format!("D is {:?}, expected {p}x{m}", d.dim()),
            });
        }
        let implied = self.c.t().dot(&d);
        let diff = (&implied - &self.s)
            .mapv(f64::abs)
            .iter()
            .fold(0.0_f64, |a, &x| a.max(x));
        let scale = linalg::frobenius_norm(self.s.view()).max(1.0);
        if diff > 1e-10 * scale {
            return Err(CoefficientError::Dimension {
                context: "with_feedthrough",
                detail: "S does not match C^T D".to_string(),
            });
        }
        self.feedthrough = Some(d);
        Ok(self)
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }
    pub fn e(&self) -> &CsrMatrix {
        &self.e
    }
    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }
    pub fn c(&self) -> &Array2<f64> {
        &self.c
    }
    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }
    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }
    pub fn s(&self) -> &Array2<f64> {
        &self.s
    }
    /// The recorded feedthrough `D` with `S = C^T D`, if any.
    pub fn feedthrough(&self) -> Option<&Array2<f64>> {
        self.feedthrough.as_ref()
    }
    /// Cached `R^{-1}` (symmetrized).
    pub fn r_inv(&self) -> &Array2<f64> {
        &self.r_inv
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Solve `R Y = rhs` against the cached factorization.
    pub fn r_solve(&self, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>, NewtonError> {
        self.r_lu.solve(rhs).map_err(|e| NewtonError::RSolveFailure {
            detail: e.to_string(),
        })
    }

    /// The row block `V^T = R^{-1} S^T` (m x n).
    pub fn vt(&self) -> Result<Array2<f64>, NewtonError> {
        self.r_solve(self.s.t())
    }
}

/// Line-search mode of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineSearchMode {
    /// Full Newton steps.
    #[default]
    Off,
    /// Minimize the residual quartic exactly over `(0, 2]`.
    Exact,
    /// Backtracking halving with the sufficient-decrease test.
    Armijo,
}

impl std::fmt::Display for LineSearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LineSearchMode::Off => "off",
            LineSearchMode::Exact => "exact",
            LineSearchMode::Armijo => "armijo",
        })
    }
}

/// Forcing sequence for inexact inner solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InexactMode {
    /// Inner solves run to their own tight tolerance.
    #[default]
    Off,
    /// `tau_k = 1 / (k^3 + 1)`: superlinear outer convergence.
    Superlinear,
    /// `tau_k = min(0.1, 0.9 ||R(X_k)||_F)`: quadratic outer convergence.
    Quadratic,
}

impl std::fmt::Display for InexactMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InexactMode::Off => "off",
            InexactMode::Superlinear => "superlinear",
            InexactMode::Quadratic => "quadratic",
        })
    }
}

/// Inner Lyapunov solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Dense direct solves up to [`DENSE_SOLVE_LIMIT`], ADI beyond.
    #[default]
    Auto,
    /// Always the dense Kronecker/Schur solver.
    Dense,
    /// Always the low-rank ADI iteration.
    Adi,
}

/// Options of the outer Newton iteration.
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Convergence tolerance on the scaled residual `res1`.
    pub outer_tol: f64,
    /// Maximum number of outer steps.
    pub max_steps: usize,
    /// Line-search mode.
    pub line_search: LineSearchMode,
    /// Inexact-solve mode.
    pub inexact: InexactMode,
    /// Safety factor of the sufficient-decrease test.
    pub beta: f64,
    /// Initial feedback `K_0`; computed by [`initial_feedback`] if absent.
    pub initial_feedback: Option<Array2<f64>>,
    /// Inner solver selection.
    pub inner: InnerSolver,
    /// Keep a full [`NewtonState`] per step in the outcome.
    pub record_iterates: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            outer_tol: 1e-12,
            max_steps: 30,
            line_search: LineSearchMode::Off,
            inexact: InexactMode::Off,
            beta: linesearch::DEFAULT_BETA,
            initial_feedback: None,
            inner: InnerSolver::Auto,
            record_iterates: false,
        }
    }
}

/// Full state of the iteration after one step.
#[derive(Debug, Clone)]
pub struct NewtonState {
    /// Step index, starting at 1.
    pub k: usize,
    /// Feedback `K_k` driving the next closed loop.
    pub feedback: Array2<f64>,
    /// Solution iterate `X_k`.
    pub solution: LdlFactor,
    /// Lyapunov residual `F G F^T` of the inner solve.
    pub lyap_residual: LdlFactor,
    /// Riccati residual bookkeeping `U D U^T` for this iterate.
    pub riccati_residual: LdlFactor,
    /// Honestly recomputed scaled residual.
    pub res1: f64,
}

/// Result of a Newton run.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    /// The final solution factor.
    pub solution: LdlFactor,
    /// The final feedback, recomputed from the solution factor.
    pub feedback: Array2<f64>,
    /// Per-step convergence report.
    pub report: RunReport,
    /// Recorded per-step states (empty unless requested).
    pub states: Vec<NewtonState>,
}

/// The cross-term-free reformulation of a coefficient set.
///
/// The equation keeps its solution when the cross term is folded into the
/// other coefficients: `A_hat = A - B R^{-1} S^T` (a low-rank update),
/// `C_hat = [C; S^T]`, `Q_hat = blkdiag(Q, -R^{-1})`, and `S_hat = 0`.
/// When a feedthrough structure `S = C^T D` is recorded, the extended
/// output block collapses to `C` with the reduced center
/// `Q_check = Q - D R^{-1} D^T`.
#[derive(Debug)]
pub struct ReformulatedSet {
    base: CoefficientSet,
    op: ShiftedOperator,
    u: Array2<f64>,
    v: Array2<f64>,
    c_hat: Array2<f64>,
    q_hat: Array2<f64>,
    reduced_q: Option<Array2<f64>>,
}

impl ReformulatedSet {
    /// The originating coefficient set.
    pub fn base(&self) -> &CoefficientSet {
        &self.base
    }
    /// The operator `A_hat = A + U V^T`.
    pub fn op(&self) -> &ShiftedOperator {
        &self.op
    }
    /// Low-rank update factor `U = -B`.
    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }
    /// Low-rank update factor `V = S R^{-T}`.
    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }
    /// Extended output rows `[C; S^T]`.
    pub fn c_hat(&self) -> &Array2<f64> {
        &self.c_hat
    }
    /// Extended center `blkdiag(Q, -R^{-1})`.
    pub fn q_hat(&self) -> &Array2<f64> {
        &self.q_hat
    }
    /// Reduced center `Q_check`, present when `S = C^T D` was recorded.
    pub fn reduced_q(&self) -> Option<&Array2<f64>> {
        self.reduced_q.as_ref()
    }
}

/// Fold the cross term into the other coefficients.
pub fn reformulate(coeffs: &CoefficientSet) -> Result<ReformulatedSet, NewtonError> {
    let vt = coeffs.vt()?; // R^{-1} S^T, m x n
    let v = vt.t().to_owned(); // S R^{-T}, n x m
    let u = coeffs.b().mapv(|x| -x);
    let s_is_zero = coeffs.s().iter().all(|&x| x == 0.0);
    let op = if s_is_zero {
        ShiftedOperator::new(coeffs.a().clone(), coeffs.e().clone())?
    } else {
        ShiftedOperator::with_low_rank(
            coeffs.a().clone(),
            coeffs.e().clone(),
            u.clone(),
            v.clone(),
        )?
    };
    let c_hat = concatenate(Axis(0), &[coeffs.c().view(), coeffs.s().t()])
        .expect("C and S^T share the column count by construction");
    let neg_r_inv = coeffs.r_inv().mapv(|x| -x);
    let q_hat = blkdiag(&[coeffs.q().view(), neg_r_inv.view()]);
    let reduced_q = match coeffs.feedthrough() {
        Some(d) => {
            let r_inv_dt = coeffs.r_solve(d.t())?;
            let mut q_check = coeffs.q() - &d.dot(&r_inv_dt);
            linalg::symmetrize(&mut q_check);
            Some(q_check)
        }
        None => None,
    };
    Ok(ReformulatedSet {
        base: coeffs.clone(),
        op,
        u,
        v,
        c_hat,
        q_hat,
        reduced_q,
    })
}

/// The factored constant term of the Lyapunov equation at feedback `K`:
/// rows `[C; R^{-1} S^T; K - R^{-1} S^T]` with center `blkdiag(Q, -R, R)`,
/// reconstructing `C^T Q C + K^T R K - S K - (S K)^T`.
pub fn build_constant_factor(
    coeffs: &CoefficientSet,
    feedback: ArrayView2<'_, f64>,
) -> Result<LdlFactor, NewtonError> {
    let (n, m) = (coeffs.n(), coeffs.m());
    if feedback.dim() != (m, n) {
        return Err(NewtonError::Coefficient(CoefficientError::Dimension {
            context: "build_constant_factor",
            detail: format!("feedback is {:?}, expected {m}x{n}", feedback.dim()),
        }));
    }
    let vt = coeffs.vt()?;
    let k_minus_vt = &feedback.to_owned() - &vt;
    let cols = concatenate(
        Axis(1),
        &[coeffs.c().t(), vt.t(), k_minus_vt.t()],
    )
    .expect("row blocks share the state dimension");
    let neg_r = coeffs.r().mapv(|x| -x);
    let kernel = blkdiag(&[coeffs.q().view(), neg_r.view(), coeffs.r().view()]);
    Ok(LdlFactor::new(cols, kernel)?)
}

/// Construct a stabilizing initial feedback.
///
/// Returns the zero feedback when the open-loop pencil is already stable.
/// Otherwise, for `n` up to [`DENSE_SOLVE_LIMIT`], an auxiliary standard
/// Riccati equation with `Q = I`, `R = I`, `S = 0` is solved densely and
/// its feedback returned after a closed-loop eigenvalue check. Larger
/// problems get a Ritz screen of the open-loop pencil: if every Ritz
/// value the screen sees is stable the zero feedback is accepted,
/// otherwise the caller must supply `K_0`.
pub fn initial_feedback(coeffs: &CoefficientSet) -> Result<Array2<f64>, NewtonError> {
    let (n, m) = (coeffs.n(), coeffs.m());
    if n <= DENSE_SOLVE_LIMIT {
        let a_d = coeffs.a().to_dense();
        let e_d = coeffs.e().to_dense();
        let open_loop = linalg::eigvals_gen(a_d.view(), e_d.view())?;
        if open_loop.finite().iter().all(|z| z.re < 0.0) {
            return Ok(Array2::zeros((m, n)));
        }
        let aux = CoefficientSet::new(
            coeffs.a().clone(),
            coeffs.e().clone(),
            coeffs.b().clone(),
            Array2::eye(n),
            Array2::eye(n),
            Array2::eye(m),
            Array2::zeros((n, m)),
        )?;
        let (x_aux, _res) = forms::dense_care_oracle(&aux).map_err(|e| {
            NewtonError::StabilizationFailure {
                detail: format!("auxiliary Riccati solve failed: {e}"),
            }
        })?;
        let k0 = coeffs.b().t().dot(&x_aux).dot(&e_d);
        let closed = &a_d - &coeffs.b().dot(&k0);
        let eigs = linalg::eigvals_gen(closed.view(), e_d.view())?;
        if eigs.finite().iter().all(|z| z.re < 0.0) {
            Ok(k0)
        } else {
            Err(NewtonError::StabilizationFailure {
                detail: "auxiliary feedback left unstable closed-loop eigenvalues".to_string(),
            })
        }
    } else {
        let op = ShiftedOperator::new(coeffs.a().clone(), coeffs.e().clone())?;
        let ritz = lyapunov::ritz_screen(&op, &AdiOptions::default())?;
        if ritz.iter().all(|z| z.re < 0.0) {
            Ok(Array2::zeros((m, n)))
        } else {
            Err(NewtonError::StabilizationFailure {
                detail: format!(
                    "pencil of dimension {n} shows unstable Ritz values; supply an \
                     initial feedback"
                ),
            })
        }
    }
}

/// Convert a dense symmetric matrix into a truncated `L D L^T` factor.
fn factor_from_dense(x: ArrayView2<'_, f64>) -> Result<LdlFactor, NewtonError> {
    Ok(LdlFactor::from_dense_sym(
        x,
        LdlFactor::default_truncation(x.nrows()),
    )?)
}

/// Inner-iteration route and per-step context shared by both formulations.
struct Engine<'a> {
    /// Open-loop operator: `A`, or `A_hat` with its low-rank update.
    op: &'a ShiftedOperator,
    /// The originating coefficients (metrics, `B`, `R`, `E` access).
    base: &'a CoefficientSet,
    /// Effective output rows (p_eff x n).
    c_eff: Array2<f64>,
    /// Effective output center (p_eff x p_eff).
    q_eff: Array2<f64>,
    /// Effective cross term (n x m); `None` means zero.
    s_eff: Option<Array2<f64>>,
    /// `R^{-1} s_eff^T` (m x n), zero when `s_eff` is `None`.
    vt_eff: Array2<f64>,
    /// Problem label for the report.
    name: Option<String>,
}

/// Everything one step produces.
struct StepOutput {
    x: LdlFactor,
    feedback: Array2<f64>,
    feedback_consistent: Array2<f64>,
    res_factor: LdlFactor,
    lyap_residual: LdlFactor,
    res1: f64,
    res_frobenius: f64,
    inner_iters: usize,
    xi: f64,
    ls_record: Option<LineSearchRecord>,
}

impl<'a> Engine<'a> {
    /// `K_X = R^{-1} (B^T X E + s_eff^T)` without densifying `X`.
    fn feedback_of(&self, x: &LdlFactor) -> Result<Array2<f64>, NewtonError> {
        let n = self.base.n();
        let m = self.base.m();
        let mut raw = match self.s_eff.as_ref() {
            Some(s) => s.t().to_owned(),
            None => Array2::zeros((m, n)),
        };
        if x.rank() > 0 {
            let btl = self.base.b().t().dot(x.l()); // m x r
            let etl = self.op.apply_e_transposed(x.l().view())?; // n x r
            raw = raw + btl.dot(x.d()).dot(&etl.t());
        }
        self.base.r_solve(raw.view())
    }

    /// Honest Riccati residual factor at `x` with feedback `k_x` (which
    /// must equal `feedback_of(x)`): columns `[A^T L, E^T L, c_eff^T,
    /// k_x^T]` with the cross-coupled center.
    fn residual_factor(
        &self,
        x: &LdlFactor,
        k_x: &Array2<f64>,
    ) -> Result<LdlFactor, NewtonError> {
        let r = x.rank();
        let p_eff = self.c_eff.nrows();
        let m = self.base.m();
        let total = 2 * r + p_eff + m;
        let mut kernel = Array2::zeros((total, total));
        if r > 0 {
            kernel
                .slice_mut(ndarray::s![0..r, r..2 * r])
                .assign(x.d());
            kernel
                .slice_mut(ndarray::s![r..2 * r, 0..r])
                .assign(x.d());
        }
        kernel
            .slice_mut(ndarray::s![2 * r..2 * r + p_eff, 2 * r..2 * r + p_eff])
            .assign(&self.q_eff);
        kernel
            .slice_mut(ndarray::s![2 * r + p_eff.., 2 * r + p_eff..])
            .assign(&self.base.r().mapv(|v| -v));

        let cols = if r > 0 {
            let atl = self.op.apply_transposed(x.l().view())?;
            let etl = self.op.apply_e_transposed(x.l().view())?;
            concatenate(
                Axis(1),
                &[atl.view(), etl.view(), self.c_eff.t(), k_x.t()],
            )
        } else {
            concatenate(Axis(1), &[self.c_eff.t(), k_x.t()])
        }
        .expect("residual factor blocks share the state dimension");
        Ok(LdlFactor::new(cols, kernel)?)
    }

    /// Constant-term factor of the closed-loop Lyapunov equation at `k`.
    /// Uses the compact two-block form when the cross term vanishes.
    fn lyapunov_rhs(&self, k: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        match self.s_eff.as_ref() {
            None => {
                let cols = concatenate(Axis(1), &[self.c_eff.t(), k.t()])
                    .expect("rhs blocks share the state dimension");
                let kernel = blkdiag(&[self.q_eff.view(), self.base.r().view()]);
                (cols, kernel)
            }
            Some(_) => {
                let k_minus = k - &self.vt_eff;
                let cols = concatenate(
                    Axis(1),
                    &[self.c_eff.t(), self.vt_eff.t(), k_minus.t()],
                )
                .expect("rhs blocks share the state dimension");
                let neg_r = self.base.r().mapv(|x| -x);
                let kernel = blkdiag(&[
                    self.q_eff.view(),
                    neg_r.view(),
                    self.base.r().view(),
                ]);
                (cols, kernel)
            }
        }
    }

    /// Choose the dense route for this run?
    fn use_dense(&self, opts: &NewtonOptions) -> bool {
        match opts.inner {
            InnerSolver::Dense => true,
            InnerSolver::Adi => false,
            InnerSolver::Auto => self.base.n() <= DENSE_SOLVE_LIMIT,
        }
    }

    /// One (possibly damped) Newton step from `(x_cur, k_cur)`.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        k_index: usize,
        x_cur: &LdlFactor,
        k_cur: &Array2<f64>,
        res_factor_cur: &LdlFactor,
        res_frobenius_cur: f64,
        opts: &NewtonOptions,
        adi: &AdiOptions,
        cqc_norm: f64,
        dense_base: Option<&(Array2<f64>, Array2<f64>)>,
        force_exact: bool,
    ) -> Result<StepOutput, NewtonError> {
        let n = self.base.n();
        let (rhs_cols, rhs_kernel) = self.lyapunov_rhs(k_cur);

        // Inner solve for X_{k+1}.
        let (x_next, lyap_l, lyap_d, inner_iters) = if let Some((a_open, e_d)) = dense_base {
            let a_cl = a_open - &self.base.b().dot(k_cur);
            let x_dense =
                lyapunov::solve_kron(a_cl.view(), e_d.view(), rhs_cols.view(), rhs_kernel.view())?;
            (
                factor_from_dense(x_dense.view())?,
                Array2::zeros((n, 0)),
                Array2::zeros((0, 0)),
                0,
            )
        } else {
            // Closed-loop operator: existing low-rank update plus -B K.
            let (u_cl, v_cl) = match self.op.low_rank() {
                Some((u0, v0)) => (
                    concatenate(Axis(1), &[u0.view(), self.base.b().mapv(|x| -x).view()])
                        .expect("low-rank blocks share the state dimension"),
                    concatenate(Axis(1), &[v0.view(), k_cur.t()])
                        .expect("low-rank blocks share the state dimension"),
                ),
                None => (self.base.b().mapv(|x| -x), k_cur.t().to_owned()),
            };
            let op_cl = ShiftedOperator::with_low_rank(
                self.op.a().clone(),
                self.op.e().clone(),
                u_cl,
                v_cl,
            )?;
            let mut step_adi = adi.clone();
            step_adi.res_tol = if force_exact || opts.inexact == InexactMode::Off {
                adi.res_tol.min(0.1 * opts.outer_tol)
            } else {
                let tau = match opts.inexact {
                    InexactMode::Superlinear => {
                        let kf = k_index as f64;
                        1.0 / (kf * kf * kf + 1.0)
                    }
                    InexactMode::Quadratic => (0.9 * res_frobenius_cur).min(0.1),
                    InexactMode::Off => unreachable!(),
                };
                let rhs_norm =
                    LdlFactor::new(rhs_cols.clone(), rhs_kernel.clone())?.sym_two_norm()?;
                let q_w = rhs_cols.ncols().max(1) as f64;
                (tau * res_frobenius_cur / (q_w.sqrt() * rhs_norm)).max(f64::EPSILON)
            };
            let outcome = lyapunov::solve_lr_adi(
                &op_cl,
                rhs_cols.view(),
                rhs_kernel.view(),
                &step_adi,
            )?;
            let x = outcome.x.compress(LdlFactor::default_truncation(n))?;
            let (l, d) = outcome.residual.into_parts();
            (x, l, d, outcome.iterations)
        };

        // Feedback update and change.
        let k_next = self.feedback_of(&x_next)?;
        let dk = &k_next - k_cur;

        // Line search.
        let mut xi = 1.0;
        let mut ls_record = None;
        if opts.line_search != LineSearchMode::Off {
            let v = linesearch::trace_coefficients(
                res_factor_cur.l().view(),
                res_factor_cur.d().view(),
                lyap_l.view(),
                lyap_d.view(),
                dk.view(),
                self.base.r().view(),
            );
            let (candidate, accepted) = match opts.line_search {
                LineSearchMode::Exact => {
                    let (step, _fallback) = linesearch::exact_step(&v)?;
                    let old = linesearch::quartic_eval(&v, 0.0).max(0.0).sqrt();
                    let new = linesearch::quartic_eval(&v, step).max(0.0).sqrt();
                    (step, linesearch::sufficient_decrease(new, old, step, opts.beta))
                }
                LineSearchMode::Armijo => (linesearch::armijo_step(&v, opts.beta)?, true),
                LineSearchMode::Off => unreachable!(),
            };
            xi = candidate;
            ls_record = Some(LineSearchRecord {
                v,
                xi,
                accepted,
            });
        }

        // Damped (or full) update of the iterate, feedback, and residual
        // bookkeeping.
        let neg_r = self.base.r().mapv(|v| -v);
        let (x_new, k_new, res_factor_new) = if xi == 1.0 {
            let dk_t = dk.t().to_owned();
            let res_factor = if lyap_l.ncols() == 0 {
                LdlFactor::new(dk_t, neg_r.clone())?
            } else {
                LdlFactor::from_blocks(
                    &[lyap_l.view(), dk_t.view()],
                    &[lyap_d.view(), neg_r.view()],
                )?
            };
            (x_next, k_next.clone(), res_factor)
        } else {
            let x_new = LdlFactor::from_blocks(
                &[x_cur.l().view(), x_next.l().view()],
                &[
                    x_cur.d().mapv(|v| (1.0 - xi) * v).view(),
                    x_next.d().mapv(|v| xi * v).view(),
                ],
            )?
            .compress(LdlFactor::default_truncation(n))?;
            let k_new = k_cur.mapv(|v| (1.0 - xi) * v) + k_next.mapv(|v| xi * v);
            let res_factor = LdlFactor::from_blocks(
                &[res_factor_cur.l().view(), lyap_l.view(), dk.t()],
                &[
                    res_factor_cur.d().mapv(|v| (1.0 - xi) * v).view(),
                    lyap_d.mapv(|v| xi * v).view(),
                    neg_r.mapv(|v| xi * xi * v).view(),
                ],
            )?
            .compress(LdlFactor::default_truncation(n))?;
            (x_new, k_new, res_factor)
        };

        // Honest residual recomputation at the new iterate.
        let k_consistent = self.feedback_of(&x_new)?;
        let honest = self.residual_factor(&x_new, &k_consistent)?;
        let res1 = honest.sym_two_norm()? / cqc_norm;
        let res_frobenius = honest.sym_frobenius_norm()?;

        Ok(StepOutput {
            x: x_new,
            feedback: k_new,
            feedback_consistent: k_consistent,
            res_factor: res_factor_new,
            lyap_residual: LdlFactor::new(lyap_l, lyap_d)?,
            res1,
            res_frobenius,
            inner_iters,
            xi,
            ls_record,
        })
    }

    /// Run the full outer iteration.
    fn run(
        &self,
        k0: Array2<f64>,
        opts: &NewtonOptions,
        adi: &AdiOptions,
    ) -> Result<NewtonOutcome, NewtonError> {
        let n = self.base.n();
        let m = self.base.m();
        if k0.dim() != (m, n) {
            return Err(NewtonError::Coefficient(CoefficientError::Dimension {
                context: "newton_solve",
                detail: format!("initial feedback is {:?}, expected {m}x{n}", k0.dim()),
            }));
        }
        let metric_ctx = forms::MetricContext::new(self.base)?;
        let cqc_norm = metric_ctx.cqc_norm();

        let dense_base = if self.use_dense(opts) {
            let mut a_open = self.op.a().to_dense();
            if let Some((u, v)) = self.op.low_rank() {
                a_open = a_open + u.dot(&v.t());
            }
            Some((a_open, self.op.e().to_dense()))
        } else {
            None
        };

        let t0 = Instant::now();
        let mut x_cur = LdlFactor::zero(n);
        let mut k_cur = k0;
        let mut k_consistent = self.vt_eff.clone();
        let mut res_factor = self.residual_factor(&x_cur, &k_consistent)?;
        let mut res1_cur = res_factor.sym_two_norm()? / cqc_norm;
        let mut resf_cur = res_factor.sym_frobenius_norm()?;

        let mut steps: Vec<StepRecord> = Vec::new();
        let mut states: Vec<NewtonState> = Vec::new();
        let mut converged = res1_cur <= opts.outer_tol;

        if !converged {
            for k_index in 0..opts.max_steps {
                let t_step = Instant::now();
                let mut out = self.step(
                    k_index,
                    &x_cur,
                    &k_cur,
                    &res_factor,
                    resf_cur,
                    opts,
                    adi,
                    cqc_norm,
                    dense_base.as_ref(),
                    false,
                )?;

                // Inexact breakdown: a relaxed inner solve that does not
                // decrease the residual is retried at full accuracy. Only
                // the ADI route runs relaxed solves.
                if opts.inexact != InexactMode::Off
                    && dense_base.is_none()
                    && out.res1 >= res1_cur
                    && res1_cur > opts.outer_tol
                {
                    log::debug!(
                        "step {}: inexact residual non-decrease ({:.3e} -> {:.3e}), \
                         restarting with exact solve",
                        k_index + 1,
                        res1_cur,
                        out.res1
                    );
                    out = self.step(
                        k_index,
                        &x_cur,
                        &k_cur,
                        &res_factor,
                        resf_cur,
                        opts,
                        adi,
                        cqc_norm,
                        dense_base.as_ref(),
                        true,
                    )?;
                    if out.res1 >= res1_cur {
                        return Err(NewtonError::InexactBreakdown {
                            step: k_index + 1,
                            res_before: res1_cur,
                            res_after: out.res1,
                        });
                    }
                }

                let x_norm = out.x.sym_two_norm()?;
                let metrics = metric_ctx.eval(out.res1 * cqc_norm, x_norm);
                steps.push(StepRecord {
                    k: k_index + 1,
                    res1: out.res1,
                    res2: metrics.res2,
                    res3: metrics.res3,
                    inner_iters: out.inner_iters,
                    xi: out.xi,
                    rank: out.x.rank(),
                    wall_time: t_step.elapsed().as_secs_f64(),
                    line_search: out.ls_record.clone(),
                });
                log::info!(
                    "newton step {}: res1 = {:.4e}, rank = {}, inner iterations = {}, xi = {:.3}",
                    k_index + 1,
                    out.res1,
                    out.x.rank(),
                    out.inner_iters,
                    out.xi
                );
                if opts.record_iterates {
                    states.push(NewtonState {
                        k: k_index + 1,
                        feedback: out.feedback.clone(),
                        solution: out.x.clone(),
                        lyap_residual: out.lyap_residual.clone(),
                        riccati_residual: out.res_factor.clone(),
                        res1: out.res1,
                    });
                }

                x_cur = out.x;
                k_cur = out.feedback;
                k_consistent = out.feedback_consistent;
                res_factor = out.res_factor;
                res1_cur = out.res1;
                resf_cur = out.res_frobenius;

                if res1_cur <= opts.outer_tol {
                    converged = true;
                    break;
                }
            }
        }

        let report = RunReport {
            name: self.name.clone(),
            n,
            m,
            p: self.base.p(),
            converged,
            outer_tol: opts.outer_tol,
            line_search: opts.line_search.to_string(),
            inexact: opts.inexact.to_string(),
            total_seconds: t0.elapsed().as_secs_f64(),
            steps,
        };
        let outcome = NewtonOutcome {
            solution: x_cur,
            feedback: k_consistent,
            report,
            states,
        };
        if converged {
            Ok(outcome)
        } else {
            Err(NewtonError::MaxStepsExceeded(Box::new(outcome)))
        }
    }
}

/// Solve the Riccati equation on the plain coefficients.
///
/// For definite `R` the iteration converges to the stabilizing solution
/// from any stabilizing initial feedback. For indefinite `R` the
/// equation has solutions on other eigenvalue branches and plain Newton
/// steps may land on one of them even when every iterate is
/// well-defined; the exact line search or a problem-adapted
/// `initial_feedback` (for instance from a Bernoulli stabilization)
/// keeps the iteration on the stabilizing branch.
pub fn newton_solve(
    coeffs: &CoefficientSet,
    opts: &NewtonOptions,
    adi: &AdiOptions,
) -> Result<NewtonOutcome, NewtonError> {
    let k0 = match opts.initial_feedback.as_ref() {
        Some(k) => k.clone(),
        None => initial_feedback(coeffs)?,
    };
    let op = ShiftedOperator::new(coeffs.a().clone(), coeffs.e().clone())?;
    let s_is_zero = coeffs.s().iter().all(|&x| x == 0.0);
    let engine = Engine {
        op: &op,
        base: coeffs,
        c_eff: coeffs.c().clone(),
        q_eff: coeffs.q().clone(),
        s_eff: if s_is_zero {
            None
        } else {
            Some(coeffs.s().clone())
        },
        vt_eff: if s_is_zero {
            Array2::zeros((coeffs.m(), coeffs.n()))
        } else {
            coeffs.vt()?
        },
        name: None,
    };
    engine.run(k0, opts, adi)
}

/// Solve the Riccati equation through the cross-term-free reformulation.
///
/// The iterates agree step for step with [`newton_solve`] when started
/// from the shifted feedback `K_hat_0 = K_0 - R^{-1} S^T`; the shift is
/// applied here, and the returned feedback is mapped back to the original
/// variables (`K = K_hat + R^{-1} S^T`). Recorded per-step states keep
/// the internal `K_hat` convention.
pub fn newton_solve_reformulated(
    reform: &ReformulatedSet,
    opts: &NewtonOptions,
    adi: &AdiOptions,
) -> Result<NewtonOutcome, NewtonError> {
    let base = reform.base();
    let vt = base.vt()?;
    let k0 = match opts.initial_feedback.as_ref() {
        Some(k) => k.clone(),
        None => initial_feedback(base)?,
    };
    if k0.dim() != vt.dim() {
        return Err(NewtonError::Coefficient(CoefficientError::Dimension {
            context: "newton_solve_reformulated",
            detail: format!(
                "initial feedback is {:?}, expected {:?}",
                k0.dim(),
                vt.dim()
            ),
        }));
    }
    let k0_hat = &k0 - &vt;
    let (c_eff, q_eff) = match reform.reduced_q() {
        Some(q_check) => (base.c().clone(), q_check.clone()),
        None => (reform.c_hat().clone(), reform.q_hat().clone()),
    };
    let engine = Engine {
        op: reform.op(),
        base,
        c_eff,
        q_eff,
        s_eff: None,
        vt_eff: Array2::zeros((base.m(), base.n())),
        name: None,
    };
    let mut outcome = engine.run(k0_hat, opts, adi)?;
    outcome.feedback = &outcome.feedback + &vt;
    Ok(outcome)
}

/// The Riccati residual factor carried by a Newton step, in the form
/// `U_k = [F_k, dK^T]`, `D_k = blkdiag(G_k, -R)` with `dK = K_k -
/// prev_feedback`.
pub fn riccati_residual_factor(
    coeffs: &CoefficientSet,
    state: &NewtonState,
    prev_feedback: ArrayView2<'_, f64>,
) -> Result<LdlFactor, NewtonError> {
    let dk = &state.feedback - &prev_feedback.to_owned();
    let dk_t = dk.t().to_owned();
    let neg_r = coeffs.r().mapv(|v| -v);
    if state.lyap_residual.rank() == 0 {
        Ok(LdlFactor::new(dk_t, neg_r)?)
    } else {
        Ok(LdlFactor::from_blocks(
            &[state.lyap_residual.l().view(), dk_t.view()],
            &[state.lyap_residual.d().view(), neg_r.view()],
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms;
    use ndarray::array;

    fn dense_c(m: &Array2<f64>) -> CsrMatrix {
        CsrMatrix::from_dense(m.view())
    }

    /// The 2x2 indefinite-R example: A = [[2,1],[1,-3]], B = [[1,1],[0,2]],
    /// R = diag(-1, 1.5), C = [1 1], Q = 1, E = I, S = 0.
    fn example_51() -> CoefficientSet {
        let a = dense_c(&array![[2.0, 1.0], [1.0, -3.0]]);
        let e = CsrMatrix::identity(2);
        let b = array![[1.0, 1.0], [0.0, 2.0]];
        let c = array![[1.0, 1.0]];
        let q = array![[1.0]];
        let r = array![[-1.0, 0.0], [0.0, 1.5]];
        let s = Array2::zeros((2, 2));
        CoefficientSet::new(a, e, b, c, q, r, s).unwrap()
    }

    /// Bernoulli-type stabilizing feedback for [`example_51`]. With an
    /// indefinite `R`, plain Newton steps started from a generic
    /// stabilizing feedback may converge to a non-stabilizing solution of
    /// the equation; this initialization keeps them on the stabilizing
    /// branch (as does the exact line search).
    fn k0_51() -> Array2<f64> {
        array![
            [-22.01829488967828, -3.8752296908641934],
            [20.51751590768579, 3.7034020504433705]
        ]
    }

    /// Small stable system with a nontrivial cross term, for identity and
    /// equivalence checks.
    fn cross_term_system(n: usize, m: usize, p: usize, seed: u64) -> CoefficientSet {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mat =
            |rows: usize, cols: usize| Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0));
        let mut a_dense = mat(n, n).mapv(|x| 0.5 * x);
        for i in 0..n {
            a_dense[[i, i]] -= 3.0;
        }
        let mut e_dense = mat(n, n).mapv(|x| 0.1 * x);
        for i in 0..n {
            e_dense[[i, i]] += 1.0;
        }
        let b = mat(n, m);
        let c = mat(p, n);
        let mut q = mat(p, p);
        q = &q + &q.t().to_owned();
        let mut r = Array2::eye(m);
        r[[0, 0]] = 2.0;
        let s = mat(n, m).mapv(|x| 0.3 * x);
        CoefficientSet::new(dense_c(&a_dense), dense_c(&e_dense), b, c, q, r, s).unwrap()
    }

    #[test]
    fn coefficient_validation_rejects_bad_shapes_and_asymmetry() {
        let a = dense_c(&array![[1.0, 0.0], [0.0, 1.0]]);
        let e = CsrMatrix::identity(2);
        let b = array![[1.0], [0.0]];
        let c = array![[1.0, 0.0]];
        let q = array![[1.0]];
        let r = array![[1.0]];
        // S with wrong shape.
        let bad_s = Array2::zeros((1, 1));
        assert!(matches!(
            CoefficientSet::new(a.clone(), e.clone(), b.clone(), c.clone(), q.clone(), r.clone(), bad_s),
            Err(CoefficientError::Dimension { .. })
        ));
        // Asymmetric Q.
        let c2 = array![[1.0, 0.0], [0.0, 1.0]];
        let bad_q = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(matches!(
            CoefficientSet::new(
                a.clone(),
                e.clone(),
                b.clone(),
                c2,
                bad_q,
                r,
                Array2::zeros((2, 1))
            ),
            Err(CoefficientError::NotSymmetric { which: "Q" })
        ));
        // Singular R.
        let r0 = array![[0.0]];
        assert!(matches!(
            CoefficientSet::new(a, e, b, c, q, r0, Array2::zeros((2, 1))),
            Err(CoefficientError::SingularR { .. })
        ));
    }

    #[test]
    fn constant_factor_matches_switching_term_form() {
        // The factored constant term must reconstruct
        // C^T Q C + K^T R K - S K - (S K)^T for random data.
        let coeffs = cross_term_system(6, 2, 3, 11);
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let k = Array2::from_shape_fn((2, 6), |_| rng.gen_range(-1.0..1.0));
        let factor = build_constant_factor(&coeffs, k.view()).unwrap();
        let direct = coeffs.c().t().dot(coeffs.q()).dot(coeffs.c())
            + k.t().dot(coeffs.r()).dot(&k)
            - coeffs.s().dot(&k)
            - k.t().dot(&coeffs.s().t());
        let diff = factor.dense() - &direct;
        assert!(
            linalg::frobenius_norm(diff.view())
                <= 1e-13 * linalg::frobenius_norm(direct.view()).max(1.0)
        );
        // S = 0, K = 0 degenerates to C^T Q C.
        let c51 = example_51();
        let zero_k = Array2::zeros((2, 2));
        let f51 = build_constant_factor(&c51, zero_k.view()).unwrap();
        let cqc = c51.c().t().dot(c51.q()).dot(c51.c());
        let d51 = f51.dense() - &cqc;
        assert!(linalg::frobenius_norm(d51.view()) <= 1e-14);
    }

    #[test]
    fn reformulation_reproduces_original_equation() {
        // Expanding the reformulated equation at random X must equal the
        // original residual operator.
        let coeffs = cross_term_system(5, 2, 2, 3);
        let reform = reformulate(&coeffs).unwrap();
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut x = Array2::from_shape_fn((5, 5), |_| rng.gen_range(-1.0..1.0));
        x = &x + &x.t().to_owned();

        let original = forms::riccati_operator(&coeffs, x.view()).unwrap();

        // Reformulated residual: A_hat^T X E + E^T X A_hat + C_hat^T Q_hat
        // C_hat - E^T X B R^{-1} B^T X E.
        let a_hat = coeffs.a().to_dense() + &reform.u().dot(&reform.v().t());
        let e_d = coeffs.e().to_dense();
        let bxe = coeffs.b().t().dot(&x).dot(&e_d);
        let gram = reform.c_hat().t().dot(reform.q_hat()).dot(reform.c_hat());
        let hat = a_hat.t().dot(&x).dot(&e_d) + e_d.t().dot(&x).dot(&a_hat) + gram
            - bxe.t().dot(&coeffs.r_solve(bxe.view()).unwrap());
        let diff = &original - &hat;
        assert!(
            linalg::frobenius_norm(diff.view())
                <= 1e-13 * linalg::frobenius_norm(original.view()).max(1.0)
        );
    }

    #[test]
    fn reformulation_straight_through_when_s_vanishes() {
        let coeffs = example_51();
        let reform = reformulate(&coeffs).unwrap();
        assert!(reform.op().low_rank().is_none());
        assert!(reform.reduced_q().is_none());
        // C_hat = [C; 0] and Q_hat = blkdiag(Q, -R^{-1}) still reproduce
        // the plain constant term C^T Q C.
        let gram = reform.c_hat().t().dot(reform.q_hat()).dot(reform.c_hat());
        let cqc = coeffs.c().t().dot(coeffs.q()).dot(coeffs.c());
        let diff = &gram - &cqc;
        assert!(linalg::frobenius_norm(diff.view()) <= 1e-14);
    }

    #[test]
    fn initial_feedback_zero_for_stable_pencil() {
        let a = dense_c(&array![[-1.0, 0.4], [0.0, -2.0]]);
        let e = CsrMatrix::identity(2);
        let coeffs = CoefficientSet::new(
            a,
            e,
            array![[1.0], [1.0]],
            array![[1.0, 0.0]],
            array![[1.0]],
            array![[1.0]],
            Array2::zeros((2, 1)),
        )
        .unwrap();
        let k0 = initial_feedback(&coeffs).unwrap();
        assert_eq!(k0, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn initial_feedback_stabilizes_unstable_pencils() {
        for coeffs in [
            example_51(),
            CoefficientSet::new(
                dense_c(&array![[1.0, 0.0], [0.0, -1.0]]),
                CsrMatrix::identity(2),
                Array2::eye(2),
                array![[1.0, 0.0]],
                array![[1.0]],
                Array2::eye(2),
                Array2::zeros((2, 2)),
            )
            .unwrap(),
        ] {
            let k0 = initial_feedback(&coeffs).unwrap();
            let closed = coeffs.a().to_dense() - &coeffs.b().dot(&k0);
            let eigs =
                linalg::eigvals_gen(closed.view(), coeffs.e().to_dense().view()).unwrap();
            assert!(
                eigs.finite().iter().all(|z| z.re < 0.0),
                "closed loop not Hurwitz"
            );
        }
    }

    #[test]
    fn scalar_equation_solves_to_quadratic_formula() {
        // a = -1, e = b = c = q = r = 1, s = 0: x^2 + 2x - 1 = 0, so the
        // stabilizing root is -1 + sqrt(2), with closed loop -sqrt(2).
        let coeffs = CoefficientSet::new(
            dense_c(&array![[-1.0]]),
            CsrMatrix::identity(1),
            array![[1.0]],
            array![[1.0]],
            array![[1.0]],
            array![[1.0]],
            Array2::zeros((1, 1)),
        )
        .unwrap();
        let outcome =
            newton_solve(&coeffs, &NewtonOptions::default(), &AdiOptions::default()).unwrap();
        let x = outcome.solution.dense()[[0, 0]];
        assert!((x - (2.0_f64.sqrt() - 1.0)).abs() < 1e-12);
        let k = outcome.feedback[[0, 0]];
        assert!((-1.0 - k - (-(2.0_f64.sqrt()))).abs() < 1e-12);
        assert!(outcome.report.converged);
    }

    #[test]
    fn indefinite_r_example_converges_with_known_spectrum() {
        let coeffs = example_51();
        let opts = NewtonOptions {
            record_iterates: true,
            initial_feedback: Some(k0_51()),
            ..NewtonOptions::default()
        };
        let outcome = newton_solve(&coeffs, &opts, &AdiOptions::default()).unwrap();
        assert!(outcome.report.converged);
        // Final closed-loop eigenvalues, a known pair for this example.
        let closed = coeffs.a().to_dense() - &coeffs.b().dot(&outcome.feedback);
        let mut eigs: Vec<f64> = linalg::eigvals_gen(
            closed.view(),
            coeffs.e().to_dense().view(),
        )
        .unwrap()
        .finite()
        .iter()
        .map(|z| z.re)
        .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] - (-4.2451)).abs() < 1e-3, "eigs = {eigs:?}");
        assert!((eigs[1] - (-1.4068)).abs() < 1e-3, "eigs = {eigs:?}");
        // Feedback consistency: K = R^{-1} (B^T X E + S^T) recomputed.
        let x = outcome.solution.dense();
        let e_d = coeffs.e().to_dense();
        let k_re = coeffs
            .r_solve((coeffs.b().t().dot(&x).dot(&e_d) + coeffs.s().t()).view())
            .unwrap();
        let diff = &k_re - &outcome.feedback;
        assert!(
            linalg::frobenius_norm(diff.view())
                <= 1e-12 * linalg::frobenius_norm(k_re.view()).max(1.0)
        );
    }

    #[test]
    fn solution_matches_dense_oracle() {
        let coeffs = example_51();
        let opts = NewtonOptions {
            initial_feedback: Some(k0_51()),
            ..NewtonOptions::default()
        };
        let outcome = newton_solve(&coeffs, &opts, &AdiOptions::default()).unwrap();
        let (x_oracle, res) = forms::dense_care_oracle(&coeffs).unwrap();
        assert!(res <= 1e-10);
        let rd = forms::reldiff(
            forms::SolutionRef::Factored(&outcome.solution),
            forms::SolutionRef::Dense(x_oracle.view()),
        )
        .unwrap();
        assert!(rd <= 1e-10, "reldiff to oracle: {rd:.3e}");
    }

    #[test]
    fn reformulated_route_yields_identical_iterates() {
        for seed in [1_u64, 2, 9] {
            let coeffs = cross_term_system(8, 2, 3, seed);
            let reform = reformulate(&coeffs).unwrap();
            let opts = NewtonOptions {
                record_iterates: true,
                ..NewtonOptions::default()
            };
            let adi = AdiOptions::default();
            let a = newton_solve(&coeffs, &opts, &adi).unwrap();
            let b = newton_solve_reformulated(&reform, &opts, &adi).unwrap();
            assert_eq!(a.states.len(), b.states.len(), "seed {seed}: step counts differ");
            for (sa, sb) in a.states.iter().zip(&b.states) {
                let rd = forms::reldiff(
                    forms::SolutionRef::Factored(&sa.solution),
                    forms::SolutionRef::Factored(&sb.solution),
                )
                .unwrap();
                assert!(
                    rd <= 1e-10,
                    "seed {seed}, step {}: iterates differ by {rd:.3e}",
                    sa.k
                );
            }
            // Final feedbacks agree in the original variables.
            let diff = &a.feedback - &b.feedback;
            assert!(
                linalg::frobenius_norm(diff.view())
                    <= 1e-10 * linalg::frobenius_norm(a.feedback.view()).max(1.0)
            );
        }
    }

    #[test]
    fn reduced_constant_term_matches_extended_form() {
        // An LQG-structured S = C^T D must produce the reduced center
        // Q_check with C^T Q_check C = C_hat^T Q_hat C_hat.
        let n = 6;
        let p = 2;
        let m = 2;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut mat =
            |rows: usize, cols: usize| Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0));
        let mut a_d = mat(n, n);
        for i in 0..n {
            a_d[[i, i]] -= 4.0;
        }
        let b = mat(n, m);
        let c = mat(p, n);
        let d = mat(p, m);
        let q_tilde = Array2::eye(p);
        let r = Array2::eye(m) + d.t().dot(&d);
        let s = c.t().dot(&d);
        let coeffs = CoefficientSet::new(
            dense_c(&a_d),
            CsrMatrix::identity(n),
            b,
            c.clone(),
            q_tilde.clone(),
            r.clone(),
            s,
        )
        .unwrap()
        .with_feedthrough(d.clone())
        .unwrap();
        let reform = reformulate(&coeffs).unwrap();
        let q_check = reform.reduced_q().expect("feedthrough recorded");
        // Q_check = Q - D R^{-1} D^T.
        let expected = &q_tilde - &d.dot(&coeffs.r_solve(d.t().view()).unwrap());
        let dq = q_check - &expected;
        assert!(linalg::frobenius_norm(dq.view()) <= 1e-13);
        // C^T Q_check C equals the extended Gram matrix.
        let reduced_gram = c.t().dot(q_check).dot(&c);
        let extended_gram = reform.c_hat().t().dot(reform.q_hat()).dot(reform.c_hat());
        let dg = &reduced_gram - &extended_gram;
        assert!(
            linalg::frobenius_norm(dg.view())
                <= 1e-13 * linalg::frobenius_norm(extended_gram.view()).max(1.0)
        );
    }

    #[test]
    fn per_step_residual_factor_matches_dense_operator() {
        let coeffs = cross_term_system(7, 2, 2, 31);
        let opts = NewtonOptions {
            record_iterates: true,
            ..NewtonOptions::default()
        };
        let outcome = newton_solve(&coeffs, &opts, &AdiOptions::default()).unwrap();
        // The bookkeeping identity R(X_{k+1}) = F G F^T - dK^T R dK is
        // exact only up to the inner solve accuracy, so the comparison
        // scale is the problem size, not the (eventually tiny) residual.
        let scale = linalg::frobenius_norm(
            forms::riccati_operator(&coeffs, Array2::zeros((7, 7)).view())
                .unwrap()
                .view(),
        );
        let mut prev_k = initial_feedback(&coeffs).unwrap();
        for state in &outcome.states {
            let factor = riccati_residual_factor(&coeffs, state, prev_k.view()).unwrap();
            let direct =
                forms::riccati_operator(&coeffs, state.solution.dense().view()).unwrap();
            let diff = factor.dense() - &direct;
            assert!(
                linalg::frobenius_norm(diff.view()) <= 1e-11 * scale,
                "step {}: factored residual diverges from dense operator",
                state.k
            );
            prev_k = state.feedback.clone();
        }
    }

    /// Banded, solidly stable pencil with a small cross term: the regime
    /// the low-rank ADI inner solver is built for.
    fn banded_cross_system(n: usize, seed: u64) -> CoefficientSet {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, -5.0 - 0.5 * rng.gen_range(0.0..1.0)));
            if i + 1 < n {
                triplets.push((i, i + 1, 2.05));
                triplets.push((i + 1, i, 1.95));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        let e_triplets: Vec<_> = (0..n)
            .map(|i| (i, i, 1.0 + 0.1 * rng.gen_range(-1.0_f64..1.0)))
            .collect();
        let e = CsrMatrix::from_triplets(n, n, &e_triplets).unwrap();
        let b = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let c = Array2::from_shape_fn((2, n), |_| rng.gen_range(-1.0..1.0));
        let s = Array2::from_shape_fn((n, 2), |_| 0.2 * rng.gen_range(-1.0..1.0));
        let q = Array2::eye(2);
        let mut r = Array2::eye(2);
        r[[0, 0]] = 2.0;
        CoefficientSet::new(a, e, b, c, q, r, s).unwrap()
    }

    #[test]
    fn adi_route_matches_dense_route() {
        // Force the ADI inner solver on a moderately sized stable system
        // and compare against the dense route.
        let coeffs = banded_cross_system(60, 77);
        let dense_opts = NewtonOptions::default();
        let adi_opts = NewtonOptions {
            inner: InnerSolver::Adi,
            ..NewtonOptions::default()
        };
        let adi = AdiOptions {
            res_tol: 1e-13,
            ..AdiOptions::default()
        };
        let dense_run = newton_solve(&coeffs, &dense_opts, &adi).unwrap();
        let adi_run = newton_solve(&coeffs, &adi_opts, &adi).unwrap();
        let rd = forms::reldiff(
            forms::SolutionRef::Factored(&dense_run.solution),
            forms::SolutionRef::Factored(&adi_run.solution),
        )
        .unwrap();
        assert!(rd <= 1e-9, "routes disagree: {rd:.3e}");
    }

    #[test]
    fn line_search_modes_converge_on_indefinite_example() {
        for mode in [LineSearchMode::Exact, LineSearchMode::Armijo] {
            let coeffs = example_51();
            let opts = NewtonOptions {
                line_search: mode,
                ..NewtonOptions::default()
            };
            let outcome = newton_solve(&coeffs, &opts, &AdiOptions::default()).unwrap();
            assert!(outcome.report.converged, "{mode:?} did not converge");
            let (x_oracle, _) = forms::dense_care_oracle(&coeffs).unwrap();
            let rd = forms::reldiff(
                forms::SolutionRef::Factored(&outcome.solution),
                forms::SolutionRef::Dense(x_oracle.view()),
            )
            .unwrap();
            assert!(rd <= 1e-9, "{mode:?}: off from oracle by {rd:.3e}");
            // Every recorded step should carry a line-search trace.
            assert!(outcome
                .report
                .steps
                .iter()
                .all(|s| s.line_search.is_some()));
        }
    }

    #[test]
    fn inexact_modes_converge_with_adi_inner() {
        for mode in [InexactMode::Superlinear, InexactMode::Quadratic] {
            let coeffs = cross_term_system(40, 2, 2, 13);
            let opts = NewtonOptions {
                inner: InnerSolver::Adi,
                inexact: mode,
                max_steps: 60,
                ..NewtonOptions::default()
            };
            let outcome = newton_solve(&coeffs, &opts, &AdiOptions::default()).unwrap();
            assert!(outcome.report.converged, "{mode:?} did not converge");
            let dense_run =
                newton_solve(&coeffs, &NewtonOptions::default(), &AdiOptions::default()).unwrap();
            let rd = forms::reldiff(
                forms::SolutionRef::Factored(&outcome.solution),
                forms::SolutionRef::Factored(&dense_run.solution),
            )
            .unwrap();
            assert!(rd <= 1e-8, "{mode:?}: off from exact run by {rd:.3e}");
        }
    }

    #[test]
    fn max_steps_carries_partial_outcome() {
        let coeffs = example_51();
        let opts = NewtonOptions {
            max_steps: 2,
            ..NewtonOptions::default()
        };
        match newton_solve(&coeffs, &opts, &AdiOptions::default()) {
            Err(NewtonError::MaxStepsExceeded(outcome)) => {
                assert_eq!(outcome.report.steps.len(), 2);
                assert!(!outcome.report.converged);
                assert!(outcome.solution.rank() > 0);
            }
            other => panic!("expected MaxStepsExceeded, got {other:?}"),
        }
    }
}
