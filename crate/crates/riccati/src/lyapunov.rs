//! Generalized Lyapunov solvers: a dense direct method and a low-rank ADI
//! iteration.
//!
//! Both solve the same equation for symmetric `X`, given in factored form:
//!
//! ```text
//!     A^T X E + E^T X A + G T G^T = 0,
//! ```
//!
//! where `(A, E)` is a stable matrix pencil (here: the closed-loop pencil
//! of one Newton step) and the right-hand side is a thin symmetric factor
//! `G T G^T` with an indefinite kernel `T`.
//!
//! * [`solve_kron`] is the dense reference route: Bartels-Stewart on the
//!   equivalent standard equation obtained with `F = E^{-1} A` and
//!   `Y = E^T X E`, followed by one defect-correction pass that reuses the
//!   Schur factorization. The correction pushes the floor of the relative
//!   residual down by roughly an order of magnitude, which the tight
//!   convergence thresholds of the overall solver rely on.
//! * [`solve_lr_adi`] is the large-scale route: a low-rank ADI iteration
//!   that keeps the iterate in `L D L^T` form with the kernel inherited
//!   from `T`, handles complex shift pairs with a single complex solve,
//!   and monitors convergence through the factored residual
//!   `W T W^T`, whose spectral norm is cheap to evaluate.
//! * [`compute_shifts`] supplies the ADI shift batches: Ritz values of the
//!   transposed pencil projected onto a subspace built from the current
//!   residual factor, one inverse-Krylov block (which covers the slow
//!   modes that plain residual bases miss), and the most recent solution
//!   blocks; when more stable Ritz values than requested are available, a
//!   greedy heuristic keeps the subset with the best worst-case ADI
//!   damping.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::ldlt::{FactorError, LdlFactor};
use crate::linalg::{self, LinalgError};
use crate::operator::{OperatorError, ShiftedOperator};

/// How ADI shifts are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftStrategy {
    /// Ritz values of the operator and its inverse on a seeded random
    /// Krylov block; thinned with the Penzl min-max heuristic.
    HeuristicPenzl,
    /// Ritz values of the projection onto the current residual space plus
    /// recent solution blocks (default; adapts as the iteration proceeds).
    ProjectionAdaptive,
}

/// Options for the low-rank ADI iteration.
#[derive(Debug, Clone)]
pub struct AdiOptions {
    /// Shift generation strategy.
    pub shift_strategy: ShiftStrategy,
    /// Number of shifts per batch (a complex-conjugate pair counts once).
    pub shift_count: usize,
    /// Hard cap on ADI iterations (= columns blocks added, a pair adds 2).
    pub max_iterations: usize,
    /// Convergence threshold on `||W T W^T||_2 / ||G T G^T||_2`.
    pub res_tol: f64,
    /// Column cap for the shift-projection subspace.
    pub basis_cap: usize,
    /// Window length for stagnation detection.
    pub stagnation_window: usize,
    /// Stagnation means the residual did not drop below `factor` times its
    /// value one window ago.
    pub stagnation_factor: f64,
}

impl Default for AdiOptions {
    fn default() -> Self {
        AdiOptions {
            shift_strategy: ShiftStrategy::ProjectionAdaptive,
            shift_count: 6,
            max_iterations: 400,
            res_tol: 1e-10,
            basis_cap: 48,
            stagnation_window: 10,
            stagnation_factor: 0.99,
        }
    }
}

/// Result of a converged (or partially converged) ADI run.
#[derive(Debug, Clone)]
pub struct AdiOutcome {
    /// The accumulated iterate `X = L D L^T` (uncompressed).
    pub x: LdlFactor,
    /// The final Lyapunov residual in factored form `W T W^T`.
    pub residual: LdlFactor,
    /// Relative residual after each completed iteration (starts at 1).
    pub history: Vec<f64>,
    /// Number of ADI iterations performed.
    pub iterations: usize,
    /// Final relative residual `||W T W^T||_2 / ||G T G^T||_2`.
    pub relative_residual: f64,
}

/// Error type for the Lyapunov solvers.
#[derive(Debug)]
pub enum LyapunovError {
    /// A shifted or dense solve failed underneath.
    Operator(OperatorError),
    /// Factor bookkeeping failed.
    Factor(FactorError),
    /// A dense kernel failed.
    Linalg(LinalgError),
    /// The pencil `(A, E)` is singular or too close to singular to solve.
    SingularPencil { detail: String },
    /// No usable ADI shifts could be extracted from the projection space.
    ShiftFailure { detail: String },
    /// The ADI residual stalled; carries the partial result.
    Stagnation(Box<AdiOutcome>),
    /// The iteration cap was reached; carries the partial result.
    MaxIterations(Box<AdiOutcome>),
}

impl std::fmt::Display for LyapunovError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LyapunovError::Operator(e) => write!(f, "inner solve failed: {e}"),
            LyapunovError::Factor(e) => write!(f, "factor update failed: {e}"),
            LyapunovError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
            LyapunovError::SingularPencil { detail } => {
                write!(f, "singular pencil: {detail}")
            }
            LyapunovError::ShiftFailure { detail } => {
                write!(f, "ADI shift computation failed: {detail}")
            }
            LyapunovError::Stagnation(o) => write!(
                f,
                "ADI stagnated after {} iterations at relative residual {:.3e}",
                o.iterations, o.relative_residual
            ),
            LyapunovError::MaxIterations(o) => write!(
                f,
                "ADI reached the iteration cap ({}) at relative residual {:.3e}",
                o.iterations, o.relative_residual
            ),
        }
    }
}

impl std::error::Error for LyapunovError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            LyapunovError::Operator(e) => Some(e),
            LyapunovError::Factor(e) => Some(e),
            LyapunovError::Linalg(e) => Some(e),
            _ => None,
        }
    }
}

impl From<OperatorError> for LyapunovError {
    fn from(e: OperatorError) -> Self {
        LyapunovError::Operator(e)
    }
}

impl From<FactorError> for LyapunovError {
    fn from(e: FactorError) -> Self {
        LyapunovError::Factor(e)
    }
}

impl From<LinalgError> for LyapunovError {
    fn from(e: LinalgError) -> Self {
        LyapunovError::Linalg(e)
    }
}

/// Dense direct solve of `A^T X E + E^T X A + G T G^T = 0`.
///
/// Reduces to the standard Lyapunov equation `F^T Y + Y F + M = 0` with
/// `F = E^{-1} A` and `Y = E^T X E`, solves it by Bartels-Stewart (real
/// Schur of `F` plus a quasi-triangular Sylvester solve), then performs a
/// single defect-correction pass with the residual of `Y` before
/// transforming back. The result is explicitly symmetrized at each stage.
pub fn solve_kron(
    a: ArrayView2<'_, f64>,
    e: ArrayView2<'_, f64>,
    rhs_factor: ArrayView2<'_, f64>,
    kernel: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, LyapunovError> {
    let n = a.nrows();
    if a.ncols() != n || e.dim() != (n, n) {
        return Err(LyapunovError::SingularPencil {
            detail: format!(
                "coefficient matrices must be square and matching, got {:?} and {:?}",
                a.dim(),
                e.dim()
            ),
        });
    }
    if rhs_factor.nrows() != n || kernel.dim() != (rhs_factor.ncols(), rhs_factor.ncols()) {
        return Err(LyapunovError::SingularPencil {
            detail: format!(
                "right-hand side factor {:?} and kernel {:?} are inconsistent with n = {n}",
                rhs_factor.dim(),
                kernel.dim()
            ),
        });
    }

    let mut m = rhs_factor.dot(&kernel).dot(&rhs_factor.t());
    linalg::symmetrize(&mut m);

    let f = linalg::solve_lu(e, a).map_err(|err| match err {
        LinalgError::Singular { .. } => LyapunovError::SingularPencil {
            detail: "mass matrix E is singular".to_string(),
        },
        other => LyapunovError::Linalg(other),
    })?;
    let schur = linalg::real_schur(f.view())?;

    // One Bartels-Stewart solve of F^T Delta + Delta F = -R for given R,
    // reusing the Schur factorization of F.
    let solve_transformed = |r: &Array2<f64>| -> Result<Array2<f64>, LyapunovError> {
        let c = schur.z.t().dot(r).dot(&schur.z);
        let rhs = c.mapv(|x| -x);
        let (y_t, scale) = linalg::trsyl(true, false, 1, schur.t.view(), schur.t.view(), rhs.view())?;
        let mut y = schur.z.dot(&y_t).dot(&schur.z.t());
        y.mapv_inplace(|x| x / scale);
        linalg::symmetrize(&mut y);
        Ok(y)
    };

    let mut y = solve_transformed(&m)?;
    // Defect correction: the residual of Y feeds one more solve.
    let defect = f.t().dot(&y) + y.dot(&f) + &m;
    y += &solve_transformed(&defect)?;
    linalg::symmetrize(&mut y);

    // X = E^{-T} Y E^{-1}, via two triangular-free LU solves.
    let et = e.t().to_owned();
    let w = linalg::solve_lu(et.view(), y.view()).map_err(LyapunovError::Linalg)?;
    let xt = linalg::solve_lu(et.view(), w.t().to_owned().view())
        .map_err(LyapunovError::Linalg)?;
    let mut x = xt.t().to_owned();
    linalg::symmetrize(&mut x);
    Ok(x)
}

/// ADI damping of a test value `t` by a shift entry `p` (a real shift, or
/// a conjugate pair represented by its upper-half-plane member).
fn adi_damping(t: Complex64, p: Complex64) -> f64 {
    if p.im == 0.0 {
        ((t - p) / (t + p)).norm()
    } else {
        let pc = p.conj();
        ((t - p) * (t - pc)).norm() / ((t + p) * (t + pc)).norm()
    }
}

/// Greedy shift subselection: start with the candidate whose worst-case
/// damping over all candidates is smallest, then repeatedly promote the
/// currently least-damped candidate to a shift, until `count` entries are
/// chosen. This is the classical heuristic for picking ADI parameters from
/// a Ritz-value pool, evaluated in the pool itself.
fn penzl_select(candidates: &[Complex64], count: usize) -> Vec<Complex64> {
    if candidates.len() <= count {
        return candidates.to_vec();
    }
    let worst_case = |p: Complex64| -> f64 {
        candidates
            .iter()
            .map(|&t| adi_damping(t, p))
            .fold(0.0, f64::max)
    };
    let first = candidates
        .iter()
        .copied()
        .min_by(|&p, &q| worst_case(p).partial_cmp(&worst_case(q)).unwrap())
        .expect("candidate list is nonempty");
    let mut chosen = vec![first];
    let mut damping: Vec<f64> = candidates.iter().map(|&t| adi_damping(t, first)).collect();
    while chosen.len() < count {
        let (idx, _) = damping
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("candidate list is nonempty");
        let next = candidates[idx];
        chosen.push(next);
        for (s, &t) in damping.iter_mut().zip(candidates) {
            *s *= adi_damping(t, next);
        }
    }
    chosen
}

/// Drop columns whose norm is negligible relative to the largest column.
fn drop_tiny_columns(m: Array2<f64>) -> Array2<f64> {
    let norms: Vec<f64> = m
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().fold(0.0_f64, |acc, &x| acc.max(x));
    if max == 0.0 {
        return Array2::zeros((m.nrows(), 0));
    }
    let keep: Vec<usize> = (0..m.ncols())
        .filter(|&j| norms[j] > 1e-13 * max)
        .collect();
    if keep.len() == m.ncols() {
        return m;
    }
    let mut out = Array2::zeros((m.nrows(), keep.len()));
    for (dst, &src) in keep.iter().enumerate() {
        out.column_mut(dst).assign(&m.column(src));
    }
    out
}

/// Stack a seeded random block with its transposed-operator forward and
/// inverse Krylov images; the Ritz values of this space are the classical
/// Penzl shift candidates (spectrum samples of the pencil and its inverse).
fn penzl_basis(op: &ShiftedOperator, options: &AdiOptions) -> Result<Vec<Array2<f64>>, LyapunovError> {
    use rand::Rng;
    use rand::SeedableRng;

    let n = op.n();
    let width = options.shift_count.clamp(2, 8).min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4144_49); // deterministic
    let seed = Array2::from_shape_fn((n, width), |_| rng.gen_range(-1.0..1.0));

    let mut blocks: Vec<Array2<f64>> = vec![seed.clone()];
    let normalize = |m: Array2<f64>| -> Array2<f64> {
        let norm = linalg::frobenius_norm(m.view());
        if norm > 0.0 {
            m.mapv(|x| x / norm)
        } else {
            m
        }
    };
    let depth = options.basis_cap / (2 * width).max(1);
    let mut forward = seed.clone();
    for _ in 0..depth.max(1) {
        forward = normalize(op.apply_transposed(forward.view())?);
        blocks.push(forward.clone());
    }
    let mut inverse = seed;
    for _ in 0..depth.max(1) {
        let et = op.apply_e_transposed(inverse.view())?;
        inverse = match op.solve_shifted(0.0, et.view(), true) {
            Ok(v) => normalize(v),
            Err(e) => {
                log::debug!("penzl basis: stopping inverse-Krylov block ({e})");
                break;
            }
        };
        blocks.push(inverse.clone());
    }
    Ok(blocks)
}

/// Finite Ritz values of the transposed pencil projected onto `blocks`.
fn projected_ritz(
    op: &ShiftedOperator,
    blocks: &[Array2<f64>],
    basis_cap: usize,
) -> Result<Vec<Complex64>, LyapunovError> {
    let n = op.n();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut stacked = Array2::zeros((n, total));
    let mut offset = 0;
    for b in blocks {
        stacked
            .slice_mut(ndarray::s![.., offset..offset + b.ncols()])
            .assign(b);
        offset += b.ncols();
    }
    let capped = if stacked.ncols() > basis_cap {
        stacked.slice(ndarray::s![.., ..basis_cap]).to_owned()
    } else {
        stacked
    };
    let cleaned = drop_tiny_columns(capped);
    if cleaned.ncols() == 0 {
        return Err(LyapunovError::ShiftFailure {
            detail: "projection basis is numerically zero".to_string(),
        });
    }
    let (u, _) = linalg::thin_qr(cleaned.view())?;
    let ap = u.t().dot(&op.apply_transposed(u.view())?);
    let ep = u.t().dot(&op.apply_e_transposed(u.view())?);
    let pencil = linalg::eigvals_gen(ap.view(), ep.view())?;
    Ok(pencil.finite())
}

/// Ritz screen of the pencil on the seeded Penzl basis: returns all the
/// finite Ritz values the basis can see. Used to sanity-check stability
/// of large pencils where a dense eigensolve is out of reach. This is a
/// heuristic — a basis this small can miss modes — so callers must treat
/// "all stable" as evidence, not proof.
pub(crate) fn ritz_screen(
    op: &ShiftedOperator,
    options: &AdiOptions,
) -> Result<Vec<Complex64>, LyapunovError> {
    let blocks = penzl_basis(op, options)?;
    projected_ritz(op, &blocks, options.basis_cap)
}

/// Compute a batch of ADI shifts for the transposed-pencil solves.
///
/// With [`ShiftStrategy::ProjectionAdaptive`] the projection space is the
/// current residual factor `W`, the inverse-Krylov block `A^{-T} E^T W`
/// (whose Ritz contribution covers the slowest system modes), and the most
/// recent ADI solution blocks, capped at `options.basis_cap` columns. With
/// [`ShiftStrategy::HeuristicPenzl`] it is a seeded random Krylov block
/// propagated through the operator and its inverse. The candidates are the
/// stable Ritz values of the projected transposed pencil; a surplus of
/// candidates is thinned with [`penzl_select`]. Complex conjugate pairs
/// are reported once, by their member with positive imaginary part.
pub fn compute_shifts(
    op: &ShiftedOperator,
    w: ArrayView2<'_, f64>,
    history: &[Array2<f64>],
    options: &AdiOptions,
) -> Result<Vec<Complex64>, LyapunovError> {
    let mut blocks: Vec<Array2<f64>> = match options.shift_strategy {
        ShiftStrategy::HeuristicPenzl => penzl_basis(op, options)?,
        ShiftStrategy::ProjectionAdaptive => {
            let mut blocks = vec![w.to_owned()];
            match op.apply_e_transposed(w) {
                Ok(etw) => match op.solve_shifted(0.0, etw.view(), true) {
                    Ok(inv_block) => blocks.push(inv_block),
                    Err(e) => log::debug!("shift basis: skipping inverse-Krylov block ({e})"),
                },
                Err(e) => return Err(e.into()),
            }
            blocks
        }
    };
    if options.shift_strategy == ShiftStrategy::ProjectionAdaptive {
        let mut cols: usize = blocks.iter().map(|b| b.ncols()).sum();
        for recent in history.iter().rev() {
            if cols >= options.basis_cap {
                break;
            }
            blocks.push(recent.clone());
            cols += recent.ncols();
        }
    }
    let ritz = projected_ritz(op, &blocks, options.basis_cap)?;

    let mut candidates: Vec<Complex64> = Vec::new();
    for z in ritz {
        if !(z.re.is_finite() && z.im.is_finite()) || z.re >= 0.0 {
            continue;
        }
        let z = if z.im.abs() <= 1e-10 * z.norm() {
            Complex64::new(z.re, 0.0)
        } else {
            z
        };
        if z.im < 0.0 {
            continue; // keep one representative per conjugate pair
        }
        candidates.push(z);
    }
    if candidates.is_empty() {
        return Err(LyapunovError::ShiftFailure {
            detail: "no stable Ritz values in the projection space".to_string(),
        });
    }
    candidates.sort_by(|p, q| (p.re, p.im).partial_cmp(&(q.re, q.im)).unwrap());
    Ok(penzl_select(&candidates, options.shift_count))
}

/// Low-rank ADI iteration for `A^T X E + E^T X A + G T G^T = 0`.
///
/// The iterate is accumulated as `X = L D L^T` with one (real shift) or
/// two (complex pair) new column blocks per step, each carrying a scaled
/// copy of the kernel `T`. The residual stays in the factored form
/// `W T W^T` throughout, so its spectral norm costs one thin QR of an
/// `n x q` matrix per iteration. No rank compression happens here; the
/// caller truncates the returned factor.
pub fn solve_lr_adi(
    op: &ShiftedOperator,
    rhs_factor: ArrayView2<'_, f64>,
    kernel: ArrayView2<'_, f64>,
    options: &AdiOptions,
) -> Result<AdiOutcome, LyapunovError> {
    let n = op.n();
    let q = rhs_factor.ncols();
    if rhs_factor.nrows() != n || kernel.dim() != (q, q) {
        return Err(LyapunovError::ShiftFailure {
            detail: format!(
                "right-hand side factor {:?} and kernel {:?} do not fit n = {n}",
                rhs_factor.dim(),
                kernel.dim()
            ),
        });
    }

    let t_kernel = kernel.to_owned();
    let w0 = LdlFactor::new(rhs_factor.to_owned(), t_kernel.clone())?;
    let w0_norm = w0.sym_two_norm()?;
    if w0_norm == 0.0 {
        return Ok(AdiOutcome {
            x: LdlFactor::zero(n),
            residual: w0,
            history: vec![0.0],
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut w = rhs_factor.to_owned();
    let mut l_blocks: Vec<Array2<f64>> = Vec::new();
    let mut d_blocks: Vec<Array2<f64>> = Vec::new();
    let mut res_history: Vec<f64> = vec![1.0];
    let mut shifts: VecDeque<Complex64> =
        compute_shifts(op, w.view(), &l_blocks, options)?.into();
    let mut iterations = 0usize;

    let build_outcome = |l_blocks: &[Array2<f64>],
                         d_blocks: &[Array2<f64>],
                         w: &Array2<f64>,
                         res_history: &[f64],
                         iterations: usize,
                         res: f64|
     -> Result<AdiOutcome, LyapunovError> {
        let x = if l_blocks.is_empty() {
            LdlFactor::zero(n)
        } else {
            let lv: Vec<ArrayView2<'_, f64>> = l_blocks.iter().map(|m| m.view()).collect();
            let dv: Vec<ArrayView2<'_, f64>> = d_blocks.iter().map(|m| m.view()).collect();
            LdlFactor::from_blocks(&lv, &dv)?
        };
        Ok(AdiOutcome {
            x,
            residual: LdlFactor::new(w.clone(), t_kernel.clone())?,
            history: res_history.to_vec(),
            iterations,
            relative_residual: res,
        })
    };

    loop {
        if iterations >= options.max_iterations {
            let res = *res_history.last().unwrap();
            return Err(LyapunovError::MaxIterations(Box::new(build_outcome(
                &l_blocks,
                &d_blocks,
                &w,
                &res_history,
                iterations,
                res,
            )?)));
        }
        let p = match shifts.pop_front() {
            Some(p) => p,
            None => {
                for s in compute_shifts(op, w.view(), &l_blocks, options)? {
                    shifts.push_back(s);
                }
                continue;
            }
        };

        if p.im == 0.0 {
            let pe = p.re;
            let v = op.solve_shifted(pe, w.view(), true)?;
            let etv = op.apply_e_transposed(v.view())?;
            w.scaled_add(-2.0 * pe, &etv);
            l_blocks.push(v);
            d_blocks.push(t_kernel.mapv(|x| -2.0 * pe * x));
            iterations += 1;
        } else {
            let vc = op.solve_shifted_complex(p, w.view(), true)?;
            let re = vc.mapv(|z| z.re);
            let im = vc.mapv(|z| z.im);
            let delta = p.re / p.im;
            let v1 = &re + &im.mapv(|x| delta * x);
            let v2 = im.mapv(|x| (delta * delta + 1.0).sqrt() * x);
            let etv1 = op.apply_e_transposed(v1.view())?;
            w.scaled_add(-4.0 * p.re, &etv1);
            let scaled_kernel = t_kernel.mapv(|x| -4.0 * p.re * x);
            l_blocks.push(v1);
            d_blocks.push(scaled_kernel.clone());
            l_blocks.push(v2);
            d_blocks.push(scaled_kernel);
            iterations += 2;
        }

        let res = LdlFactor::new(w.clone(), t_kernel.clone())?.sym_two_norm()? / w0_norm;
        res_history.push(res);
        log::debug!(
            "ADI iteration {iterations}: relative residual {res:.3e} (rank {})",
            l_blocks.iter().map(|b| b.ncols()).sum::<usize>()
        );

        if res <= options.res_tol {
            return build_outcome(&l_blocks, &d_blocks, &w, &res_history, iterations, res);
        }
        if res_history.len() > options.stagnation_window {
            let before = res_history[res_history.len() - 1 - options.stagnation_window];
            if res > options.stagnation_factor * before {
                return Err(LyapunovError::Stagnation(Box::new(build_outcome(
                    &l_blocks,
                    &d_blocks,
                    &w,
                    &res_history,
                    iterations,
                    res,
                )?)));
            }
        }
    }
}
