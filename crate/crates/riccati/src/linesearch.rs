//! Exact and backtracking line search for the Newton iteration.
//!
//! After an (inexact) Newton step the candidate update is the convex
//! combination `X(xi) = (1 - xi) X_k + xi X_{k+1}`. Its Riccati residual
//! is a matrix quartic in the step size,
//!
//! ```text
//! R(X(xi)) = (1 - xi) U D U^T + xi F G F^T - xi^2 dK^T R dK,
//! ```
//!
//! where `U D U^T` is the residual at `X_k`, `F G F^T` the Lyapunov
//! residual of the inexact inner solve, and `dK = K_{k+1} - K_k`. The
//! squared Frobenius norm `f(xi) = ||R(X(xi))||_F^2` is therefore a scalar
//! quartic polynomial whose six coefficients are traces of small matrix
//! products of the factors — no `n x n` matrix is ever formed.
//!
//! [`exact_step`] minimizes `f` over `(0, 2]` by solving the cubic
//! `f'(xi) = 0` through a companion matrix pencil; [`armijo_step`] is the
//! halving fallback driven by [`sufficient_decrease`].

use ndarray::ArrayView2;

use crate::linalg::{self, LinalgError};

/// Step sizes closer to zero than this are clamped; a vanishing step would
/// stall the outer iteration without reducing the residual.
pub const MIN_STEP: f64 = 1e-8;

/// Default safety factor in the sufficient-decrease test.
pub const DEFAULT_BETA: f64 = 1e-4;

/// Maximum number of halvings attempted by [`armijo_step`].
pub const MAX_HALVINGS: usize = 30;

/// Error type for the line-search module.
#[derive(Debug)]
pub enum LineSearchError {
    /// A dense kernel failed underneath.
    Linalg(LinalgError),
    /// The derivative polynomial degenerated and no stationary point was
    /// found in the admissible interval.
    DegeneratePolynomial { detail: String },
    /// No step size satisfying the sufficient-decrease condition was found
    /// within [`MAX_HALVINGS`] halvings.
    LineSearchFailure { halvings: usize },
}

impl std::fmt::Display for LineSearchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LineSearchError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
            LineSearchError::DegeneratePolynomial { detail } => {
                write!(f, "degenerate step polynomial: {detail}")
            }
            LineSearchError::LineSearchFailure { halvings } => write!(
                f,
                "no sufficient decrease after {halvings} step halvings"
            ),
        }
    }
}

impl std::error::Error for LineSearchError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            LineSearchError::Linalg(e) => Some(e),
            _ => None,
        }
    }
}

impl From<LinalgError> for LineSearchError {
    fn from(e: LinalgError) -> Self {
        LineSearchError::Linalg(e)
    }
}

/// The six trace coefficients of the residual quartic.
///
/// Inputs are the factors of the current Riccati residual `U D U^T`, the
/// Lyapunov residual `F G F^T` of the latest inner solve, the feedback
/// change `dK` (m x n), and the quadratic-term weight `R`. Every product
/// is formed in the small dimension:
///
/// ```text
/// v1 = tr((U^T U D)^2)          v4 = tr(F^T U D U^T F G)
/// v2 = tr((F^T F G)^2)          v5 = tr(dK U D U^T dK^T R)
/// v3 = tr((dK dK^T R)^2)        v6 = tr(dK F G F^T dK^T R)
/// ```
pub fn trace_coefficients(
    u: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    f: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    dk: ArrayView2<'_, f64>,
    r: ArrayView2<'_, f64>,
) -> [f64; 6] {
    // tr(M N) for small square M, N of equal size.
    let tr_prod = |m: &ndarray::Array2<f64>, n: &ndarray::Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                acc += m[[i, j]] * n[[j, i]];
            }
        }
        acc
    };

    let utu_d = u.t().dot(&u).dot(&d); // l x l
    let ftf_g = f.t().dot(&f).dot(&g); // q x q
    let kkt_r = dk.dot(&dk.t()).dot(&r); // m x m
    let v1 = tr_prod(&utu_d, &utu_d);
    let v2 = tr_prod(&ftf_g, &ftf_g);
    let v3 = tr_prod(&kkt_r, &kkt_r);

    let utf = u.t().dot(&f); // l x q
    let v4 = tr_prod(&utf.t().dot(&d.dot(&utf)), &g.to_owned());

    let utk = u.t().dot(&dk.t()); // l x m
    let v5 = tr_prod(&utk.t().dot(&d.dot(&utk)), &r.to_owned());

    let ftk = f.t().dot(&dk.t()); // q x m
    let v6 = tr_prod(&ftk.t().dot(&g.dot(&ftk)), &r.to_owned());

    [v1, v2, v3, v4, v5, v6]
}

/// Evaluate the residual quartic `f(xi) = ||R(X(xi))||_F^2`.
pub fn quartic_eval(v: &[f64; 6], xi: f64) -> f64 {
    let [v1, v2, v3, v4, v5, v6] = *v;
    (1.0 - xi) * (1.0 - xi) * v1
        + xi * xi * v2
        + xi.powi(4) * v3
        + 2.0 * xi * (1.0 - xi) * v4
        - 2.0 * xi * xi * (1.0 - xi) * v5
        - 2.0 * xi.powi(3) * v6
}

/// Real roots of `a1 + a2 x + a3 x^2 + a4 x^3` via a companion pencil.
///
/// The coefficient vector is normalized to unit length first, and the
/// leading coefficient lands in the mass matrix of the pencil, so a small
/// (or vanishing) cubic term degrades gracefully into near-infinite
/// eigenvalues instead of blowing up the companion matrix.
fn cubic_real_roots(a_raw: [f64; 4]) -> Result<Vec<f64>, LineSearchError> {
    let norm = a_raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(Vec::new());
    }
    let a: Vec<f64> = a_raw.iter().map(|x| x / norm).collect();
    let companion = ndarray::array![
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-a[0], -a[1], -a[2]]
    ];
    let mass = ndarray::Array2::from_diag(&ndarray::arr1(&[1.0, 1.0, a[3]]));
    let pencil = linalg::eigvals_gen(companion.view(), mass.view())?;
    let mut roots = Vec::new();
    for z in pencil.finite() {
        if z.im.abs() <= 1e-10 * z.norm().max(1.0) {
            roots.push(z.re);
        }
    }
    Ok(roots)
}

/// Minimize the residual quartic over the admissible interval `(0, 2]`.
///
/// Returns `(xi, fallback)`. The candidates are the real stationary
/// points of `f` inside the interval; among them the one with the
/// smallest `f` wins, ties broken by the smaller step. When no stationary
/// point lands in the interval the full step `xi = 1` is returned with
/// `fallback = true`. The returned step is clamped to at least
/// [`MIN_STEP`].
///
/// # Errors
///
/// [`LineSearchError::DegeneratePolynomial`] when the quartic term
/// vanishes (`v3 = 0`, so `f` is not a true quartic) and the remaining
/// lower-degree derivative has no root in the interval either.
pub fn exact_step(v: &[f64; 6]) -> Result<(f64, bool), LineSearchError> {
    let [v1, v2, v3, v4, v5, v6] = *v;
    // f'(xi) = a1 + a2 xi + a3 xi^2 + a4 xi^3
    let a1 = 2.0 * (v4 - v1);
    let a2 = 2.0 * (v1 + v2 - 2.0 * (v4 + v5));
    let a3 = 6.0 * (v5 - v6);
    let a4 = 4.0 * v3;

    let scale = [a1, a2, a3, a4].iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        // f is constant; any step works and the full step is canonical.
        return Ok((1.0, true));
    }

    let degenerate = a4.abs() <= f64::EPSILON * scale;
    let roots = if degenerate {
        // Quadratic (or lower) derivative, solved in closed form.
        let mut roots = Vec::new();
        if a3.abs() > f64::EPSILON * scale {
            let disc = a2 * a2 - 4.0 * a3 * a1;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                roots.push((-a2 + sq) / (2.0 * a3));
                roots.push((-a2 - sq) / (2.0 * a3));
            }
        } else if a2.abs() > f64::EPSILON * scale {
            roots.push(-a1 / a2);
        }
        roots
    } else {
        cubic_real_roots([a1, a2, a3, a4])?
    };

    let mut best: Option<(f64, f64)> = None; // (f value, xi)
    for &xi in &roots {
        if xi <= 0.0 || xi > 2.0 || !xi.is_finite() {
            continue;
        }
        let val = quartic_eval(v, xi);
        let better = match best {
            None => true,
            Some((bv, bx)) => val < bv || (val == bv && xi < bx),
        };
        if better {
            best = Some((val, xi));
        }
    }

    match best {
        Some((_, xi)) => Ok((xi.max(MIN_STEP), false)),
        None if degenerate => Err(LineSearchError::DegeneratePolynomial {
            detail: format!(
                "cubic coefficient {a4:.3e} vanishes and no stationary point lies in (0, 2]"
            ),
        }),
        None => Ok((1.0, true)),
    }
}

/// Strict sufficient-decrease test `new < (1 - xi * beta) * old` on
/// residual norms.
pub fn sufficient_decrease(new_norm: f64, old_norm: f64, xi: f64, beta: f64) -> bool {
    new_norm < (1.0 - xi * beta) * old_norm
}

/// Backtracking line search: halve from `xi = 1` until the predicted
/// residual satisfies the sufficient-decrease condition.
///
/// The prediction comes from the quartic, so each trial costs a handful
/// of flops. Fails with [`LineSearchError::LineSearchFailure`] after
/// [`MAX_HALVINGS`] halvings.
pub fn armijo_step(v: &[f64; 6], beta: f64) -> Result<f64, LineSearchError> {
    let old_norm = quartic_eval(v, 0.0).max(0.0).sqrt();
    let mut xi = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let new_norm = quartic_eval(v, xi).max(0.0).sqrt();
        if sufficient_decrease(new_norm, old_norm, xi, beta) {
            return Ok(xi.max(MIN_STEP));
        }
        xi *= 0.5;
    }
    Err(LineSearchError::LineSearchFailure {
        halvings: MAX_HALVINGS,
    })
}
