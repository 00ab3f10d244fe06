//! Benchmark problem generators.
//!
//! All test and benchmark problems are generated in process; nothing is
//! downloaded.  Three sources cover the interesting regimes:
//!
//! * [`gen_convergence_examples`] — a trio of 2x2 equations with documented
//!   convergence histories: an indefinite weight with an unstable open-loop
//!   pencil, a variant whose first Newton step is deliberately unstable, and
//!   an indefinite constant term with a definite weight.
//! * [`gen_heat_fdm`] / [`gen_heat_fdm_2d`] — finite-difference heat
//!   conduction with a spatially varying conductivity, a lumped positive
//!   mass matrix, boundary-patch actuation, and patch-averaged observation.
//!   The pencil is Hurwitz by construction (symmetric negative definite
//!   stiffness against a positive diagonal mass).
//! * [`gen_triple_chain`] — three damped spring-mass chains joined through a
//!   shared coupling mass, returned both as second-order matrices and as a
//!   first-order phase-space pencil.  Positive Rayleigh damping is required;
//!   the undamped chain is only marginally stable and is refused.
//!
//! Every stable problem is verified Hurwitz at construction: densely up to
//! [`DENSE_CHECK_LIMIT`], through a projected Ritz screen beyond.  All
//! generators are deterministic — the same spec and seed reproduce the same
//! matrices byte for byte — and a [`BenchmarkSpec`] can be exported as a
//! MatrixMarket bundle with a JSON manifest via [`write_bundle`].
//!
//! A constrained mass-spring-damper variant with holonomic constraints (a
//! differential-algebraic pencil with an infinite eigenvalue) is out of
//! scope for these generators: it needs a projection onto the hidden
//! manifold that the solver does not implement.
//!
//! Seeded random instances for property tests live here too:
//! [`random_stable_system`] produces solidly stable sparse pencils with
//! configurable weight signatures, and [`random_lyapunov_instance`] produces
//! Hurwitz pencils with low-rank indefinite right-hand sides.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{array, Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forms::{build_family, FamilySpec, FormsError};
use crate::linalg::{self, LinalgError};
use crate::lyapunov::{self, AdiOptions, LyapunovError};
use crate::matrixmarket::{self, MmError};
use crate::newton::{CoefficientError, CoefficientSet};
use crate::operator::{OperatorError, ShiftedOperator};
use crate::sparse::{CsrMatrix, SparseError};

/// Dense Hurwitz verification is used up to this pencil size; larger
/// pencils are screened through projected Ritz values instead.
pub const DENSE_CHECK_LIMIT: usize = 500;

/// Scale of the Cauchy-structured feedthrough in the quadratic-cost family.
const LQG_FEEDTHROUGH_SCALE: f64 = 0.1;

/// Fixed attenuation level for the disturbance-rejection family.
const HINF_GAMMA: f64 = 50.0;

/// Constant feedthrough entry for the gain-bound family.
const BR_FEEDTHROUGH: f64 = 0.05;

/// The gain-bound level is this multiple of a frequency-grid estimate of
/// the transfer-function supremum norm, so the bound always holds with a
/// comfortable margin.
const BR_GAMMA_MARGIN: f64 = 2.0;

/// Feedthrough `0.5 I` makes the collocated passivity family strictly
/// positive real at infinite frequency.
const PR_FEEDTHROUGH: f64 = 0.5;

/// Number of logarithmically spaced frequencies (plus zero) used by the
/// transfer-norm estimate behind the gain-bound family.
const BR_FREQ_COUNT: usize = 60;

/// Uniform heat-loss rate of the conduction models, as a fraction of the
/// diffusion operator's infinity norm.  Without the loss term the slowest
/// mode of an `n`-point Laplacian decays `O(n^2)` slower than the fastest;
/// the solution norm then dwarfs the constant term and caps how far any
/// honestly evaluated scaled residual can fall (the floor grows like
/// `eps * ||A|| * ||X|| / ||C^T Q C||`).  Capping the spread below two
/// decades (factor fifty) lets the residuals resolve close to machine precision at every
/// grid size.
const HEAT_COOLING_FRACTION: f64 = 2e-2;

/// Error raised by the benchmark generators.
#[derive(Debug)]
pub enum BenchError {
    /// A generator parameter is out of its documented range.
    InvalidParameter {
        context: &'static str,
        detail: String,
    },
    /// A generated pencil failed its construction-time stability check.
    NotHurwitz { name: String, detail: String },
    /// Assembling the coefficient family failed.
    Forms(FormsError),
    /// Validating the assembled coefficients failed.
    Coefficient(CoefficientError),
    /// Sparse assembly failed.
    Sparse(SparseError),
    /// A dense kernel failed.
    Linalg(LinalgError),
    /// The shifted-solve operator could not be built or applied.
    Operator(OperatorError),
    /// The Ritz screen for a large pencil failed.
    Lyapunov(LyapunovError),
    /// Reading or writing a bundle file failed.
    Io(std::io::Error),
    /// A bundle manifest could not be encoded or decoded.
    Json(serde_json::Error),
    /// A MatrixMarket file could not be read or written.
    MatrixMarket(MmError),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::InvalidParameter { context, detail } => {
                write!(f, "invalid parameter in {context}: {detail}")
            }
            BenchError::NotHurwitz { name, detail } => {
                write!(f, "generated problem '{name}' is not Hurwitz: {detail}")
            }
            BenchError::Forms(e) => write!(f, "family assembly failed: {e}"),
            BenchError::Coefficient(e) => write!(f, "coefficient validation failed: {e}"),
            BenchError::Sparse(e) => write!(f, "sparse assembly failed: {e}"),
            BenchError::Linalg(e) => write!(f, "dense kernel failed: {e}"),
            BenchError::Operator(e) => write!(f, "shifted solve failed: {e}"),
            BenchError::Lyapunov(e) => write!(f, "Ritz screen failed: {e}"),
            BenchError::Io(e) => write!(f, "bundle file access failed: {e}"),
            BenchError::Json(e) => write!(f, "bundle manifest error: {e}"),
            BenchError::MatrixMarket(e) => write!(f, "bundle matrix file error: {e}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<FormsError> for BenchError {
    fn from(e: FormsError) -> Self {
        BenchError::Forms(e)
    }
}

impl From<CoefficientError> for BenchError {
    fn from(e: CoefficientError) -> Self {
        BenchError::Coefficient(e)
    }
}

impl From<SparseError> for BenchError {
    fn from(e: SparseError) -> Self {
        BenchError::Sparse(e)
    }
}

impl From<LinalgError> for BenchError {
    fn from(e: LinalgError) -> Self {
        BenchError::Linalg(e)
    }
}

impl From<OperatorError> for BenchError {
    fn from(e: OperatorError) -> Self {
        BenchError::Operator(e)
    }
}

impl From<LyapunovError> for BenchError {
    fn from(e: LyapunovError) -> Self {
        BenchError::Lyapunov(e)
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e)
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Json(e)
    }
}

impl From<MmError> for BenchError {
    fn from(e: MmError) -> Self {
        BenchError::MatrixMarket(e)
    }
}

/// Verify that the pencil `(A, E)` has all finite eigenvalues in the open
/// left half-plane, densely for small pencils and through the projected
/// Ritz screen beyond [`DENSE_CHECK_LIMIT`].
fn assert_pencil_hurwitz(name: &str, a: &CsrMatrix, e: &CsrMatrix) -> Result<(), BenchError> {
    let n = a.nrows();
    if n <= DENSE_CHECK_LIMIT {
        let eigs = linalg::eigvals_gen(a.to_dense().view(), e.to_dense().view())?;
        for lambda in eigs.finite() {
            if lambda.re >= 0.0 {
                return Err(BenchError::NotHurwitz {
                    name: name.to_string(),
                    detail: format!("pencil eigenvalue {lambda} is not in the left half-plane"),
                });
            }
        }
    } else {
        let op = ShiftedOperator::new(a.clone(), e.clone())?;
        let ritz = lyapunov::ritz_screen(&op, &AdiOptions::default())?;
        for lambda in &ritz {
            if lambda.re >= 0.0 {
                return Err(BenchError::NotHurwitz {
                    name: name.to_string(),
                    detail: format!("Ritz value {lambda} is not in the left half-plane"),
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Convergence study problems
// ---------------------------------------------------------------------------

/// The three 2x2 study problems with documented convergence histories.
///
/// All three share `E = I` and the same unstable `A`.  The first pairs an
/// indefinite weight `R = diag(-1, 1.5)` with a definite constant term, the
/// second sharpens the weight to `R = diag(-1, 2)` so that the first Newton
/// step produces an unstable intermediate pencil, and the third has a
/// definite weight but an indefinite constant term `Q = diag(1, -2)`.
pub fn gen_convergence_examples() -> [CoefficientSet; 3] {
    [
        convergence_coefficients(0),
        convergence_coefficients(1),
        convergence_coefficients(2),
    ]
}

/// Number of study problems returned by [`gen_convergence_examples`].
pub const CONVERGENCE_EXAMPLE_COUNT: usize = 3;

fn convergence_coefficients(index: usize) -> CoefficientSet {
    let a = CsrMatrix::from_dense(array![[2.0, 1.0], [1.0, -3.0]].view());
    let e = CsrMatrix::identity(2);
    let set = match index {
        0 => CoefficientSet::new(
            a,
            e,
            array![[1.0, 1.0], [0.0, 2.0]],
            array![[1.0, 1.0]],
            array![[1.0]],
            array![[-1.0, 0.0], [0.0, 1.5]],
            Array2::zeros((2, 2)),
        ),
        1 => CoefficientSet::new(
            a,
            e,
            array![[1.0, 1.0], [0.0, 2.0]],
            array![[1.0, 1.0]],
            array![[1.0]],
            array![[-1.0, 0.0], [0.0, 2.0]],
            Array2::zeros((2, 2)),
        ),
        2 => CoefficientSet::new(
            a,
            e,
            array![[1.0], [1.0]],
            array![[1.0, 1.0], [0.0, 2.0]],
            array![[1.0, 0.0], [0.0, -2.0]],
            array![[1.0]],
            Array2::zeros((2, 1)),
        ),
        _ => unreachable!("only three study problems exist"),
    };
    set.expect("study problem data is well formed")
}

/// Stabilizing initial feedback for study problem `index` (zero-based).
///
/// The values were computed offline from a dense Bernoulli stabilization of
/// each open-loop pencil and are pinned as literals so the documented
/// convergence histories reproduce bit for bit.  With an indefinite weight
/// the plain Newton iteration can converge to a genuine but non-stabilizing
/// solution when started from an arbitrary stabilizing feedback; these
/// starts keep it on the stabilizing branch even with the line search off.
pub fn convergence_initial_feedback(index: usize) -> Option<Array2<f64>> {
    match index {
        0 => Some(array![
            [-22.01829488967828, -3.8752296908641934],
            [20.51751590768579, 3.7034020504433705]
        ]),
        1 => Some(array![
            [80.13893181745155, 16.4160820827005],
            [-56.48356405723206, -10.335067281455716]
        ]),
        2 => Some(array![[7.354065922853801, 1.416263691415206]]),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Heat conduction
// ---------------------------------------------------------------------------

/// Conductivity profile used by both heat generators.
fn conductivity(x: f64) -> f64 {
    1.0 + 0.75 * (2.0 * std::f64::consts::PI * x).sin()
}

/// Patch start offsets for `count` patches of `width` nodes over `n` nodes,
/// spaced one patch width apart, growing from the left or right boundary.
fn patch_starts(
    context: &'static str,
    n: usize,
    count: usize,
    width: usize,
    from_left: bool,
) -> Result<Vec<usize>, BenchError> {
    if count == 0 {
        return Err(BenchError::InvalidParameter {
            context,
            detail: "patch count must be at least one".to_string(),
        });
    }
    let span = (count - 1) * 2 * width + width;
    if span > n {
        return Err(BenchError::InvalidParameter {
            context,
            detail: format!("{count} patches of width {width} do not fit into {n} nodes"),
        });
    }
    Ok((0..count)
        .map(|j| {
            if from_left {
                j * 2 * width
            } else {
                n - width - j * 2 * width
            }
        })
        .collect())
}

/// One-dimensional finite-difference heat model.
///
/// Discretizes `(kappa(x) u_x)_x - rho u` on `(0, 1)` with homogeneous
/// Dirichlet boundaries on `grid_n` interior nodes, conductivity
/// `kappa(x) = 1 + 0.75 sin(2 pi x)`, and a uniform heat-loss rate `rho`
/// equal to [`HEAT_COOLING_FRACTION`] of the diffusion operator's infinity
/// norm.  The stiffness `A` is symmetric negative definite and tridiagonal,
/// the lumped mass `E = diag(1 + 0.1 sin(pi x))` is positive, so the pencil
/// is Hurwitz by construction (and verified so).  `B` holds `m` input
/// patches near the left boundary, `C` holds `p` patch-averaged
/// observations near the right boundary, both scaled by the reciprocal
/// patch width.
///
/// Requires `grid_n >= 10`.
pub fn gen_heat_fdm(
    grid_n: usize,
    m: usize,
    p: usize,
) -> Result<(CsrMatrix, CsrMatrix, Array2<f64>, Array2<f64>), BenchError> {
    if grid_n < 10 {
        return Err(BenchError::InvalidParameter {
            context: "gen_heat_fdm",
            detail: format!("grid size {grid_n} is below the minimum of 10"),
        });
    }
    let n = grid_n;
    let h = 1.0 / (n as f64 + 1.0);
    let node = |i: usize| (i as f64 + 1.0) * h;

    let mut triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        let x = node(i);
        let k_left = conductivity(x - 0.5 * h);
        let k_right = conductivity(x + 0.5 * h);
        triplets.push((i, i, -(k_left + k_right) / (h * h)));
        if i + 1 < n {
            triplets.push((i, i + 1, k_right / (h * h)));
            triplets.push((i + 1, i, k_right / (h * h)));
        }
    }
    let diffusion = CsrMatrix::from_triplets(n, n, &triplets)?;
    let rho = HEAT_COOLING_FRACTION * diffusion.norm_inf();

    let e_diag: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * (std::f64::consts::PI * node(i)).sin())
        .collect();
    // The loss term is -rho E, so every pencil eigenvalue shifts left by
    // exactly rho.
    for i in 0..n {
        triplets.push((i, i, -rho * e_diag[i]));
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets)?;

    let e_triplets: Vec<(usize, usize, f64)> =
        (0..n).map(|i| (i, i, e_diag[i])).collect();
    let e = CsrMatrix::from_triplets(n, n, &e_triplets)?;

    let width = (n / 25).max(1);
    let b_starts = patch_starts("gen_heat_fdm", n, m, width, true)?;
    let c_starts = patch_starts("gen_heat_fdm", n, p, width, false)?;
    let mut b = Array2::zeros((n, m));
    for (j, &start) in b_starts.iter().enumerate() {
        for i in start..start + width {
            b[[i, j]] = 1.0 / width as f64;
        }
    }
    let mut c = Array2::zeros((p, n));
    for (i, &start) in c_starts.iter().enumerate() {
        for j in start..start + width {
            c[[i, j]] = 1.0 / width as f64;
        }
    }

    assert_pencil_hurwitz("heat-1d", &a, &e)?;
    Ok((a, e, b, c))
}

/// Two-dimensional five-point variant of [`gen_heat_fdm`] on a
/// `side x side` interior grid (state dimension `side^2`), with the same
/// heat-loss term.
///
/// Input patches are vertical strips on the left boundary column, output
/// patches vertical strips on the right boundary column.  Requires
/// `side >= 10`.
pub fn gen_heat_fdm_2d(
    side: usize,
    m: usize,
    p: usize,
) -> Result<(CsrMatrix, CsrMatrix, Array2<f64>, Array2<f64>), BenchError> {
    if side < 10 {
        return Err(BenchError::InvalidParameter {
            context: "gen_heat_fdm_2d",
            detail: format!("grid side {side} is below the minimum of 10"),
        });
    }
    let n = side * side;
    let h = 1.0 / (side as f64 + 1.0);
    let coord = |i: usize| (i as f64 + 1.0) * h;
    let idx = |ix: usize, iy: usize| iy * side + ix;

    let mut triplets = Vec::with_capacity(5 * n);
    for iy in 0..side {
        for ix in 0..side {
            let u = idx(ix, iy);
            let x = coord(ix);
            // Horizontal edges carry the conductivity at their midpoint;
            // vertical edges use the node's own x so the stencil stays
            // symmetric.
            let k_w = conductivity(x - 0.5 * h);
            let k_e = conductivity(x + 0.5 * h);
            let k_v = conductivity(x);
            triplets.push((u, u, -(k_w + k_e + 2.0 * k_v) / (h * h)));
            if ix + 1 < side {
                triplets.push((u, idx(ix + 1, iy), k_e / (h * h)));
                triplets.push((idx(ix + 1, iy), u, k_e / (h * h)));
            }
            if iy + 1 < side {
                triplets.push((u, idx(ix, iy + 1), k_v / (h * h)));
                triplets.push((idx(ix, iy + 1), u, k_v / (h * h)));
            }
        }
    }
    let diffusion = CsrMatrix::from_triplets(n, n, &triplets)?;
    let rho = HEAT_COOLING_FRACTION * diffusion.norm_inf();

    let mut e_diag = vec![0.0; n];
    for iy in 0..side {
        for ix in 0..side {
            e_diag[idx(ix, iy)] = 1.0
                + 0.1
                    * (std::f64::consts::PI * coord(ix)).sin()
                    * (std::f64::consts::PI * coord(iy)).sin();
        }
    }
    for (i, &w) in e_diag.iter().enumerate() {
        triplets.push((i, i, -rho * w));
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets)?;

    let e_triplets: Vec<(usize, usize, f64)> = e_diag
        .iter()
        .enumerate()
        .map(|(i, &w)| (i, i, w))
        .collect();
    let e = CsrMatrix::from_triplets(n, n, &e_triplets)?;

    let width = (side / 8).max(1);
    let b_starts = patch_starts("gen_heat_fdm_2d", side, m, width, true)?;
    let c_starts = patch_starts("gen_heat_fdm_2d", side, p, width, false)?;
    let mut b = Array2::zeros((n, m));
    for (j, &start) in b_starts.iter().enumerate() {
        for iy in start..start + width {
            b[[idx(0, iy), j]] = 1.0 / width as f64;
        }
    }
    let mut c = Array2::zeros((p, n));
    for (i, &start) in c_starts.iter().enumerate() {
        for iy in start..start + width {
            c[[i, idx(side - 1, iy)]] = 1.0 / width as f64;
        }
    }

    assert_pencil_hurwitz("heat-2d", &a, &e)?;
    Ok((a, e, b, c))
}

// ---------------------------------------------------------------------------
// Triple chain oscillator
// ---------------------------------------------------------------------------

/// Physical parameters of the coupled oscillator chains.
///
/// Three chains of point masses hang between a wall and a shared coupling
/// mass; the coupling mass is itself anchored.  Damping is Rayleigh,
/// `D = alpha M + beta K`.
#[derive(Debug, Clone)]
pub struct TripleChainParams {
    /// Mass of every body in chain 1, 2, and 3.
    pub chain_masses: [f64; 3],
    /// Mass of the shared coupling body.
    pub coupling_mass: f64,
    /// Spring constant used along chain 1, 2, and 3.
    pub chain_stiffness: [f64; 3],
    /// Spring anchoring the coupling body.
    pub coupling_stiffness: f64,
    /// Rayleigh mass-damping coefficient `alpha`.
    pub mass_damping: f64,
    /// Rayleigh stiffness-damping coefficient `beta`.
    pub stiffness_damping: f64,
}

impl Default for TripleChainParams {
    /// Documented surrogate constants: heterogeneous masses and stiffness
    /// with ten percent minimum modal damping (shift-based inner solvers
    /// need the spectrum to keep a respectful distance from the imaginary
    /// axis).
    fn default() -> Self {
        TripleChainParams {
            chain_masses: [1.0, 2.0, 3.0],
            coupling_mass: 10.0,
            chain_stiffness: [10.0, 20.0, 1.0],
            coupling_stiffness: 50.0,
            mass_damping: 0.1,
            stiffness_damping: 0.1,
        }
    }
}

impl TripleChainParams {
    /// All masses, stiffnesses, and damping coefficients equal to one.
    pub fn unit() -> Self {
        TripleChainParams {
            chain_masses: [1.0; 3],
            coupling_mass: 1.0,
            chain_stiffness: [1.0; 3],
            coupling_stiffness: 1.0,
            mass_damping: 1.0,
            stiffness_damping: 1.0,
        }
    }
}

/// Second-order matrices and first-order realization of the triple chain.
///
/// The second-order model is `M q'' + D q' + K q = F u` with `masses + 1`
/// coordinates (the extra one is the coupling body).  The first-order
/// phase-space realization with state `[q; q']` is
/// `E x' = A x + B u`, `y = C x` where `E = blkdiag(I, M)`,
/// `A = [[0, I], [-K, -D]]`; inputs are forces on the coupling body and on
/// the free end of chain 1, outputs the velocities of the same two bodies
/// (a collocated force-to-velocity configuration).
#[derive(Debug, Clone)]
pub struct TripleChain {
    /// Diagonal of the mass matrix `M`.
    pub mass: Array1<f64>,
    /// Rayleigh damping `D = alpha M + beta K`.
    pub damping: CsrMatrix,
    /// Stiffness `K` (symmetric positive definite; every chain is anchored).
    pub stiffness: CsrMatrix,
    /// First-order state matrix `[[0, I], [-K, -D]]`.
    pub a: CsrMatrix,
    /// First-order mass matrix `blkdiag(I, M)`.
    pub e: CsrMatrix,
    /// Force inputs (coupling body, free end of chain 1).
    pub b: Array2<f64>,
    /// Velocity outputs collocated with the inputs.
    pub c: Array2<f64>,
}

impl TripleChain {
    /// First-order state dimension, twice the coordinate count.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Generate the coupled oscillator chains.
///
/// `masses` is the total number of chain bodies and must be at least 3 and
/// divisible by 3 (a third per chain); the coupling body is added on top,
/// so the first-order dimension is `2 (masses + 1)`.  Requires positive
/// masses and stiffness and nonnegative Rayleigh coefficients with
/// `alpha + beta > 0`: the undamped chain has a purely imaginary spectrum
/// and is refused.
pub fn gen_triple_chain(
    masses: usize,
    params: &TripleChainParams,
) -> Result<TripleChain, BenchError> {
    if masses < 3 || masses % 3 != 0 {
        return Err(BenchError::InvalidParameter {
            context: "gen_triple_chain",
            detail: format!("mass count {masses} must be at least 3 and divisible by 3"),
        });
    }
    for (label, value) in [
        ("chain mass 1", params.chain_masses[0]),
        ("chain mass 2", params.chain_masses[1]),
        ("chain mass 3", params.chain_masses[2]),
        ("coupling mass", params.coupling_mass),
        ("chain stiffness 1", params.chain_stiffness[0]),
        ("chain stiffness 2", params.chain_stiffness[1]),
        ("chain stiffness 3", params.chain_stiffness[2]),
        ("coupling stiffness", params.coupling_stiffness),
    ] {
        if value <= 0.0 || !value.is_finite() {
            return Err(BenchError::InvalidParameter {
                context: "gen_triple_chain",
                detail: format!("{label} must be positive and finite, got {value}"),
            });
        }
    }
    let alpha = params.mass_damping;
    let beta = params.stiffness_damping;
    if alpha < 0.0 || beta < 0.0 || !alpha.is_finite() || !beta.is_finite() {
        return Err(BenchError::InvalidParameter {
            context: "gen_triple_chain",
            detail: format!("Rayleigh coefficients must be nonnegative, got ({alpha}, {beta})"),
        });
    }
    if alpha == 0.0 && beta == 0.0 {
        return Err(BenchError::InvalidParameter {
            context: "gen_triple_chain",
            detail: "undamped chain is only marginally stable; \
                     positive Rayleigh damping is required"
                .to_string(),
        });
    }

    let per_chain = masses / 3;
    let nq = masses + 1;
    let coupling = masses;
    let body = |chain: usize, j: usize| chain * per_chain + j;

    // Spring assembly: each spring between bodies a and b contributes the
    // usual 2x2 block; wall springs only touch the diagonal.
    let mut k_triplets: Vec<(usize, usize, f64)> = Vec::new();
    fn spring(triplets: &mut Vec<(usize, usize, f64)>, a: usize, b: usize, k: f64) {
        triplets.push((a, a, k));
        triplets.push((b, b, k));
        triplets.push((a, b, -k));
        triplets.push((b, a, -k));
    }
    for chain in 0..3 {
        let k = params.chain_stiffness[chain];
        // Wall anchor at the head of the chain.
        k_triplets.push((body(chain, 0), body(chain, 0), k));
        for j in 0..per_chain - 1 {
            spring(&mut k_triplets, body(chain, j), body(chain, j + 1), k);
        }
        spring(&mut k_triplets, body(chain, per_chain - 1), coupling, k);
    }
    k_triplets.push((coupling, coupling, params.coupling_stiffness));
    let stiffness = CsrMatrix::from_triplets(nq, nq, &k_triplets)?;

    let mut mass = Array1::zeros(nq);
    for chain in 0..3 {
        for j in 0..per_chain {
            mass[body(chain, j)] = params.chain_masses[chain];
        }
    }
    mass[coupling] = params.coupling_mass;

    let mut d_triplets: Vec<(usize, usize, f64)> = k_triplets
        .iter()
        .map(|&(r, c, v)| (r, c, beta * v))
        .collect();
    for i in 0..nq {
        d_triplets.push((i, i, alpha * mass[i]));
    }
    let damping = CsrMatrix::from_triplets(nq, nq, &d_triplets)?;

    let n = 2 * nq;
    let mut a_triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nq + 2 * k_triplets.len());
    for i in 0..nq {
        a_triplets.push((i, nq + i, 1.0));
    }
    for (r, c, v) in stiffness.triplet_iter() {
        a_triplets.push((nq + r, c, -v));
    }
    for (r, c, v) in damping.triplet_iter() {
        a_triplets.push((nq + r, nq + c, -v));
    }
    let a = CsrMatrix::from_triplets(n, n, &a_triplets)?;

    let mut e_triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(n);
    for i in 0..nq {
        e_triplets.push((i, i, 1.0));
        e_triplets.push((nq + i, nq + i, mass[i]));
    }
    let e = CsrMatrix::from_triplets(n, n, &e_triplets)?;

    let mut b = Array2::zeros((n, 2));
    b[[nq + coupling, 0]] = 1.0;
    b[[nq + body(0, per_chain - 1), 1]] = 1.0;
    let c = b.t().to_owned();

    if n <= DENSE_CHECK_LIMIT {
        assert_pencil_hurwitz("triple-chain", &a, &e)?;
    } else {
        // The Ritz screen is unreliable here: the lightly damped chain is
        // far from normal, and projected Ritz values can stray into the
        // right half-plane even though the spectrum never does.  The
        // second-order structure gives a rigorous certificate instead:
        // with M, D, K all positive definite every quadratic eigenvalue
        // satisfies lambda^2 (v*Mv) + lambda (v*Dv) + (v*Kv) = 0 with
        // positive coefficients, hence lies in the open left half-plane.
        // Masses and Rayleigh coefficients are validated above, so only
        // K's definiteness needs checking.
        let (w, _) = linalg::eig_sym(stiffness.to_dense().view())?;
        if let Some(&bad) = w.iter().find(|&&v| v <= 0.0) {
            return Err(BenchError::NotHurwitz {
                name: "triple-chain".to_string(),
                detail: format!("stiffness eigenvalue {bad} is not positive"),
            });
        }
    }
    Ok(TripleChain {
        mass,
        damping,
        stiffness,
        a,
        e,
        b,
        c,
    })
}

// ---------------------------------------------------------------------------
// Coefficient families over the generated models
// ---------------------------------------------------------------------------

/// Which coefficient family to lay over a generated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchFamilyKind {
    /// Quadratic cost with a Cauchy-structured feedthrough (cross term).
    Lqg,
    /// Disturbance rejection at a fixed attenuation level; the first input
    /// column acts as the disturbance.
    Hinf,
    /// Gain bound at twice a frequency-grid norm estimate.
    BoundedReal,
    /// Collocated passivity certificate; replaces `C` by `B^T`.
    PositiveReal,
}

impl BenchFamilyKind {
    /// Short label used in bundle manifests, file names, and tables.
    pub fn label(self) -> &'static str {
        match self {
            BenchFamilyKind::Lqg => "lqg",
            BenchFamilyKind::Hinf => "hinf",
            BenchFamilyKind::BoundedReal => "bounded-real",
            BenchFamilyKind::PositiveReal => "positive-real",
        }
    }

    /// All four family kinds, in sweep order.
    pub fn all() -> [BenchFamilyKind; 4] {
        [
            BenchFamilyKind::Lqg,
            BenchFamilyKind::Hinf,
            BenchFamilyKind::BoundedReal,
            BenchFamilyKind::PositiveReal,
        ]
    }
}

impl fmt::Display for BenchFamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Short label for a fully assembled family spec.
pub fn family_label(spec: &FamilySpec) -> &'static str {
    match spec {
        FamilySpec::General { .. } => "general",
        FamilySpec::Lqg { .. } => "lqg",
        FamilySpec::Hinf { .. } => "hinf",
        FamilySpec::BoundedReal { .. } => "bounded-real",
        FamilySpec::PositiveReal { .. } => "positive-real",
    }
}

/// Assemble the family spec for a generated model.  The gain-bound level is
/// computed here (deterministically) so rebuilding a spec never re-estimates
/// it.
fn family_for(
    kind: BenchFamilyKind,
    a: &CsrMatrix,
    e: &CsrMatrix,
    b: &Array2<f64>,
    c: &Array2<f64>,
) -> Result<FamilySpec, BenchError> {
    let m = b.ncols();
    let p = c.nrows();
    match kind {
        BenchFamilyKind::Lqg => {
            let mut d = Array2::zeros((p, m));
            for i in 0..p {
                for j in 0..m {
                    d[[i, j]] = LQG_FEEDTHROUGH_SCALE / (i + j + 1) as f64;
                }
            }
            Ok(FamilySpec::Lqg {
                q_tilde: Array2::eye(p),
                r_tilde: Array2::eye(m),
                feedthrough: d,
            })
        }
        BenchFamilyKind::Hinf => {
            if m < 2 {
                return Err(BenchError::InvalidParameter {
                    context: "family_for",
                    detail: format!(
                        "the disturbance-rejection family needs at least two inputs, got {m}"
                    ),
                });
            }
            Ok(FamilySpec::Hinf {
                gamma: HINF_GAMMA,
                split: (1, m - 1),
                q_tilde: Array2::eye(p),
                r_tilde: Array2::eye(m - 1),
            })
        }
        BenchFamilyKind::BoundedReal => {
            let d = Array2::from_elem((p, m), BR_FEEDTHROUGH);
            let gamma = BR_GAMMA_MARGIN * hinf_norm_estimate(a, e, b, c, &d)?;
            Ok(FamilySpec::BoundedReal {
                gamma,
                feedthrough: d,
            })
        }
        BenchFamilyKind::PositiveReal => Ok(FamilySpec::PositiveReal {
            feedthrough: Array2::eye(m) * PR_FEEDTHROUGH,
        }),
    }
}

/// Estimate `sup_omega ||C (i omega E - A)^{-1} B + D||_2` on a logarithmic
/// frequency grid (plus zero).  A grid estimate can only undershoot, which
/// is why the gain-bound family multiplies it by [`BR_GAMMA_MARGIN`].
fn hinf_norm_estimate(
    a: &CsrMatrix,
    e: &CsrMatrix,
    b: &Array2<f64>,
    c: &Array2<f64>,
    d: &Array2<f64>,
) -> Result<f64, BenchError> {
    let op = ShiftedOperator::new(a.clone(), e.clone())?;
    // G(0) = D - C A^{-1} B.
    let x0 = op.solve_shifted(0.0, b.view(), false)?;
    let g0 = d - &c.dot(&x0);
    let mut best = linalg::two_norm(g0.view())?;
    let cc = c.mapv(|v| Complex64::new(v, 0.0));
    let dc = d.mapv(|v| Complex64::new(v, 0.0));
    for k in 0..BR_FREQ_COUNT {
        let omega = 10f64.powf(-2.0 + 6.0 * k as f64 / (BR_FREQ_COUNT as f64 - 1.0));
        // G(i omega) = D - C (A - i omega E)^{-1} B.
        let x = op.solve_shifted_complex(Complex64::new(0.0, -omega), b.view(), false)?;
        let g = &dc - &cc.dot(&x);
        best = best.max(sigma_max_complex(&g)?);
    }
    Ok(best)
}

/// Largest singular value of a small complex matrix, via the symmetric real
/// embedding of the Hermitian Gram matrix.
fn sigma_max_complex(g: &Array2<Complex64>) -> Result<f64, BenchError> {
    let gram = g.mapv(|z| z.conj()).t().dot(g);
    let m = gram.nrows();
    let mut emb = Array2::zeros((2 * m, 2 * m));
    for i in 0..m {
        for j in 0..m {
            let z = gram[[i, j]];
            emb[[i, j]] = z.re;
            emb[[m + i, m + j]] = z.re;
            emb[[i, m + j]] = -z.im;
            emb[[m + i, j]] = z.im;
        }
    }
    let (w, _) = linalg::eig_sym(emb.view())?;
    let top = w.iter().fold(0.0f64, |acc, &v| acc.max(v));
    Ok(top.sqrt())
}

// ---------------------------------------------------------------------------
// Benchmark specs and bundles
// ---------------------------------------------------------------------------

/// Everything needed to rebuild a benchmark problem deterministically.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    /// Stable identifier, also used for bundle directories and table rows.
    pub name: String,
    /// First-order state dimension.
    pub n: usize,
    /// Coefficient family laid over the model.
    pub family: FamilySpec,
    /// Generator and its parameters.
    pub params: GeneratorParams,
    /// Seed recorded in the bundle manifest.  The curated generators are
    /// deterministic on their own; the seed matters for random instances
    /// regenerated alongside a bundle.
    pub seed: u64,
}

/// Generator parameters stored inside a [`BenchmarkSpec`].
#[derive(Debug, Clone)]
pub enum GeneratorParams {
    /// One of the fixed 2x2 study problems (zero-based index).
    Fixed { index: usize },
    /// Finite-difference heat model.
    HeatFdm {
        grid_n: usize,
        two_dimensional: bool,
        m: usize,
        p: usize,
    },
    /// Coupled oscillator chains.
    TripleChain {
        masses: usize,
        chain: TripleChainParams,
    },
}

/// A built benchmark problem: validated coefficients plus the pinned
/// initial feedback, when the problem ships one.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub coeffs: CoefficientSet,
    pub initial_feedback: Option<Array2<f64>>,
}

impl BenchmarkSpec {
    /// Rebuild the problem matrices from the stored parameters.
    ///
    /// Generated models are certified Hurwitz at construction, so built
    /// problems pin the zero start: the solver's own large-scale stability
    /// screen is conservative for strongly non-normal pencils like the
    /// lightly damped chain and would refuse what the generator has
    /// already proven stable.
    pub fn build(&self) -> Result<BuiltProblem, BenchError> {
        let (a, e, b, c) = match &self.params {
            GeneratorParams::Fixed { index } => {
                let set = convergence_coefficients(*index);
                let k0 = convergence_initial_feedback(*index);
                return Ok(BuiltProblem {
                    coeffs: set,
                    initial_feedback: k0,
                });
            }
            GeneratorParams::HeatFdm {
                grid_n,
                two_dimensional,
                m,
                p,
            } => {
                if *two_dimensional {
                    gen_heat_fdm_2d(*grid_n, *m, *p)?
                } else {
                    gen_heat_fdm(*grid_n, *m, *p)?
                }
            }
            GeneratorParams::TripleChain { masses, chain } => {
                let tc = gen_triple_chain(*masses, chain)?;
                (tc.a, tc.e, tc.b, tc.c)
            }
        };
        // The collocated passivity family replaces the observation map by
        // the input map's transpose.
        let c = if matches!(self.family, FamilySpec::PositiveReal { .. }) {
            b.t().to_owned()
        } else {
            c
        };
        let m = b.ncols();
        let n = a.nrows();
        let coeffs = build_family(self.family.clone(), a, e, b, c)?;
        Ok(BuiltProblem {
            coeffs,
            initial_feedback: Some(Array2::zeros((m, n))),
        })
    }
}

/// Spec for study problem `index` (zero-based).
pub fn convergence_spec(index: usize) -> Result<BenchmarkSpec, BenchError> {
    if index >= CONVERGENCE_EXAMPLE_COUNT {
        return Err(BenchError::InvalidParameter {
            context: "convergence_spec",
            detail: format!("study problem index {index} is out of range (0..3)"),
        });
    }
    let set = convergence_coefficients(index);
    Ok(BenchmarkSpec {
        name: format!("convergence-example-{}", index + 1),
        n: set.n(),
        family: FamilySpec::General {
            q: set.q().to_owned(),
            r: set.r().to_owned(),
            s: set.s().to_owned(),
        },
        params: GeneratorParams::Fixed { index },
        seed: 0,
    })
}

/// Spec for a heat problem under the given family.
pub fn heat_spec(
    grid_n: usize,
    two_dimensional: bool,
    m: usize,
    p: usize,
    kind: BenchFamilyKind,
) -> Result<BenchmarkSpec, BenchError> {
    let (a, e, b, c) = if two_dimensional {
        gen_heat_fdm_2d(grid_n, m, p)?
    } else {
        gen_heat_fdm(grid_n, m, p)?
    };
    let family = family_for(kind, &a, &e, &b, &c)?;
    let n = a.nrows();
    let dim_tag = if two_dimensional { "2d" } else { "1d" };
    Ok(BenchmarkSpec {
        name: format!("heat-{dim_tag}-{n}-{}", kind.label()),
        n,
        family,
        params: GeneratorParams::HeatFdm {
            grid_n,
            two_dimensional,
            m,
            p,
        },
        seed: 0,
    })
}

/// Spec for a triple-chain problem under the given family.
pub fn triple_chain_spec(
    masses: usize,
    params: &TripleChainParams,
    kind: BenchFamilyKind,
) -> Result<BenchmarkSpec, BenchError> {
    let tc = gen_triple_chain(masses, params)?;
    let family = family_for(kind, &tc.a, &tc.e, &tc.b, &tc.c)?;
    Ok(BenchmarkSpec {
        name: format!("triple-chain-{}-{}", tc.n(), kind.label()),
        n: tc.n(),
        family,
        params: GeneratorParams::TripleChain {
            masses,
            chain: params.clone(),
        },
        seed: 0,
    })
}

/// Manifest written alongside a MatrixMarket bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub family: String,
    pub seed: u64,
    /// Role (`"a"`, `"e"`, ..., `"d"`, `"k0"`) to file name.
    pub files: BTreeMap<String, String>,
}

/// Write a benchmark problem as a MatrixMarket bundle plus JSON manifest.
///
/// Sparse matrices go to coordinate files, dense ones to array files; the
/// optional feedthrough and pinned initial feedback are included when the
/// problem carries them.  Writing the same spec twice produces identical
/// bytes.
pub fn write_bundle(spec: &BenchmarkSpec, dir: &Path) -> Result<BundleManifest, BenchError> {
    fs::create_dir_all(dir)?;
    let built = spec.build()?;
    let coeffs = &built.coeffs;
    let mut files = BTreeMap::new();
    let mut put = |role: &str, file: &str| {
        files.insert(role.to_string(), file.to_string());
    };

    matrixmarket::write_sparse(&dir.join("a.mtx"), coeffs.a())?;
    put("a", "a.mtx");
    matrixmarket::write_sparse(&dir.join("e.mtx"), coeffs.e())?;
    put("e", "e.mtx");
    matrixmarket::write_dense(&dir.join("b.mtx"), coeffs.b().view())?;
    put("b", "b.mtx");
    matrixmarket::write_dense(&dir.join("c.mtx"), coeffs.c().view())?;
    put("c", "c.mtx");
    matrixmarket::write_dense(&dir.join("q.mtx"), coeffs.q().view())?;
    put("q", "q.mtx");
    matrixmarket::write_dense(&dir.join("r.mtx"), coeffs.r().view())?;
    put("r", "r.mtx");
    matrixmarket::write_dense(&dir.join("s.mtx"), coeffs.s().view())?;
    put("s", "s.mtx");
    if let Some(d) = coeffs.feedthrough() {
        matrixmarket::write_dense(&dir.join("d.mtx"), d.view())?;
        put("d", "d.mtx");
    }
    if let Some(k0) = &built.initial_feedback {
        matrixmarket::write_dense(&dir.join("k0.mtx"), k0.view())?;
        put("k0", "k0.mtx");
    }

    let manifest = BundleManifest {
        name: spec.name.clone(),
        n: coeffs.n(),
        m: coeffs.m(),
        p: coeffs.p(),
        family: family_label(&spec.family).to_string(),
        seed: spec.seed,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

/// Read a bundle directory written by [`write_bundle`] (or assembled by
/// hand with the same manifest layout) back into validated coefficients.
pub fn read_bundle(
    dir: &Path,
) -> Result<(BundleManifest, CoefficientSet, Option<Array2<f64>>), BenchError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let path_of = |role: &str| -> Result<std::path::PathBuf, BenchError> {
        manifest
            .files
            .get(role)
            .map(|f| dir.join(f))
            .ok_or_else(|| BenchError::InvalidParameter {
                context: "read_bundle",
                detail: format!("manifest {} lists no '{role}' file", manifest_path.display()),
            })
    };
    let a = matrixmarket::read_sparse(&path_of("a")?)?;
    let e = matrixmarket::read_sparse(&path_of("e")?)?;
    let b = matrixmarket::read_dense(&path_of("b")?)?;
    let c = matrixmarket::read_dense(&path_of("c")?)?;
    let q = matrixmarket::read_dense(&path_of("q")?)?;
    let r = matrixmarket::read_dense(&path_of("r")?)?;
    let s = matrixmarket::read_dense(&path_of("s")?)?;
    let mut coeffs = CoefficientSet::new(a, e, b, c, q, r, s)?;
    if manifest.files.contains_key("d") {
        let d = matrixmarket::read_dense(&path_of("d")?)?;
        coeffs = coeffs.with_feedthrough(d)?;
    }
    let k0 = if manifest.files.contains_key("k0") {
        Some(matrixmarket::read_dense(&path_of("k0")?)?)
    } else {
        None
    };
    Ok((manifest, coeffs, k0))
}

// ---------------------------------------------------------------------------
// Random instances for property tests
// ---------------------------------------------------------------------------

/// Shape and signature of a random stable test system.
#[derive(Debug, Clone)]
pub struct RandomSystemOptions {
    /// State dimension.
    pub n: usize,
    /// Input count.
    pub m: usize,
    /// Output count.
    pub p: usize,
    /// How many of the `m` weight directions are negative; the rest are
    /// positive.  Zero gives a definite weight.
    pub negative_r: usize,
    /// Add a dense cross term (scaled to keep the problem solvable).
    pub cross_term: bool,
    /// Alternate the signs of the constant-term kernel `Q`.
    pub indefinite_q: bool,
}

impl Default for RandomSystemOptions {
    fn default() -> Self {
        RandomSystemOptions {
            n: 40,
            m: 2,
            p: 2,
            negative_r: 0,
            cross_term: false,
            indefinite_q: false,
        }
    }
}

/// Generate a random solidly stable sparse system.
///
/// `A` is tridiagonal with a strictly dominant negative diagonal and `E` is
/// a positive diagonal, so the pencil is Hurwitz by construction (and
/// verified so).  `B`, `C`, and the optional cross term are dense uniform
/// draws from a seeded generator: the same options and seed reproduce the
/// same coefficients exactly.
pub fn random_stable_system(
    options: &RandomSystemOptions,
    seed: u64,
) -> Result<CoefficientSet, BenchError> {
    let (n, m, p) = (options.n, options.m, options.p);
    if n < 2 || m == 0 || p == 0 {
        return Err(BenchError::InvalidParameter {
            context: "random_stable_system",
            detail: format!("need n >= 2, m >= 1, p >= 1; got ({n}, {m}, {p})"),
        });
    }
    if options.negative_r > m {
        return Err(BenchError::InvalidParameter {
            context: "random_stable_system",
            detail: format!(
                "cannot place {} negative weight directions among {m} inputs",
                options.negative_r
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| rng.gen::<f64>();

    let mut a_triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        a_triplets.push((i, i, -(3.0 + 2.0 * unit(&mut rng))));
        if i + 1 < n {
            a_triplets.push((i, i + 1, 0.8 * (unit(&mut rng) - 0.5)));
            a_triplets.push((i + 1, i, 0.8 * (unit(&mut rng) - 0.5)));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &a_triplets)?;
    let e_triplets: Vec<(usize, usize, f64)> = (0..n)
        .map(|i| (i, i, 1.0 + 0.2 * (unit(&mut rng) - 0.5)))
        .collect();
    let e = CsrMatrix::from_triplets(n, n, &e_triplets)?;

    let b = Array2::from_shape_fn((n, m), |_| 2.0 * unit(&mut rng) - 1.0);
    let c = Array2::from_shape_fn((p, n), |_| 2.0 * unit(&mut rng) - 1.0);

    let mut r = Array2::zeros((m, m));
    for j in 0..m {
        let magnitude = 1.0 + unit(&mut rng);
        r[[j, j]] = if j < options.negative_r {
            -magnitude
        } else {
            magnitude
        };
    }
    let mut q = Array2::zeros((p, p));
    for j in 0..p {
        let magnitude = 1.0 + unit(&mut rng);
        q[[j, j]] = if options.indefinite_q && j % 2 == 1 {
            -magnitude
        } else {
            magnitude
        };
    }
    let s = if options.cross_term {
        Array2::from_shape_fn((n, m), |_| 0.2 * (2.0 * unit(&mut rng) - 1.0))
    } else {
        Array2::zeros((n, m))
    };

    let coeffs = CoefficientSet::new(a, e, b, c, q, r, s)?;
    assert_pencil_hurwitz("random-stable-system", coeffs.a(), coeffs.e())?;
    Ok(coeffs)
}

/// Generate a random Hurwitz pencil with a low-rank, possibly indefinite
/// right-hand side `W T W^T` for exercising the Lyapunov solvers.
///
/// Returns `(A, E, W, T)` where `W` has `width` columns and the diagonal
/// kernel `T` carries `negative_kernel` negative entries.
pub fn random_lyapunov_instance(
    n: usize,
    width: usize,
    negative_kernel: usize,
    seed: u64,
) -> Result<(CsrMatrix, CsrMatrix, Array2<f64>, Array2<f64>), BenchError> {
    if n < 2 || width == 0 {
        return Err(BenchError::InvalidParameter {
            context: "random_lyapunov_instance",
            detail: format!("need n >= 2 and width >= 1; got ({n}, {width})"),
        });
    }
    if negative_kernel > width {
        return Err(BenchError::InvalidParameter {
            context: "random_lyapunov_instance",
            detail: format!("cannot place {negative_kernel} negative entries among {width}"),
        });
    }
    let options = RandomSystemOptions {
        n,
        m: 1,
        p: 1,
        ..RandomSystemOptions::default()
    };
    let coeffs = random_stable_system(&options, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57_54);
    let w = Array2::from_shape_fn((n, width), |_| 2.0 * rng.gen::<f64>() - 1.0);
    let mut t = Array2::zeros((width, width));
    for j in 0..width {
        let magnitude = 0.5 + rng.gen::<f64>();
        t[[j, j]] = if j < negative_kernel {
            -magnitude
        } else {
            magnitude
        };
    }
    Ok((coeffs.a().clone(), coeffs.e().clone(), w, t))
}
