//! Low-rank solvers for general continuous-time algebraic Riccati equations
//! (CAREs) with indefinite coefficients.
//!
//! The central problem is the generalized CARE
//!
//! ```text
//! A^T X E + E^T X A + C^T Q C - (B^T X E + S^T)^T R^{-1} (B^T X E + S^T) = 0
//! ```
//!
//! where `R` and `Q` may be indefinite and a cross term `S` may be present.
//! Such equations arise from LQG design, H∞ control, and the bounded-real and
//! positive-real lemmas. The solver of interest is the *stabilizing* solution
//! `X`: the one for which the closed-loop pencil
//! `λE − (A − B R^{-1}(B^T X E + S^T))` is Hurwitz.
//!
//! # Method
//!
//! A Newton-Kleinman iteration on the feedback `K`: each step solves one
//! Lyapunov equation whose constant term is kept in factored `W T W^T` form
//! with a small indefinite kernel `T`, so iterates live as `L D L^T`
//! factorizations of rank far below `n`. Large sparse steps use a
//! residual-based LDL^T low-rank ADI method ([`lyapunov::solve_lr_adi`]);
//! small or dense steps use a Bartels-Stewart solver ([`lyapunov::solve_kron`]).
//! An exact line search on the quartic residual polynomial
//! ([`linesearch`]) globalizes the iteration, and inexact (forcing-sequence)
//! inner tolerances make the cost of early steps proportional to their worth.
//!
//! # Modules
//!
//! - [`sparse`]: minimal CSR storage with banded-envelope extraction.
//! - [`linalg`]: dense LAPACK kernels (eigen, QZ, Schur, Sylvester, banded LU).
//! - [`operator`]: shifted operators `A + U V^T + p E` with cached factorizations.
//! - [`matrixmarket`]: MatrixMarket file exchange.
//! - [`ldlt`]: `L D L^T` solution factors and `W T W^T` residual factors.
//! - [`lyapunov`]: low-rank ADI and dense Lyapunov solvers, ADI shift selection.
//! - [`newton`]: the Newton-Kleinman driver, its options and iteration records.
//! - [`linesearch`]: exact and Armijo step-size selection on the residual quartic.
//! - [`forms`]: CARE family constructors (LQG, H∞, bounded-real, positive-real),
//!   residual metrics, and a dense QZ solution oracle.
//! - [`bench`]: built-in benchmark problems (convergence examples, heat FDM
//!   surrogate, triple-chain oscillator).
//! - [`report`]: serializable run reports.

// Force the OpenBLAS link against the system library; the `lapack` crate
// provides only bindings.
extern crate openblas_src;

pub mod bench;
pub mod forms;
pub mod ldlt;
pub mod linalg;
pub mod linesearch;
pub mod lyapunov;
pub mod matrixmarket;
pub mod newton;
pub mod operator;
pub mod report;
pub mod sparse;
