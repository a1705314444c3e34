//! Numerical solver for Riccati equations and second-order linear ODEs with
//! variable coefficients, built on a pair of integrating factors.
//!
//! The factor `beta` comes from a closed quadrature and the factor `alpha`
//! from a Picard fixed-point iteration that realizes an ordered-exponential
//! series numerically. With both factors on a grid, the general solutions
//! assemble by quadrature:
//!
//! - second-order linear: `y = C2 a/b + C1 (a/b) S + particular`, with
//!   `S = integral of dt/a^2`;
//! - Riccati: `y = y_p - 1 / (q2 a^2 (C + S))`, a one-parameter family with
//!   movable poles at the zeros of `C + S`.
//!
//! An independent Runge-Kutta integrator ([`reference`]) shares nothing with
//! the solver path and backs the validation checks in [`validate`].
//!
//! Modules:
//! - [`expr`]: coefficient mini-language (parse, eval, symbolic derivative)
//! - [`grid`]: uniform grids, quadrature, finite differences
//! - [`factors`]: derived coefficients p, q, h and the factors alpha, beta
//! - [`linear2`]: general solution of y'' + p y' + q y = f
//! - [`riccati`]: general solution of y' = q0 + q1 y + q2 y^2
//! - [`reference`]: adaptive RK4 oracle
//! - [`validate`]: residual / first-integral / oracle check reports

pub mod expr;
pub mod factors;
pub mod grid;
pub mod linear2;
pub mod reference;
pub mod riccati;
pub mod validate;

/// Knobs shared by the linear and Riccati solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Picard stopping tolerance on the sup-norm correction, relative to
    /// `1 + ||alpha||`. Contraction is geometric when the series converges,
    /// so iterations are cheap and the default is tight.
    pub tol: f64,
    /// Iteration cap; exceeding it is reported as non-convergence together
    /// with the correction history.
    pub max_iter: usize,
    /// Magnitude below which `alpha` counts as vanished for the quadrature
    /// integrals with `alpha^2` in the denominator.
    pub alpha_floor: f64,
    /// What to do when `alpha` vanishes inside the domain.
    pub alpha_zero_policy: AlphaZeroPolicy,
}

/// Behaviour when `alpha` has a zero on the grid. The integrand `1/alpha^2`
/// genuinely blows up there, so either the solve fails loudly or the
/// quadrature parts are restricted to the maximal sub-interval around the
/// base point on which `|alpha|` stays above the floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaZeroPolicy {
    #[default]
    Error,
    Restrict,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: 200,
            alpha_floor: 1e-8,
            alpha_zero_policy: AlphaZeroPolicy::Error,
        }
    }
}
