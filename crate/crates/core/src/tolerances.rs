//! Numerical tolerances used across the crate.
//!
//! Every threshold that appears in a validation step or a convergence test is
//! surfaced here so the defaults are auditable in one place. Functions that
//! accept an options struct let callers override the relevant ones.

/// Maximum deviation of a kernel row sum from 1 before the matrix is rejected
/// as non-stochastic.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Residual bound for the stationary distribution: `||pi K - pi||_inf` after
/// the dense solve must stay below this.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Detailed balance check: `|pi(x) K(x,y) - pi(y) K(y,x)|` per pair.
pub const DETAILED_BALANCE_TOL: f64 = 1e-10;

/// Density normalisation: `|sum_x pi(x) rho(x) - 1|`.
pub const DENSITY_MASS_TOL: f64 = 1e-12;

/// Values below this are treated as exact zeros when building the support
/// partition, and edges with `theta * K` below it are dropped.
pub const SUPPORT_ZERO: f64 = 1e-14;

/// Relative eigenvalue cutoff for the pseudo-inverse of the Onsager matrix:
/// eigenvalues below `EIGEN_CUTOFF_REL * lambda_max` count as kernel.
pub const EIGEN_CUTOFF_REL: f64 = 1e-12;

/// Tolerance on the per-class sums that decide membership in the range of
/// the Onsager matrices.
pub const RANGE_MEMBERSHIP_TOL: f64 = 1e-9;

/// Post-solve residual bound for potential recovery:
/// `||B(rho) psi - rhodot||_inf`.
pub const RECOVER_RESIDUAL_TOL: f64 = 1e-9;

/// Strict-positivity floor applied to interior path nodes during action
/// minimisation.
pub const SOLVER_FLOOR: f64 = 1e-9;

/// Relative step for finite-difference gradients (scaled by coordinate size).
pub const FD_STEP_REL: f64 = 1e-6;

/// Endpoint tolerance for geodesics: `||gamma(1) - target||_inf`.
pub const GEODESIC_ENDPOINT_TOL: f64 = 1e-6;

/// Maximum deviation of the instantaneous speed `sqrt([A psi, psi])` from its
/// mean along a shot geodesic.
pub const SPEED_CONSTANCY_TOL: f64 = 1e-4;

/// Below this relative gap the logarithmic mean switches from the direct
/// quotient to a series expansion to avoid cancellation.
pub const NEAR_DIAGONAL_REL: f64 = 1e-6;

/// Default absolute tolerance requested from the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-11;

/// Distances below this are considered degenerate when normalising convexity
/// estimates.
pub const DEGENERATE_DISTANCE: f64 = 1e-10;
