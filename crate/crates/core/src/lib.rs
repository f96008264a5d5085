//! Transportation metric on densities over finite reversible Markov chains.
//!
//! The distance between two probability densities is defined by a discrete
//! dynamical formulation: minimise the integrated kinetic energy of paths
//! `(rho_t)` subject to a discrete continuity equation, where mass flowing
//! along an edge `(x, y)` is weighted by a mean `theta(rho(x), rho(y))` of
//! the endpoint densities. With the logarithmic mean this metric turns the
//! heat flow of the chain into the gradient flow of the relative entropy,
//! and geodesic convexity of the entropy yields a Ricci-type curvature
//! bound for the chain.
//!
//! The crate provides:
//! - chain validation, heat flow, entropy, total variation ([`chain`]);
//! - mean functions with their axiom checks and the normalisation integral
//!   that decides when point masses are at finite distance ([`mean`]);
//! - closed forms on the two-point chain used as ground truth ([`two_point`]);
//! - the metric's quadratic forms, support decomposition, and potential
//!   recovery ([`metric`]);
//! - geodesic solvers: action minimisation over discrete paths and
//!   Hamiltonian shooting ([`solver`]);
//! - gradient-flow identification checks and curvature estimation
//!   ([`flows`]).

// Negated float comparisons are deliberate throughout: `!(v >= 0.0)` also
// rejects NaN, which the suggested `v < 0.0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod error;
pub mod flows;
pub mod mean;
pub mod metric;
pub mod quad;
pub mod solver;
pub mod tolerances;
pub mod two_point;

pub use chain::{ChainSpec, Density, MarkovChain};
pub use error::{Error, Result};
pub use flows::{
    convexity_profile, grad_functional, verify_gradient_flow, ConvexityProfile, FlowSample,
    Functional, GradientFlowReport, PairEstimate, ProfileOptions,
};
pub use mean::{
    c_theta, check_axioms, AxiomCheck, AxiomReport, EntropyGenerator, MeanFunction,
    MeanProperties,
};
pub use metric::{
    b_apply, divergence, finiteness, inner_pi, inner_rho, kernel_range, onsager,
    recover_potential, support_partition, tv_bounds_check, EdgeField, KernelRange,
    SupportPartition, TvBounds,
};
pub use quad::Improper;
pub use solver::{
    geodesic_shoot, min_action, path_speeds, DiscretePath, GradientMode, ShootOptions,
    ShootReport, SolverOptions, SolverReport,
};
pub use two_point::{ConvexityBound, TwoPointChain};
