use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A kernel row has negative entries or does not sum to 1.
    #[error("kernel is not stochastic at row {row}: {detail}")]
    NotStochastic { row: usize, detail: String },

    /// The transition graph is not strongly connected.
    #[error("kernel is not irreducible: state {state} is not mutually reachable from state 0")]
    NotIrreducible { state: usize },

    /// Detailed balance fails for a pair of states.
    #[error(
        "kernel is not reversible at pair ({x},{y}): pi(x)K(x,y) = {flux_xy:.16e}, pi(y)K(y,x) = {flux_yx:.16e}"
    )]
    NotReversible {
        x: usize,
        y: usize,
        flux_xy: f64,
        flux_yx: f64,
    },

    /// A vector fails the density invariants (nonnegativity, unit mass).
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// Power-mean exponent out of range.
    #[error("invalid power-mean exponent alpha = {alpha}; alpha must be positive")]
    InvalidAlpha { alpha: f64 },

    /// A mean-function string did not parse.
    #[error("unknown mean '{0}'; expected \"log\", \"geometric\", or \"power:<alpha>\"")]
    UnknownMean(String),

    /// The operation needs a capability the mean does not declare.
    #[error("mean '{mean}' does not provide {capability}")]
    MissingCapability {
        mean: String,
        capability: &'static str,
    },

    /// Scalar argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two-point boundary value problem missed its endpoint.
    #[error("geodesic endpoint miss: reached {got:.12} instead of {want:.12} (|err| = {err:.3e})")]
    EndpointMiss { got: f64, want: f64, err: f64 },

    /// The requested distance is infinite, so no finite geodesic exists.
    #[error("distance between the endpoints is infinite{}", witness_suffix(.witness))]
    InfiniteDistance { witness: Option<usize> },

    /// Numeric nullspace dimension disagrees with the support-class count.
    #[error(
        "rank mismatch: support partition has {classes} classes but the numeric nullspace has dimension {numeric}"
    )]
    RankMismatch { classes: usize, numeric: usize },

    /// A target vector is not in the range of the Onsager operator.
    #[error(
        "target is not in the range of B(rho): class {class} has pi-weighted sum {mass:.6e} (tolerance {tol:.1e})"
    )]
    NotInRange { class: usize, mass: f64, tol: f64 },

    /// A claimed lower bound exceeds the estimate it should bound.
    #[error("{bound} lower bound violated: bound {value:.12e} exceeds estimate {estimate:.12e} by {margin:.3e}")]
    BoundViolated {
        bound: &'static str,
        value: f64,
        estimate: f64,
        margin: f64,
    },

    /// Endpoints fail the mass-compatibility precondition of the solver.
    #[error("endpoints are not connected by any finite-action path: per-class mass differs at state {witness}")]
    InfeasibleEndpoints { witness: usize },

    /// The optimizer's line search was exhausted before the tolerance was met.
    #[error("action minimisation stalled after {iterations} iterations; best value {best:.12e}")]
    Stalled { iterations: usize, best: f64 },

    /// The shooting method failed to converge.
    #[error(
        "geodesic shooting diverged: best endpoint residual {best_residual:.3e} after {iterations} Newton steps; consider the action minimiser instead"
    )]
    ShootingDiverged {
        iterations: usize,
        best_residual: f64,
    },

    /// Entropy-type functionals are not differentiable at densities with zeros.
    #[error("functional gradient undefined: density vanishes at state {state}")]
    BoundaryDensity { state: usize },

    /// Two densities are too close for a normalised convexity estimate.
    #[error("degenerate distance {w:.3e} between pair endpoints; no convexity estimate")]
    DegenerateDistance { w: f64 },

    /// Input JSON failed to parse or had the wrong shape.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn witness_suffix(witness: &Option<usize>) -> String {
    match witness {
        Some(x) => format!(" (per-class mass differs at state {x})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
