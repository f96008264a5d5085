use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use entroflow::{
    c_theta, check_axioms, convexity_profile, geodesic_shoot, min_action, path_speeds,
    verify_gradient_flow, Density, DiscretePath, Functional, GradientMode, Improper, MarkovChain,
    MeanFunction, ProfileOptions, ShootOptions, SolverOptions, TwoPointChain,
};

use crate::config::JobConfig;
use crate::inputs;
use crate::output::{self, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Lib(#[from] entroflow::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "entroflow",
    version,
    about = "Transport distances, geodesics, and entropy gradient flows on reversible Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Also write the tabular payload to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<PathBuf>,

    /// Density files hold probability vectors mu; convert to mu / pi.
    #[arg(long, global = true)]
    pub as_measure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grad {
    /// Central finite differences (robust default).
    Fd,
    /// Closed-form gradient through the interval potentials.
    Analytic,
}

impl Grad {
    fn mode(self) -> GradientMode {
        match self {
            Grad::Fd => GradientMode::FiniteDifference,
            Grad::Analytic => GradientMode::Analytic,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Grad::Fd => "fd",
            Grad::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a chain file: stochasticity, irreducibility, reversibility.
    Validate { chain: PathBuf },

    /// Distance between two densities by action minimisation over a
    /// discrete path.
    Dist {
        chain: PathBuf,
        rho0: PathBuf,
        rho1: PathBuf,
        /// Mean selector: log, geometric, or power:<alpha>.
        #[arg(long, default_value = "log")]
        mean: String,
        /// Number of path intervals.
        #[arg(long = "N", visible_alias = "intervals", default_value_t = 16, value_parser = positive_usize)]
        n: usize,
        /// Stationarity tolerance on the projected gradient.
        #[arg(long, default_value_t = 1e-7, value_parser = positive_f64)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 600, value_parser = positive_usize)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = Grad::Fd)]
        gradient: Grad,
    },

    /// Constant-speed geodesic between two densities by Hamiltonian
    /// shooting, with action minimisation seeding the initial potential
    /// when the direct linearisation stalls.
    Geodesic {
        chain: PathBuf,
        rho0: PathBuf,
        rho1: PathBuf,
        #[arg(long, default_value = "log")]
        mean: String,
        /// Trajectory samples kept in the output path.
        #[arg(long, default_value_t = 32, value_parser = positive_usize)]
        samples: usize,
        /// RK4 steps per trajectory integration.
        #[arg(long, default_value_t = 200, value_parser = positive_usize)]
        steps: usize,
    },

    /// Heat flow of a density at the given times.
    Heat {
        chain: PathBuf,
        rho0: PathBuf,
        /// Comma-separated times.
        #[arg(long = "t-grid", value_delimiter = ',', default_values_t = [0.1, 1.0, 5.0], value_parser = positive_f64)]
        t_grid: Vec<f64>,
    },

    /// Verify that the heat flow is the metric gradient flow of the
    /// entropy: recover the flow's potential, compare it edgewise with the
    /// entropy gradient, and check the dissipation identity by finite
    /// differences.
    GradflowCheck {
        chain: PathBuf,
        rho0: PathBuf,
        #[arg(long, default_value = "log")]
        mean: String,
        #[arg(long = "t-grid", value_delimiter = ',', default_values_t = [0.1, 1.0, 5.0], value_parser = positive_f64)]
        t_grid: Vec<f64>,
    },

    /// Estimate the entropy's geodesic-convexity constant from random
    /// density pairs: an entropic curvature lower bound for the chain.
    Ricci {
        chain: PathBuf,
        #[arg(long, default_value = "log")]
        mean: String,
        /// Number of sampled endpoint pairs.
        #[arg(long, default_value_t = 20, value_parser = positive_usize)]
        pairs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Interior probe times per pair.
        #[arg(long = "t-samples", default_value_t = 9, value_parser = positive_usize)]
        t_samples: usize,
        /// Minimum geodesic resolution (path nodes per pair).
        #[arg(long, default_value_t = 30, value_parser = positive_usize)]
        resolution: usize,
    },

    /// Closed forms on the two-point chain: distance, geodesic, and the
    /// sharp convexity constant.
    TwoPoint {
        /// Transition rate from the first state.
        #[arg(long, value_parser = positive_f64)]
        p: f64,
        /// Transition rate from the second state.
        #[arg(long, value_parser = positive_f64)]
        q: f64,
        #[arg(long, default_value = "log")]
        mean: String,
        /// First endpoint coordinate in (-1, 1).
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        /// Second endpoint coordinate in (-1, 1).
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        /// Sample count for the geodesic dump.
        #[arg(long, default_value_t = 33, value_parser = positive_usize)]
        samples: usize,
    },

    /// Audit a mean's declared properties and classify its normalisation
    /// integral.
    ThetaCheck {
        #[arg(long)]
        mean: String,
        /// Random property-check samples.
        #[arg(long, default_value_t = 4096, value_parser = positive_usize)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Upper edge of the sampling box (0, box]^2.
        #[arg(long = "box", default_value_t = 10.0, value_parser = positive_f64)]
        box_hi: f64,
        /// Refinement depth for the normalisation integral.
        #[arg(long, default_value_t = 40, value_parser = positive_u32)]
        levels: u32,
    },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {v}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".to_string())
    }
}

fn positive_u32(s: &str) -> Result<u32, String> {
    let v: u32 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".to_string())
    }
}

pub fn run(cli: Cli) -> i32 {
    let config = resolve_config(&cli);
    match dispatch(cli, &config) {
        Ok(()) => 0,
        Err(CliError::Io { path, source }) => {
            eprintln!("error: {path}: {source}");
            74
        }
        Err(CliError::Lib(e)) => {
            output::emit_error(&config, error_kind(&e), &e);
            2
        }
    }
}

/// Stable machine-readable tags for the structured error document.
fn error_kind(e: &entroflow::Error) -> &'static str {
    use entroflow::Error::*;
    match e {
        NotStochastic { .. } => "not-stochastic",
        NotIrreducible { .. } => "not-irreducible",
        NotReversible { .. } => "not-reversible",
        InvalidDensity(_) => "invalid-density",
        InvalidAlpha { .. } => "invalid-alpha",
        UnknownMean(_) => "unknown-mean",
        MissingCapability { .. } => "missing-capability",
        Domain(_) => "domain",
        EndpointMiss { .. } => "endpoint-miss",
        InfiniteDistance { .. } => "infinite-distance",
        RankMismatch { .. } => "rank-mismatch",
        NotInRange { .. } => "not-in-range",
        BoundViolated { .. } => "bound-violated",
        InfeasibleEndpoints { .. } => "infeasible-endpoints",
        Stalled { .. } => "stalled",
        ShootingDiverged { .. } => "shooting-diverged",
        BoundaryDensity { .. } => "boundary-density",
        DegenerateDistance { .. } => "degenerate-distance",
        InvalidInput(_) => "invalid-input",
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn resolve_config(cli: &Cli) -> JobConfig {
    let name = match &cli.command {
        Command::Validate { .. } => "validate",
        Command::Dist { .. } => "dist",
        Command::Geodesic { .. } => "geodesic",
        Command::Heat { .. } => "heat",
        Command::GradflowCheck { .. } => "gradflow-check",
        Command::Ricci { .. } => "ricci",
        Command::TwoPoint { .. } => "two-point",
        Command::ThetaCheck { .. } => "theta-check",
    };
    let mut cfg = JobConfig::base(name);
    cfg.format = match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
    .to_string();
    cfg.csv = cli.csv.as_ref().map(|p| display(p));
    cfg.as_measure = cli.as_measure;
    match &cli.command {
        Command::Validate { chain } => {
            cfg.chain = Some(display(chain));
        }
        Command::Dist {
            chain,
            rho0,
            rho1,
            mean,
            n,
            tol,
            max_iter,
            gradient,
        } => {
            cfg.chain = Some(display(chain));
            cfg.rho0 = Some(display(rho0));
            cfg.rho1 = Some(display(rho1));
            cfg.mean = mean.clone();
            cfg.intervals = *n;
            cfg.tol = *tol;
            cfg.max_iters = *max_iter;
            cfg.params = json!({ "gradient": gradient.name() });
        }
        Command::Geodesic {
            chain,
            rho0,
            rho1,
            mean,
            samples,
            steps,
        } => {
            cfg.chain = Some(display(chain));
            cfg.rho0 = Some(display(rho0));
            cfg.rho1 = Some(display(rho1));
            cfg.mean = mean.clone();
            cfg.intervals = *samples;
            cfg.params = json!({ "steps": steps });
        }
        Command::Heat {
            chain,
            rho0,
            t_grid,
        } => {
            cfg.chain = Some(display(chain));
            cfg.rho0 = Some(display(rho0));
            cfg.t_grid = t_grid.clone();
        }
        Command::GradflowCheck {
            chain,
            rho0,
            mean,
            t_grid,
        } => {
            cfg.chain = Some(display(chain));
            cfg.rho0 = Some(display(rho0));
            cfg.mean = mean.clone();
            cfg.t_grid = t_grid.clone();
        }
        Command::Ricci {
            chain,
            mean,
            pairs,
            seed,
            t_samples,
            resolution,
        } => {
            cfg.chain = Some(display(chain));
            cfg.mean = mean.clone();
            cfg.seed = *seed;
            cfg.intervals = *resolution;
            cfg.params = json!({ "pairs": pairs, "t_samples": t_samples });
        }
        Command::TwoPoint {
            p,
            q,
            mean,
            alpha,
            beta,
            samples,
        } => {
            cfg.mean = mean.clone();
            cfg.params = json!({
                "p": p,
                "q": q,
                "alpha": alpha,
                "beta": beta,
                "samples": samples,
            });
        }
        Command::ThetaCheck {
            mean,
            samples,
            seed,
            box_hi,
            levels,
        } => {
            cfg.mean = mean.clone();
            cfg.seed = *seed;
            cfg.params = json!({ "samples": samples, "box": box_hi, "levels": levels });
        }
    }
    cfg
}

fn dispatch(cli: Cli, config: &JobConfig) -> Result<(), CliError> {
    let as_measure = cli.as_measure;
    match cli.command {
        Command::Validate { chain } => cmd_validate(config, &chain),
        Command::Dist {
            chain,
            rho0,
            rho1,
            mean,
            n,
            tol,
            max_iter,
            gradient,
        } => cmd_dist(
            config, &chain, &rho0, &rho1, &mean, n, tol, max_iter, gradient, as_measure,
        ),
        Command::Geodesic {
            chain,
            rho0,
            rho1,
            mean,
            samples,
            steps,
        } => cmd_geodesic(config, &chain, &rho0, &rho1, &mean, samples, steps, as_measure),
        Command::Heat {
            chain,
            rho0,
            t_grid,
        } => cmd_heat(config, &chain, &rho0, &t_grid, as_measure),
        Command::GradflowCheck {
            chain,
            rho0,
            mean,
            t_grid,
        } => cmd_gradflow_check(config, &chain, &rho0, &mean, &t_grid, as_measure),
        Command::Ricci {
            chain,
            mean,
            pairs,
            seed,
            t_samples,
            resolution,
        } => cmd_ricci(config, &chain, &mean, pairs, seed, t_samples, resolution),
        Command::TwoPoint {
            p,
            q,
            mean,
            alpha,
            beta,
            samples,
        } => cmd_two_point(config, p, q, &mean, alpha, beta, samples),
        Command::ThetaCheck {
            mean,
            samples,
            seed,
            box_hi,
            levels,
        } => cmd_theta_check(config, &mean, samples, seed, box_hi, levels),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct PathOut {
    times: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    potentials: Vec<Vec<f64>>,
}

fn path_out(path: &DiscretePath) -> PathOut {
    PathOut {
        times: path.times.clone(),
        nodes: path.nodes.iter().map(vec_of).collect(),
        potentials: path.potentials.iter().map(vec_of).collect(),
    }
}

/// Per-node speeds from a speed profile that is either already per node or
/// per interval (averaged onto interior nodes, one-sided at the endpoints).
fn node_speeds(path: &DiscretePath, speeds: &[f64]) -> Vec<f64> {
    if speeds.len() == path.nodes.len() {
        return speeds.to_vec();
    }
    let n = speeds.len();
    (0..=n)
        .map(|j| {
            if j == 0 {
                speeds[0]
            } else if j == n {
                speeds[n - 1]
            } else {
                0.5 * (speeds[j - 1] + speeds[j])
            }
        })
        .collect()
}

/// Wide path dump: one row per node holding the time, the density vector,
/// and the local speed.
fn path_table(
    schema: &'static str,
    chain: &MarkovChain,
    path: &DiscretePath,
    node_speeds: &[f64],
) -> Table {
    let mut columns = vec!["time".to_string()];
    columns.extend(chain.states().iter().map(|s| format!("rho:{s}")));
    columns.push("speed".to_string());
    let rows = path
        .nodes
        .iter()
        .enumerate()
        .map(|(j, node)| {
            let mut row = vec![fmt(path.times[j])];
            row.extend(node.iter().map(|&v| fmt(v)));
            row.push(fmt(node_speeds[j]));
            row
        })
        .collect();
    Table {
        schema,
        columns,
        rows,
    }
}

/// The functional whose gradient flow the mean is paired with.
fn entropy_functional(mean: &MeanFunction) -> Result<Functional, entroflow::Error> {
    if mean.name() == "log" {
        return Ok(Functional::Entropy);
    }
    Ok(Functional::GeneralizedEntropy(
        mean.require_entropy_generator()?.clone(),
    ))
}

fn cmd_validate(config: &JobConfig, chain_path: &Path) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let n = chain.n();
    let k = chain.kernel();
    let pi = chain.pi();
    let mut row_sum = 0.0f64;
    let mut balance = 0.0f64;
    for x in 0..n {
        let s: f64 = (0..n).map(|y| k[(x, y)]).sum();
        row_sum = row_sum.max((s - 1.0).abs());
        for y in (x + 1)..n {
            balance = balance.max((pi[x] * k[(x, y)] - pi[y] * k[(y, x)]).abs());
        }
    }
    #[derive(Serialize)]
    struct ValidateResult<'a> {
        n: usize,
        states: &'a [String],
        pi: Vec<f64>,
        max_row_sum_residual: f64,
        max_detailed_balance_residual: f64,
    }
    let result = ValidateResult {
        n,
        states: chain.states(),
        pi: vec_of(pi),
        max_row_sum_residual: row_sum,
        max_detailed_balance_residual: balance,
    };
    let rows = (0..n)
        .map(|x| vec![chain.states()[x].clone(), fmt(pi[x])])
        .collect();
    let table = Table {
        schema: "entroflow/validate.csv@v1",
        columns: cols(&["state", "pi"]),
        rows,
    };
    output::emit(config, "entroflow/validate@v1", &result, &table)
}

#[allow(clippy::too_many_arguments)]
fn cmd_dist(
    config: &JobConfig,
    chain_path: &Path,
    rho0_path: &Path,
    rho1_path: &Path,
    mean_spec: &str,
    n: usize,
    tol: f64,
    max_iter: usize,
    gradient: Grad,
    as_measure: bool,
) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let mean = MeanFunction::parse(mean_spec)?;
    let rho0 = inputs::load_density(&chain, rho0_path, as_measure)?;
    let rho1 = inputs::load_density(&chain, rho1_path, as_measure)?;
    let opts = SolverOptions {
        intervals: n,
        max_iters: max_iter,
        grad_tol: tol,
        gradient: gradient.mode(),
        ..SolverOptions::default()
    };
    let report = min_action(&chain, &mean, &rho0, &rho1, &opts)?;
    let speeds = path_speeds(&chain, &mean, &report.path)?;
    #[derive(Serialize)]
    struct DistResult {
        distance: f64,
        action: f64,
        iterations: usize,
        converged: bool,
        grad_norm: f64,
        /// Action after each iteration, starting with the initial path.
        trace: Vec<f64>,
        /// Per-interval speeds; their squared Riemann sum is the action.
        speeds: Vec<f64>,
        path: PathOut,
    }
    let result = DistResult {
        distance: report.distance,
        action: report.action,
        iterations: report.iterations,
        converged: report.converged,
        grad_norm: report.grad_norm,
        trace: report.trace.clone(),
        speeds: speeds.clone(),
        path: path_out(&report.path),
    };
    let table = path_table(
        "entroflow/dist.csv@v1",
        &chain,
        &report.path,
        &node_speeds(&report.path, &speeds),
    );
    output::emit(config, "entroflow/dist@v1", &result, &table)
}

#[allow(clippy::too_many_arguments)]
fn cmd_geodesic(
    config: &JobConfig,
    chain_path: &Path,
    rho0_path: &Path,
    rho1_path: &Path,
    mean_spec: &str,
    samples: usize,
    steps: usize,
    as_measure: bool,
) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let mean = MeanFunction::parse(mean_spec)?;
    let rho0 = inputs::load_density(&chain, rho0_path, as_measure)?;
    let rho1 = inputs::load_density(&chain, rho1_path, as_measure)?;
    let opts = ShootOptions {
        steps,
        samples,
        ..ShootOptions::default()
    };
    let report = geodesic_shoot(&chain, &mean, &rho0, &rho1, &opts)?;
    let speeds = path_speeds(&chain, &mean, &report.path)?;
    #[derive(Serialize)]
    struct GeodesicResult {
        distance: f64,
        /// Endpoint miss in the sup norm.
        residual: f64,
        iterations: usize,
        /// Relative spread of the squared speed; small values certify a
        /// constant-speed geodesic.
        speed_spread: f64,
        used_fallback_init: bool,
        /// Per-node speeds; constant along a geodesic.
        speeds: Vec<f64>,
        path: PathOut,
    }
    let result = GeodesicResult {
        distance: report.distance,
        residual: report.residual,
        iterations: report.iterations,
        speed_spread: report.speed_spread,
        used_fallback_init: report.used_fallback_init,
        speeds: speeds.clone(),
        path: path_out(&report.path),
    };
    let table = path_table("entroflow/geodesic.csv@v1", &chain, &report.path, &speeds);
    output::emit(config, "entroflow/geodesic@v1", &result, &table)
}

fn cmd_heat(
    config: &JobConfig,
    chain_path: &Path,
    rho0_path: &Path,
    t_grid: &[f64],
    as_measure: bool,
) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let rho0 = inputs::load_density(&chain, rho0_path, as_measure)?;
    let uniform = Density::uniform(&chain);
    #[derive(Serialize)]
    struct HeatSample {
        t: f64,
        density: Vec<f64>,
        entropy: f64,
        tv_to_equilibrium: f64,
    }
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut rows = Vec::with_capacity(t_grid.len() * chain.n());
    for &t in t_grid {
        let rho_t = chain.heat_flow(&rho0, t)?;
        for x in 0..chain.n() {
            rows.push(vec![fmt(t), chain.states()[x].clone(), fmt(rho_t.get(x))]);
        }
        samples.push(HeatSample {
            t,
            density: vec_of(rho_t.values()),
            entropy: chain.entropy(&rho_t),
            tv_to_equilibrium: chain.total_variation(&rho_t, &uniform),
        });
    }
    #[derive(Serialize)]
    struct HeatResult {
        samples: Vec<HeatSample>,
    }
    let table = Table {
        schema: "entroflow/heat.csv@v1",
        columns: cols(&["time", "state", "density"]),
        rows,
    };
    output::emit(config, "entroflow/heat@v1", &HeatResult { samples }, &table)
}

fn cmd_gradflow_check(
    config: &JobConfig,
    chain_path: &Path,
    rho0_path: &Path,
    mean_spec: &str,
    t_grid: &[f64],
    as_measure: bool,
) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let mean = MeanFunction::parse(mean_spec)?;
    let rho0 = inputs::load_density(&chain, rho0_path, as_measure)?;
    let functional = entropy_functional(&mean)?;
    let report = verify_gradient_flow(&chain, &mean, &functional, &rho0, t_grid)?;
    #[derive(Serialize)]
    struct FlowOut {
        t: f64,
        /// Sup over active edges of the potential-vs-gradient mismatch.
        edge_residual: f64,
        dissipation_rate: f64,
        /// Per step size: (dt, |finite difference of F + rate|).
        fd_errors: Vec<(f64, f64)>,
        /// Log-log slope of the errors; absent at roundoff level.
        order: Option<f64>,
    }
    #[derive(Serialize)]
    struct GradflowResult {
        max_edge_residual: f64,
        samples: Vec<FlowOut>,
    }
    let samples: Vec<FlowOut> = report
        .samples
        .iter()
        .map(|s| FlowOut {
            t: s.t,
            edge_residual: s.edge_residual,
            dissipation_rate: s.dissipation_rate,
            fd_errors: s.fd_errors.clone(),
            order: s.order,
        })
        .collect();
    let rows = samples
        .iter()
        .map(|s| {
            vec![
                fmt(s.t),
                fmt(s.edge_residual),
                fmt(s.dissipation_rate),
                s.order.map(fmt).unwrap_or_default(),
            ]
        })
        .collect();
    let result = GradflowResult {
        max_edge_residual: report.max_edge_residual,
        samples,
    };
    let table = Table {
        schema: "entroflow/gradflow-check.csv@v1",
        columns: cols(&["time", "edge_residual", "dissipation_rate", "order"]),
        rows,
    };
    output::emit(config, "entroflow/gradflow-check@v1", &result, &table)
}

fn random_positive_density(chain: &MarkovChain, rng: &mut ChaCha8Rng) -> Density {
    let raw = DVector::from_fn(chain.n(), |_, _| rng.gen_range(0.2..2.0));
    let mass = chain.pi_mass(&raw);
    Density::new(chain, raw / mass).expect("normalised positive sample")
}

fn cmd_ricci(
    config: &JobConfig,
    chain_path: &Path,
    mean_spec: &str,
    pairs: usize,
    seed: u64,
    t_samples: usize,
    resolution: usize,
) -> Result<(), CliError> {
    let chain = inputs::load_chain(chain_path)?;
    let mean = MeanFunction::parse(mean_spec)?;
    let functional = entropy_functional(&mean)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let endpoints: Vec<(Density, Density)> = (0..pairs)
        .map(|_| {
            (
                random_positive_density(&chain, &mut rng),
                random_positive_density(&chain, &mut rng),
            )
        })
        .collect();
    let opts = ProfileOptions {
        t_samples,
        resolution,
        ..ProfileOptions::default()
    };
    let profile = convexity_profile(&chain, &mean, &functional, &endpoints, &opts)?;
    #[derive(Serialize)]
    struct PairOut {
        kappa: f64,
        distance: f64,
        argmin_t: f64,
        used_fallback: bool,
    }
    #[derive(Serialize)]
    struct RicciResult {
        /// Estimated convexity constant: the minimum over all pairs.
        kappa: f64,
        skipped: usize,
        pairs: Vec<Option<PairOut>>,
    }
    let pair_outs: Vec<Option<PairOut>> = profile
        .pairs
        .iter()
        .map(|p| {
            p.as_ref().map(|e| PairOut {
                kappa: e.kappa,
                distance: e.distance,
                argmin_t: e.argmin_t,
                used_fallback: e.used_fallback,
            })
        })
        .collect();
    let rows = pair_outs
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            p.as_ref().map(|e| {
                vec![
                    i.to_string(),
                    fmt(e.kappa),
                    fmt(e.distance),
                    fmt(e.argmin_t),
                    e.used_fallback.to_string(),
                ]
            })
        })
        .collect();
    let result = RicciResult {
        kappa: profile.kappa,
        skipped: profile.skipped,
        pairs: pair_outs,
    };
    let table = Table {
        schema: "entroflow/ricci.csv@v1",
        columns: cols(&["pair", "kappa", "distance", "argmin_t", "used_fallback"]),
        rows,
    };
    output::emit(config, "entroflow/ricci@v1", &result, &table)
}

fn cmd_two_point(
    config: &JobConfig,
    p: f64,
    q: f64,
    mean_spec: &str,
    alpha: f64,
    beta: f64,
    samples: usize,
) -> Result<(), CliError> {
    let tp = TwoPointChain::new(p, q)?;
    let mean = MeanFunction::parse(mean_spec)?;
    let distance = tp.distance(&mean, alpha, beta)?;
    #[derive(Serialize)]
    struct ConvexityOut {
        kappa: f64,
        /// Coordinate attaining the infimum.
        beta: f64,
    }
    let convexity_constant = match tp.convexity_constant(&mean) {
        Ok(b) => Some(ConvexityOut {
            kappa: b.kappa,
            beta: b.beta,
        }),
        Err(entroflow::Error::MissingCapability { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let curve = tp.geodesic(&mean, alpha, beta, samples)?;
    let phis: Vec<f64> = curve
        .iter()
        .map(|&(_, b)| tp.phi(&mean, b))
        .collect::<entroflow::Result<_>>()?;
    #[derive(Serialize)]
    struct GeoSample {
        t: f64,
        beta: f64,
        /// Isometry coordinate; affine in t along a geodesic.
        phi: f64,
        /// |dphi/dt| by finite differences; constant up to inversion error.
        speed: f64,
    }
    let last = curve.len() - 1;
    let geodesic: Vec<GeoSample> = curve
        .iter()
        .enumerate()
        .map(|(j, &(t, b))| {
            let (lo, hi) = match j {
                0 => (0, 1),
                j if j == last => (last - 1, last),
                j => (j - 1, j + 1),
            };
            let speed = ((phis[hi] - phis[lo]) / (curve[hi].0 - curve[lo].0)).abs();
            GeoSample {
                t,
                beta: b,
                phi: phis[j],
                speed,
            }
        })
        .collect();
    #[derive(Serialize)]
    struct TwoPointResult {
        p: f64,
        q: f64,
        alpha: f64,
        beta: f64,
        distance: f64,
        convexity_constant: Option<ConvexityOut>,
        geodesic: Vec<GeoSample>,
    }
    let rows = geodesic
        .iter()
        .map(|s| vec![fmt(s.t), fmt(s.beta), fmt(s.phi), fmt(s.speed)])
        .collect();
    let result = TwoPointResult {
        p,
        q,
        alpha,
        beta,
        distance,
        convexity_constant,
        geodesic,
    };
    let table = Table {
        schema: "entroflow/two-point.csv@v1",
        columns: cols(&["t", "beta", "phi", "speed"]),
        rows,
    };
    output::emit(config, "entroflow/two-point@v1", &result, &table)
}

fn cmd_theta_check(
    config: &JobConfig,
    mean_spec: &str,
    samples: usize,
    seed: u64,
    box_hi: f64,
    levels: u32,
) -> Result<(), CliError> {
    let mean = MeanFunction::parse(mean_spec)?;
    let axioms = check_axioms(&mean, samples, seed, box_hi);
    let verdict = c_theta(&mean, levels);
    #[derive(Serialize)]
    struct CThetaOut {
        finite: bool,
        value: Option<f64>,
        abs_err: Option<f64>,
    }
    let c_theta_out = match verdict {
        Improper::Finite { value, abs_err } => CThetaOut {
            finite: true,
            value: Some(value),
            abs_err: Some(abs_err),
        },
        Improper::Divergent => CThetaOut {
            finite: false,
            value: None,
            abs_err: None,
        },
    };
    #[derive(Serialize)]
    struct ThetaResult<'a> {
        mean: &'a str,
        properties: entroflow::MeanProperties,
        all_passed: bool,
        axioms: &'a entroflow::AxiomReport,
        c_theta: CThetaOut,
    }
    let rows = axioms
        .checks
        .iter()
        .map(|c| {
            vec![
                c.property.to_string(),
                c.checked.to_string(),
                c.passed.to_string(),
            ]
        })
        .collect();
    let result = ThetaResult {
        mean: mean.name(),
        properties: mean.properties(),
        all_passed: axioms.all_passed(),
        axioms: &axioms,
        c_theta: c_theta_out,
    };
    let table = Table {
        schema: "entroflow/theta-check.csv@v1",
        columns: cols(&["property", "checked", "passed"]),
        rows,
    };
    output::emit(config, "entroflow/theta-check@v1", &result, &table)
}
