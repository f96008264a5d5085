//! Geodesic solvers: action minimisation over discrete paths and
//! Hamiltonian shooting.
//!
//! A path is discretised by `N + 1` density nodes. On each interval the
//! kinetic cost is evaluated at the midpoint density `sigma_j = (rho_j +
//! rho_{j+1}) / 2` with the potential eliminated by solving
//! `A(sigma_j) psi = Pi d_j`:
//!
//! ```text
//! J(rho) = N * sum_j (Pi d_j)^T A(sigma_j)^+ (Pi d_j),    d_j = rho_{j+1} - rho_j,
//! ```
//!
//! so the squared distance is the minimum of `J` over the interior nodes,
//! subject to the per-class mass constraints and a small positivity floor.
//! The minimiser is found by projected L-BFGS with an Armijo line search.
//!
//! The shooting solver integrates the characteristic system
//!
//! ```text
//! rhodot(x) =  sum_y (psi(x) - psi(y))  K(x,y) theta(rho(x), rho(y))
//! psidot(x) = -(1/2) sum_y (psi(x) - psi(y))^2 K(x,y) d1 theta(rho(x), rho(y))
//! ```
//!
//! and Newton-iterates the initial potential until the endpoint is hit. On a
//! geodesic the speed `[A(rho_t) psi_t, psi_t]` is constant; its observed
//! spread is reported as a quality measure.

use nalgebra::DVector;

use crate::chain::{Density, MarkovChain};
use crate::error::{Error, Result};
use crate::mean::MeanFunction;
use crate::metric::{self, support_partition, SpectralPinv};
use crate::tolerances::{FD_STEP_REL, GEODESIC_ENDPOINT_TOL, SOLVER_FLOOR};

/// How the action gradient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Central finite differences with per-interval recomputation. Robust
    /// against kinks introduced by the positivity floor; the default.
    #[default]
    FiniteDifference,
    /// Closed-form gradient through the pseudo-inverse. Faster, but requires
    /// the mean's first partial to be well behaved on the whole path.
    Analytic,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Number of time intervals `N` (nodes are `N + 1`).
    pub intervals: usize,
    pub max_iters: usize,
    /// Sup-norm threshold on the projected gradient, relative to `max(1, J)`.
    pub grad_tol: f64,
    pub gradient: GradientMode,
    /// Positivity floor for interior nodes in positive-mass classes.
    pub floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            intervals: 16,
            max_iters: 600,
            grad_tol: 1e-7,
            gradient: GradientMode::FiniteDifference,
            floor: SOLVER_FLOOR,
        }
    }
}

/// A discrete path of densities with the potentials realising its cost.
#[derive(Debug, Clone)]
pub struct DiscretePath {
    /// Node times, equispaced in `[0, 1]`.
    pub times: Vec<f64>,
    /// Node density values (`N + 1` vectors).
    pub nodes: Vec<DVector<f64>>,
    /// Potentials: per interval for the action solver (`N` vectors, midpoint
    /// rule), per node for the shooting solver (`N + 1` vectors).
    pub potentials: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub distance: f64,
    pub action: f64,
    pub iterations: usize,
    /// True when the projected gradient dropped below tolerance; false on a
    /// plateau or iteration-budget exit, in which case `grad_norm` tells how
    /// far from stationarity the solver stopped.
    pub converged: bool,
    pub grad_norm: f64,
    /// Action value after each iteration, starting with the initial path.
    pub trace: Vec<f64>,
    pub path: DiscretePath,
}

/// Per-class constraint data for the interior nodes.
#[derive(Debug, Clone)]
struct ClassSpec {
    states: Vec<usize>,
    mass: f64,
    floor: f64,
}

fn class_specs(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &Density,
    floor: f64,
) -> Vec<ClassSpec> {
    if mean.c_theta_cached().is_finite() {
        // Every pair is connectable: one class carrying the whole mass.
        return vec![ClassSpec {
            states: (0..chain.n()).collect(),
            mass: 1.0,
            floor,
        }];
    }
    // Mass cannot cross inactive edges: fix the masses of the endpoint
    // support classes, and pin zero-mass classes at zero.
    let p = support_partition(chain, mean, rho0);
    p.classes
        .iter()
        .zip(p.masses.iter())
        .map(|(states, &mass)| {
            let pi_total: f64 = states.iter().map(|&x| chain.stat(x)).sum();
            let f = if mass > 0.0 {
                floor.min(0.5 * mass / pi_total)
            } else {
                0.0
            };
            ClassSpec {
                states: states.clone(),
                mass,
                floor: f,
            }
        })
        .collect()
}

/// Project one node onto the constraint set: per-class pi-weighted mass fixed,
/// entries at or above the class floor. Euclidean projection via bisection on
/// the shift multiplier.
fn project_node(chain: &MarkovChain, specs: &[ClassSpec], node: &mut DVector<f64>) {
    for spec in specs {
        if spec.mass <= 0.0 {
            for &x in &spec.states {
                node[x] = 0.0;
            }
            continue;
        }
        let g = |lambda: f64| -> f64 {
            spec.states
                .iter()
                .map(|&x| chain.stat(x) * (node[x] - lambda * chain.stat(x)).max(spec.floor))
                .sum()
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        // g is nonincreasing in lambda; expand until the target is bracketed.
        while g(lo) < spec.mass {
            lo *= 2.0;
            if lo < -1e18 {
                break;
            }
        }
        while g(hi) > spec.mass {
            hi *= 2.0;
            if hi > 1e18 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= spec.mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-18 * (1.0 + hi.abs()) {
                break;
            }
        }
        let lambda = 0.5 * (lo + hi);
        for &x in &spec.states {
            node[x] = (node[x] - lambda * chain.stat(x)).max(spec.floor);
        }
    }
}

/// Cost and potential of one interval: solve `A(sigma) psi = Pi d` and
/// return `(d^T Pi psi, psi)`.
///
/// The kernel of `A(sigma)` is spanned exactly by the support-class
/// indicators: positive-mass classes are connected through floored-positive
/// densities and never sit K-adjacent to each other, and pinned classes are
/// zero rows. Adding `alpha * sum_C chi_C chi_C^T` therefore makes the
/// system nonsingular, and for a right-hand side with vanishing per-class
/// sums the regularised solution solves the original system exactly. This is
/// much cheaper than an eigendecomposition on the solver's hot path; the
/// spectral route remains as a fallback if the factorisation fails.
fn interval_eval(
    chain: &MarkovChain,
    mean: &MeanFunction,
    specs: &[ClassSpec],
    left: &DVector<f64>,
    right: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let n = chain.n();
    let sigma = DVector::from_fn(n, |x, _| 0.5 * (left[x] + right[x]));
    let (mut m, _) = metric::onsager_values(chain, mean, &sigma)?;
    let r = DVector::from_fn(n, |x, _| chain.stat(x) * (right[x] - left[x]));
    let alpha = m.diagonal().amax().max(1e-12);
    for spec in specs {
        for &x in &spec.states {
            for &y in &spec.states {
                m[(x, y)] += alpha;
            }
        }
    }
    let psi = match m.lu().solve(&r) {
        Some(psi) => psi,
        None => {
            let (a, _) = metric::onsager_values(chain, mean, &sigma)?;
            SpectralPinv::new(a).apply(&r)
        }
    };
    Ok((r.dot(&psi), psi))
}

struct PathState<'a> {
    chain: &'a MarkovChain,
    mean: &'a MeanFunction,
    specs: &'a [ClassSpec],
    nodes: Vec<DVector<f64>>,
    /// Per-interval `(cost, potential)` pairs.
    evals: Vec<(f64, DVector<f64>)>,
}

impl<'a> PathState<'a> {
    fn new(
        chain: &'a MarkovChain,
        mean: &'a MeanFunction,
        specs: &'a [ClassSpec],
        nodes: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let evals = (0..nodes.len() - 1)
            .map(|j| interval_eval(chain, mean, specs, &nodes[j], &nodes[j + 1]))
            .collect::<Result<_>>()?;
        Ok(PathState {
            chain,
            mean,
            specs,
            nodes,
            evals,
        })
    }

    fn action(&self) -> f64 {
        let n_int = self.evals.len() as f64;
        n_int * self.evals.iter().map(|(c, _)| c).sum::<f64>()
    }
}

/// Central finite-difference gradient of the action in the interior node
/// coordinates; only the two intervals adjacent to a perturbed coordinate are
/// recomputed.
fn fd_gradient(state: &PathState<'_>) -> Result<Vec<DVector<f64>>> {
    let n = state.chain.n();
    let n_nodes = state.nodes.len();
    let n_int = (n_nodes - 1) as f64;
    let mut grad = Vec::with_capacity(n_nodes - 2);
    for j in 1..n_nodes - 1 {
        let mut g = DVector::zeros(n);
        for x in 0..n {
            let h = FD_STEP_REL * state.nodes[j][x].abs().max(1e-3);
            let probe = |v: f64| -> Result<f64> {
                let mut node = state.nodes[j].clone();
                node[x] = v;
                let left =
                    interval_eval(state.chain, state.mean, state.specs, &state.nodes[j - 1], &node)?
                        .0;
                let right =
                    interval_eval(state.chain, state.mean, state.specs, &node, &state.nodes[j + 1])?
                        .0;
                Ok(left + right)
            };
            let base = state.nodes[j][x];
            let plus = probe(base + h)?;
            let minus = probe(base - h)?;
            g[x] = n_int * (plus - minus) / (2.0 * h);
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Closed-form gradient through the stored interval potentials: for each
/// interior node `j`,
///
/// ```text
/// dJ/drho_j(x) = N * [ 2 pi(x) (phi_{j-1}(x) - phi_j(x))
///                      - (G_{j-1}(x) + G_j(x)) / 2 ],
/// G_k(x) = pi(x) sum_y (phi_k(x) - phi_k(y))^2 K(x,y) d1theta(sigma_k(x), sigma_k(y)),
/// ```
///
/// where `phi_k` solves `A(sigma_k) phi_k = Pi d_k`. No extra linear solves
/// are needed: the potentials come with the interval costs.
fn analytic_gradient(state: &PathState<'_>) -> Result<Vec<DVector<f64>>> {
    let chain = state.chain;
    let mean = state.mean;
    let n = chain.n();
    let n_nodes = state.nodes.len();
    let n_int = (n_nodes - 1) as f64;
    // Per-interval sensitivities of the quadratic form to the midpoint.
    let mut gs = Vec::with_capacity(n_nodes - 1);
    for j in 0..n_nodes - 1 {
        let phi = &state.evals[j].1;
        let sigma =
            DVector::from_fn(n, |x, _| 0.5 * (state.nodes[j][x] + state.nodes[j + 1][x]));
        let mut g = DVector::zeros(n);
        for x in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                if y == x {
                    continue;
                }
                let k = chain.transition(x, y);
                if k <= 0.0 {
                    continue;
                }
                let d = phi[x] - phi[y];
                acc += d * d * k * mean.d1(sigma[x].max(0.0), sigma[y].max(0.0));
            }
            g[x] = chain.stat(x) * acc;
        }
        gs.push(g);
    }
    let mut grad = Vec::with_capacity(n_nodes - 2);
    for j in 1..n_nodes - 1 {
        let g = DVector::from_fn(n, |x, _| {
            n_int
                * (2.0 * chain.stat(x) * (state.evals[j - 1].1[x] - state.evals[j].1[x])
                    - 0.5 * (gs[j - 1][x] + gs[j][x]))
        });
        grad.push(g);
    }
    Ok(grad)
}

fn flatten(vs: &[DVector<f64>]) -> DVector<f64> {
    let n = vs.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(vs.len() * n);
    for (j, v) in vs.iter().enumerate() {
        for x in 0..n {
            out[j * n + x] = v[x];
        }
    }
    out
}

fn unflatten(v: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    (0..v.len() / n)
        .map(|j| DVector::from_fn(n, |x, _| v[j * n + x]))
        .collect()
}

/// Minimise the discrete action between two densities.
///
/// Fails fast with [`Error::InfeasibleEndpoints`] when the endpoints are at
/// infinite distance (divergent mean normalisation with mismatched class
/// masses). Identical endpoints short-circuit to a zero-cost constant path.
pub fn min_action(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &Density,
    rho1: &Density,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    let n = chain.n();
    if rho0.len() != n || rho1.len() != n {
        return Err(Error::InvalidInput(
            "density dimension does not match the chain".into(),
        ));
    }
    if opts.intervals == 0 {
        return Err(Error::InvalidInput("need at least one interval".into()));
    }
    metric::finiteness(chain, mean, rho0, rho1)?;
    let n_int = opts.intervals;
    let times: Vec<f64> = (0..=n_int).map(|k| k as f64 / n_int as f64).collect();

    let max_diff = (rho1.values() - rho0.values()).amax();
    if max_diff < 1e-14 {
        let nodes: Vec<_> = (0..=n_int).map(|_| rho0.values().clone()).collect();
        let potentials = vec![DVector::zeros(n); n_int];
        return Ok(SolverReport {
            distance: 0.0,
            action: 0.0,
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            trace: vec![0.0],
            path: DiscretePath {
                times,
                nodes,
                potentials,
            },
        });
    }

    let specs = class_specs(chain, mean, rho0, opts.floor);

    // Linear initial path, projected onto the constraint set.
    let mut nodes: Vec<DVector<f64>> = times
        .iter()
        .map(|&t| {
            DVector::from_fn(n, |x, _| (1.0 - t) * rho0.get(x) + t * rho1.get(x))
        })
        .collect();
    for node in nodes.iter_mut().take(n_int).skip(1) {
        project_node(chain, &specs, node);
    }

    let mut state = PathState::new(chain, mean, &specs, nodes)?;
    let mut action = state.action();
    if !action.is_finite() {
        return Err(Error::Stalled {
            iterations: 0,
            best: f64::NAN,
        });
    }
    let mut trace = vec![action];

    // Projected L-BFGS with Armijo backtracking.
    let mem = 8usize;
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut prev_x: Option<DVector<f64>> = None;
    let mut prev_g: Option<DVector<f64>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut plateau = 0usize;
    let mut failures = 0usize;

    // Projected-gradient stationarity measure around the current iterate.
    let project_all = |vs: &mut [DVector<f64>]| {
        for v in vs.iter_mut() {
            project_node(chain, &specs, v);
        }
    };

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let grad_nodes = match opts.gradient {
            GradientMode::FiniteDifference => fd_gradient(&state)?,
            GradientMode::Analytic => analytic_gradient(&state)?,
        };
        let g = flatten(&grad_nodes);
        let x = flatten(&state.nodes[1..n_int]);

        // Stationarity: distance moved by a unit projected-gradient step.
        let mut probe_nodes = unflatten(&(&x - &g), n);
        project_all(&mut probe_nodes);
        let pg = &x - &flatten(&probe_nodes);
        grad_norm = pg.amax() / action.max(1.0);
        if grad_norm <= opts.grad_tol {
            converged = true;
            trace.push(action);
            break;
        }

        // L-BFGS two-loop recursion.
        let mut d = -g.clone();
        if !s_hist.is_empty() {
            let k = s_hist.len();
            let mut alphas = vec![0.0; k];
            for i in (0..k).rev() {
                let rho_i = 1.0 / y_hist[i].dot(&s_hist[i]);
                alphas[i] = rho_i * s_hist[i].dot(&d);
                d -= &y_hist[i] * alphas[i];
            }
            let gamma = s_hist[k - 1].dot(&y_hist[k - 1]) / y_hist[k - 1].dot(&y_hist[k - 1]);
            d *= gamma;
            for i in 0..k {
                let rho_i = 1.0 / y_hist[i].dot(&s_hist[i]);
                let beta = rho_i * y_hist[i].dot(&d);
                d += &s_hist[i] * (alphas[i] - beta);
            }
        }
        if d.dot(&g) >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            d = -g.clone();
        }

        // Armijo backtracking on the projected trial point.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial_flat = &x + &d * alpha;
            let mut trial_nodes = unflatten(&trial_flat, n);
            project_all(&mut trial_nodes);
            let step = flatten(&trial_nodes) - &x;
            let predicted = g.dot(&step);
            let mut trial_full = Vec::with_capacity(n_int + 1);
            trial_full.push(state.nodes[0].clone());
            trial_full.extend(trial_nodes.iter().cloned());
            trial_full.push(state.nodes[n_int].clone());
            let trial_state = PathState::new(chain, mean, &specs, trial_full)?;
            let trial_action = trial_state.action();
            if trial_action.is_finite() && trial_action <= action + 1e-4 * predicted {
                // Curvature pair for L-BFGS before moving.
                if let (Some(px), Some(pg_old)) = (prev_x.take(), prev_g.take()) {
                    let s = &x - &px;
                    let yv = &g - &pg_old;
                    if s.dot(&yv) > 1e-12 * s.norm() * yv.norm() {
                        s_hist.push(s);
                        y_hist.push(yv);
                        if s_hist.len() > mem {
                            s_hist.remove(0);
                            y_hist.remove(0);
                        }
                    }
                }
                prev_x = Some(x.clone());
                prev_g = Some(g.clone());
                let rel_drop = (action - trial_action) / action.max(1e-300);
                state = trial_state;
                action = trial_action;
                accepted = true;
                if rel_drop < 1e-12 {
                    plateau += 1;
                } else {
                    plateau = 0;
                }
                break;
            }
            alpha *= 0.5;
        }
        trace.push(action);
        if !accepted {
            failures += 1;
            s_hist.clear();
            y_hist.clear();
            if failures >= 3 {
                break;
            }
        } else {
            failures = 0;
        }
        if plateau >= 8 {
            break;
        }
    }

    if !action.is_finite() {
        return Err(Error::Stalled {
            iterations,
            best: action,
        });
    }

    // Final per-interval potentials at the optimum; the continuity-equation
    // potential carries the 1/dt scaling.
    let potentials: Vec<_> = state
        .evals
        .iter()
        .map(|(_, psi)| psi.clone() * n_int as f64)
        .collect();
    Ok(SolverReport {
        distance: action.max(0.0).sqrt(),
        action,
        iterations,
        converged,
        grad_norm,
        trace,
        path: DiscretePath {
            times,
            nodes: state.nodes,
            potentials,
        },
    })
}

/// Speed profile `sqrt([A(rho) psi, psi])` of a discrete path, one value per
/// potential. The metric matrix is evaluated where the potential lives: at
/// the interval midpoint when potentials are per interval (action solver,
/// `N` of them) and at the node when they are per node (shooting solver,
/// `N + 1`). On a geodesic the profile is constant and integrates to the
/// distance.
pub fn path_speeds(
    chain: &MarkovChain,
    mean: &MeanFunction,
    path: &DiscretePath,
) -> Result<Vec<f64>> {
    let per_interval = path.potentials.len() + 1 == path.nodes.len();
    if !per_interval && path.potentials.len() != path.nodes.len() {
        return Err(Error::InvalidInput(format!(
            "path has {} potentials for {} nodes",
            path.potentials.len(),
            path.nodes.len()
        )));
    }
    let mut speeds = Vec::with_capacity(path.potentials.len());
    for (j, psi) in path.potentials.iter().enumerate() {
        let carrier = if per_interval {
            (&path.nodes[j] + &path.nodes[j + 1]) * 0.5
        } else {
            path.nodes[j].clone()
        };
        let (a, _) = metric::onsager_values(chain, mean, &carrier)?;
        speeds.push((&a * psi).dot(psi).max(0.0).sqrt());
    }
    Ok(speeds)
}

#[derive(Debug, Clone)]
pub struct ShootOptions {
    /// Fixed RK4 steps for each trajectory integration (rounded to a
    /// multiple of `samples`).
    pub steps: usize,
    /// Equispaced trajectory samples kept in the returned path (`samples + 1`
    /// nodes including both endpoints).
    pub samples: usize,
    pub max_newton: usize,
    pub endpoint_tol: f64,
    /// Seed the initial potential from a coarse action minimisation when the
    /// one-shot linearisation fails to converge.
    pub action_fallback: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            steps: 200,
            samples: 32,
            max_newton: 40,
            endpoint_tol: GEODESIC_ENDPOINT_TOL,
            action_fallback: true,
        }
    }
}

/// Trajectory nodes, potentials, endpoint residual, and sup-norm miss of a
/// single shot.
type ShotOutcome = (Vec<DVector<f64>>, Vec<DVector<f64>>, DVector<f64>, f64);

#[derive(Debug, Clone)]
pub struct ShootReport {
    pub distance: f64,
    /// Endpoint miss in the sup norm.
    pub residual: f64,
    pub iterations: usize,
    /// Relative spread of the squared speed along the trajectory; small
    /// values certify a constant-speed geodesic.
    pub speed_spread: f64,
    pub used_fallback_init: bool,
    pub path: DiscretePath,
}

/// Right-hand side of the characteristic system.
fn characteristic_rhs(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &DVector<f64>,
    psi: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = chain.n();
    let mut drho = DVector::zeros(n);
    let mut dpsi = DVector::zeros(n);
    for x in 0..n {
        let mut a = 0.0;
        let mut b = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let k = chain.transition(x, y);
            if k <= 0.0 {
                continue;
            }
            let d = psi[x] - psi[y];
            let (sx, sy) = (rho[x].max(0.0), rho[y].max(0.0));
            a += d * k * mean.value(sx, sy);
            b += d * d * k * mean.d1(sx, sy);
        }
        drho[x] = a;
        dpsi[x] = -0.5 * b;
    }
    (drho, dpsi)
}

/// Integrate the characteristic system from `(rho0, psi0)` over `[0, 1]`,
/// sampling `samples + 1` equispaced nodes.
fn integrate_characteristics(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &DVector<f64>,
    psi0: &DVector<f64>,
    steps: usize,
    samples: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let h = 1.0 / steps as f64;
    let mut rho = rho0.clone();
    let mut psi = psi0.clone();
    let stride = steps / samples;
    let mut nodes = vec![rho.clone()];
    let mut pots = vec![psi.clone()];
    for step in 0..steps {
        let (k1r, k1p) = characteristic_rhs(chain, mean, &rho, &psi);
        let (k2r, k2p) = characteristic_rhs(
            chain,
            mean,
            &(&rho + &k1r * (h / 2.0)),
            &(&psi + &k1p * (h / 2.0)),
        );
        let (k3r, k3p) = characteristic_rhs(
            chain,
            mean,
            &(&rho + &k2r * (h / 2.0)),
            &(&psi + &k2p * (h / 2.0)),
        );
        let (k4r, k4p) =
            characteristic_rhs(chain, mean, &(&rho + &k3r * h), &(&psi + &k3p * h));
        rho += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        psi += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        if (step + 1) % stride == 0 && nodes.len() <= samples {
            nodes.push(rho.clone());
            pots.push(psi.clone());
        }
    }
    (nodes, pots)
}

/// Shoot a geodesic between two strictly positive densities.
///
/// The initial potential is linearised from the midpoint Onsager matrix and
/// corrected by a damped Newton iteration on the endpoint residual; when that
/// fails and `action_fallback` is set, a coarse [`min_action`] run seeds a
/// fresh start. Diverging iterations end in [`Error::ShootingDiverged`].
pub fn geodesic_shoot(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &Density,
    rho1: &Density,
    opts: &ShootOptions,
) -> Result<ShootReport> {
    let n = chain.n();
    if !rho0.is_strictly_positive() || !rho1.is_strictly_positive() {
        return Err(Error::Domain(
            "shooting needs strictly positive endpoints; use the action solver for \
             densities with zeros"
                .into(),
        ));
    }
    metric::finiteness(chain, mean, rho0, rho1)?;
    // Simpson weights for the action integral need an even interval count.
    let samples = opts.samples.max(2) + opts.samples.max(2) % 2;
    let steps = opts.steps.max(samples) / samples * samples;

    // Basis of the potential search space: mean-zero directions (potentials
    // act through differences only). Strictly positive densities on an
    // irreducible chain form a single support class.
    let dim = n - 1;
    let embed = |z: &DVector<f64>| -> DVector<f64> {
        // z lives in R^{n-1}; lift to mean-zero potentials.
        let mut psi = DVector::zeros(n);
        for i in 0..dim {
            psi[i] = z[i];
        }
        let mean_v = psi.sum() / n as f64;
        psi.add_scalar_mut(-mean_v);
        psi
    };
    // Endpoint residual in mass coordinates, dropping one redundant entry
    // (total pi-mass is conserved).
    let residual_of = |nodes: &[DVector<f64>]| -> DVector<f64> {
        let last = nodes.last().unwrap();
        DVector::from_fn(dim, |x, _| chain.stat(x) * (last[x] - rho1.get(x)))
    };

    let shoot = |z: &DVector<f64>| -> ShotOutcome {
        let psi0 = embed(z);
        let (nodes, pots) =
            integrate_characteristics(chain, mean, rho0.values(), &psi0, steps, samples);
        let r = residual_of(&nodes);
        let miss = nodes
            .last()
            .unwrap()
            .iter()
            .zip(rho1.values().iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        (nodes, pots, r, miss)
    };

    // Linearised warm start: A(rhobar) psi = Pi (rho1 - rho0).
    let warm_start = || -> Result<DVector<f64>> {
        let sigma = DVector::from_fn(n, |x, _| 0.5 * (rho0.get(x) + rho1.get(x)));
        let (a, _) = metric::onsager_values(chain, mean, &sigma)?;
        let pinv = SpectralPinv::new(a);
        let rhs = DVector::from_fn(n, |x, _| chain.stat(x) * (rho1.get(x) - rho0.get(x)));
        let psi = pinv.apply(&rhs);
        Ok(DVector::from_fn(dim, |i, _| psi[i]))
    };

    let newton = |z0: DVector<f64>, budget: usize| -> (DVector<f64>, f64, usize) {
        let mut z = z0;
        let (_, _, mut r, mut miss) = shoot(&z);
        let mut iters = 0;
        for _ in 0..budget {
            if miss <= opts.endpoint_tol {
                break;
            }
            iters += 1;
            // Finite-difference Jacobian of the residual in z.
            let mut jac = nalgebra::DMatrix::zeros(dim, dim);
            let h = 1e-6 * (1.0 + z.amax());
            for i in 0..dim {
                let mut zp = z.clone();
                zp[i] += h;
                let (_, _, rp, _) = shoot(&zp);
                let col = (rp - &r) / h;
                jac.set_column(i, &col);
            }
            let step = match jac.lu().solve(&r) {
                Some(s) => s,
                None => break,
            };
            // Damped update: accept the first shrinking residual.
            let mut improved = false;
            let mut t = 1.0;
            for _ in 0..20 {
                let zt = &z - &step * t;
                let (_, _, rt, mt) = shoot(&zt);
                if mt < miss {
                    z = zt;
                    r = rt;
                    miss = mt;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (z, miss, iters)
    };

    let mut used_fallback = false;
    let (mut z_best, mut miss, mut iters) = newton(warm_start()?, opts.max_newton);
    if miss > opts.endpoint_tol && opts.action_fallback {
        used_fallback = true;
        // Seed from a coarse action minimisation: its first-interval
        // potential approximates the geodesic's initial potential.
        let coarse = min_action(
            chain,
            mean,
            rho0,
            rho1,
            &SolverOptions {
                intervals: 16,
                max_iters: 300,
                ..SolverOptions::default()
            },
        )?;
        let psi0 = &coarse.path.potentials[0];
        let z0 = DVector::from_fn(dim, |i, _| psi0[i]);
        let (z2, m2, it2) = newton(z0, opts.max_newton);
        iters += it2;
        if m2 < miss {
            z_best = z2;
            miss = m2;
        }
    }
    if miss > opts.endpoint_tol {
        return Err(Error::ShootingDiverged {
            iterations: iters,
            best_residual: miss,
        });
    }

    let (nodes, pots, _, _) = shoot(&z_best);
    // Speed along the trajectory; constant on a geodesic.
    let mut speeds = Vec::with_capacity(nodes.len());
    for (rho, psi) in nodes.iter().zip(pots.iter()) {
        let (a, _) = metric::onsager_values(chain, mean, rho)?;
        speeds.push((&a * psi).dot(psi));
    }
    let avg = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let spread = speeds
        .iter()
        .fold(0.0f64, |m, &s| m.max((s - avg).abs()))
        / avg.max(1e-300);
    // Simpson weights over the equispaced samples for the action integral.
    let m = speeds.len() - 1;
    let mut action = 0.0;
    for (i, &s) in speeds.iter().enumerate() {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        action += w * s.sqrt();
    }
    let distance = action / (3.0 * m as f64);
    let times = (0..=m).map(|k| k as f64 / m as f64).collect();
    Ok(ShootReport {
        distance,
        residual: miss,
        iterations: iters,
        speed_spread: spread,
        used_fallback_init: used_fallback,
        path: DiscretePath {
            times,
            nodes,
            potentials: pots,
        },
    })
}
