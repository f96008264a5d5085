//! Gradient-flow identification and geodesic-convexity estimation.
//!
//! Two structural facts are checked numerically here. First, with the
//! logarithmic mean the heat flow of the chain is the metric gradient flow
//! of the relative entropy: the continuity-equation potential of the heat
//! flow satisfies `grad psi_t = -grad f'(rho_t)` on every edge, and the
//! entropy dissipates at exactly the metric rate `[A(rho_t) psi_t, psi_t]`.
//! Second, the entropy is semiconvex along geodesics; the largest constant
//! `kappa` with
//!
//! ```text
//! F(rho_t) <= (1 - t) F(rho_0) + t F(rho_1) - (kappa / 2) t (1 - t) W(rho_0, rho_1)^2
//! ```
//!
//! is a Ricci-type curvature bound for the chain. [`convexity_profile`]
//! estimates it from below-the-chord defects along computed geodesics.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::chain::{Density, MarkovChain};
use crate::error::{Error, Result};
use crate::mean::{EntropyGenerator, MeanFunction};
use crate::metric::{self, recover_potential};
use crate::solver::{self, ShootOptions, SolverOptions};
use crate::tolerances::DEGENERATE_DISTANCE;

/// A functional on densities of the form `F(rho) = sum_x pi(x) f(rho(x))`.
#[derive(Debug, Clone)]
pub enum Functional {
    /// Relative entropy: `f(t) = t ln t` with `0 ln 0 = 0`.
    Entropy,
    /// `f` taken from an explicit generator.
    GeneralizedEntropy(EntropyGenerator),
    /// Linear potential energy: `F(rho) = sum_x pi(x) V(x) rho(x)`.
    Potential(DVector<f64>),
}

impl Functional {
    pub fn value(&self, chain: &MarkovChain, rho: &Density) -> Result<f64> {
        self.value_on(chain, rho.values())
    }

    /// Value on raw node values (as produced by the path solvers); small
    /// negative entries are treated as zero.
    pub fn value_on(&self, chain: &MarkovChain, values: &DVector<f64>) -> Result<f64> {
        if values.len() != chain.n() {
            return Err(Error::InvalidInput(
                "functional dimension does not match the chain".into(),
            ));
        }
        let mut acc = 0.0;
        for x in 0..chain.n() {
            let v = values[x].max(0.0);
            let term = match self {
                Functional::Entropy => {
                    if v > 0.0 {
                        v * v.ln()
                    } else {
                        0.0
                    }
                }
                Functional::GeneralizedEntropy(gen) => {
                    let fv = gen.f(v);
                    if !fv.is_finite() {
                        return Err(Error::BoundaryDensity { state: x });
                    }
                    fv
                }
                Functional::Potential(pot) => pot[x] * v,
            };
            acc += chain.stat(x) * term;
        }
        Ok(acc)
    }

    /// Pointwise derivative `f'(rho(x))`; the first variation of `F` in the
    /// `pi`-weighted pairing. Fails with [`Error::BoundaryDensity`] where the
    /// derivative blows up on a zero of the density.
    pub fn derivative(&self, rho: &Density) -> Result<DVector<f64>> {
        let n = rho.len();
        let mut out = DVector::zeros(n);
        for x in 0..n {
            let v = rho.get(x);
            out[x] = match self {
                Functional::Entropy => {
                    if v <= 0.0 {
                        return Err(Error::BoundaryDensity { state: x });
                    }
                    v.ln() + 1.0
                }
                Functional::GeneralizedEntropy(gen) => {
                    let d = gen.df(v);
                    if !d.is_finite() {
                        return Err(Error::BoundaryDensity { state: x });
                    }
                    d
                }
                Functional::Potential(pot) => pot[x],
            };
        }
        Ok(out)
    }
}

/// Metric gradient of `F` at `rho`, returned as a velocity (time derivative
/// of the density): `grad F = B(rho) f'(rho)`. The induced gradient flow is
/// `rhodot = -grad F`.
pub fn grad_functional(
    chain: &MarkovChain,
    mean: &MeanFunction,
    functional: &Functional,
    rho: &Density,
) -> Result<DVector<f64>> {
    let dfr = functional.derivative(rho)?;
    Ok(metric::b_apply(chain, mean, rho, &dfr))
}

/// Diagnostics for one sampled time along the heat flow.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub t: f64,
    /// Sup over active edges of `|grad psi_t + grad f'(rho_t)|`; zero exactly
    /// when the heat flow is the metric gradient flow of the functional.
    pub edge_residual: f64,
    /// Metric dissipation rate `[A(rho_t) psi_t, psi_t]`.
    pub dissipation_rate: f64,
    /// `(dt, |central difference of F along the flow + rate|)` per step size.
    pub fd_errors: Vec<(f64, f64)>,
    /// Fitted log-log slope of the finite-difference errors; `None` when the
    /// errors sit at roundoff and no order can be measured. A slope near 2
    /// confirms the dissipation identity holds exactly (the central
    /// difference itself is second order).
    pub order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientFlowReport {
    pub samples: Vec<FlowSample>,
    pub max_edge_residual: f64,
}

const FD_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
// Roundoff in a central difference of F scales like eps * |F| / dt; errors
// below a generous multiple of that carry no order information.
const FD_NOISE_EPS: f64 = 3e-14;

/// Check the gradient-flow identification along the heat flow started at
/// `rho0`, at the given strictly positive times.
///
/// At each time the continuity-equation potential `psi_t` of the heat flow
/// is recovered from the velocity `Delta rho_t` and compared edgewise with
/// `-f'(rho_t)`; the dissipation of `F` is compared with the metric rate by
/// central differences at several step sizes.
pub fn verify_gradient_flow(
    chain: &MarkovChain,
    mean: &MeanFunction,
    functional: &Functional,
    rho0: &Density,
    times: &[f64],
) -> Result<GradientFlowReport> {
    let n = chain.n();
    let mut samples = Vec::with_capacity(times.len());
    let mut max_edge_residual = 0.0f64;
    for &t in times {
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "gradient-flow checks need t > 0, got {t}"
            )));
        }
        let rho_t = chain.heat_flow(rho0, t)?;
        let velocity = chain.generator() * rho_t.values();
        let psi = recover_potential(chain, mean, &rho_t, &velocity)?;
        let dfr = functional.derivative(&rho_t)?;
        let mut edge_residual = 0.0f64;
        for x in 0..n {
            for y in 0..x {
                if chain.transition(x, y) <= 0.0 {
                    continue;
                }
                let r = (psi[x] - psi[y]) + (dfr[x] - dfr[y]);
                edge_residual = edge_residual.max(r.abs());
            }
        }
        let (a, _) = metric::onsager_values(chain, mean, rho_t.values())?;
        let rate = (&a * &psi).dot(&psi);

        let mut fd_errors = Vec::with_capacity(FD_STEPS.len());
        for &dt in &FD_STEPS {
            let fp = functional.value(chain, &chain.heat_flow(rho0, t + dt)?)?;
            let fm = functional.value(chain, &chain.heat_flow(rho0, t - dt)?)?;
            let fd = (fp - fm) / (2.0 * dt);
            fd_errors.push((dt, (fd + rate).abs()));
        }
        // Least-squares slope in log-log coordinates over the resolvable
        // errors.
        let f_scale = functional.value(chain, &rho_t)?.abs().max(1.0);
        let pts: Vec<(f64, f64)> = fd_errors
            .iter()
            .filter(|&&(dt, e)| e > FD_NOISE_EPS * f_scale / dt)
            .map(|&(dt, e)| (dt.ln(), e.ln()))
            .collect();
        let order = if pts.len() >= 2 {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            Some(sxy / sxx)
        } else {
            None
        };
        max_edge_residual = max_edge_residual.max(edge_residual);
        samples.push(FlowSample {
            t,
            edge_residual,
            dissipation_rate: rate,
            fd_errors,
            order,
        });
    }
    Ok(GradientFlowReport {
        samples,
        max_edge_residual,
    })
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    /// Interior probe times per pair: the chord defect is evaluated at
    /// `t = i / (t_samples + 1)`, `i = 1..=t_samples`.
    pub t_samples: usize,
    /// Minimum number of path intervals; rounded up to a multiple of
    /// `t_samples + 1` so that every probe time is a path node.
    pub resolution: usize,
    pub shoot: ShootOptions,
    /// Settings for the action-minimisation fallback when shooting fails.
    pub fallback: SolverOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            t_samples: 9,
            resolution: 30,
            shoot: ShootOptions::default(),
            fallback: SolverOptions {
                intervals: 30,
                max_iters: 800,
                ..SolverOptions::default()
            },
        }
    }
}

/// Convexity estimate from a single endpoint pair.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    /// Smallest chord-defect ratio over the probe times.
    pub kappa: f64,
    pub distance: f64,
    /// Probe time attaining the minimum.
    pub argmin_t: f64,
    /// True when the geodesic came from the action solver instead of
    /// shooting.
    pub used_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct ConvexityProfile {
    /// Global estimate: the minimum over all non-degenerate pairs, or
    /// infinity when every pair was skipped.
    pub kappa: f64,
    /// Per-pair estimates in input order; `None` marks a pair skipped for
    /// degenerate distance.
    pub pairs: Vec<Option<PairEstimate>>,
    pub skipped: usize,
}

/// Estimate the geodesic-convexity constant of `functional` from sampled
/// endpoint pairs.
///
/// For each pair a geodesic is computed (shooting first, action solver as
/// fallback) and the chord defect
///
/// ```text
/// kappa_hat(t) = 2 [(1 - t) F(rho_0) + t F(rho_1) - F(rho_t)] / (t (1 - t) W^2)
/// ```
///
/// is minimised over the probe grid. Pairs at degenerate distance are
/// skipped. Pairs are processed in parallel; the output order follows the
/// input.
pub fn convexity_profile(
    chain: &MarkovChain,
    mean: &MeanFunction,
    functional: &Functional,
    pairs: &[(Density, Density)],
    opts: &ProfileOptions,
) -> Result<ConvexityProfile> {
    let m = opts.t_samples + 1;
    if opts.t_samples == 0 {
        return Err(Error::InvalidInput("need at least one probe time".into()));
    }
    // Path grid: a multiple of m, even (the shooting sampler insists), and at
    // least the requested resolution.
    let mut grid = m * opts.resolution.div_ceil(m);
    if grid % 2 == 1 {
        grid *= 2;
    }
    let shoot_opts = ShootOptions {
        samples: grid,
        steps: opts.shoot.steps.max(4 * grid),
        ..opts.shoot.clone()
    };
    let fallback_opts = SolverOptions {
        intervals: grid,
        ..opts.fallback.clone()
    };

    let estimates: Vec<Option<PairEstimate>> = pairs
        .par_iter()
        .map(|(rho0, rho1)| -> Result<Option<PairEstimate>> {
            let f0 = functional.value(chain, rho0)?;
            let f1 = functional.value(chain, rho1)?;
            // Shooting needs positive endpoints; otherwise go straight to the
            // action solver.
            let shot = if rho0.is_strictly_positive() && rho1.is_strictly_positive() {
                solver::geodesic_shoot(chain, mean, rho0, rho1, &shoot_opts).ok()
            } else {
                None
            };
            let (nodes, distance, used_fallback) = match shot {
                Some(r) => (r.path.nodes, r.distance, false),
                None => {
                    let r = solver::min_action(chain, mean, rho0, rho1, &fallback_opts)?;
                    (r.path.nodes, r.distance, true)
                }
            };
            if distance < DEGENERATE_DISTANCE {
                return Ok(None);
            }
            let stride = (nodes.len() - 1) / m;
            let w2 = distance * distance;
            let mut kappa = f64::INFINITY;
            let mut argmin_t = 0.0;
            for i in 1..=opts.t_samples {
                let t = i as f64 / m as f64;
                let ft = functional.value_on(chain, &nodes[i * stride])?;
                let defect = (1.0 - t) * f0 + t * f1 - ft;
                let k = 2.0 * defect / (t * (1.0 - t) * w2);
                if k < kappa {
                    kappa = k;
                    argmin_t = t;
                }
            }
            Ok(Some(PairEstimate {
                kappa,
                distance,
                argmin_t,
                used_fallback,
            }))
        })
        .collect::<Result<_>>()?;

    let skipped = estimates.iter().filter(|e| e.is_none()).count();
    let kappa = estimates
        .iter()
        .flatten()
        .map(|e| e.kappa)
        .fold(f64::INFINITY, f64::min);
    Ok(ConvexityProfile {
        kappa,
        pairs: estimates,
        skipped,
    })
}
