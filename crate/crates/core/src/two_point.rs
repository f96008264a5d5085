//! Closed forms on the two-point chain, used as ground truth for the general
//! solvers.
//!
//! The chain has kernel rows `(1-p, p)` and `(q, 1-q)` and stationary
//! distribution `pi = (q, p) / (p + q)`. Densities form the one-parameter
//! family
//!
//! ```text
//! rho^beta = ( (p+q)(1-beta) / (2q),  (p+q)(1+beta) / (2p) ),   beta in [-1, 1],
//! ```
//!
//! with `beta = -1` the point mass at the first state and `beta = +1` at the
//! second. On this family the transportation metric reduces to a
//! one-dimensional length: with `rho_hat(beta) = theta(rho^beta)` evaluated
//! across the single edge,
//!
//! ```text
//! W(rho^a, rho^b) = integral from a to b of c / sqrt(rho_hat(s)) ds,
//! c = (1/2) sqrt(1/p + 1/q),
//! ```
//!
//! so `phi(beta) = integral from 0 to beta` is an isometry onto an interval.
//! Geodesics, the metric gradient of a functional, curvature along the
//! family, and the evolution variational inequality all become explicit,
//! which is what makes this chain the reference oracle.

use crate::chain::{Density, MarkovChain};
use crate::error::{Error, Result};
use crate::mean::{EntropyGenerator, MeanFunction};
use crate::quad::{self, Improper};
use crate::tolerances::QUAD_TOL;

use nalgebra::{DMatrix, DVector};

/// Ladder depth for the improper integrals toward the Dirac endpoints.
const LADDER_MAX_LEVEL: u32 = 40;

/// Two-point chain with flip rates `p` (first to second state) and `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointChain {
    p: f64,
    q: f64,
}

/// Infimum of the curvature term along the density family, with its location.
#[derive(Debug, Clone, Copy)]
pub struct ConvexityBound {
    pub kappa: f64,
    pub beta: f64,
}

impl TwoPointChain {
    /// Rates must satisfy `0 < p <= 1` and `0 < q <= 1` so the kernel rows
    /// stay stochastic.
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "two-point rate {name} = {v} outside (0, 1]"
                )));
            }
        }
        Ok(TwoPointChain { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Stationary distribution `(q, p) / (p + q)`.
    pub fn pi(&self) -> (f64, f64) {
        let s = self.p + self.q;
        (self.q / s, self.p / s)
    }

    /// Densities `(rho(a), rho(b))` of the family member `rho^beta`.
    pub fn endpoint_densities(&self, beta: f64) -> (f64, f64) {
        let s = self.p + self.q;
        (
            s * (1.0 - beta) / (2.0 * self.q),
            s * (1.0 + beta) / (2.0 * self.p),
        )
    }

    /// Inverse of [`Self::endpoint_densities`]: the family parameter of a
    /// density, `beta = pi(b) rho(b) - pi(a) rho(a)`.
    pub fn beta_of(&self, rho_a: f64, rho_b: f64) -> f64 {
        let (pa, pb) = self.pi();
        pb * rho_b - pa * rho_a
    }

    /// Fixed point of the flow, `betabar = (p - q) / (p + q)`.
    pub fn equilibrium_beta(&self) -> f64 {
        (self.p - self.q) / (self.p + self.q)
    }

    /// Heat flow in family coordinates: `beta` relaxes to the equilibrium
    /// value exponentially at rate `p + q`.
    pub fn heat_beta(&self, beta0: f64, t: f64) -> f64 {
        let bar = self.equilibrium_beta();
        bar + (beta0 - bar) * (-(self.p + self.q) * t).exp()
    }

    /// The mean of the two endpoint densities, `theta(rho(a), rho(b))`.
    pub fn rho_hat(&self, mean: &MeanFunction, beta: f64) -> f64 {
        let (l, r) = self.endpoint_densities(beta);
        mean.value(l, r)
    }

    /// Length element prefactor `c = (1/2) sqrt(1/p + 1/q)`.
    pub fn c_factor(&self) -> f64 {
        0.5 * (1.0 / self.p + 1.0 / self.q).sqrt()
    }

    /// Derivative of the isometry, `phi'(beta) = c / sqrt(rho_hat(beta))`.
    pub fn phi_prime(&self, mean: &MeanFunction, beta: f64) -> f64 {
        self.c_factor() / self.rho_hat(mean, beta).sqrt()
    }

    /// The isometry `phi(beta) = integral from 0 to beta of c / sqrt(rho_hat)`.
    ///
    /// At the Dirac endpoints `beta = +-1` the integrand may blow up; the
    /// integral is then computed on a dyadic ladder and declared infinite,
    /// [`Error::InfiniteDistance`], when the tail fails to contract. The
    /// witness state is the one whose density vanishes.
    pub fn phi(&self, mean: &MeanFunction, beta: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!(
                "family parameter beta = {beta} outside [-1, 1]"
            )));
        }
        let f = |b: f64| self.phi_prime(mean, b);
        if beta == 0.0 {
            Ok(0.0)
        } else if beta == 1.0 {
            match quad::improper_toward_one(&f, 0.0, LADDER_MAX_LEVEL, QUAD_TOL) {
                Improper::Finite { value, .. } => Ok(value),
                Improper::Divergent => Err(Error::InfiniteDistance { witness: Some(0) }),
            }
        } else if beta == -1.0 {
            let g = |u: f64| self.phi_prime(mean, -u);
            match quad::improper_toward_one(&g, 0.0, LADDER_MAX_LEVEL, QUAD_TOL) {
                Improper::Finite { value, .. } => Ok(-value),
                Improper::Divergent => Err(Error::InfiniteDistance { witness: Some(1) }),
            }
        } else if beta > 0.0 {
            Ok(quad::adaptive(&f, 0.0, beta, QUAD_TOL).0)
        } else {
            Ok(-quad::adaptive(&f, beta, 0.0, QUAD_TOL).0)
        }
    }

    /// Transportation distance between two family members.
    pub fn distance(&self, mean: &MeanFunction, beta0: f64, beta1: f64) -> Result<f64> {
        Ok((self.phi(mean, beta1)? - self.phi(mean, beta0)?).abs())
    }

    /// Constant-speed geodesic from `rho^beta0` to `rho^beta1`, sampled at
    /// `samples >= 2` equispaced times in `[0, 1]`.
    ///
    /// Computed by inverting the isometry: `gamma_t = phi^{-1}((1-t) phi(beta0)
    /// + t phi(beta1))`, solved by bisection on the monotone `phi`.
    pub fn geodesic(
        &self,
        mean: &MeanFunction,
        beta0: f64,
        beta1: f64,
        samples: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if samples < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        let u0 = self.phi(mean, beta0)?;
        let u1 = self.phi(mean, beta1)?;
        let (mut lo, mut hi) = if beta0 <= beta1 {
            (beta0, beta1)
        } else {
            (beta1, beta0)
        };
        let mut out = Vec::with_capacity(samples);
        for k in 0..samples {
            let t = k as f64 / (samples - 1) as f64;
            let target = (1.0 - t) * u0 + t * u1;
            let beta = if k == 0 {
                beta0
            } else if k == samples - 1 {
                beta1
            } else {
                // phi is strictly increasing; bisect inside the bracket.
                let (mut a, mut b) = (lo, hi);
                for _ in 0..64 {
                    let mid = 0.5 * (a + b);
                    if self.phi(mean, mid)? <= target {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            };
            // Successive targets are monotone, so the bracket can only shrink
            // on the side already passed.
            if beta0 <= beta1 {
                lo = beta.min(hi);
            } else {
                hi = beta.max(lo);
            }
            out.push((t, beta));
        }
        Ok(out)
    }

    /// The value of a density functional `F(rho) = sum_x pi(x) f(rho(x))` on
    /// the family. Requires a strictly interior `beta` so that both densities
    /// are positive.
    pub fn f_functional(&self, gen: &EntropyGenerator, beta: f64) -> Result<f64> {
        let (l, r) = self.endpoint_densities(beta);
        if l <= 0.0 {
            return Err(Error::BoundaryDensity { state: 0 });
        }
        if r <= 0.0 {
            return Err(Error::BoundaryDensity { state: 1 });
        }
        let (pa, pb) = self.pi();
        Ok(pa * gen.f(l) + pb * gen.f(r))
    }

    /// Second derivative of the functional in arc-length coordinates at
    /// `beta`: the curvature term whose infimum over the family is the
    /// convexity constant of the chain.
    ///
    /// With `u = phi(beta)` and `G(u) = F(beta(u))`,
    ///
    /// ```text
    /// G'' = (4 p q / (p + q)) * ( rho_hat F'' + F' rho_hat' / 2 ),
    /// F'  = (f'(r) - f'(l)) / 2,
    /// F'' = ((p+q)/4) (f''(r)/p + f''(l)/q),
    /// ```
    ///
    /// where `l, r` are the endpoint densities. This uses only `theta`, its
    /// first partial, and the entropy generator, so it is valid whether or
    /// not the pair `(theta, f)` makes the heat flow a gradient flow.
    pub fn curvature_at(&self, mean: &MeanFunction, beta: f64) -> Result<f64> {
        let gen = mean.require_entropy_generator()?;
        if beta.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "curvature needs beta strictly inside (-1, 1), got {beta}"
            )));
        }
        let (p, q) = (self.p, self.q);
        let (l, r) = self.endpoint_densities(beta);
        let rho_hat = mean.value(l, r);
        // d rho_hat / d beta via both partials; by symmetry of theta the
        // second partial is d1 with swapped arguments.
        let dl = -(p + q) / (2.0 * q);
        let dr = (p + q) / (2.0 * p);
        let rho_hat_d = mean.d1(l, r) * dl + mean.d1(r, l) * dr;
        let f1 = 0.5 * (gen.df(r) - gen.df(l));
        let f2 = 0.25 * (p + q) * (gen.d2f(r) / p + gen.d2f(l) / q);
        Ok(4.0 * p * q / (p + q) * (rho_hat * f2 + 0.5 * f1 * rho_hat_d))
    }

    /// Infimum of [`Self::curvature_at`] over the family, located by a coarse
    /// scan (uniform plus dyadically edge-refined) and golden-section
    /// refinement.
    pub fn convexity_constant(&self, mean: &MeanFunction) -> Result<ConvexityBound> {
        let mut grid: Vec<f64> = Vec::new();
        let n = 401;
        for i in 0..n {
            grid.push(-0.998 + 1.996 * i as f64 / (n - 1) as f64);
        }
        for j in 3..=45 {
            let b = 1.0 - 0.5f64.powi(j);
            grid.push(b);
            grid.push(-b);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = (f64::INFINITY, 0.0);
        let mut best_idx = 0;
        for (i, &b) in grid.iter().enumerate() {
            let k = self.curvature_at(mean, b)?;
            if k < best.0 {
                best = (k, b);
                best_idx = i;
            }
        }
        // Golden-section inside the bracketing neighbours, when interior.
        if best_idx > 0 && best_idx + 1 < grid.len() {
            let (mut a, mut b) = (grid[best_idx - 1], grid[best_idx + 1]);
            let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
            let mut x1 = b - inv_phi * (b - a);
            let mut x2 = a + inv_phi * (b - a);
            let mut k1 = self.curvature_at(mean, x1)?;
            let mut k2 = self.curvature_at(mean, x2)?;
            for _ in 0..90 {
                if k1 <= k2 {
                    b = x2;
                    x2 = x1;
                    k2 = k1;
                    x1 = b - inv_phi * (b - a);
                    k1 = self.curvature_at(mean, x1)?;
                } else {
                    a = x1;
                    x1 = x2;
                    k1 = k2;
                    x2 = a + inv_phi * (b - a);
                    k2 = self.curvature_at(mean, x2)?;
                }
            }
            let mid = 0.5 * (a + b);
            let km = self.curvature_at(mean, mid)?;
            if km < best.0 {
                best = (km, mid);
            }
        }
        Ok(ConvexityBound {
            kappa: best.0,
            beta: best.1,
        })
    }

    /// Residual of the gradient-flow identity along the heat flow at time
    /// `t > 0`: compares the observed speed `d/dt phi(beta_t)` (central
    /// difference) with the metric gradient of the functional,
    /// `-(f'(r) - f'(l)) / (2 phi'(beta_t))`.
    pub fn gradient_flow_residual(
        &self,
        mean: &MeanFunction,
        beta0: f64,
        t: f64,
    ) -> Result<f64> {
        let gen = mean.require_entropy_generator()?.clone();
        let dt = 1e-4;
        if t <= dt {
            return Err(Error::Domain(format!("need t > {dt}, got {t}")));
        }
        let bm = self.heat_beta(beta0, t - dt);
        let bp = self.heat_beta(beta0, t + dt);
        let lhs = (self.phi(mean, bp)? - self.phi(mean, bm)?) / (2.0 * dt);
        let b = self.heat_beta(beta0, t);
        let (l, r) = self.endpoint_densities(b);
        let rhs = -(gen.df(r) - gen.df(l)) / (2.0 * self.phi_prime(mean, b));
        Ok((lhs - rhs).abs())
    }

    /// Evolution variational inequality with zero modulus along the heat
    /// flow: returns `(1/2) d/dt W^2(rho_t, rho^y) - (F(y) - F(rho_t))`,
    /// which is nonpositive (up to roundoff) whenever the functional is
    /// geodesically convex and the flow is its gradient flow.
    ///
    /// The time derivative is analytic, not a difference quotient:
    /// `(phi(beta_t) - phi(y)) phi'(beta_t) betadot_t`.
    pub fn evi_residual(
        &self,
        mean: &MeanFunction,
        beta0: f64,
        y: f64,
        t: f64,
    ) -> Result<f64> {
        let gen = mean.require_entropy_generator()?.clone();
        let b = self.heat_beta(beta0, t);
        let bdot = -(self.p + self.q) * (b - self.equilibrium_beta());
        let lhs = (self.phi(mean, b)? - self.phi(mean, y)?) * self.phi_prime(mean, b) * bdot;
        let rhs = self.f_functional(&gen, y)? - self.f_functional(&gen, b)?;
        Ok(lhs - rhs)
    }

    /// The same chain as a validated [`MarkovChain`].
    pub fn to_markov_chain(&self) -> Result<MarkovChain> {
        let (p, q) = (self.p, self.q);
        MarkovChain::from_kernel(DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - p, p, q, 1.0 - q],
        ))
    }

    /// The family member `rho^beta` as a [`Density`] on `chain`.
    pub fn density_on(&self, chain: &MarkovChain, beta: f64) -> Result<Density> {
        let (l, r) = self.endpoint_densities(beta);
        Density::new(chain, DVector::from_vec(vec![l, r]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mean::c_theta;
    use approx::assert_relative_eq;

    fn log_mean() -> MeanFunction {
        MeanFunction::logarithmic()
    }

    /// Composite Simpson oracle, independent of the adaptive quadrature.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
        let n = 2 * panels;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn family_parameterisation_round_trips() {
        let tp = TwoPointChain::new(0.3, 0.7).unwrap();
        let (pa, pb) = tp.pi();
        assert_relative_eq!(pa, 0.7, epsilon = 1e-15);
        assert_relative_eq!(pb, 0.3, epsilon = 1e-15);
        for &beta in &[-1.0, -0.4, 0.0, 0.25, 1.0] {
            let (l, r) = tp.endpoint_densities(beta);
            assert!(l >= 0.0 && r >= 0.0);
            // pi-mass is 1 along the whole family.
            assert_relative_eq!(pa * l + pb * r, 1.0, epsilon = 1e-15);
            assert_relative_eq!(tp.beta_of(l, r), beta, epsilon = 1e-15);
        }
        assert!(TwoPointChain::new(0.0, 0.5).is_err());
        assert!(TwoPointChain::new(0.5, 1.2).is_err());
    }

    #[test]
    fn heat_beta_matches_matrix_heat_flow() {
        for &(p, q) in &[(0.3, 0.7), (0.5, 0.5), (1.0, 0.2)] {
            let tp = TwoPointChain::new(p, q).unwrap();
            let chain = tp.to_markov_chain().unwrap();
            let beta0 = -0.6;
            let rho0 = tp.density_on(&chain, beta0).unwrap();
            for &t in &[0.1, 0.7, 2.5] {
                let rho_t = chain.heat_flow(&rho0, t).unwrap();
                let got = tp.beta_of(rho_t.get(0), rho_t.get(1));
                assert_relative_eq!(got, tp.heat_beta(beta0, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn distance_matches_independent_quadrature_for_symmetric_rates() {
        // For p = q the endpoint densities are 1 -+ beta and the distance is
        // (1 / sqrt(2p)) integral of sqrt(arctanh(r) / r).
        for &p in &[0.25, 0.5, 1.0] {
            let tp = TwoPointChain::new(p, p).unwrap();
            let f = |r: f64| {
                if r.abs() < 1e-12 {
                    1.0
                } else {
                    (r.atanh() / r).sqrt()
                }
            };
            let (a, b) = (-0.5, 0.8);
            let oracle = simpson(&f, a, b, 4000) / (2.0 * p).sqrt();
            let got = tp.distance(&log_mean(), a, b).unwrap();
            assert_relative_eq!(got, oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn distance_is_symmetric_and_additive_along_the_family() {
        let tp = TwoPointChain::new(0.4, 0.9).unwrap();
        let m = log_mean();
        let d01 = tp.distance(&m, -0.7, 0.2).unwrap();
        let d10 = tp.distance(&m, 0.2, -0.7).unwrap();
        assert_relative_eq!(d01, d10, epsilon = 1e-14);
        let d12 = tp.distance(&m, 0.2, 0.9).unwrap();
        let d02 = tp.distance(&m, -0.7, 0.9).unwrap();
        // Collinear points: the triangle inequality is an equality.
        assert_relative_eq!(d01 + d12, d02, max_relative = 1e-10);
    }

    #[test]
    fn dirac_to_dirac_distance_equals_the_normalisation_integral() {
        // For p = q = 1 the Dirac-to-Dirac distance is sqrt(2) C_theta: the
        // ladder in phi and the ladder in c_theta are independent call sites.
        let tp = TwoPointChain::new(1.0, 1.0).unwrap();
        let m = log_mean();
        let w = tp.distance(&m, -1.0, 1.0).unwrap();
        let c = c_theta(&m, 40).unwrap_finite();
        assert_relative_eq!(w, 2f64.sqrt() * c, max_relative = 1e-8);
    }

    #[test]
    fn dirac_reachability_follows_the_mean_family() {
        let tp = TwoPointChain::new(0.5, 0.5).unwrap();
        for (mean, finite) in [
            (MeanFunction::logarithmic(), true),
            (MeanFunction::power(0.5).unwrap(), true),
            (MeanFunction::power(1.0).unwrap(), true),
            (MeanFunction::power(1.9).unwrap(), true),
            (MeanFunction::power(2.0).unwrap(), false),
            (MeanFunction::power(2.5).unwrap(), false),
        ] {
            let d = tp.distance(&mean, -1.0, 0.3);
            match (finite, &d) {
                (true, Ok(v)) => assert!(v.is_finite() && *v > 0.0),
                (false, Err(Error::InfiniteDistance { witness })) => {
                    assert_eq!(*witness, Some(1), "mean {}", mean.name());
                }
                _ => panic!("mean {}: unexpected {d:?}", mean.name()),
            }
        }
    }

    #[test]
    fn geodesic_has_constant_speed_and_hits_endpoints() {
        let tp = TwoPointChain::new(0.7, 0.4).unwrap();
        let m = log_mean();
        let (b0, b1) = (-0.8, 0.6);
        let w = tp.distance(&m, b0, b1).unwrap();
        let path = tp.geodesic(&m, b0, b1, 33).unwrap();
        assert_eq!(path.len(), 33);
        assert_relative_eq!(path[0].1, b0, epsilon = 1e-12);
        assert_relative_eq!(path[32].1, b1, epsilon = 1e-12);
        for win in path.windows(2) {
            let (t0, g0) = win[0];
            let (t1, g1) = win[1];
            assert!(g1 > g0, "monotone in family parameter");
            let seg = tp.distance(&m, g0, g1).unwrap();
            assert_relative_eq!(seg, (t1 - t0) * w, max_relative = 1e-6);
        }
        // Reversed orientation works too.
        let back = tp.geodesic(&m, b1, b0, 9).unwrap();
        assert_relative_eq!(back[0].1, b1, epsilon = 1e-12);
        assert_relative_eq!(back[8].1, b0, epsilon = 1e-12);
        for win in back.windows(2) {
            assert!(win[1].1 < win[0].1);
        }
    }

    #[test]
    fn geodesic_from_a_dirac_endpoint() {
        // Under the logarithmic mean the Dirac is at finite distance and the
        // geodesic leaves it immediately.
        let tp = TwoPointChain::new(0.5, 0.5).unwrap();
        let m = log_mean();
        let path = tp.geodesic(&m, -1.0, 0.0, 17).unwrap();
        assert_relative_eq!(path[0].1, -1.0, epsilon = 1e-12);
        assert!(path[1].1 > -1.0 + 1e-6);
        let w = tp.distance(&m, -1.0, 0.0).unwrap();
        let half = tp.distance(&m, path[8].1, 0.0).unwrap();
        assert_relative_eq!(half, 0.5 * w, max_relative = 1e-6);
    }

    #[test]
    fn curvature_closed_form_matches_difference_quotient_hessian() {
        // Oracle: second difference of G(u) = F(beta(u)) in arc length,
        // with beta(u) recovered by bisection on phi.
        let m = log_mean();
        let gen = m.require_entropy_generator().unwrap().clone();
        for &(p, q) in &[(0.5, 0.5), (0.3, 0.9), (1.0, 0.15)] {
            let tp = TwoPointChain::new(p, q).unwrap();
            let beta_of_u = |u: f64| {
                let (mut a, mut b) = (-0.999_999, 0.999_999);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if tp.phi(&m, mid).unwrap() <= u {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            };
            for &beta in &[-0.6, -0.1, 0.0, 0.35, 0.8] {
                let u = tp.phi(&m, beta).unwrap();
                let h = 1e-4;
                let g = |uu: f64| tp.f_functional(&gen, beta_of_u(uu)).unwrap();
                let oracle = (g(u + h) - 2.0 * g(u) + g(u - h)) / (h * h);
                let got = tp.curvature_at(&m, beta).unwrap();
                assert_relative_eq!(got, oracle, max_relative = 2e-4);
            }
        }
    }

    #[test]
    fn convexity_constant_is_twice_p_for_symmetric_rates() {
        for &p in &[0.25, 0.5, 1.0] {
            let tp = TwoPointChain::new(p, p).unwrap();
            let bound = tp.convexity_constant(&log_mean()).unwrap();
            assert!(
                (bound.kappa - 2.0 * p).abs() <= 1e-6,
                "p = {p}: kappa = {}, beta = {}",
                bound.kappa,
                bound.beta
            );
            assert!(bound.beta.abs() < 1e-3);
        }
    }

    #[test]
    fn curvature_never_falls_below_half_the_rate_sum() {
        let m = log_mean();
        for &p in &[0.2, 0.6, 1.0] {
            for &q in &[0.15, 0.5, 0.9] {
                let tp = TwoPointChain::new(p, q).unwrap();
                let bound = tp.convexity_constant(&m).unwrap();
                assert!(
                    bound.kappa >= 0.5 * (p + q) - 1e-9,
                    "p = {p}, q = {q}: kappa = {}",
                    bound.kappa
                );
            }
        }
    }

    #[test]
    fn heat_flow_is_the_metric_gradient_flow_of_the_entropy() {
        // Logarithmic mean with the Boltzmann entropy, and the product mean
        // theta = s t with the generator -ln t: both pairs satisfy the
        // difference-quotient identity, so the speed of the heat flow equals
        // the metric slope of the functional.
        let means = [log_mean(), MeanFunction::power(1.0).unwrap()];
        for mean in &means {
            for &(p, q) in &[(0.5, 0.5), (0.35, 0.8)] {
                let tp = TwoPointChain::new(p, q).unwrap();
                for &beta0 in &[-0.7, 0.2, 0.55] {
                    for &t in &[0.1, 1.0, 3.0] {
                        let res = tp.gradient_flow_residual(mean, beta0, t).unwrap();
                        assert!(
                            res < 1e-6,
                            "mean {}, p {p}, q {q}, beta0 {beta0}, t {t}: residual {res}",
                            mean.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn geometric_mean_is_not_a_gradient_flow_pairing_for_the_entropy() {
        // Attach the Boltzmann generator to the geometric mean: the
        // difference-quotient identity fails, and the heat flow is visibly
        // not the gradient flow of the entropy in that metric.
        let mean = MeanFunction::geometric()
            .with_entropy_generator(EntropyGenerator::boltzmann());
        let tp = TwoPointChain::new(0.5, 0.5).unwrap();
        let res = tp.gradient_flow_residual(&mean, -0.7, 0.5).unwrap();
        assert!(res > 1e-3, "residual unexpectedly small: {res}");
    }

    #[test]
    fn evi_holds_with_zero_modulus_along_the_heat_flow() {
        let m = log_mean();
        let tp = TwoPointChain::new(0.5, 0.5).unwrap();
        for &beta0 in &[-0.9, -0.3, 0.4, 0.85] {
            for &y in &[-0.8, 0.0, 0.6] {
                for &t in &[0.05, 0.4, 1.5, 4.0] {
                    let r = tp.evi_residual(&m, beta0, y, t).unwrap();
                    assert!(
                        r <= 1e-8,
                        "beta0 {beta0}, y {y}, t {t}: EVI residual {r}"
                    );
                }
            }
        }
    }

    #[test]
    fn functional_rejects_boundary_densities() {
        let tp = TwoPointChain::new(0.5, 0.5).unwrap();
        let gen = EntropyGenerator::boltzmann();
        assert!(matches!(
            tp.f_functional(&gen, 1.0),
            Err(Error::BoundaryDensity { state: 0 })
        ));
        assert!(matches!(
            tp.f_functional(&gen, -1.0),
            Err(Error::BoundaryDensity { state: 1 })
        ));
    }

    use proptest::prelude::*;

    fn rates() -> impl Strategy<Value = (f64, f64)> {
        (0.05f64..1.0, 0.05f64..1.0)
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_splits_along_the_family(
            (p, q) in rates(),
            mut betas in prop::collection::vec(-0.95f64..0.95, 3),
        ) {
            let tp = TwoPointChain::new(p, q).unwrap();
            let mean = MeanFunction::logarithmic();
            betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (a, b, c) = (betas[0], betas[1], betas[2]);
            let dab = tp.distance(&mean, a, b).unwrap();
            let dba = tp.distance(&mean, b, a).unwrap();
            prop_assert!((dab - dba).abs() < 1e-12);
            // The family is a geodesic line: distances add along it.
            let dac = tp.distance(&mean, a, c).unwrap();
            let dbc = tp.distance(&mean, b, c).unwrap();
            prop_assert!((dab + dbc - dac).abs() < 1e-10 * (1.0 + dac));
        }

        #[test]
        fn heat_flow_contracts_toward_equilibrium(
            (p, q) in rates(),
            beta0 in -0.99f64..0.99,
            (s, t) in (0.0f64..2.0, 0.0f64..2.0),
        ) {
            let tp = TwoPointChain::new(p, q).unwrap();
            let eq = tp.equilibrium_beta();
            let near = tp.heat_beta(beta0, s.min(t));
            let far = tp.heat_beta(beta0, s.max(t));
            prop_assert!((far - eq).abs() <= (near - eq).abs() + 1e-14);
        }

        #[test]
        fn curvature_never_dips_below_half_the_rate_sum(
            (p, q) in rates(),
            beta in -0.999f64..0.999,
        ) {
            let tp = TwoPointChain::new(p, q).unwrap();
            let mean = MeanFunction::logarithmic();
            let k = tp.curvature_at(&mean, beta).unwrap();
            prop_assert!(k >= 0.5 * (p + q) - 1e-9, "curvature {k} at beta {beta}");
        }
    }
}
