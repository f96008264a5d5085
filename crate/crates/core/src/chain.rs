//! Finite irreducible reversible Markov chains and probability densities.
//!
//! A chain is a row-stochastic kernel `K` on `n` states, strongly connected,
//! together with its unique stationary distribution `pi`, and is accepted only
//! if it satisfies detailed balance `pi(x) K(x,y) = pi(y) K(y,x)`. Densities
//! are taken relative to `pi`: a probability measure `mu` corresponds to
//! `rho = mu / pi`, normalised so that `sum_x pi(x) rho(x) = 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::{
    DENSITY_MASS_TOL, DETAILED_BALANCE_TOL, ROW_SUM_TOL, STATIONARY_TOL,
};

/// JSON wire form of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(default)]
    pub states: Option<Vec<String>>,
    pub kernel: Vec<Vec<f64>>,
    /// Optional stationary distribution; checked for consistency when given.
    #[serde(default)]
    pub pi: Option<Vec<f64>>,
}

/// An irreducible, reversible transition kernel with its stationary
/// distribution. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    states: Vec<String>,
    kernel: DMatrix<f64>,
    pi: DVector<f64>,
}

impl MarkovChain {
    /// Validate and build a chain from a square kernel, naming states
    /// `s0, s1, ...`.
    pub fn from_kernel(kernel: DMatrix<f64>) -> Result<Self> {
        let names = (0..kernel.nrows()).map(|i| format!("s{i}")).collect();
        MarkovChain::new(names, kernel)
    }

    /// Validate and build a chain with the given state names.
    ///
    /// Checks, in order: squareness, row-stochasticity (entries nonnegative,
    /// rows summing to 1 within [`ROW_SUM_TOL`]), irreducibility (strong
    /// connectivity of the positive-entry graph), then solves for `pi` by a
    /// dense linear solve and verifies stationarity within
    /// [`STATIONARY_TOL`] and detailed balance within
    /// [`DETAILED_BALANCE_TOL`].
    pub fn new(states: Vec<String>, kernel: DMatrix<f64>) -> Result<Self> {
        let n = kernel.nrows();
        if n == 0 || kernel.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "kernel must be square and nonempty, got {}x{}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if states.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} state names for a {n}-state kernel",
                states.len()
            )));
        }
        for x in 0..n {
            let mut sum = 0.0;
            for y in 0..n {
                let v = kernel[(x, y)];
                if !(v >= 0.0) {
                    return Err(Error::NotStochastic {
                        row: x,
                        detail: format!("entry ({x},{y}) = {v} is negative or NaN"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic {
                    row: x,
                    detail: format!("row sum {sum:.17} differs from 1 beyond {ROW_SUM_TOL:.1e}"),
                });
            }
        }
        check_strong_connectivity(&kernel)?;
        let pi = stationary_distribution(&kernel)?;
        for x in 0..n {
            for y in (x + 1)..n {
                let fxy = pi[x] * kernel[(x, y)];
                let fyx = pi[y] * kernel[(y, x)];
                if (fxy - fyx).abs() > DETAILED_BALANCE_TOL {
                    return Err(Error::NotReversible {
                        x,
                        y,
                        flux_xy: fxy,
                        flux_yx: fyx,
                    });
                }
            }
        }
        Ok(MarkovChain { states, kernel, pi })
    }

    /// Parse the JSON wire form. A supplied `pi` is checked against the
    /// computed one within [`STATIONARY_TOL`] but the computed one is kept.
    pub fn from_spec(spec: ChainSpec) -> Result<Self> {
        let n = spec.kernel.len();
        for (i, row) in spec.kernel.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "kernel row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let kernel = DMatrix::from_fn(n, n, |i, j| spec.kernel[i][j]);
        let chain = match spec.states {
            Some(names) => MarkovChain::new(names, kernel),
            None => MarkovChain::from_kernel(kernel),
        }?;
        if let Some(given) = spec.pi {
            if given.len() != n {
                return Err(Error::InvalidInput(format!(
                    "pi has {} entries, expected {n}",
                    given.len()
                )));
            }
            for (x, (&g, &c)) in given.iter().zip(chain.pi.iter()).enumerate() {
                if (g - c).abs() > 1e-8 {
                    return Err(Error::InvalidInput(format!(
                        "supplied pi({x}) = {g} disagrees with the stationary solve ({c})"
                    )));
                }
            }
        }
        Ok(chain)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: ChainSpec =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        MarkovChain::from_spec(spec)
    }

    /// Complete-graph walk: `K(x,y) = 1/(n-1)` off the diagonal. Uniform
    /// stationary distribution; the three-state case is the triangle walk.
    pub fn complete_graph_walk(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 states".into()));
        }
        let p = 1.0 / (n as f64 - 1.0);
        let kernel = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p });
        MarkovChain::from_kernel(kernel)
    }

    /// Random reversible chain from symmetric positive conductances:
    /// `K(x,y) = w(x,y) / W(x)` with `w` symmetric, which is reversible with
    /// `pi(x)` proportional to `W(x)`.
    pub fn random_reversible(n: usize, rng: &mut impl rand::Rng) -> Self {
        assert!(n >= 2);
        loop {
            let mut w = DMatrix::zeros(n, n);
            for x in 0..n {
                for y in x..n {
                    // Keep some sparsity but stay connected via the x ~ x+1 band.
                    let adjacent = y == x + 1;
                    let v = if adjacent || rng.gen_bool(0.7) {
                        rng.gen_range(0.05..1.0)
                    } else {
                        0.0
                    };
                    w[(x, y)] = v;
                    w[(y, x)] = v;
                }
            }
            let mut kernel = DMatrix::zeros(n, n);
            for x in 0..n {
                let row_sum: f64 = (0..n).map(|y| w[(x, y)]).sum();
                for y in 0..n {
                    kernel[(x, y)] = w[(x, y)] / row_sum;
                }
            }
            // Repair residual roundoff on the row sums exactly.
            for x in 0..n {
                let s: f64 = (0..n).map(|y| kernel[(x, y)]).sum();
                kernel[(x, x)] += 1.0 - s;
            }
            if let Ok(chain) = MarkovChain::from_kernel(kernel) {
                return chain;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.kernel[(x, y)]
    }

    pub fn stat(&self, x: usize) -> f64 {
        self.pi[x]
    }

    /// Generator of the continuous-time semigroup: `Delta = K - I`.
    pub fn generator(&self) -> DMatrix<f64> {
        let mut g = self.kernel.clone();
        for i in 0..self.n() {
            g[(i, i)] -= 1.0;
        }
        g
    }

    /// Heat flow `rho_t = exp(t (K - I)) rho`. By reversibility the kernel
    /// acts on densities as a column vector, so the same semigroup drives
    /// measures on the left and densities on the right. Mass is conserved and
    /// the result is entrywise positive for `t > 0`.
    pub fn heat_flow(&self, rho: &Density, t: f64) -> Result<Density> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("heat flow needs t >= 0, got {t}")));
        }
        let e = (self.generator() * t).exp();
        let mut values = &e * rho.values();
        // exp(t Delta) is entrywise nonnegative; clip parasitic roundoff.
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Density::new_unchecked(values))
    }

    /// Relative entropy `H(rho) = sum_x pi(x) rho(x) ln rho(x)`, with
    /// `0 ln 0 = 0`.
    pub fn entropy(&self, rho: &Density) -> f64 {
        let mut h = 0.0;
        for x in 0..self.n() {
            let r = rho.values()[x];
            if r > 0.0 {
                h += self.pi[x] * r * r.ln();
            }
        }
        h
    }

    /// Total variation distance `sum_x pi(x) |rho0(x) - rho1(x)|`.
    pub fn total_variation(&self, rho0: &Density, rho1: &Density) -> f64 {
        let mut tv = 0.0;
        for x in 0..self.n() {
            tv += self.pi[x] * (rho0.values()[x] - rho1.values()[x]).abs();
        }
        tv
    }

    /// Mass of a raw vector under pi: `sum_x pi(x) v(x)`.
    pub fn pi_mass(&self, v: &DVector<f64>) -> f64 {
        self.pi.dot(v)
    }
}

/// Strong connectivity of the positive-entry digraph: forward and backward
/// reachability from state 0 must both cover every state.
fn check_strong_connectivity(kernel: &DMatrix<f64>) -> Result<()> {
    let n = kernel.nrows();
    let reach = |transpose: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let edge = if transpose {
                    kernel[(y, x)] > 0.0
                } else {
                    kernel[(x, y)] > 0.0
                };
                if edge && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    };
    let fwd = reach(false);
    let bwd = reach(true);
    for x in 0..n {
        if !fwd[x] || !bwd[x] {
            return Err(Error::NotIrreducible { state: x });
        }
    }
    Ok(())
}

/// Stationary distribution by a dense solve of `(K^T - I) pi = 0` with the
/// last equation replaced by the normalisation `sum pi = 1`.
fn stationary_distribution(kernel: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = kernel.nrows();
    let mut m = kernel.transpose();
    for i in 0..n {
        m[(i, i)] -= 1.0;
    }
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = m.lu();
    let mut pi = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("stationary solve is singular".into()))?;
    let total: f64 = pi.iter().sum();
    pi /= total;
    // Verify the solve.
    let residual = (kernel.transpose() * &pi - &pi).amax();
    if residual > STATIONARY_TOL {
        return Err(Error::Domain(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_TOL:.1e}"
        )));
    }
    for x in 0..n {
        if pi[x] <= 0.0 {
            return Err(Error::NotIrreducible { state: x });
        }
    }
    Ok(pi)
}

/// A probability density relative to `pi`: nonnegative values with
/// `sum_x pi(x) rho(x) = 1` within [`DENSITY_MASS_TOL`]. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: DVector<f64>,
}

impl Density {
    pub fn new(chain: &MarkovChain, values: DVector<f64>) -> Result<Self> {
        if values.len() != chain.n() {
            return Err(Error::InvalidDensity(format!(
                "{} values for a {}-state chain",
                values.len(),
                chain.n()
            )));
        }
        for (x, &v) in values.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::InvalidDensity(format!(
                    "value at state {x} is {v}; densities are nonnegative"
                )));
            }
        }
        let mass = chain.pi_mass(&values);
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::InvalidDensity(format!(
                "pi-weighted mass {mass:.17} differs from 1 beyond {DENSITY_MASS_TOL:.1e}"
            )));
        }
        Ok(Density { values })
    }

    /// Internal constructor for values produced by mass-preserving maps.
    pub(crate) fn new_unchecked(values: DVector<f64>) -> Self {
        Density { values }
    }

    /// The constant density `rho = 1` (the stationary measure itself).
    pub fn uniform(chain: &MarkovChain) -> Self {
        Density {
            values: DVector::from_element(chain.n(), 1.0),
        }
    }

    /// Point mass at `x`, as a density: `rho = 1_x / pi(x)`.
    pub fn dirac(chain: &MarkovChain, x: usize) -> Self {
        let mut values = DVector::zeros(chain.n());
        values[x] = 1.0 / chain.stat(x);
        Density { values }
    }

    /// Convert a probability vector `mu` to the density `mu / pi`.
    pub fn from_measure(chain: &MarkovChain, mu: &DVector<f64>) -> Result<Self> {
        if mu.len() != chain.n() {
            return Err(Error::InvalidDensity(format!(
                "{} measure entries for a {}-state chain",
                mu.len(),
                chain.n()
            )));
        }
        let values = DVector::from_fn(chain.n(), |x, _| mu[x] / chain.stat(x));
        Density::new(chain, values)
    }

    /// Parse `[v0, v1, ...]` or `{"values": [...]}`; with `as_measure` the
    /// entries are read as a probability vector and divided by `pi`.
    pub fn from_json_str(chain: &MarkovChain, s: &str, as_measure: bool) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Bare(Vec<f64>),
            Keyed { values: Vec<f64> },
        }
        let wire: Wire = serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let raw = match wire {
            Wire::Bare(v) | Wire::Keyed { values: v } => DVector::from_vec(v),
        };
        if as_measure {
            Density::from_measure(chain, &raw)
        } else {
            Density::new(chain, raw)
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub fn two_point_kernel(p: f64, q: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q])
    }

    /// Fine-step RK4 oracle for the heat semigroup, independent of the
    /// matrix exponential.
    fn heat_flow_rk4(chain: &MarkovChain, rho: &DVector<f64>, t: f64, steps: usize) -> DVector<f64> {
        let g = chain.generator();
        let h = t / steps as f64;
        let mut y = rho.clone();
        for _ in 0..steps {
            let k1 = &g * &y;
            let k2 = &g * &(&y + &k1 * (h / 2.0));
            let k3 = &g * &(&y + &k2 * (h / 2.0));
            let k4 = &g * &(&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    #[test]
    fn triangle_walk_has_uniform_stationary_distribution() {
        let chain = MarkovChain::complete_graph_walk(3).unwrap();
        for x in 0..3 {
            assert_relative_eq!(chain.stat(x), 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn stationary_solve_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let chain = MarkovChain::random_reversible(6, &mut rng);
            // Power iteration oracle.
            let mut mu = DVector::from_element(6, 1.0 / 6.0);
            for _ in 0..20_000 {
                mu = chain.kernel().transpose() * mu;
            }
            let total: f64 = mu.iter().sum();
            mu /= total;
            for x in 0..6 {
                assert_relative_eq!(chain.stat(x), mu[x], max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        // Row sum off.
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(
            MarkovChain::from_kernel(k),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        // Negative entry.
        let k = DMatrix::from_row_slice(2, 2, &[1.1, -0.1, 0.5, 0.5]);
        assert!(matches!(
            MarkovChain::from_kernel(k),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        // Reducible: two isolated loops.
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            MarkovChain::from_kernel(k),
            Err(Error::NotIrreducible { .. })
        ));
        // Irreducible but not reversible: directed 3-cycle.
        let k = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.9, 0.1, 0.1, 0.0, 0.9, 0.9, 0.1, 0.0],
        );
        assert!(matches!(
            MarkovChain::from_kernel(k),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_pi_consistency() {
        let chain = MarkovChain::from_json_str(
            r#"{"states": ["a", "b"], "kernel": [[0.5, 0.5], [0.5, 0.5]]}"#,
        )
        .unwrap();
        assert_eq!(chain.states(), ["a", "b"]);
        assert_relative_eq!(chain.stat(0), 0.5);
        // A wrong supplied pi is rejected.
        let bad = MarkovChain::from_json_str(
            r#"{"kernel": [[0.5, 0.5], [0.5, 0.5]], "pi": [0.9, 0.1]}"#,
        );
        assert!(bad.is_err());
        let good = MarkovChain::from_json_str(
            r#"{"kernel": [[0.5, 0.5], [0.5, 0.5]], "pi": [0.5, 0.5]}"#,
        );
        assert!(good.is_ok());
    }

    #[test]
    fn heat_flow_matches_rk4_oracle_on_random_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let chain = MarkovChain::random_reversible(6, &mut rng);
            let rho = Density::dirac(&chain, 2);
            for &t in &[0.1, 1.0, 3.0] {
                let a = chain.heat_flow(&rho, t).unwrap();
                let b = heat_flow_rk4(&chain, rho.values(), t, 20_000);
                for x in 0..6 {
                    assert!(
                        (a.get(x) - b[x]).abs() < 1e-9,
                        "t = {t}, state {x}: exp {} vs rk4 {}",
                        a.get(x),
                        b[x]
                    );
                }
            }
        }
    }

    #[test]
    fn heat_flow_explicit_two_point_solution() {
        // On the two-point chain the density stays in the one-parameter
        // family rho^beta with beta_t = betabar + (beta0 - betabar) e^{-(p+q)t},
        // betabar = (p-q)/(p+q).
        let (p, q) = (0.3, 0.7);
        let chain = MarkovChain::from_kernel(two_point_kernel(p, q)).unwrap();
        let rho_of_beta = |beta: f64| {
            DVector::from_vec(vec![
                (p + q) / q * (1.0 - beta) / 2.0,
                (p + q) / p * (1.0 + beta) / 2.0,
            ])
        };
        let beta0 = -0.4;
        let rho0 = Density::new(&chain, rho_of_beta(beta0)).unwrap();
        let betabar = (p - q) / (p + q);
        for &t in &[0.05, 0.3, 1.0, 4.0] {
            let expect = rho_of_beta(betabar + (beta0 - betabar) * (-(p + q) * t).exp());
            let got = chain.heat_flow(&rho0, t).unwrap();
            for x in 0..2 {
                assert_relative_eq!(got.get(x), expect[x], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn heat_flow_conserves_mass_and_becomes_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let chain = MarkovChain::random_reversible(7, &mut rng);
        let rho = Density::dirac(&chain, 0);
        for &t in &[1e-3, 0.1, 2.0, 40.0] {
            let out = chain.heat_flow(&rho, t).unwrap();
            assert_relative_eq!(chain.pi_mass(out.values()), 1.0, epsilon = 1e-11);
            assert!(out.is_strictly_positive(), "t = {t}");
        }
        assert!(chain.heat_flow(&rho, -0.1).is_err());
    }

    #[test]
    fn heat_flow_semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let chain = MarkovChain::random_reversible(5, &mut rng);
        let rho = Density::dirac(&chain, 1);
        let one_shot = chain.heat_flow(&rho, 0.9).unwrap();
        let two_step = chain
            .heat_flow(&chain.heat_flow(&rho, 0.4).unwrap(), 0.5)
            .unwrap();
        for x in 0..5 {
            assert_relative_eq!(one_shot.get(x), two_step.get(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn triangle_dirac_relaxes_to_uniform() {
        let chain = MarkovChain::complete_graph_walk(3).unwrap();
        let rho = Density::dirac(&chain, 0);
        let out = chain.heat_flow(&rho, 40.0).unwrap();
        for x in 0..3 {
            assert!((out.get(x) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn entropy_values_and_monotonicity() {
        let chain = MarkovChain::from_kernel(two_point_kernel(0.5, 0.5)).unwrap();
        // Frozen: H = (1/2)( (1/2) ln(1/2) + (3/2) ln(3/2) ).
        let rho = Density::new(&chain, DVector::from_vec(vec![0.5, 1.5])).unwrap();
        assert_relative_eq!(chain.entropy(&rho), 0.130_812_035_941_136_97, epsilon = 1e-15);
        assert_eq!(chain.entropy(&Density::uniform(&chain)), 0.0);
        // 0 ln 0 = 0: the Dirac case evaluates without NaN.
        let dir = Density::dirac(&chain, 0);
        assert_relative_eq!(chain.entropy(&dir), 2f64.ln(), epsilon = 1e-14);
        // Entropy decreases along the heat flow.
        let mut prev = chain.entropy(&dir);
        for &t in &[0.1, 0.3, 1.0, 3.0] {
            let h = chain.entropy(&chain.heat_flow(&dir, t).unwrap());
            assert!(h <= prev + 1e-12);
            prev = h;
        }
    }

    #[test]
    fn total_variation_on_the_two_point_chain() {
        // For p = q the family rho^beta gives d_TV(rho^a, rho^b) = |a - b|.
        let chain = MarkovChain::from_kernel(two_point_kernel(0.5, 0.5)).unwrap();
        let rho_of_beta = |beta: f64| {
            Density::new(
                &chain,
                DVector::from_vec(vec![1.0 - beta, 1.0 + beta]),
            )
            .unwrap()
        };
        assert_relative_eq!(
            chain.total_variation(&rho_of_beta(-0.3), &rho_of_beta(0.5)),
            0.8,
            epsilon = 1e-14
        );
        // Diracs at opposite states: mass 2.
        assert_relative_eq!(
            chain.total_variation(&Density::dirac(&chain, 0), &Density::dirac(&chain, 1)),
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_validation() {
        let chain = MarkovChain::complete_graph_walk(3).unwrap();
        assert!(Density::new(&chain, DVector::from_vec(vec![3.0, 0.0, 0.0])).is_ok());
        assert!(Density::new(&chain, DVector::from_vec(vec![2.0, 0.0, 0.0])).is_err());
        assert!(Density::new(&chain, DVector::from_vec(vec![4.0, -1.0, 0.0])).is_err());
        let mu = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let rho = Density::from_measure(&chain, &mu).unwrap();
        assert_relative_eq!(rho.get(2), 1.5, epsilon = 1e-14);
        let parsed = Density::from_json_str(&chain, "[0.2, 0.3, 0.5]", true).unwrap();
        assert_eq!(parsed, rho);
        let parsed2 =
            Density::from_json_str(&chain, r#"{"values": [0.6, 0.9, 1.5]}"#, false).unwrap();
        for x in 0..3 {
            assert_relative_eq!(parsed2.get(x), rho.get(x), epsilon = 1e-15);
        }
    }

    use proptest::prelude::*;

    fn chain_strategy() -> impl Strategy<Value = MarkovChain> {
        (2usize..8, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            MarkovChain::random_reversible(n, &mut rng)
        })
    }

    fn density_for(chain: &MarkovChain, raw: &[f64]) -> Density {
        let v = DVector::from_fn(chain.n(), |x, _| raw[x % raw.len()].max(1e-3));
        Density::new(chain, v.clone() / chain.pi_mass(&v)).unwrap()
    }

    proptest! {
        #[test]
        fn generated_chains_are_stochastic_and_reversible(chain in chain_strategy()) {
            let n = chain.n();
            for x in 0..n {
                let row: f64 = (0..n).map(|y| chain.transition(x, y)).sum();
                prop_assert!((row - 1.0).abs() < 1e-12);
                for y in 0..n {
                    let fwd = chain.stat(x) * chain.transition(x, y);
                    let bwd = chain.stat(y) * chain.transition(y, x);
                    prop_assert!((fwd - bwd).abs() < 1e-10);
                }
            }
            let pi_total: f64 = (0..n).map(|x| chain.stat(x)).sum();
            prop_assert!((pi_total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn heat_flow_preserves_mass_and_positivity(
            chain in chain_strategy(),
            raw in prop::collection::vec(0.01f64..5.0, 8),
            t in 0.0f64..4.0,
        ) {
            let rho = density_for(&chain, &raw);
            let evolved = chain.heat_flow(&rho, t).unwrap();
            prop_assert!((chain.pi_mass(evolved.values()) - 1.0).abs() < 1e-10);
            for x in 0..chain.n() {
                prop_assert!(evolved.get(x) >= 0.0);
            }
        }

        #[test]
        fn heat_flow_dissipates_entropy_and_total_variation(
            chain in chain_strategy(),
            raw in prop::collection::vec(0.01f64..5.0, 8),
            t in 0.01f64..3.0,
        ) {
            let rho = density_for(&chain, &raw);
            let evolved = chain.heat_flow(&rho, t).unwrap();
            prop_assert!(chain.entropy(&evolved) <= chain.entropy(&rho) + 1e-10);
            let uniform = Density::uniform(&chain);
            prop_assert!(
                chain.total_variation(&evolved, &uniform)
                    <= chain.total_variation(&rho, &uniform) + 1e-10
            );
        }

        #[test]
        fn heat_flow_is_a_semigroup(
            chain in chain_strategy(),
            raw in prop::collection::vec(0.01f64..5.0, 8),
            (s, t) in (0.0f64..2.0, 0.0f64..2.0),
        ) {
            let rho = density_for(&chain, &raw);
            let two_step = chain
                .heat_flow(&chain.heat_flow(&rho, s).unwrap(), t)
                .unwrap();
            let one_step = chain.heat_flow(&rho, s + t).unwrap();
            for x in 0..chain.n() {
                prop_assert!((two_step.get(x) - one_step.get(x)).abs() < 1e-9);
            }
        }
    }
}
