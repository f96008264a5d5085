//! Quadratic forms of the transportation metric on a general chain.
//!
//! For a density `rho`, edges are weighted by `rho(x,y) = theta(rho(x),
//! rho(y))`. The (weighted) Onsager matrix
//!
//! ```text
//! A(rho)[x][y] = -K(x,y) rho(x,y) pi(x)          (x != y)
//! A(rho)[x][x] =  sum_z K(x,z) rho(x,z) pi(x)
//! ```
//!
//! is symmetric positive semidefinite by detailed balance, and `B(rho) =
//! Pi^-1 A(rho)` drives the continuity equation `rhodot = B(rho) psi`. The
//! kernel of `A(rho)` consists of functions constant on each connected
//! component of the graph of active edges (`K > 0` and `rho(x,y) > 0`), and
//! its range is the orthogonal complement; this module computes that support
//! decomposition, solves the continuity equation for the potential, decides
//! whether two densities are at finite distance, and evaluates a priori
//! bounds that any distance estimate has to respect.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::chain::{Density, MarkovChain};
use crate::error::{Error, Result};
use crate::mean::MeanFunction;
use crate::tolerances::{
    EIGEN_CUTOFF_REL, RANGE_MEMBERSHIP_TOL, RECOVER_RESIDUAL_TOL, SUPPORT_ZERO,
};
use crate::two_point::TwoPointChain;

/// Antisymmetric function on ordered pairs of states.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    values: DMatrix<f64>,
}

impl EdgeField {
    pub fn zeros(n: usize) -> Self {
        EdgeField {
            values: DMatrix::zeros(n, n),
        }
    }

    /// Build from an arbitrary function by antisymmetrising:
    /// `(f(x,y) - f(y,x)) / 2`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in (x + 1)..n {
                let v = 0.5 * (f(x, y) - f(y, x));
                values[(x, y)] = v;
                values[(y, x)] = -v;
            }
        }
        EdgeField { values }
    }

    /// Discrete gradient of a potential: `(x, y) -> psi(x) - psi(y)`.
    pub fn gradient(psi: &DVector<f64>) -> Self {
        EdgeField::from_fn(psi.len(), |x, y| psi[x] - psi[y])
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[(x, y)] = v;
        self.values[(y, x)] = -v;
    }

    /// Pointwise product with a symmetric edge weight, e.g. `rho(x,y)`.
    pub fn scaled_by(&self, w: impl Fn(usize, usize) -> f64) -> Self {
        let n = self.n();
        let mut out = EdgeField::zeros(n);
        for x in 0..n {
            for y in (x + 1)..n {
                out.set(x, y, self.get(x, y) * w(x, y));
            }
        }
        out
    }
}

/// Negative divergence pairing with the kernel: `(div Phi)(x) = -sum_y
/// K(x,y) Phi(x,y)`, the adjoint of the gradient so that the Laplacian
/// `K - I` equals `div` after `gradient`.
pub fn divergence(chain: &MarkovChain, phi: &EdgeField) -> DVector<f64> {
    let n = chain.n();
    DVector::from_fn(n, |x, _| {
        -(0..n)
            .map(|y| chain.transition(x, y) * phi.get(x, y))
            .sum::<f64>()
    })
}

/// Unweighted inner product of edge fields:
/// `(1/2) sum_{x,y} Phi(x,y) Psi(x,y) K(x,y) pi(x)`.
pub fn inner_pi(chain: &MarkovChain, a: &EdgeField, b: &EdgeField) -> f64 {
    let n = chain.n();
    let mut s = 0.0;
    for x in 0..n {
        for y in 0..n {
            s += a.get(x, y) * b.get(x, y) * chain.transition(x, y) * chain.stat(x);
        }
    }
    0.5 * s
}

/// Density-weighted inner product: the same sum with the extra factor
/// `theta(rho(x), rho(y))`.
pub fn inner_rho(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &Density,
    a: &EdgeField,
    b: &EdgeField,
) -> f64 {
    let n = chain.n();
    let mut s = 0.0;
    for x in 0..n {
        for y in 0..n {
            let w = mean.value(rho.get(x), rho.get(y));
            s += a.get(x, y) * b.get(x, y) * w * chain.transition(x, y) * chain.stat(x);
        }
    }
    0.5 * s
}

/// The Onsager matrix `A(rho)`. Detailed balance makes it symmetric up to
/// roundoff; the result is hard-symmetrised after verifying the asymmetry is
/// at roundoff scale.
pub fn onsager(chain: &MarkovChain, mean: &MeanFunction, rho: &Density) -> Result<DMatrix<f64>> {
    Ok(onsager_values(chain, mean, rho.values())?.0)
}

/// Internal variant on raw (possibly slightly negative) values, as produced
/// mid-optimisation. Values are clamped to zero for the mean. Returns the
/// matrix together with the largest observed asymmetry.
pub(crate) fn onsager_values(
    chain: &MarkovChain,
    mean: &MeanFunction,
    values: &DVector<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let n = chain.n();
    let mut a = DMatrix::zeros(n, n);
    let mut asym: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            let w = mean.value(values[x].max(0.0), values[y].max(0.0));
            let axy = -chain.transition(x, y) * w * chain.stat(x);
            let ayx = -chain.transition(y, x) * w * chain.stat(y);
            asym = asym.max((axy - ayx).abs());
            let sym = 0.5 * (axy + ayx);
            a[(x, y)] = sym;
            a[(y, x)] = sym;
            a[(x, x)] -= sym;
            a[(y, y)] -= sym;
        }
    }
    if asym > 1e-9 {
        return Err(Error::Domain(format!(
            "Onsager asymmetry {asym:.3e} exceeds roundoff scale; kernel is not reversible enough"
        )));
    }
    Ok((a, asym))
}

/// Action of `B(rho) = Pi^-1 A(rho)` on a potential:
/// `(B psi)(x) = sum_y K(x,y) theta(rho(x), rho(y)) (psi(x) - psi(y))`.
pub fn b_apply(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &Density,
    psi: &DVector<f64>,
) -> DVector<f64> {
    let n = chain.n();
    DVector::from_fn(n, |x, _| {
        (0..n)
            .map(|y| {
                chain.transition(x, y)
                    * mean.value(rho.get(x), rho.get(y))
                    * (psi[x] - psi[y])
            })
            .sum()
    })
}

/// Partition of the state space into connected components of the active-edge
/// graph of a density, with per-class pi-weighted masses.
#[derive(Debug, Clone, Serialize)]
pub struct SupportPartition {
    /// Class index of every state.
    pub class_of: Vec<usize>,
    /// States of each class, sorted.
    pub classes: Vec<Vec<usize>>,
    /// `sum_{x in class} pi(x) rho(x)` per class.
    pub masses: Vec<f64>,
}

impl SupportPartition {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Membership predicate for the range of `A(rho)`: plain per-class sums
    /// vanish.
    pub fn in_range_a(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.classes
            .iter()
            .all(|c| c.iter().map(|&x| v[x]).sum::<f64>().abs() <= tol)
    }

    /// Membership predicate for the range of `B(rho)`: pi-weighted per-class
    /// sums vanish.
    pub fn in_range_b(&self, chain: &MarkovChain, v: &DVector<f64>, tol: f64) -> bool {
        self.classes
            .iter()
            .all(|c| c.iter().map(|&x| chain.stat(x) * v[x]).sum::<f64>().abs() <= tol)
    }
}

pub fn support_partition(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &Density,
) -> SupportPartition {
    support_partition_values(chain, mean, rho.values())
}

pub(crate) fn support_partition_values(
    chain: &MarkovChain,
    mean: &MeanFunction,
    values: &DVector<f64>,
) -> SupportPartition {
    let n = chain.n();
    // Union-find with path halving.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if chain.transition(x, y) <= 0.0 {
                continue;
            }
            let w = mean.value(values[x].max(0.0), values[y].max(0.0));
            if w > SUPPORT_ZERO {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx] = ry;
                }
            }
        }
    }
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for x in 0..n {
        let root = find(&mut parent, x);
        let slot = class_of[root];
        if slot == usize::MAX {
            class_of[root] = classes.len();
            classes.push(Vec::new());
        }
        class_of[x] = class_of[root];
        classes[class_of[x]].push(x);
    }
    let masses = classes
        .iter()
        .map(|c| c.iter().map(|&x| chain.stat(x) * values[x].max(0.0)).sum())
        .collect();
    SupportPartition {
        class_of,
        classes,
        masses,
    }
}

/// Spectral pseudo-inverse of a symmetric PSD matrix, shared by the potential
/// recovery and the action evaluation.
pub(crate) struct SpectralPinv {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    cutoff: f64,
}

impl SpectralPinv {
    pub(crate) fn new(a: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(a);
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let cutoff = EIGEN_CUTOFF_REL * max.max(f64::MIN_POSITIVE);
        SpectralPinv { eig, cutoff }
    }

    /// Count of eigenvalues at or below the kernel cutoff.
    pub(crate) fn kernel_dim(&self) -> usize {
        self.eig
            .eigenvalues
            .iter()
            .filter(|&&l| l.abs() <= self.cutoff)
            .count()
    }

    /// `A^+ r`: expansion over the above-cutoff eigenspace.
    pub(crate) fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(r.len());
        for (i, &l) in self.eig.eigenvalues.iter().enumerate() {
            if l.abs() > self.cutoff {
                let v = self.eig.eigenvectors.column(i);
                out += v * (v.dot(r) / l);
            }
        }
        out
    }

    /// Distance from `r` to the range (norm of the kernel-space component).
    pub(crate) fn range_defect(&self, r: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for (i, &l) in self.eig.eigenvalues.iter().enumerate() {
            if l.abs() <= self.cutoff {
                let c = self.eig.eigenvectors.column(i).dot(r);
                s += c * c;
            }
        }
        s.sqrt()
    }
}

/// Spectral data of `A(rho)` cross-checked against the support partition.
pub struct KernelRange {
    pub partition: SupportPartition,
    pub kernel_dim: usize,
    pinv: SpectralPinv,
}

impl KernelRange {
    /// Numeric distance from `v` to the range of `A(rho)`.
    pub fn range_defect(&self, v: &DVector<f64>) -> f64 {
        self.pinv.range_defect(v)
    }
}

/// Eigendecompose `A(rho)` and verify that the numerical kernel dimension
/// equals the number of support classes and that every class indicator is
/// annihilated. Fails with [`Error::RankMismatch`] otherwise.
pub fn kernel_range(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &Density,
) -> Result<KernelRange> {
    let a = onsager(chain, mean, rho)?;
    let partition = support_partition(chain, mean, rho);
    let pinv = SpectralPinv::new(a.clone());
    let kernel_dim = pinv.kernel_dim();
    if kernel_dim != partition.class_count() {
        return Err(Error::RankMismatch {
            classes: partition.class_count(),
            numeric: kernel_dim,
        });
    }
    for class in &partition.classes {
        let mut ind = DVector::zeros(chain.n());
        for &x in class {
            ind[x] = 1.0;
        }
        let residual = (&a * &ind).amax();
        if residual > 1e-10 {
            return Err(Error::RankMismatch {
                classes: partition.class_count(),
                numeric: kernel_dim,
            });
        }
    }
    Ok(KernelRange {
        partition,
        kernel_dim,
        pinv,
    })
}

/// Solve the continuity equation for the potential: given a velocity `vel`
/// with `rhodot = vel`, find `psi` with `B(rho) psi = vel`.
///
/// `vel` must lie in the range of `B(rho)`, i.e. its pi-weighted sum over
/// every support class must vanish within [`RANGE_MEMBERSHIP_TOL`]; otherwise
/// [`Error::NotInRange`] identifies the violating class. The returned
/// potential is canonicalised to pi-weighted mean zero on every class, and
/// the solve residual is verified against [`RECOVER_RESIDUAL_TOL`].
pub fn recover_potential(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho: &Density,
    vel: &DVector<f64>,
) -> Result<DVector<f64>> {
    if vel.len() != chain.n() {
        return Err(Error::InvalidInput(format!(
            "velocity has {} entries for a {}-state chain",
            vel.len(),
            chain.n()
        )));
    }
    let kr = kernel_range(chain, mean, rho)?;
    for (c, class) in kr.partition.classes.iter().enumerate() {
        let mass: f64 = class.iter().map(|&x| chain.stat(x) * vel[x]).sum();
        if mass.abs() > RANGE_MEMBERSHIP_TOL {
            return Err(Error::NotInRange {
                class: c,
                mass,
                tol: RANGE_MEMBERSHIP_TOL,
            });
        }
    }
    let rhs = DVector::from_fn(chain.n(), |x, _| chain.stat(x) * vel[x]);
    let mut psi = kr.pinv.apply(&rhs);
    let a = onsager(chain, mean, rho)?;
    let residual = (&a * &psi - &rhs).amax();
    if residual > RECOVER_RESIDUAL_TOL {
        return Err(Error::Domain(format!(
            "potential solve residual {residual:.3e} exceeds {RECOVER_RESIDUAL_TOL:.1e}"
        )));
    }
    // Canonical representative: pi-weighted mean zero on every class.
    for class in &kr.partition.classes {
        let w: f64 = class.iter().map(|&x| chain.stat(x)).sum();
        let m: f64 = class.iter().map(|&x| chain.stat(x) * psi[x]).sum::<f64>() / w;
        for &x in class {
            psi[x] -= m;
        }
    }
    Ok(psi)
}

/// Decide whether two densities are at finite transportation distance.
///
/// When the normalisation integral of the mean is finite, every pair is.
/// Otherwise mass cannot cross inactive edges, so for every state the mass of
/// its support class under `rho0` must equal the mass of its class under
/// `rho1`; the first state violating this is reported in
/// [`Error::InfeasibleEndpoints`].
pub fn finiteness(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &Density,
    rho1: &Density,
) -> Result<()> {
    if mean.c_theta_cached().is_finite() {
        return Ok(());
    }
    let p0 = support_partition(chain, mean, rho0);
    let p1 = support_partition(chain, mean, rho1);
    for x in 0..chain.n() {
        let m0 = p0.masses[p0.class_of[x]];
        let m1 = p1.masses[p1.class_of[x]];
        if (m0 - m1).abs() > 1e-10 {
            return Err(Error::InfeasibleEndpoints { witness: x });
        }
    }
    Ok(())
}

/// A priori bounds that any distance estimate must respect.
#[derive(Debug, Clone, Serialize)]
pub struct TvBounds {
    /// The estimate under scrutiny (typically a solver output).
    pub estimate: f64,
    /// `d_TV / sqrt(2 ||theta||)` where the sup of the mean is taken over
    /// the square of attainable density values.
    pub tv_lower: f64,
    /// Largest two-point reduction: for each state, project both densities
    /// onto the two-point chain over that state versus the rest and measure
    /// the resulting distance. Only valid for homogeneous concave means.
    pub reduction_lower: Option<f64>,
    pub tv_margin: f64,
    pub reduction_margin: Option<f64>,
}

/// Check a distance estimate against the total-variation lower bound and,
/// for homogeneous concave means, the two-point reduction lower bound.
/// Fails with [`Error::BoundViolated`] when the estimate undercuts a bound
/// by more than `slack`.
pub fn tv_bounds_check(
    chain: &MarkovChain,
    mean: &MeanFunction,
    rho0: &Density,
    rho1: &Density,
    estimate: f64,
    slack: f64,
) -> Result<TvBounds> {
    let max_density = 1.0
        / chain
            .pi()
            .iter()
            .fold(f64::INFINITY, |m, &p| m.min(p));
    let theta_sup = if mean.properties().monotone {
        mean.value(max_density, max_density)
    } else {
        // Coarse scan for means without declared monotonicity.
        let mut sup = 0.0f64;
        let steps = 101;
        for i in 0..steps {
            for j in 0..steps {
                let s = max_density * i as f64 / (steps - 1) as f64;
                let t = max_density * j as f64 / (steps - 1) as f64;
                sup = sup.max(mean.value(s, t));
            }
        }
        sup
    };
    let tv_lower = chain.total_variation(rho0, rho1) / (2.0 * theta_sup).sqrt();
    let tv_margin = estimate - tv_lower;
    if tv_margin < -slack {
        return Err(Error::BoundViolated {
            bound: "total-variation lower bound",
            value: tv_lower,
            estimate,
            margin: tv_margin,
        });
    }
    let props = mean.properties();
    let (reduction_lower, reduction_margin) = if props.homogeneous && props.concave {
        let tp = TwoPointChain::new(1.0, 1.0)?;
        let mut sup = 0.0f64;
        for x in 0..chain.n() {
            let b0 = (1.0 - 2.0 * chain.stat(x) * rho0.get(x)).clamp(-1.0, 1.0);
            let b1 = (1.0 - 2.0 * chain.stat(x) * rho1.get(x)).clamp(-1.0, 1.0);
            match tp.distance(mean, b0, b1) {
                Ok(d) => sup = sup.max(d),
                Err(Error::InfiniteDistance { .. }) => {
                    sup = f64::INFINITY;
                }
                Err(e) => return Err(e),
            }
        }
        let margin = estimate - sup;
        if margin < -slack {
            return Err(Error::BoundViolated {
                bound: "two-point reduction lower bound",
                value: sup,
                estimate,
                margin,
            });
        }
        (Some(sup), Some(margin))
    } else {
        (None, None)
    };
    Ok(TvBounds {
        estimate,
        tv_lower,
        reduction_lower,
        tv_margin,
        reduction_margin,
    })
}
