//! Mean functions on `[0,oo)^2` and the constant `C_theta`.
//!
//! A mean `theta` weights each edge of the chain by `theta(rho(x), rho(y))`.
//! Everything downstream (Onsager matrices, path actions, geodesics) only
//! touches a mean through this module's [`MeanFunction`] handle, which carries
//! the value, its first partial derivative, and capability flags describing
//! which structural properties the mean declares:
//!
//! * `vanishes_at_zero`: `theta(0, t) = 0`
//! * `monotone`: nondecreasing in each argument
//! * `doubling`: `theta(2s, 2t) <= 2 C_d theta(s, t)` for some constant
//! * `homogeneous`: `theta(ls, lt) = l theta(s, t)`
//! * `concave`: jointly concave on `[0,oo)^2`
//! * `difference_quotient`: `theta(s,t) = (s - t) / (k(s) - k(t))` for an
//!   increasing function `k`, supplied alongside the flag
//!
//! The built-in family: the logarithmic mean (`k = ln`, entropy generator
//! `f(t) = t ln t`) and the power means `theta(s,t) = (st)^alpha`, of which
//! `alpha = 1/2` is the geometric mean (the only 1-homogeneous one) and
//! `alpha = 1` the only one admitting a difference-quotient representation
//! (`k(t) = -1/t`, generator `f(t) = -ln t`).

use std::fmt;
use std::sync::Arc;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{self, Improper};
use crate::tolerances::{NEAR_DIAGONAL_REL, QUAD_TOL};

type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type UnaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Capability flags a mean declares. Checks in [`check_axioms`] exercise the
/// declared flags only; undeclared properties are simply not claimed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MeanProperties {
    pub vanishes_at_zero: bool,
    pub monotone: bool,
    pub doubling: bool,
    pub homogeneous: bool,
    pub concave: bool,
    pub difference_quotient: bool,
}

/// Scalar entropy generator `f` with its first two derivatives, used by the
/// convexity and gradient-flow machinery. `f` must be convex on `(0,oo)`.
#[derive(Clone)]
pub struct EntropyGenerator {
    pub name: String,
    f: UnaryFn,
    df: UnaryFn,
    d2f: UnaryFn,
}

impl EntropyGenerator {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        EntropyGenerator {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    /// Boltzmann generator `f(t) = t ln t` (with `f(0) = 0`).
    pub fn boltzmann() -> Self {
        EntropyGenerator::new(
            "t ln t",
            |t| if t == 0.0 { 0.0 } else { t * t.ln() },
            |t| 1.0 + t.ln(),
            |t| 1.0 / t,
        )
    }

    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t)
    }
    pub fn df(&self, t: f64) -> f64 {
        (self.df)(t)
    }
    pub fn d2f(&self, t: f64) -> f64 {
        (self.d2f)(t)
    }
}

impl fmt::Debug for EntropyGenerator {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("EntropyGenerator")
            .field("name", &self.name)
            .finish()
    }
}

/// A mean function together with its derivative and declared capabilities.
#[derive(Clone)]
pub struct MeanFunction {
    name: String,
    value: BinaryFn,
    d1: BinaryFn,
    k: Option<UnaryFn>,
    entropy: Option<EntropyGenerator>,
    props: MeanProperties,
    c_theta_cache: Arc<OnceLock<Improper>>,
}

impl fmt::Debug for MeanFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("MeanFunction")
            .field("name", &self.name)
            .field("props", &self.props)
            .finish()
    }
}

impl MeanFunction {
    /// Logarithmic mean `(s - t) / (ln s - ln t)`, extended by `s` on the
    /// diagonal and by 0 when either argument vanishes. Declares every
    /// capability; `k = ln` and the entropy generator is `t ln t`.
    pub fn logarithmic() -> Self {
        MeanFunction {
            name: "log".to_string(),
            value: Arc::new(log_mean),
            d1: Arc::new(log_mean_d1),
            k: Some(Arc::new(|t: f64| t.ln())),
            entropy: Some(EntropyGenerator::boltzmann()),
            props: MeanProperties {
                vanishes_at_zero: true,
                monotone: true,
                doubling: true,
                homogeneous: true,
                concave: true,
                difference_quotient: true,
            },
            c_theta_cache: Arc::new(OnceLock::new()),
        }
    }

    /// Power mean `theta(s,t) = (st)^alpha` for `alpha > 0`.
    ///
    /// Homogeneity holds exactly when `2 alpha = 1` (the geometric mean) and
    /// joint concavity when `alpha <= 1/2`. Only `alpha = 1` admits a
    /// difference-quotient representation: `k(t) = -1/t` with generator
    /// `f(t) = -ln t`.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidAlpha { alpha });
        }
        let name = if alpha == 0.5 {
            "geometric".to_string()
        } else {
            format!("power:{alpha}")
        };
        let value: BinaryFn = Arc::new(move |s: f64, t: f64| (s * t).powf(alpha));
        let d1: BinaryFn = Arc::new(move |s: f64, t: f64| alpha * s.powf(alpha - 1.0) * t.powf(alpha));
        let (k, entropy): (Option<UnaryFn>, Option<EntropyGenerator>) = if alpha == 1.0 {
            (
                Some(Arc::new(|t: f64| -1.0 / t)),
                Some(EntropyGenerator::new(
                    "-ln t",
                    |t| -t.ln(),
                    |t| -1.0 / t,
                    |t| 1.0 / (t * t),
                )),
            )
        } else {
            (None, None)
        };
        Ok(MeanFunction {
            name,
            value,
            d1,
            k,
            entropy,
            props: MeanProperties {
                vanishes_at_zero: true,
                monotone: true,
                doubling: true,
                homogeneous: alpha == 0.5,
                concave: alpha <= 0.5,
                difference_quotient: alpha == 1.0,
            },
            c_theta_cache: Arc::new(OnceLock::new()),
        })
    }

    /// Geometric mean `sqrt(st)`.
    pub fn geometric() -> Self {
        MeanFunction::power(0.5).expect("alpha = 1/2 is valid")
    }

    /// Parse a CLI-style mean selector: `"log"`, `"geometric"`, or
    /// `"power:<alpha>"`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "log" => Ok(MeanFunction::logarithmic()),
            "geometric" => Ok(MeanFunction::geometric()),
            _ => {
                if let Some(rest) = spec.strip_prefix("power:") {
                    let alpha: f64 = rest
                        .parse()
                        .map_err(|_| Error::UnknownMean(spec.to_string()))?;
                    MeanFunction::power(alpha)
                } else {
                    Err(Error::UnknownMean(spec.to_string()))
                }
            }
        }
    }

    /// Custom mean for experiments and adversarial tests. The caller is
    /// responsible for the honesty of the declared properties; dishonest
    /// declarations are what [`check_axioms`] is for.
    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        props: MeanProperties,
    ) -> Self {
        MeanFunction {
            name: name.into(),
            value: Arc::new(value),
            d1: Arc::new(d1),
            k: None,
            entropy: None,
            props,
            c_theta_cache: Arc::new(OnceLock::new()),
        }
    }

    /// Attach a difference-quotient function `k` (declares the capability).
    pub fn with_k(mut self, k: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.k = Some(Arc::new(k));
        self.props.difference_quotient = true;
        self
    }

    /// Attach an entropy generator.
    pub fn with_entropy_generator(mut self, gen: EntropyGenerator) -> Self {
        self.entropy = Some(gen);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn properties(&self) -> MeanProperties {
        self.props
    }

    /// theta(s, t).
    pub fn value(&self, s: f64, t: f64) -> f64 {
        (self.value)(s, t)
    }

    /// Partial derivative of theta in its first argument, on `(0,oo)^2`.
    pub fn d1(&self, s: f64, t: f64) -> f64 {
        (self.d1)(s, t)
    }

    /// The function `k` of the difference-quotient representation, if any.
    pub fn k(&self, t: f64) -> Option<f64> {
        self.k.as_ref().map(|k| k(t))
    }

    pub fn has_k(&self) -> bool {
        self.k.is_some()
    }

    pub fn entropy_generator(&self) -> Option<&EntropyGenerator> {
        self.entropy.as_ref()
    }

    /// `k` or an error naming the missing capability.
    pub fn require_k(&self) -> Result<&UnaryFn> {
        self.k.as_ref().ok_or(Error::MissingCapability {
            mean: self.name.clone(),
            capability: "a difference-quotient function k",
        })
    }

    pub fn require_entropy_generator(&self) -> Result<&EntropyGenerator> {
        self.entropy.as_ref().ok_or(Error::MissingCapability {
            mean: self.name.clone(),
            capability: "an entropy generator f",
        })
    }

    /// `C_theta` verdict, computed once per handle and cached.
    pub fn c_theta_cached(&self) -> Improper {
        *self.c_theta_cache.get_or_init(|| c_theta(self, 40))
    }
}

/// Logarithmic mean value. Near the diagonal the quotient loses digits to
/// cancellation, so below a relative gap of [`NEAR_DIAGONAL_REL`] it switches
/// to the reciprocal series
/// `m / (1 + u^2/3 + u^4/5 + u^6/7)` with `m = (s+t)/2`, `u = (s-t)/(s+t)`,
/// which is exact through `O(u^8)`. Away from the diagonal `ln(s/t)` is
/// evaluated as `ln_1p((s-t)/t)` so no cancellation occurs there either.
fn log_mean(s: f64, t: f64) -> f64 {
    if s == t {
        return s;
    }
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let (hi, lo) = if s > t { (s, t) } else { (t, s) };
    let d = hi - lo;
    if d <= NEAR_DIAGONAL_REL * hi {
        let m = 0.5 * (s + t);
        let u2 = (d / (s + t)).powi(2);
        m / (1.0 + u2 * (1.0 / 3.0 + u2 * (1.0 / 5.0 + u2 / 7.0)))
    } else {
        d / (d / lo).ln_1p()
    }
}

/// First partial of the logarithmic mean:
/// `(L - 1 + t/s) / L^2` with `L = ln s - ln t`, equal to 1/2 on the diagonal.
/// The numerator cancels to second order near the diagonal, so below a
/// relative gap of 1e-4 the series `1/2 - v/6 + v^2/8` in `v = (s-t)/t`
/// is used instead.
fn log_mean_d1(s: f64, t: f64) -> f64 {
    if s == t {
        return 0.5;
    }
    if t == 0.0 {
        // theta(., 0) vanishes identically.
        return 0.0;
    }
    if s == 0.0 {
        return f64::INFINITY;
    }
    let d = s - t;
    if d.abs() <= 1e-4 * s.max(t) {
        let v = d / t;
        0.5 + v * (-1.0 / 6.0 + v / 8.0)
    } else {
        let l = (d / t).ln_1p();
        (l - d / s) / (l * l)
    }
}

/// The normalisation constant
/// `C_theta = integral over [0,1) of theta(1-r, 1+r)^{-1/2} dr`,
/// finite exactly when the boundary singularity of the integrand is
/// integrable. Classification and value come from the dyadic ladder:
/// partial integrals on `[0, 1 - 2^-j]` for `j = 10 ..= max_level`, with tail
/// contraction deciding convergence and a geometric extrapolation supplying
/// the remainder. `max_level` below 22 is raised to 22.
pub fn c_theta(mean: &MeanFunction, max_level: u32) -> Improper {
    let g = move |r: f64| {
        let v = mean.value(1.0 - r, 1.0 + r);
        if v <= 0.0 {
            return f64::INFINITY;
        }
        1.0 / v.sqrt()
    };
    quad::improper_toward_one(&g, 0.0, max_level, QUAD_TOL)
}

/// One axiom check inside an [`AxiomReport`].
#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub property: &'static str,
    /// Whether the mean declares the property (undeclared ones are skipped).
    pub checked: bool,
    pub passed: bool,
    /// A violating sample, if one was found.
    pub witness: Option<AxiomWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomWitness {
    pub s: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub detail: String,
}

/// Randomized axiom audit of a mean.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub mean: String,
    pub samples: usize,
    pub seed: u64,
    /// Upper edge of the sampling box `(0, box_hi]^2`. The doubling constant
    /// estimate depends on this box; it is reported, not assumed.
    pub box_hi: f64,
    pub checks: Vec<AxiomCheck>,
    /// Empirical doubling constant: max over samples of
    /// `theta(2s,2t) / (2 theta(s,t))`.
    pub doubling_constant: Option<f64>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, property: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.property == property)
    }
}

/// Randomized property test of the declared axioms of `mean`, sampling
/// `samples` points from `(0, box_hi]^2` with the given seed. Symmetry and
/// positivity are always checked; the remaining checks run only when the
/// corresponding capability is declared, and failures carry a witness.
pub fn check_axioms(mean: &MeanFunction, samples: usize, seed: u64, box_hi: f64) -> AxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let props = mean.properties();
    let mut draws: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            (
                rng.gen_range(0.0..box_hi).max(1e-12),
                rng.gen_range(0.0..box_hi).max(1e-12),
            )
        })
        .collect();
    // Near-diagonal pairs stress the series branches.
    for i in 0..samples / 10 {
        let s = rng.gen_range(0.1..box_hi);
        let scale = 10f64.powi(-(3 + (i % 10) as i32));
        draws.push((s, s * (1.0 + scale)));
    }

    let mut checks = Vec::new();
    let tol = 1e-10;

    // Symmetry, always.
    let mut sym = AxiomCheck {
        property: "symmetry",
        checked: true,
        passed: true,
        witness: None,
    };
    for &(s, t) in &draws {
        let a = mean.value(s, t);
        let b = mean.value(t, s);
        if (a - b).abs() > tol * a.abs().max(1.0) {
            sym.passed = false;
            sym.witness = Some(AxiomWitness {
                s,
                t,
                lhs: a,
                rhs: b,
                detail: "theta(s,t) != theta(t,s)".into(),
            });
            break;
        }
    }
    checks.push(sym);

    // Positivity on (0,oo)^2, always.
    let mut pos = AxiomCheck {
        property: "positivity",
        checked: true,
        passed: true,
        witness: None,
    };
    for &(s, t) in &draws {
        let v = mean.value(s, t);
        if !(v > 0.0) || !v.is_finite() {
            pos.passed = false;
            pos.witness = Some(AxiomWitness {
                s,
                t,
                lhs: v,
                rhs: 0.0,
                detail: "theta(s,t) not strictly positive".into(),
            });
            break;
        }
    }
    checks.push(pos);

    // Vanishing at the boundary.
    let mut vz = AxiomCheck {
        property: "vanishes_at_zero",
        checked: props.vanishes_at_zero,
        passed: true,
        witness: None,
    };
    if props.vanishes_at_zero {
        for &(_, t) in draws.iter().take(200) {
            let v = mean.value(0.0, t);
            if v.abs() > 1e-14 {
                vz.passed = false;
                vz.witness = Some(AxiomWitness {
                    s: 0.0,
                    t,
                    lhs: v,
                    rhs: 0.0,
                    detail: "theta(0,t) != 0".into(),
                });
                break;
            }
        }
    }
    checks.push(vz);

    // Monotonicity in the first argument (symmetry covers the second).
    let mut mono = AxiomCheck {
        property: "monotone",
        checked: props.monotone,
        passed: true,
        witness: None,
    };
    if props.monotone {
        for &(s, t) in &draws {
            let s2 = s * (1.0 + rng.gen_range(0.01..1.0f64));
            let a = mean.value(s, t);
            let b = mean.value(s2, t);
            if b < a - tol * a.abs().max(1.0) {
                mono.passed = false;
                mono.witness = Some(AxiomWitness {
                    s,
                    t,
                    lhs: a,
                    rhs: b,
                    detail: format!("theta decreased raising s to {s2}"),
                });
                break;
            }
        }
    }
    checks.push(mono);

    // Doubling: estimate the constant; fails only on non-finite ratios.
    let mut doubling_constant = None;
    let mut dbl = AxiomCheck {
        property: "doubling",
        checked: props.doubling,
        passed: true,
        witness: None,
    };
    if props.doubling {
        let mut worst: f64 = 0.0;
        for &(s, t) in &draws {
            let denom = 2.0 * mean.value(s, t);
            if denom <= 0.0 {
                continue;
            }
            let ratio = mean.value(2.0 * s, 2.0 * t) / denom;
            if !ratio.is_finite() {
                dbl.passed = false;
                dbl.witness = Some(AxiomWitness {
                    s,
                    t,
                    lhs: ratio,
                    rhs: 0.0,
                    detail: "doubling ratio not finite".into(),
                });
                break;
            }
            worst = worst.max(ratio);
        }
        doubling_constant = Some(worst);
    }
    checks.push(dbl);

    // 1-homogeneity.
    let mut hom = AxiomCheck {
        property: "homogeneous",
        checked: props.homogeneous,
        passed: true,
        witness: None,
    };
    if props.homogeneous {
        for &(s, t) in &draws {
            let lambda = rng.gen_range(0.1..8.0f64);
            let a = mean.value(lambda * s, lambda * t);
            let b = lambda * mean.value(s, t);
            if (a - b).abs() > tol * a.abs().max(1.0) {
                hom.passed = false;
                hom.witness = Some(AxiomWitness {
                    s,
                    t,
                    lhs: a,
                    rhs: b,
                    detail: format!("scaling by lambda = {lambda}"),
                });
                break;
            }
        }
    }
    checks.push(hom);

    // Midpoint concavity, jointly in both arguments.
    let mut conc = AxiomCheck {
        property: "concave",
        checked: props.concave,
        passed: true,
        witness: None,
    };
    if props.concave {
        for pair in draws.windows(2) {
            let (s1, t1) = pair[0];
            let (s2, t2) = pair[1];
            let mid = mean.value(0.5 * (s1 + s2), 0.5 * (t1 + t2));
            let avg = 0.5 * (mean.value(s1, t1) + mean.value(s2, t2));
            if mid < avg - tol * avg.abs().max(1.0) {
                conc.passed = false;
                conc.witness = Some(AxiomWitness {
                    s: s1,
                    t: t1,
                    lhs: mid,
                    rhs: avg,
                    detail: format!("midpoint with ({s2}, {t2})"),
                });
                break;
            }
        }
    }
    checks.push(conc);

    // Difference-quotient identity theta(s,t) (k(s) - k(t)) = s - t.
    let mut dq = AxiomCheck {
        property: "difference_quotient",
        checked: props.difference_quotient,
        passed: true,
        witness: None,
    };
    if props.difference_quotient {
        match mean.require_k() {
            Err(_) => {
                dq.passed = false;
                dq.witness = Some(AxiomWitness {
                    s: 0.0,
                    t: 0.0,
                    lhs: 0.0,
                    rhs: 0.0,
                    detail: "capability declared but no k supplied".into(),
                });
            }
            Ok(k) => {
                for &(s, t) in &draws {
                    if (s - t).abs() < 1e-13 * s.max(t) {
                        continue;
                    }
                    let (ks, kt) = (k(s), k(t));
                    let theta = mean.value(s, t);
                    let lhs = theta * (ks - kt);
                    let rhs = s - t;
                    // k(s) - k(t) cancels near the diagonal; budget rounding
                    // at the scale of the individual terms.
                    let cancel = 1e-12 * (theta * (1.0 + ks.abs() + kt.abs()) + s + t);
                    if (lhs - rhs).abs() > 1e-10 * rhs.abs() + cancel {
                        dq.passed = false;
                        dq.witness = Some(AxiomWitness {
                            s,
                            t,
                            lhs,
                            rhs,
                            detail: "theta(s,t)(k(s)-k(t)) != s-t".into(),
                        });
                        break;
                    }
                }
            }
        }
    }
    checks.push(dq);

    AxiomReport {
        mean: mean.name().to_string(),
        samples: draws.len(),
        seed,
        box_hi,
        checks,
        doubling_constant,
    }
}
