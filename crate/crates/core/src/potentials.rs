//! Free-energy densities split as a monotone (convex) part plus a Lipschitz
//! perturbation, their Moreau–Yosida regularizations, and numerical checks of
//! the structural assumptions the model relies on.
//!
//! Notation in code: `beta` is the monotone part, `beta_hat` its primitive,
//! `pi` the Lipschitz part and `pi_hat` its primitive. The density is
//! `beta_hat + pi_hat`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::par::Execution;

/// Which of the two potentials a call refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bulk,
    Boundary,
}

/// A user-supplied potential pair. `beta` must be increasing with
/// `beta(0) = beta_hat(0) = 0`; `check_assumptions` verifies this on samples.
pub trait ScalarPotential: Send + Sync + fmt::Debug {
    fn beta(&self, r: f64) -> f64;
    fn beta_prime(&self, r: f64) -> f64;
    fn beta_hat(&self, r: f64) -> f64;
    fn pi(&self, r: f64) -> f64;
    fn pi_prime(&self, r: f64) -> f64;
    fn pi_hat(&self, r: f64) -> f64;
    /// True when `beta` blows up at ±1, so the domain is (-1, 1).
    fn singular(&self) -> bool;
    /// `beta_hat(sign)` for `sign = ±1`; `None` means +∞.
    fn beta_hat_endpoint(&self, sign: f64) -> Option<f64>;
}

#[derive(Clone, Debug)]
pub enum PotentialKind {
    /// Flory–Huggins: `beta = theta * atanh(r)`, `pi = -theta_c * r`.
    Logarithmic { theta: f64, theta_c: f64 },
    /// `beta` and `pi` as ascending coefficient lists; primitives vanish at 0.
    Polynomial { beta: Vec<f64>, pi: Vec<f64> },
    Custom(Arc<dyn ScalarPotential>),
}

impl PartialEq for PotentialKind {
    fn eq(&self, other: &Self) -> bool {
        use PotentialKind::*;
        match (self, other) {
            (
                Logarithmic { theta: a, theta_c: b },
                Logarithmic {
                    theta: c,
                    theta_c: d,
                },
            ) => a == c && b == d,
            (Polynomial { beta: a, pi: b }, Polynomial { beta: c, pi: d }) => a == c && b == d,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

fn horner(c: &[f64], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * r + ck)
}

fn horner_prime(c: &[f64], r: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * r + k as f64 * ck)
}

fn horner_primitive(c: &[f64], r: f64) -> f64 {
    r * c
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * r + ck / (k as f64 + 1.0))
}

/// `(1+r) ln(1+r) + (1-r) ln(1-r)` on [-1, 1], with `0 ln 0 = 0`.
fn entropy(r: f64) -> f64 {
    let xlog = |x: f64, l: f64| if x == 0.0 { 0.0 } else { x * l };
    xlog(1.0 + r, r.ln_1p()) + xlog(1.0 - r, (-r).ln_1p())
}

/// Same as `entropy(tanh z)`, accurate when tanh z rounds to ±1.
fn entropy_of_tanh(z: f64) -> f64 {
    let z = z.abs();
    let e = (-2.0 * z).exp();
    let l = e.ln_1p();
    2.0 * ((std::f64::consts::LN_2 - l) - 2.0 * z * e / (1.0 + e))
}

impl PotentialKind {
    pub fn logarithmic(theta: f64, theta_c: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Param(format!("theta must be positive, got {theta}")));
        }
        if !(theta_c >= 0.0 && theta_c.is_finite()) {
            return Err(Error::Param(format!(
                "theta_c must be nonnegative, got {theta_c}"
            )));
        }
        Ok(PotentialKind::Logarithmic { theta, theta_c })
    }

    pub fn polynomial(beta: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        if beta.iter().chain(pi.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Param("polynomial coefficients must be finite".into()));
        }
        Ok(PotentialKind::Polynomial { beta, pi })
    }

    pub fn singular(&self) -> bool {
        match self {
            PotentialKind::Logarithmic { .. } => true,
            PotentialKind::Polynomial { .. } => false,
            PotentialKind::Custom(p) => p.singular(),
        }
    }

    /// Is `r` inside the open domain of `beta`?
    pub fn in_domain(&self, r: f64) -> bool {
        r.is_finite() && (!self.singular() || r.abs() < 1.0)
    }

    pub fn beta(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta, .. } => theta * r.atanh(),
            PotentialKind::Polynomial { beta, .. } => horner(beta, r),
            PotentialKind::Custom(p) => p.beta(r),
        }
    }

    pub fn beta_prime(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta, .. } => theta / ((1.0 - r) * (1.0 + r)),
            PotentialKind::Polynomial { beta, .. } => horner_prime(beta, r),
            PotentialKind::Custom(p) => p.beta_prime(r),
        }
    }

    /// Primitive of `beta`; for singular kinds valid on the closed interval.
    pub fn beta_hat(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta, .. } => 0.5 * theta * entropy(r),
            PotentialKind::Polynomial { beta, .. } => horner_primitive(beta, r),
            PotentialKind::Custom(p) => {
                if p.singular() && r.abs() == 1.0 {
                    p.beta_hat_endpoint(r).unwrap_or(f64::INFINITY)
                } else {
                    p.beta_hat(r)
                }
            }
        }
    }

    pub fn pi(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta_c, .. } => -theta_c * r,
            PotentialKind::Polynomial { pi, .. } => horner(pi, r),
            PotentialKind::Custom(p) => p.pi(r),
        }
    }

    pub fn pi_prime(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta_c, .. } => -theta_c,
            PotentialKind::Polynomial { pi, .. } => horner_prime(pi, r),
            PotentialKind::Custom(p) => p.pi_prime(r),
        }
    }

    pub fn pi_hat(&self, r: f64) -> f64 {
        match self {
            PotentialKind::Logarithmic { theta_c, .. } => -0.5 * theta_c * r * r,
            PotentialKind::Polynomial { pi, .. } => horner_primitive(pi, r),
            PotentialKind::Custom(p) => p.pi_hat(r),
        }
    }

    /// Solve `J + s * beta(J) = r`. `s > 0` is the effective regularization
    /// (ε in the bulk, ε·ϱ on the boundary).
    pub fn resolve(&self, s: f64, r: f64, tol: f64, max_iter: usize) -> Result<Resolved> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Param(format!("regularization must be positive, got {s}")));
        }
        if !r.is_finite() {
            return Err(Error::Domain(format!("resolvent argument {r} is not finite")));
        }
        match self {
            PotentialKind::Logarithmic { theta, .. } => {
                let z = log_resolvent(*theta * s, r, tol, max_iter)?;
                let cz = z.cosh();
                Ok(Resolved {
                    j: z.tanh(),
                    beta_j: theta * z,
                    slope: theta / (1.0 / (cz * cz) + theta * s),
                })
            }
            _ => {
                let j = self.generic_resolvent(s, r, tol, max_iter)?;
                let bp = self.beta_prime(j);
                Ok(Resolved {
                    j,
                    beta_j: self.beta(j),
                    slope: bp / (1.0 + s * bp),
                })
            }
        }
    }

    fn generic_resolvent(&self, s: f64, r: f64, tol: f64, max_iter: usize) -> Result<f64> {
        let (mut lo, mut hi) = if self.singular() {
            (-1.0 + 1e-16, 1.0 - 1e-16)
        } else {
            (r - r.abs() - 1.0, r + r.abs() + 1.0)
        };
        let g = |j: f64| j + s * self.beta(j) - r;
        let tol = tol * r.abs().max(1.0);
        if !(g(lo) < 0.0 && g(hi) > 0.0) {
            return Err(Error::Convergence {
                what: "resolvent bracket does not straddle the root".into(),
                residual: f64::NAN,
            });
        }
        let mut x = (r / (1.0 + s * self.beta_prime(0.0).max(0.0))).clamp(lo, hi);
        let mut gx = g(x);
        for _ in 0..max_iter {
            if gx.abs() <= tol {
                return Ok(x);
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - gx / (1.0 + s * self.beta_prime(x));
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == x || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
                // Bracket exhausted at machine resolution.
                return Ok(x);
            }
            x = next;
            gx = g(x);
        }
        Err(Error::Convergence {
            what: "resolvent iteration".into(),
            residual: gx.abs(),
        })
    }

    /// `beta_hat(J) + (r - J)^2 / (2s)` given a resolved point.
    fn envelope_from(&self, s: f64, z: &Resolved) -> f64 {
        let hat = match self {
            PotentialKind::Logarithmic { theta, .. } => 0.5 * theta * entropy_of_tanh(z.beta_j / theta),
            _ => self.beta_hat(z.j),
        };
        0.5 * s * z.beta_j * z.beta_j + hat
    }
}

/// Positive root of `tanh z + a z = |r|`, with the sign of `r`.
///
/// Working in `z = atanh(J)` keeps full precision when J is within rounding
/// distance of ±1, where a direct solve in J cannot even represent the root.
fn log_resolvent(a: f64, r: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let y = r.abs();
    if y == 0.0 {
        return Ok(0.0);
    }
    let h = |z: f64| z.tanh() + a * z - y;
    let mut lo = 0.0_f64;
    let mut hi = y / a;
    if y < 1.0 {
        hi = hi.min(y.atanh());
    }
    let tol = tol * y.max(1.0);
    // h is concave and increasing, so after at most one step Newton
    // approaches the root monotonically from the left.
    let mut z = hi;
    let mut hz = h(z);
    for _ in 0..max_iter {
        if hz.abs() <= tol {
            return Ok(z.copysign(r));
        }
        if hz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let c = z.cosh();
        let mut next = z - hz / (1.0 / (c * c) + a);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == z {
            return Ok(z.copysign(r));
        }
        z = next;
        hz = h(z);
    }
    Err(Error::Convergence {
        what: "logarithmic resolvent".into(),
        residual: hz.abs(),
    })
}

/// Output of a resolvent solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolved {
    /// J = (I + s·β)⁻¹ r.
    pub j: f64,
    /// β(J), which equals the Yosida value `(r - J) / s`.
    pub beta_j: f64,
    /// Derivative of the Yosida value with respect to r.
    pub slope: f64,
}

/// Bulk and boundary potentials plus the domination constants (ϱ, c₀)
/// relating them.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub bulk: PotentialKind,
    pub boundary: PotentialKind,
    pub rho: f64,
    pub c0: f64,
}

impl PotentialSpec {
    /// Boundary copy of the bulk potential with ϱ = 1, c₀ = 0.
    pub fn new(kind: PotentialKind) -> Self {
        PotentialSpec {
            boundary: kind.clone(),
            bulk: kind,
            rho: 1.0,
            c0: 0.0,
        }
    }

    pub fn logarithmic(theta: f64, theta_c: f64) -> Result<Self> {
        Ok(Self::new(PotentialKind::logarithmic(theta, theta_c)?))
    }

    pub fn with_boundary(mut self, kind: PotentialKind) -> Self {
        self.boundary = kind;
        self
    }

    pub fn with_domination(mut self, rho: f64, c0: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) || !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Error::Param(format!(
                "domination constants need rho > 0, c0 >= 0 (got {rho}, {c0})"
            )));
        }
        self.rho = rho;
        self.c0 = c0;
        Ok(self)
    }

    pub fn kind(&self, side: Side) -> &PotentialKind {
        match side {
            Side::Bulk => &self.bulk,
            Side::Boundary => &self.boundary,
        }
    }

    /// Effective resolvent parameter: ε in the bulk, ε·ϱ on the boundary.
    pub fn yosida_scale(&self, side: Side, eps: f64) -> f64 {
        match side {
            Side::Bulk => eps,
            Side::Boundary => eps * self.rho,
        }
    }

    pub fn resolve(&self, side: Side, r: f64, cfg: &YosidaConfig) -> Result<Resolved> {
        self.kind(side).resolve(
            self.yosida_scale(side, cfg.epsilon),
            r,
            cfg.newton_tol,
            cfg.max_iter,
        )
    }

    /// Monotone part as used by a time step: `(value, slope)` of β or β_ε.
    pub fn monotone(&self, side: Side, reg: &Regularization, r: f64) -> Result<(f64, f64)> {
        match reg {
            Regularization::Exact => {
                let k = self.kind(side);
                if !k.in_domain(r) {
                    return Err(Error::Domain(format!("beta({r}) is undefined")));
                }
                Ok((k.beta(r), k.beta_prime(r)))
            }
            Regularization::Yosida(cfg) => {
                let z = self.resolve(side, r, cfg)?;
                Ok((z.beta_j, z.slope))
            }
        }
    }

    /// Convex energy density: β̂ (Exact) or the Moreau envelope (Yosida).
    pub fn convex_density(&self, side: Side, reg: &Regularization, r: f64) -> Result<f64> {
        match reg {
            Regularization::Exact => {
                let k = self.kind(side);
                if !r.is_finite() || (k.singular() && r.abs() > 1.0) {
                    return Err(Error::Domain(format!("energy density at {r} is infinite")));
                }
                let v = k.beta_hat(r);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Domain(format!("energy density at {r} is infinite")))
                }
            }
            Regularization::Yosida(cfg) => {
                let s = self.yosida_scale(side, cfg.epsilon);
                let z = self.resolve(side, r, cfg)?;
                Ok(self.kind(side).envelope_from(s, &z))
            }
        }
    }

    /// Full density `beta_hat_• + pi_hat`.
    pub fn density(&self, side: Side, reg: &Regularization, r: f64) -> Result<f64> {
        Ok(self.convex_density(side, reg, r)? + self.kind(side).pi_hat(r))
    }
}

/// Parameters of the Moreau–Yosida regularization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YosidaConfig {
    pub epsilon: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl YosidaConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Param(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(YosidaConfig {
            epsilon,
            newton_tol: 1e-13,
            max_iter: 100,
        })
    }

    /// Any ε > 0, for direct resolvent evaluation outside a model.
    pub fn unchecked(epsilon: f64) -> Self {
        YosidaConfig {
            epsilon,
            newton_tol: 1e-13,
            max_iter: 100,
        }
    }
}

/// How the singular part enters the dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    Exact,
    Yosida(YosidaConfig),
}

/// `(β(r), β'(r))`.
pub fn eval_beta(spec: &PotentialSpec, side: Side, r: f64) -> Result<(f64, f64)> {
    spec.monotone(side, &Regularization::Exact, r)
}

/// `β̂(r) + π̂(r)` on the closed interval for singular kinds.
pub fn eval_energy_density(spec: &PotentialSpec, side: Side, r: f64) -> Result<f64> {
    spec.density(side, &Regularization::Exact, r)
}

pub fn resolvent(spec: &PotentialSpec, side: Side, r: f64, eps: f64) -> Result<f64> {
    Ok(spec.resolve(side, r, &YosidaConfig::unchecked(eps))?.j)
}

pub fn yosida_beta(spec: &PotentialSpec, side: Side, r: f64, eps: f64) -> Result<f64> {
    Ok(spec.resolve(side, r, &YosidaConfig::unchecked(eps))?.beta_j)
}

/// Moreau envelope β̂_ε. Finite for every real r; outside [-1, 1] it is the
/// regularized extension, not the physical density.
pub fn moreau_envelope(spec: &PotentialSpec, side: Side, r: f64, eps: f64) -> Result<f64> {
    spec.convex_density(side, &Regularization::Yosida(YosidaConfig::unchecked(eps)), r)
}

/// β_ε over a batch of points.
pub fn yosida_beta_batch(
    spec: &PotentialSpec,
    side: Side,
    rs: &[f64],
    cfg: &YosidaConfig,
    exec: Execution,
) -> Result<Vec<f64>> {
    exec.try_map(rs, |&r| spec.resolve(side, r, cfg).map(|z| z.beta_j))
}

/// Outcome of sampling the structural assumptions.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub sample_count: usize,
    pub normalized: bool,
    pub monotone_bulk: bool,
    pub monotone_boundary: bool,
    pub singular_bulk: bool,
    pub singular_boundary: bool,
    /// Smallest sampled β'.
    pub varpi_bulk: f64,
    pub varpi_boundary: f64,
    /// max over samples of |β| - ϱ|β_Γ| - c₀; nonpositive when (A2) holds.
    pub domination_excess: f64,
    pub lipschitz_pi: f64,
    pub lipschitz_pi_boundary: f64,
    pub mean_admissible: bool,
    /// Fitted growth exponent of β near ±1 against |ln δ|.
    pub kappa: f64,
    pub sign_c3: f64,
    pub sign_c4: f64,
    pub sign_condition: bool,
    pub double_well: bool,
}

impl AssumptionReport {
    pub fn a1(&self) -> bool {
        self.normalized
            && self.monotone_bulk
            && self.monotone_boundary
            && self.singular_bulk
            && self.singular_boundary
            && self.varpi_bulk > 0.0
            && self.varpi_boundary > 0.0
    }
    pub fn a2(&self) -> bool {
        self.domination_excess <= 0.0
    }
    pub fn a3(&self) -> bool {
        self.lipschitz_pi.is_finite() && self.lipschitz_pi_boundary.is_finite()
    }
    pub fn a4(&self) -> bool {
        self.mean_admissible
    }
    pub fn a5(&self) -> bool {
        self.kappa > 0.51
    }

    pub fn all_pass(&self) -> bool {
        self.a1() && self.a2() && self.a3() && self.a4() && self.a5() && self.sign_condition
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.double_well {
            w.push("no double-well: the bulk density is convex".to_string());
        }
        w
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let b = |x: bool| if x { "pass" } else { "fail" }.to_string();
        let f = |x: f64| format!("{x:e}");
        vec![
            ("samples".into(), self.sample_count.to_string()),
            ("a1".into(), b(self.a1())),
            ("a1.normalized".into(), b(self.normalized)),
            ("a1.monotone_bulk".into(), b(self.monotone_bulk)),
            ("a1.monotone_boundary".into(), b(self.monotone_boundary)),
            ("a1.singular_bulk".into(), b(self.singular_bulk)),
            ("a1.singular_boundary".into(), b(self.singular_boundary)),
            ("a1.varpi_bulk".into(), f(self.varpi_bulk)),
            ("a1.varpi_boundary".into(), f(self.varpi_boundary)),
            ("a2".into(), b(self.a2())),
            ("a2.excess".into(), f(self.domination_excess)),
            ("a3".into(), b(self.a3())),
            ("a3.lipschitz_pi".into(), f(self.lipschitz_pi)),
            ("a3.lipschitz_pi_boundary".into(), f(self.lipschitz_pi_boundary)),
            ("a4".into(), b(self.a4())),
            ("a5".into(), b(self.a5())),
            ("a5.kappa".into(), f(self.kappa)),
            ("sign".into(), b(self.sign_condition)),
            ("sign.c3".into(), f(self.sign_c3)),
            ("sign.c4".into(), f(self.sign_c4)),
            ("double_well".into(), self.double_well.to_string()),
            ("all".into(), b(self.all_pass())),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            s.push_str(&k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}

/// Least-squares slope of y against x.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Sample points in (-1, 1): uniform midpoints, the origin, and points
/// geometrically close to both endpoints.
fn assumption_samples(n: usize) -> Vec<f64> {
    let mut r: Vec<f64> = (0..n)
        .map(|k| -1.0 + (2.0 * k as f64 + 1.0) / n as f64)
        .collect();
    r.push(0.0);
    for p in 3..=12 {
        let d = 10f64.powi(-p);
        r.push(1.0 - d);
        r.push(-1.0 + d);
    }
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

fn monotone_on(kind: &PotentialKind, rs: &[f64]) -> (bool, f64) {
    let vals: Vec<f64> = rs.iter().map(|&r| kind.beta(r)).collect();
    let increasing = vals.windows(2).all(|w| w[1] > w[0]);
    let signs = rs
        .iter()
        .zip(&vals)
        .all(|(&r, &v)| r == 0.0 || v.signum() == r.signum());
    let varpi = rs
        .iter()
        .map(|&r| kind.beta_prime(r))
        .fold(f64::INFINITY, f64::min);
    (increasing && signs, varpi)
}

fn lipschitz_on(kind: &PotentialKind, rs: &[f64]) -> f64 {
    let deriv = rs
        .iter()
        .map(|&r| kind.pi_prime(r).abs())
        .fold(0.0, f64::max);
    let chords = rs
        .windows(2)
        .map(|w| ((kind.pi(w[1]) - kind.pi(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max);
    deriv.max(chords)
}

/// Regression of ln|β(±(1-2δ))| on ln|ln δ| over δ ∈ [1e-8, 1e-2]; the
/// smaller of the two one-sided slopes.
fn growth_exponent(kind: &PotentialKind) -> f64 {
    let deltas: Vec<f64> = (0..=60).map(|k| 10f64.powf(-2.0 - 6.0 * k as f64 / 60.0)).collect();
    let x: Vec<f64> = deltas.iter().map(|d| d.ln().abs().ln()).collect();
    let side = |sign: f64| {
        let y: Vec<f64> = deltas
            .iter()
            .map(|d| {
                let b = sign * kind.beta(sign * (1.0 - 2.0 * d));
                if b > 0.0 {
                    b.ln()
                } else {
                    f64::NAN
                }
            })
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            f64::NAN
        } else {
            ls_slope(&x, &y).0
        }
    };
    let (up, down) = (side(1.0), side(-1.0));
    if up.is_nan() || down.is_nan() {
        f64::NAN
    } else {
        up.min(down)
    }
}

/// Validate the structural assumptions on a sample of (-1, 1).
///
/// The sign condition β(r)(r - m̄₀) ≥ c₃|β(r)| - c₄ is tested with
/// c₃ = (1 - |m̄₀|)/2; c₄ is the smallest constant that works on the samples,
/// and the check passes when the deficit is nonpositive at the outermost
/// samples, so that c₄ is set by the interior and stays bounded near ±1.
pub fn check_assumptions(spec: &PotentialSpec, sample_count: usize, mean0: f64) -> Result<AssumptionReport> {
    if sample_count < 100 {
        return Err(Error::Param(format!(
            "need at least 100 samples, got {sample_count}"
        )));
    }
    let rs = assumption_samples(sample_count);
    let (b, g) = (&spec.bulk, &spec.boundary);

    let normalized = [b, g]
        .iter()
        .all(|k| k.beta(0.0) == 0.0 && k.beta_hat(0.0) == 0.0);
    let (monotone_bulk, varpi_bulk) = monotone_on(b, &rs);
    let (monotone_boundary, varpi_boundary) = monotone_on(g, &rs);
    let singular_of = |k: &PotentialKind| {
        k.singular() && k.beta(1.0 - 1e-12) > 10.0 * k.beta(0.5).abs() && k.beta(-1.0 + 1e-12) < -10.0 * k.beta(-0.5).abs()
    };

    let domination_excess = rs
        .iter()
        .map(|&r| b.beta(r).abs() - spec.rho * g.beta(r).abs() - spec.c0)
        .fold(f64::NEG_INFINITY, f64::max);

    let mean_admissible = mean0.is_finite() && mean0.abs() < 1.0;
    let c3 = if mean_admissible { 0.5 * (1.0 - mean0.abs()) } else { 0.0 };
    let deficit = |k: &PotentialKind, r: f64| {
        let v = k.beta(r);
        c3 * v.abs() - v * (r - mean0)
    };
    let mut c4 = 0.0_f64;
    for k in [b, g] {
        for &r in &rs {
            c4 = c4.max(deficit(k, r));
        }
    }
    let (r_lo, r_hi) = (rs[0], rs[rs.len() - 1]);
    let outer_ok = [b, g]
        .iter()
        .all(|k| deficit(k, r_lo) <= 0.0 && deficit(k, r_hi) <= 0.0);

    let double_well = match b {
        PotentialKind::Logarithmic { theta, theta_c } => theta_c > theta,
        // Nonconvex somewhere on the samples.
        _ => rs.iter().any(|&r| b.beta_prime(r) + b.pi_prime(r) < 0.0),
    };

    Ok(AssumptionReport {
        sample_count,
        normalized,
        monotone_bulk,
        monotone_boundary,
        singular_bulk: singular_of(b),
        singular_boundary: singular_of(g),
        varpi_bulk,
        varpi_boundary,
        domination_excess,
        lipschitz_pi: lipschitz_on(b, &rs),
        lipschitz_pi_boundary: lipschitz_on(g, &rs),
        mean_admissible,
        kappa: growth_exponent(b).min(growth_exponent(g)),
        sign_c3: c3,
        sign_c4: c4,
        sign_condition: c3 > 0.0 && c4.is_finite() && outer_ok,
        double_well,
    })
}
