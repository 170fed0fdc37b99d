//! Implicit time stepping of the coupled bulk–surface system.
//!
//! Unknowns per step are `x = [φ (bulk nodes), μ (bulk nodes), θ (surface
//! nodes)]`; ψ is the trace of φ. With `δ = (φ - φ_old)/τ` and `f = β•(φ) +
//! π(φ̃)` (φ̃ = φ_old for the convex split, φ for the fully implicit scheme)
//! the residual rows are, node by node:
//!
//! * interior mass: `δ + (K_b μ)/w`
//! * interior chemical potential: `μ - (K_b φ)/w - f`
//! * boundary mass, tested with a trace-linked pair so the jump terms cancel:
//!   `[(w + hx) δ + (K_b μ) + σ (K_s θ)] / hx`
//! * boundary chemical potential, the weighted sum of the bulk row and the
//!   surface equation (normal derivatives cancel):
//!   `[w μ + hx θ - (K_b φ) - (K_s ψ) - w f - hx g] / hx`
//! * coupling: `L [w δ + (K_b μ)] / hx + (μ - θ)`, which for L = 0 is the
//!   identification θ = μ on the boundary.
//!
//! Testing these rows against the constant pair gives exact mass
//! conservation, and against μ̂ = (μ, θ) gives the discrete energy law.

use crate::diagnostics::{separation_delta, StepDiagnostics};
use crate::error::{Error, Result};
use crate::fields::{hminus_norm, FieldPair, Linkage};
use crate::grid::{Regime, SlabGrid};
use crate::linalg::{Factored, SparsePattern};
use crate::par::Execution;
use crate::potentials::{PotentialSpec, Regularization, Side};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub regime: Regime,
    pub potential: PotentialSpec,
    pub regularization: Regularization,
}

impl ModelParams {
    pub fn new(regime: Regime, potential: PotentialSpec, regularization: Regularization) -> Result<Self> {
        regime.validate()?;
        Ok(ModelParams {
            regime,
            potential,
            regularization,
        })
    }

    pub fn exact(&self) -> bool {
        self.regularization == Regularization::Exact
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Convex part implicit, Lipschitz part explicit.
    ConvexSplit,
    FullyImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub line_search_factor: f64,
    pub line_search_max: usize,
    /// Exact-mode iterates stay inside (-cap, cap).
    pub phase_cap: f64,
    /// The cached Jacobian is dropped at step counts divisible by this.
    pub jacobian_every: u64,
    pub max_halvings: u32,
}

impl StepConfig {
    pub fn new(tau: f64, scheme: Scheme) -> Result<Self> {
        let c = StepConfig {
            tau,
            scheme,
            newton_tol: 1e-10,
            newton_max: 50,
            line_search_factor: 0.5,
            line_search_max: 30,
            phase_cap: 1.0 - 1e-12,
            jacobian_every: 50,
            max_halvings: 10,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bad.push(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.newton_tol > 0.0) {
            bad.push("newton_tol must be positive".to_string());
        }
        if self.newton_max == 0 {
            bad.push("newton_max must be at least 1".to_string());
        }
        if !(self.line_search_factor > 0.0 && self.line_search_factor < 1.0) {
            bad.push("line_search_factor must lie in (0, 1)".to_string());
        }
        if !(self.phase_cap > 0.0 && self.phase_cap < 1.0) {
            bad.push("phase_cap must lie in (0, 1)".to_string());
        }
        if self.jacobian_every == 0 {
            bad.push("jacobian_every must be at least 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// Time, step count, the trace-linked order parameter and the chemical
/// potential pair (independent for L > 0, trace-linked for L = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub phi: FieldPair,
    pub mu: FieldPair,
}

/// The stacked Newton unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Unknowns {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Unknowns {
    pub fn from_state(s: &SimState) -> Self {
        Unknowns {
            phi: s.phi.bulk.clone(),
            mu: s.mu.bulk.clone(),
            theta: s.mu.surf.clone(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.phi.clone();
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.theta);
        v
    }

    pub fn from_slice(grid: &SlabGrid, v: &[f64]) -> Self {
        let n = grid.n_bulk();
        Unknowns {
            phi: v[..n].to_vec(),
            mu: v[n..2 * n].to_vec(),
            theta: v[2 * n..].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub factorizations: usize,
    pub residual: f64,
}

/// Neighbor lists of the bulk stiffness: off-diagonal `(node, coef)` and
/// the diagonal sum.
#[derive(Clone, Debug)]
struct Stencil {
    nbrs: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl Stencil {
    fn new(grid: &SlabGrid) -> Self {
        let n = grid.n_bulk();
        let mut nbrs = vec![Vec::with_capacity(4); n];
        let mut diag = vec![0.0; n];
        grid.for_each_bulk_edge(|a, b, c| {
            nbrs[a].push((b, c));
            nbrs[b].push((a, c));
            diag[a] += c;
            diag[b] += c;
        });
        Stencil { nbrs, diag }
    }
}

struct JacobianCache {
    lu: Factored,
    tau: f64,
    stale: bool,
}

/// Potential values and slopes at the nodes of a candidate.
struct Nodal {
    f: Vec<f64>,
    df: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
}

/// Nodal evaluation switches to the worker pool above this many nodes.
const PARALLEL_NODES: usize = 1 << 14;

/// One trajectory's solver: parameters plus the reusable Jacobian pattern
/// and factorization.
pub struct Stepper {
    grid: SlabGrid,
    params: ModelParams,
    cfg: StepConfig,
    exec: Execution,
    stencil: Stencil,
    pattern: Option<SparsePattern>,
    cache: Option<JacobianCache>,
}

impl Stepper {
    pub fn new(grid: &SlabGrid, params: &ModelParams, cfg: &StepConfig) -> Result<Self> {
        params.regime.validate()?;
        cfg.validate()?;
        Ok(Stepper {
            stencil: Stencil::new(grid),
            grid: grid.clone(),
            params: params.clone(),
            cfg: *cfg,
            exec: Execution::default(),
            pattern: None,
            cache: None,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn grid(&self) -> &SlabGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Drop the cached factorization.
    pub fn reset_jacobian(&mut self) {
        self.cache = None;
    }

    pub fn dim(&self) -> usize {
        2 * self.grid.n_bulk() + self.grid.n_surf()
    }

    fn nodal(&self, old_phi: &[f64], phi: &[f64], psi: &[f64]) -> Result<Nodal> {
        let spec = &self.params.potential;
        let reg = &self.params.regularization;
        let implicit = self.cfg.scheme == Scheme::FullyImplicit;
        let cap = self.cfg.phase_cap;
        let exact = self.params.exact();
        let eval = |side: Side, r: f64, r_old: f64| -> Result<(f64, f64)> {
            if exact && !(r.abs() < cap) {
                return Err(Error::Domain(format!(
                    "iterate {r} left the admissible bracket (-{cap}, {cap})"
                )));
            }
            let (b, db) = spec.monotone(side, reg, r)?;
            let k = spec.kind(side);
            if implicit {
                Ok((b + k.pi(r), db + k.pi_prime(r)))
            } else {
                Ok((b + k.pi(r_old), db))
            }
        };
        let exec = if phi.len() >= PARALLEL_NODES {
            self.exec
        } else {
            Execution::Sequential
        };
        let idx: Vec<usize> = (0..phi.len()).collect();
        let bulk = exec.try_map(&idx, |&k| eval(Side::Bulk, phi[k], old_phi[k]))?;
        let surf: Vec<(f64, f64)> = (0..psi.len())
            .map(|s| eval(Side::Boundary, psi[s], old_phi[self.grid.trace_node(s)]))
            .collect::<Result<_>>()?;
        Ok(Nodal {
            f: bulk.iter().map(|p| p.0).collect(),
            df: bulk.iter().map(|p| p.1).collect(),
            g: surf.iter().map(|p| p.0).collect(),
            dg: surf.iter().map(|p| p.1).collect(),
        })
    }

    /// Residual of one step of size `tau` from `old_phi` at candidate `x`.
    pub fn residual_tau(&self, old_phi: &[f64], x: &Unknowns, tau: f64) -> Result<Vec<f64>> {
        let g = &self.grid;
        let (n, m, hx) = (g.n_bulk(), g.n_surf(), g.hx);
        let Regime { l, sigma } = self.params.regime;
        let psi = g.trace(&x.phi);
        let nod = self.nodal(old_phi, &x.phi, &psi)?;
        let kphi = g.stiffness_bulk(&x.phi);
        let kmu = g.stiffness_bulk(&x.mu);
        let kspsi = g.stiffness_surf(&psi);
        let kstheta = g.stiffness_surf(&x.theta);
        let w = g.weights();
        let mut r = vec![0.0; 2 * n + m];
        for k in 0..n {
            let d = (x.phi[k] - old_phi[k]) / tau;
            match g.surface_of(k) {
                None => {
                    r[k] = d + kmu[k] / w[k];
                    r[n + k] = x.mu[k] - kphi[k] / w[k] - nod.f[k];
                }
                Some(s) => {
                    r[k] = ((w[k] + hx) * d + kmu[k] + sigma * kstheta[s]) / hx;
                    r[n + k] = (w[k] * x.mu[k] + hx * x.theta[s]
                        - kphi[k]
                        - kspsi[s]
                        - w[k] * nod.f[k]
                        - hx * nod.g[s])
                        / hx;
                    r[2 * n + s] = l * (w[k] * d + kmu[k]) / hx + (x.mu[k] - x.theta[s]);
                }
            }
        }
        Ok(r)
    }

    pub fn residual(&self, old: &SimState, x: &Unknowns) -> Result<Vec<f64>> {
        self.residual_tau(&old.phi.bulk, x, self.cfg.tau)
    }

    /// Emit the analytic Jacobian as `(row, col, value)` in a fixed order
    /// that depends only on the grid; zero entries are still emitted.
    fn jacobian_into(
        &self,
        old_phi: &[f64],
        x: &Unknowns,
        tau: f64,
        push: &mut dyn FnMut(usize, usize, f64),
    ) -> Result<()> {
        let g = &self.grid;
        let (n, hx) = (g.n_bulk(), g.hx);
        let Regime { l, sigma } = self.params.regime;
        let psi = g.trace(&x.phi);
        let nod = self.nodal(old_phi, &x.phi, &psi)?;
        let w = g.weights();
        let st = &self.stencil;
        let ks_diag = 2.0 / hx;
        let ks_off = 1.0 / hx;
        for k in 0..n {
            let dk = st.diag[k];
            match g.surface_of(k) {
                None => {
                    push(k, k, 1.0 / tau);
                    push(k, n + k, dk / w[k]);
                    for &(j, c) in &st.nbrs[k] {
                        push(k, n + j, -c / w[k]);
                    }
                    push(n + k, n + k, 1.0);
                    push(n + k, k, -dk / w[k] - nod.df[k]);
                    for &(j, c) in &st.nbrs[k] {
                        push(n + k, j, c / w[k]);
                    }
                }
                Some(s) => {
                    let side = s / g.nx;
                    let i = s % g.nx;
                    let surf_nbrs = [side * g.nx + (i + 1) % g.nx, side * g.nx + (i + g.nx - 1) % g.nx];
                    // boundary mass
                    push(k, k, (w[k] + hx) / (tau * hx));
                    push(k, n + k, dk / hx);
                    for &(j, c) in &st.nbrs[k] {
                        push(k, n + j, -c / hx);
                    }
                    push(k, 2 * n + s, sigma * ks_diag / hx);
                    for &t in &surf_nbrs {
                        push(k, 2 * n + t, -sigma * ks_off / hx);
                    }
                    // boundary chemical potential
                    push(n + k, n + k, w[k] / hx);
                    push(n + k, 2 * n + s, 1.0);
                    push(
                        n + k,
                        k,
                        -(dk + ks_diag) / hx - (w[k] * nod.df[k] + hx * nod.dg[s]) / hx,
                    );
                    for &(j, c) in &st.nbrs[k] {
                        push(n + k, j, c / hx);
                    }
                    for &t in &surf_nbrs {
                        push(n + k, g.trace_node(t), ks_off / hx);
                    }
                    // coupling
                    push(2 * n + s, k, l * w[k] / (tau * hx));
                    push(2 * n + s, n + k, l * dk / hx + 1.0);
                    for &(j, c) in &st.nbrs[k] {
                        push(2 * n + s, n + j, -l * c / hx);
                    }
                    push(2 * n + s, 2 * n + s, -1.0);
                }
            }
        }
        Ok(())
    }

    /// Analytic Jacobian at `x` as triplets (duplicates are to be summed).
    pub fn jacobian_triplets(&self, old: &SimState, x: &Unknowns) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::new();
        self.jacobian_into(&old.phi.bulk, x, self.cfg.tau, &mut |r, c, v| out.push((r, c, v)))?;
        Ok(out)
    }

    fn factor(&mut self, old_phi: &[f64], x: &Unknowns, tau: f64) -> Result<()> {
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        self.jacobian_into(old_phi, x, tau, &mut |r, c, v| {
            idx.push((r, c));
            vals.push(v);
        })?;
        if self.pattern.is_none() {
            self.pattern = Some(SparsePattern::new(self.dim(), &idx)?);
        }
        let lu = self.pattern.as_ref().expect("pattern built above").factor(&vals)?;
        self.cache = Some(JacobianCache { lu, tau, stale: false });
        Ok(())
    }

    /// max(τ |mass rows|, |other rows| / max(1, |μ|)).
    fn scaled_norm(&self, r: &[f64], x: &Unknowns, tau: f64) -> f64 {
        let n = self.grid.n_bulk();
        let mass = r[..n].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let rest = r[n..].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mu = x.mu.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        (tau * mass).max(rest / mu)
    }

    /// Newton iteration for one step of size `tau`.
    fn newton(&mut self, old: &SimState, tau: f64) -> Result<(Unknowns, NewtonStats)> {
        let old_phi = &old.phi.bulk;
        let exact = self.params.exact();
        let cap = self.cfg.phase_cap;
        let mut x = Unknowns::from_state(old);
        let mut r = self.residual_tau(old_phi, &x, tau)?;
        let mut norm = self.scaled_norm(&r, &x, tau);
        let mut stats = NewtonStats::default();
        if self.cache.as_ref().is_some_and(|c| c.tau != tau) {
            self.cache = None;
        }
        while norm > self.cfg.newton_tol {
            if stats.iterations >= self.cfg.newton_max {
                return Err(Error::Convergence {
                    what: format!("Newton did not converge in {} iterations", self.cfg.newton_max),
                    residual: norm,
                });
            }
            let mut fresh = false;
            if self.cache.as_ref().is_none_or(|c| c.stale) {
                self.factor(old_phi, &x, tau)?;
                stats.factorizations += 1;
                fresh = true;
            }
            let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
            self.cache.as_ref().expect("factored above").lu.solve_in_place(&mut dx)?;
            let xv = x.to_vec();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=self.cfg.line_search_max {
                let cand: Vec<f64> = xv.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                let cx = Unknowns::from_slice(&self.grid, &cand);
                let inside = !exact || cx.phi.iter().all(|v| v.abs() < cap);
                if inside {
                    if let Ok(rc) = self.residual_tau(old_phi, &cx, tau) {
                        let nc = self.scaled_norm(&rc, &cx, tau);
                        if nc < norm {
                            accepted = Some((cx, rc, nc));
                            break;
                        }
                    }
                }
                alpha *= self.cfg.line_search_factor;
            }
            match accepted {
                Some((cx, rc, nc)) => {
                    if nc > 0.5 * norm {
                        if let Some(c) = self.cache.as_mut() {
                            c.stale = true;
                        }
                    }
                    x = cx;
                    r = rc;
                    norm = nc;
                    stats.iterations += 1;
                }
                None if !fresh => {
                    // Retry the same iterate with an up-to-date Jacobian.
                    if let Some(c) = self.cache.as_mut() {
                        c.stale = true;
                    }
                    stats.iterations += 1;
                }
                None => {
                    return Err(Error::Convergence {
                        what: "line search failed to reduce the residual".into(),
                        residual: norm,
                    })
                }
            }
        }
        stats.residual = norm;
        Ok((x, stats))
    }

    /// Newton solve plus the mass-consistent update: φ is recomputed from the
    /// mass rows at the converged μ̂ so that conservation holds to roundoff
    /// regardless of the Newton tolerance.
    fn solve_tau(&mut self, old: &SimState, tau: f64) -> Result<(SimState, NewtonStats)> {
        let (mut x, stats) = self.newton(old, tau)?;
        let g = &self.grid;
        let (n, hx) = (g.n_bulk(), g.hx);
        let sigma = self.params.regime.sigma;
        let kmu = g.stiffness_bulk(&x.mu);
        let kstheta = g.stiffness_surf(&x.theta);
        let w = g.weights();
        let mut phi = vec![0.0; n];
        for k in 0..n {
            let old_k = old.phi.bulk[k];
            phi[k] = match g.surface_of(k) {
                None => old_k - tau * kmu[k] / w[k],
                Some(s) => old_k - tau * (kmu[k] + sigma * kstheta[s]) / (w[k] + hx),
            };
        }
        let cap = self.cfg.phase_cap;
        if !self.params.exact() || phi.iter().all(|v| v.abs() < cap) {
            x.phi = phi;
        }
        let mu = if self.params.regime.trace_linked() {
            FieldPair::trace_linked(g, x.mu)?
        } else {
            FieldPair::independent(g, x.mu, x.theta)?
        };
        Ok((
            SimState {
                t: old.t + tau,
                step: old.step,
                phi: FieldPair::trace_linked(g, x.phi)?,
                mu,
            },
            stats,
        ))
    }

    /// One Newton step without retries; the returned state keeps `step`.
    pub fn newton_solve(&mut self, old: &SimState) -> Result<(SimState, NewtonStats)> {
        let tau = self.cfg.tau;
        self.solve_tau(old, tau)
    }

    /// Advance over `tau`, splitting into halves on solver failure.
    fn advance_split(&mut self, state: &SimState, tau: f64, depth: u32, acc: &mut StepAccum) -> Result<SimState> {
        match self.solve_tau(state, tau) {
            Ok((s, st)) => {
                acc.newton_iters += st.iterations;
                acc.factorizations += st.factorizations;
                acc.substeps += 1;
                acc.tau_dissipation += tau * self.dissipation(&s.mu);
                Ok(s)
            }
            Err(e @ (Error::Convergence { .. } | Error::Domain(_) | Error::Solver(_)))
                if depth < self.cfg.max_halvings =>
            {
                let _ = e;
                self.cache = None;
                let mid = self.advance_split(state, 0.5 * tau, depth + 1, acc)?;
                self.advance_split(&mid, 0.5 * tau, depth + 1, acc)
            }
            Err(e) => Err(e),
        }
    }

    /// One macro step with the retry ladder. Velocity is measured only when
    /// `with_velocity` is set, since it costs an elliptic solve.
    pub fn advance_with(&mut self, state: &SimState, with_velocity: bool) -> Result<(SimState, StepDiagnostics)> {
        if state.step.is_multiple_of(self.cfg.jacobian_every) {
            self.cache = None;
        }
        let tau = self.cfg.tau;
        let mut acc = StepAccum::default();
        let mut next = self.advance_split(state, tau, 0, &mut acc)?;
        next.step = state.step + 1;
        next.t = next.step as f64 * tau;
        let e_old = self.energy(&state.phi.bulk)?;
        let e_new = self.energy(&next.phi.bulk)?;
        let velocity_norm = if with_velocity {
            let v = next.phi.sub(&state.phi).scale(1.0 / tau);
            Some(hminus_norm(&self.grid, self.params.regime, &v)?)
        } else {
            None
        };
        let mean = crate::fields::generalized_mean(&self.grid, &next.phi)?;
        let diag = StepDiagnostics {
            t: next.t,
            step: next.step,
            energy: e_new,
            mean,
            dissipation: acc.tau_dissipation / tau,
            energy_drop: e_old - e_new,
            defect: e_old - e_new - acc.tau_dissipation,
            velocity_norm,
            separation: separation_delta(&next.phi),
            max_abs_phi: next.phi.max_abs(),
            min_phi: next.phi.min(),
            newton_iters: acc.newton_iters,
            factorizations: acc.factorizations,
            substeps: acc.substeps,
        };
        Ok((next, diag))
    }

    pub fn advance(&mut self, state: &SimState) -> Result<(SimState, StepDiagnostics)> {
        self.advance_with(state, true)
    }

    /// Discrete energy of a bulk array and its trace.
    pub fn energy(&self, phi: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let spec = &self.params.potential;
        let reg = &self.params.regularization;
        let mut e = 0.0;
        g.for_each_bulk_edge(|a, b, c| e += 0.5 * c * (phi[a] - phi[b]).powi(2));
        let psi = g.trace(phi);
        g.for_each_surface_edge(|a, b, c| e += 0.5 * c * (psi[a] - psi[b]).powi(2));
        for (w, &r) in g.weights().iter().zip(phi) {
            e += w * spec.density(Side::Bulk, reg, r)?;
        }
        for &r in &psi {
            e += g.hx * spec.density(Side::Boundary, reg, r)?;
        }
        Ok(e)
    }

    /// `a_{L,σ}(μ̂, μ̂)`.
    pub fn dissipation(&self, mu: &FieldPair) -> f64 {
        let (b, s, j) = crate::grid::form_parts(&self.grid, mu, mu);
        b + self.params.regime.sigma * s + self.params.regime.chi() * j
    }
}

#[derive(Default)]
struct StepAccum {
    newton_iters: usize,
    factorizations: usize,
    substeps: usize,
    tau_dissipation: f64,
}

impl SimState {
    /// State at t = 0 from a trace-linked φ₀. The chemical potential is
    /// initialized from the chemical-potential rows; for L = 0 its surface
    /// part is the trace.
    pub fn initial(grid: &SlabGrid, params: &ModelParams, phi0: &FieldPair, cap: f64) -> Result<Self> {
        phi0.check_shape(grid)?;
        if !phi0.is_trace(grid) {
            return Err(Error::Init("initial data must be trace-linked".into()));
        }
        let m = crate::fields::generalized_mean(grid, phi0)?;
        if !(m.abs() < 1.0) {
            return Err(Error::Init(format!("generalized mean {m} is outside (-1, 1)")));
        }
        if params.exact() && phi0.max_abs() > cap {
            return Err(Error::Init(format!(
                "max |phi0| = {} exceeds {cap}",
                phi0.max_abs()
            )));
        }
        if phi0.bulk.iter().any(|v| !v.is_finite()) {
            return Err(Error::Init("initial data is not finite".into()));
        }
        let (mu, theta) = chemical_potential(grid, params, &phi0.bulk)?;
        let mu_pair = if params.regime.trace_linked() {
            let mut mu = mu;
            let hx = grid.hx;
            for s in 0..grid.n_surf() {
                let k = grid.trace_node(s);
                let w = grid.weights()[k];
                mu[k] = (w * mu[k] + hx * theta[s]) / (w + hx);
            }
            FieldPair::trace_linked(grid, mu)?
        } else {
            FieldPair::independent(grid, mu, theta)?
        };
        Ok(SimState {
            t: 0.0,
            step: 0,
            phi: FieldPair {
                linkage: Linkage::TraceLinked,
                ..phi0.clone()
            },
            mu: mu_pair,
        })
    }
}

/// Pointwise chemical potentials of a state: `μ = -Δ_h φ + β•(φ) + π(φ)` at
/// every bulk node and `θ = ∂_n φ - Δ_Γ ψ + β_Γ•(ψ) + π_Γ(ψ)`.
pub fn chemical_potential(grid: &SlabGrid, params: &ModelParams, phi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = &params.potential;
    let reg = &params.regularization;
    let lap = crate::grid::lap_bulk(grid, phi)?;
    let psi = grid.trace(phi);
    let lap_s = crate::grid::lap_surface(grid, &psi)?;
    let dn = crate::grid::normal_derivative(grid, phi)?;
    let mut mu = vec![0.0; phi.len()];
    for k in 0..phi.len() {
        mu[k] = -lap[k] + spec.monotone(Side::Bulk, reg, phi[k])?.0 + spec.bulk.pi(phi[k]);
    }
    let mut theta = vec![0.0; psi.len()];
    for s in 0..psi.len() {
        theta[s] = dn[s] - lap_s[s] + spec.monotone(Side::Boundary, reg, psi[s])?.0 + spec.boundary.pi(psi[s]);
    }
    Ok((mu, theta))
}

/// Stacked residual of one step; see the module documentation for the rows.
pub fn assemble_residual(
    grid: &SlabGrid,
    params: &ModelParams,
    cfg: &StepConfig,
    old: &SimState,
    candidate: &Unknowns,
) -> Result<Vec<f64>> {
    Stepper::new(grid, params, cfg)?.residual(old, candidate)
}

pub fn newton_solve(grid: &SlabGrid, params: &ModelParams, cfg: &StepConfig, old: &SimState) -> Result<SimState> {
    let mut st = Stepper::new(grid, params, cfg)?;
    let (mut s, _) = st.newton_solve(old)?;
    s.step = old.step + 1;
    Ok(s)
}

pub fn advance(
    grid: &SlabGrid,
    params: &ModelParams,
    cfg: &StepConfig,
    state: &SimState,
) -> Result<(SimState, StepDiagnostics)> {
    Stepper::new(grid, params, cfg)?.advance(state)
}
