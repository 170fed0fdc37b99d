//! Steady states under a mass constraint.
//!
//! In weak form the stationary problem at node k is
//! `G_k = (K_b φ)_k + (K_s ψ)_s + w_k f(φ_k) + hx g(ψ_s) - μ M_k = 0`, with
//! `M_k = w_k + hx` on boundary nodes and `w_k` elsewhere, f and g the bulk
//! and boundary derivatives `β + π`. Summing over k kills the stiffness terms,
//! so the multiplier of a solution equals the quadrature of `β + π` over
//! bulk and boundary divided by `|Ω| + |Γ|`.

use crate::diagnostics::separation_delta;
use crate::error::{Error, Result};
use crate::fields::{generalized_mean, FieldPair};
use crate::grid::{Regime, SlabGrid};
use crate::linalg::SparsePattern;
use crate::potentials::{PotentialSpec, Regularization, Side};
use crate::stepper::{ModelParams, Scheme, StepConfig, Stepper};
use crate::trajectory::{RunOptions, Runner};

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryState {
    pub phi: FieldPair,
    /// Lagrange multiplier of the mass constraint.
    pub mu_infty: f64,
    /// Weighted norm of the stacked residual at `mu_infty`.
    pub residual_norm: f64,
    /// The same multiplier recomputed by quadrature.
    pub mu_formula: f64,
    pub separation: f64,
    pub iterations: usize,
    pub used_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryOptions {
    pub regularization: Regularization,
    /// Pointwise tolerance on `G_k / M_k`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relax with the stepper (L = 0, σ = 1) if Newton fails from the given
    /// initial pair.
    pub fallback: bool,
    pub fallback_tau: f64,
    pub fallback_t_end: f64,
    pub phase_cap: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            regularization: Regularization::Exact,
            tol: 1e-11,
            max_iter: 100,
            fallback: true,
            fallback_tau: 1e-2,
            fallback_t_end: 200.0,
            phase_cap: 1.0 - 1e-12,
        }
    }
}

fn node_mass(grid: &SlabGrid) -> Vec<f64> {
    let mut m = grid.weights().to_vec();
    for s in 0..grid.n_surf() {
        m[grid.trace_node(s)] += grid.hx;
    }
    m
}

fn check_phase(pair: &FieldPair, reg: &Regularization) -> Result<()> {
    if *reg == Regularization::Exact && !(pair.max_abs() < 1.0) {
        return Err(Error::Domain(format!(
            "max |phi| = {} is outside the open interval (-1, 1)",
            pair.max_abs()
        )));
    }
    Ok(())
}

fn checked_pair(grid: &SlabGrid, pair: &FieldPair) -> Result<()> {
    pair.check_shape(grid)?;
    if !pair.is_trace(grid) {
        return Err(Error::Domain("stationary pairs must be trace-linked".into()));
    }
    Ok(())
}

/// `(f, f')` at bulk nodes and `(g, g')` at surface nodes, with f = β + π.
fn nodal(
    grid: &SlabGrid,
    spec: &PotentialSpec,
    reg: &Regularization,
    phi: &[f64],
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let eval = |side: Side, r: f64| -> Result<(f64, f64)> {
        let (b, db) = spec.monotone(side, reg, r)?;
        let k = spec.kind(side);
        Ok((b + k.pi(r), db + k.pi_prime(r)))
    };
    let bulk = phi.iter().map(|&r| eval(Side::Bulk, r)).collect::<Result<Vec<_>>>()?;
    let surf = grid
        .trace(phi)
        .into_iter()
        .map(|r| eval(Side::Boundary, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((bulk, surf))
}

fn residual_vec(grid: &SlabGrid, spec: &PotentialSpec, reg: &Regularization, phi: &[f64], mu: f64) -> Result<Vec<f64>> {
    let (f, g) = nodal(grid, spec, reg, phi)?;
    let mut r = grid.stiffness_bulk(phi);
    let ks = grid.stiffness_surf(&grid.trace(phi));
    let w = grid.weights();
    let mass = node_mass(grid);
    for k in 0..phi.len() {
        r[k] += w[k] * f[k].0 - mu * mass[k];
    }
    for s in 0..grid.n_surf() {
        let k = grid.trace_node(s);
        r[k] += ks[s] + grid.hx * g[s].0;
    }
    Ok(r)
}

fn weighted_norm(r: &[f64], mass: &[f64]) -> f64 {
    r.iter().zip(mass).map(|(v, m)| v * v / m).sum::<f64>().sqrt()
}

fn pointwise_max(r: &[f64], mass: &[f64]) -> f64 {
    r.iter().zip(mass).fold(0.0_f64, |a, (v, m)| a.max((v / m).abs()))
}

/// Weighted L² norm `sqrt(Σ G_k² / M_k)` of the stationary residual with
/// multiplier `mu_infty`, exact potential.
pub fn steady_residual(grid: &SlabGrid, potential: &PotentialSpec, pair: &FieldPair, mu_infty: f64) -> Result<f64> {
    steady_residual_with(grid, potential, &Regularization::Exact, pair, mu_infty)
}

pub fn steady_residual_with(
    grid: &SlabGrid,
    potential: &PotentialSpec,
    reg: &Regularization,
    pair: &FieldPair,
    mu_infty: f64,
) -> Result<f64> {
    checked_pair(grid, pair)?;
    check_phase(pair, reg)?;
    let r = residual_vec(grid, potential, reg, &pair.bulk, mu_infty)?;
    Ok(weighted_norm(&r, &node_mass(grid)))
}

/// Quadrature of `β + π` over Ω and `β_Γ + π_Γ` over Γ, divided by
/// `|Ω| + |Γ|`.
pub fn mu_infty_formula(grid: &SlabGrid, potential: &PotentialSpec, pair: &FieldPair) -> Result<f64> {
    mu_infty_formula_with(grid, potential, &Regularization::Exact, pair)
}

pub fn mu_infty_formula_with(
    grid: &SlabGrid,
    potential: &PotentialSpec,
    reg: &Regularization,
    pair: &FieldPair,
) -> Result<f64> {
    checked_pair(grid, pair)?;
    check_phase(pair, reg)?;
    let (f, g) = nodal(grid, potential, reg, &pair.bulk)?;
    let bulk: f64 = grid.weights().iter().zip(&f).map(|(w, v)| w * v.0).sum();
    let surf: f64 = g.iter().map(|v| grid.hx * v.0).sum();
    Ok((bulk + surf) / (grid.omega() + grid.gamma()))
}

/// Newton on `(φ, μ_∞)` for the stationary residual plus the mass
/// constraint. The constraint row is scaled by `1 / (|Ω| + |Γ|)`.
fn newton(
    grid: &SlabGrid,
    spec: &PotentialSpec,
    opts: &StationaryOptions,
    mean0: f64,
    init: &[f64],
) -> Result<(Vec<f64>, f64, usize)> {
    let n = grid.n_bulk();
    let reg = &opts.regularization;
    let exact = *reg == Regularization::Exact;
    let mass = node_mass(grid);
    let total = grid.omega() + grid.gamma();
    let cap = opts.phase_cap;

    let mut phi = init.to_vec();
    let mut mu = mu_infty_formula_with(grid, spec, reg, &FieldPair::trace_linked(grid, phi.clone())?)?;

    let merit = |phi: &[f64], mu: f64| -> Result<(Vec<f64>, f64, f64)> {
        let r = residual_vec(grid, spec, reg, phi, mu)?;
        let c = phi.iter().zip(&mass).map(|(p, m)| p * m).sum::<f64>() / total - mean0;
        let pw = pointwise_max(&r, &mass).max(c.abs());
        Ok((r, c, pw))
    };

    // Fixed sparsity pattern: bulk stiffness, surface stiffness on traces,
    // diagonal, and the bordering row and column.
    let mut entries = Vec::new();
    grid.for_each_bulk_edge(|a, b, _| entries.extend([(a, a), (b, b), (a, b), (b, a)]));
    grid.for_each_surface_edge(|a, b, _| {
        let (ka, kb) = (grid.trace_node(a), grid.trace_node(b));
        entries.extend([(ka, ka), (kb, kb), (ka, kb), (kb, ka)]);
    });
    for k in 0..n {
        entries.extend([(k, k), (k, n), (n, k)]);
    }
    entries.push((n, n));
    let pattern = SparsePattern::new(n + 1, &entries)?;

    let (mut r, mut c, mut pw) = merit(&phi, mu)?;
    let mut iters = 0;
    while pw > opts.tol {
        if iters >= opts.max_iter {
            return Err(Error::Convergence {
                what: format!("stationary Newton did not converge in {} iterations", opts.max_iter),
                residual: pw,
            });
        }
        let (f, g) = nodal(grid, spec, reg, &phi)?;
        let w = grid.weights();
        let mut vals = Vec::with_capacity(entries.len());
        grid.for_each_bulk_edge(|_, _, cf| vals.extend([cf, cf, -cf, -cf]));
        grid.for_each_surface_edge(|_, _, cf| vals.extend([cf, cf, -cf, -cf]));
        let mut diag = vec![0.0; n];
        for k in 0..n {
            diag[k] = w[k] * f[k].1;
        }
        for s in 0..grid.n_surf() {
            diag[grid.trace_node(s)] += grid.hx * g[s].1;
        }
        for k in 0..n {
            vals.extend([diag[k], -mass[k], mass[k] / total]);
        }
        vals.push(0.0);
        let lu = pattern.factor(&vals)?;
        let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
        d.push(-c);
        lu.solve_in_place(&mut d)?;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = phi.iter().zip(&d).map(|(p, dp)| p + alpha * dp).collect();
            let cmu = mu + alpha * d[n];
            if !exact || cand.iter().all(|v| v.abs() < cap) {
                if let Ok((rc, cc, pc)) = merit(&cand, cmu) {
                    let old_merit = weighted_norm(&r, &mass) + total.sqrt() * c.abs();
                    let new_merit = weighted_norm(&rc, &mass) + total.sqrt() * cc.abs();
                    if new_merit < old_merit || pc <= opts.tol {
                        accepted = Some((cand, cmu, rc, cc, pc));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, cmu, rc, cc, pc)) = accepted else {
            return Err(Error::Convergence {
                what: "stationary line search failed".into(),
                residual: pw,
            });
        };
        phi = cand;
        mu = cmu;
        r = rc;
        c = cc;
        pw = pc;
        iters += 1;
    }
    Ok((phi, mu, iters))
}

/// Solve for a steady state with generalized mean `mean0`, starting from
/// `init` shifted to that mean. For a double-well potential several steady
/// states exist; the one returned is the one Newton (or the relaxation
/// fallback) reaches from `init`.
pub fn solve_stationary(
    grid: &SlabGrid,
    potential: &PotentialSpec,
    mean0: f64,
    init: &FieldPair,
) -> Result<StationaryState> {
    solve_stationary_with(grid, potential, mean0, init, &StationaryOptions::default())
}

pub fn solve_stationary_with(
    grid: &SlabGrid,
    potential: &PotentialSpec,
    mean0: f64,
    init: &FieldPair,
    opts: &StationaryOptions,
) -> Result<StationaryState> {
    if !(mean0.abs() < 1.0) {
        return Err(Error::Mean(mean0));
    }
    checked_pair(grid, init)?;
    let shift = mean0 - generalized_mean(grid, init)?;
    let start: Vec<f64> = init.bulk.iter().map(|v| v + shift).collect();
    let start_pair = FieldPair::trace_linked(grid, start.clone())?;
    if opts.regularization == Regularization::Exact && !(start_pair.max_abs() < opts.phase_cap) {
        return Err(Error::Init(format!(
            "initial pair shifted to mean {mean0} leaves (-1, 1)"
        )));
    }

    let (phi, mu, iters, used_fallback) = match newton(grid, potential, opts, mean0, &start) {
        Ok((phi, mu, it)) => (phi, mu, it, false),
        Err(e) if opts.fallback => {
            let relaxed = relax(grid, potential, opts, &start_pair).map_err(|_| e)?;
            let (phi, mu, it) = newton(grid, potential, opts, mean0, &relaxed.bulk)?;
            (phi, mu, it, true)
        }
        Err(e) => return Err(e),
    };
    let pair = FieldPair::trace_linked(grid, phi)?;
    let reg = &opts.regularization;
    Ok(StationaryState {
        residual_norm: steady_residual_with(grid, potential, reg, &pair, mu)?,
        mu_formula: mu_infty_formula_with(grid, potential, reg, &pair)?,
        separation: separation_delta(&pair),
        phi: pair,
        mu_infty: mu,
        iterations: iters,
        used_fallback,
    })
}

/// Long-time relaxation with the L = 0, σ = 1 dynamics.
fn relax(grid: &SlabGrid, spec: &PotentialSpec, opts: &StationaryOptions, start: &FieldPair) -> Result<FieldPair> {
    let params = ModelParams::new(Regime::new(0.0, 1.0)?, spec.clone(), opts.regularization)?;
    let cfg = StepConfig::new(opts.fallback_tau, Scheme::ConvexSplit)?;
    let mut run = RunOptions::new(opts.fallback_t_end, 10);
    run.steady_tol = 1e-6;
    let rec = Runner::new(Stepper::new(grid, &params, &cfg)?, start, run)?.run()?;
    Ok(rec.final_state.phi)
}
