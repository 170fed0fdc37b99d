//! Measured quantities along a trajectory: mass, energy, dissipation,
//! separation from the pure phases, superlevel-set ladders and power-law
//! rate fits.

use crate::error::{Error, Result};
use crate::fields::{FieldPair, Linkage};
use crate::grid::{form_parts, Regime, SlabGrid};
use crate::potentials::ls_slope;
use crate::stepper::SimState;

/// Per-step output of the stepper.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub step: u64,
    pub energy: f64,
    pub mean: f64,
    /// `a_{L,σ}(μ̂, μ̂)`, averaged over substeps when the step was split.
    pub dissipation: f64,
    pub energy_drop: f64,
    /// `E_old - E_new - τ D`.
    pub defect: f64,
    pub velocity_norm: Option<f64>,
    pub separation: f64,
    pub max_abs_phi: f64,
    pub min_phi: f64,
    pub newton_iters: usize,
    pub factorizations: usize,
    pub substeps: usize,
}

/// `1 - max(max|φ|, max|ψ|)`.
pub fn separation_delta(pair: &FieldPair) -> f64 {
    1.0 - pair.max_abs()
}

/// Thresholds `k_n = 1 - δ - δ/2ⁿ` and the measures of `{φ ≥ k_n}` plus
/// `{ψ ≥ k_n}`. The mirrored lower sets `{φ ≤ -k_n}` are reported in
/// `z_lower`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetLadder {
    pub delta: f64,
    pub k: Vec<f64>,
    pub z: Vec<f64>,
    pub z_lower: Vec<f64>,
}

impl LevelSetLadder {
    /// First index where both upper and lower measures vanish.
    pub fn first_zero(&self) -> Option<usize> {
        (0..self.k.len()).find(|&n| self.z[n] == 0.0 && self.z_lower[n] == 0.0)
    }
}

pub fn ladder_levels(delta: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| 1.0 - delta - delta / 2f64.powi(n as i32))
        .collect()
}

pub fn level_set_measures(grid: &SlabGrid, pair: &FieldPair, delta: f64, n_max: usize) -> Result<LevelSetLadder> {
    pair.check_shape(grid)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n_max < 1 {
        return Err(Error::Param("n_max must be at least 1".into()));
    }
    let k = ladder_levels(delta, n_max);
    let measure = |pred: &dyn Fn(f64) -> bool| -> f64 {
        let b: f64 = grid
            .weights()
            .iter()
            .zip(&pair.bulk)
            .filter(|(_, &v)| pred(v))
            .map(|(w, _)| w)
            .sum();
        let s = pair.surf.iter().filter(|&&v| pred(v)).count() as f64 * grid.hx;
        b + s
    };
    let z = k.iter().map(|&kn| measure(&|v| v >= kn)).collect();
    let z_lower = k.iter().map(|&kn| measure(&|v| v <= -kn)).collect();
    Ok(LevelSetLadder { delta, k, z, z_lower })
}

fn degiorgi_params(c: f64, b: f64, eps: f64) -> Result<()> {
    if c > 0.0 && b > 1.0 && eps > 0.0 && c.is_finite() && b.is_finite() && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!(
            "iteration lemma needs C > 0, b > 1, eps > 0 (got {c}, {b}, {eps})"
        )))
    }
}

/// `ς = C^{-1/ϵ} b^{-1/ϵ²}` for the recursion `z_{n+1} ≤ C bⁿ z_n^{1+ϵ}`.
pub fn degiorgi_threshold(c: f64, b: f64, eps: f64) -> Result<f64> {
    degiorgi_params(c, b, eps)?;
    Ok(c.powf(-1.0 / eps) * b.powf(-1.0 / (eps * eps)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeGiorgiOutcome {
    pub threshold: f64,
    /// `z_0 ≤ ς`.
    pub hypothesis_met: bool,
    /// `z_n ≤ ς b^{-n/ϵ}` for every supplied n.
    pub decay_holds: bool,
    pub first_violation: Option<usize>,
}

impl DeGiorgiOutcome {
    /// The implication "z₀ ≤ ς ⇒ geometric decay" holds for the series.
    pub fn passed(&self) -> bool {
        !self.hypothesis_met || self.decay_holds
    }
}

/// Check the conclusion of the iteration lemma on a supplied series. A
/// relative slack of 1e-12 absorbs rounding in the bound itself.
pub fn degiorgi_check(z: &[f64], c: f64, b: f64, eps: f64) -> Result<DeGiorgiOutcome> {
    let threshold = degiorgi_threshold(c, b, eps)?;
    let slack = 1.0 + 1e-12;
    let hypothesis_met = z.first().is_some_and(|&z0| z0 <= threshold * slack);
    let first_violation = z
        .iter()
        .enumerate()
        .find(|&(n, &zn)| zn > threshold * b.powf(-(n as f64) / eps) * slack)
        .map(|(n, _)| n);
    Ok(DeGiorgiOutcome {
        threshold,
        hypothesis_met,
        decay_holds: first_violation.is_none(),
        first_violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationTerms {
    pub bulk: f64,
    pub surface: f64,
    pub jump: f64,
    pub total: f64,
}

/// The three dissipation integrals of a chemical-potential pair.
pub fn dissipation_terms(grid: &SlabGrid, regime: Regime, mu: &FieldPair) -> Result<DissipationTerms> {
    mu.check_shape(grid)?;
    if regime.trace_linked() && !mu.is_trace(grid) {
        return Err(Error::Regime("L = 0 requires a trace-linked chemical potential".into()));
    }
    let (b, s, j) = form_parts(grid, mu, mu);
    let (surface, jump) = (regime.sigma * s, regime.chi() * j);
    Ok(DissipationTerms {
        bulk: b,
        surface,
        jump,
        total: b + surface + jump,
    })
}

/// Fit of `d(t) ≈ C (1+t)^{-p}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub p: f64,
    pub c: f64,
    /// Exponent θ* with `p = θ*/(1 - 2θ*)`, i.e. `θ* = p/(1 + 2p)`.
    pub theta_star: f64,
    /// RMS of the residuals in log space.
    pub rms: f64,
}

/// Distances below this are treated as exponential convergence.
pub const FIT_FLOOR: f64 = 1e-13;

pub fn fit_power_law(t: &[f64], d: &[f64]) -> Result<RateFit> {
    if t.len() != d.len() || t.len() < 2 {
        return Err(Error::Fit("need at least two (t, d) samples".into()));
    }
    if d.iter().any(|&v| !(v >= FIT_FLOOR) || !v.is_finite()) {
        return Err(Error::Fit(
            "distance below 1e-13: faster than power law".into(),
        ));
    }
    let x: Vec<f64> = t.iter().map(|&ti| (1.0 + ti).ln()).collect();
    let y: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let (slope, icpt) = ls_slope(&x, &y);
    let rms = (x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| (yi - icpt - slope * xi).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    let p = -slope;
    Ok(RateFit {
        p,
        c: icpt.exp(),
        theta_star: p / (1.0 + 2.0 * p),
        rms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateReport {
    /// Fit in the H¹-type norm (gradients plus L²).
    pub h1: RateFit,
    pub l2: RateFit,
}

/// Squared H¹-type distance of two trace-linked pairs.
fn h1_l2_sq(grid: &SlabGrid, a: &FieldPair, b: &FieldPair) -> (f64, f64) {
    let d = a.sub(b);
    let (gb, gs, _) = form_parts(grid, &d, &d);
    let l2 = crate::fields::inner(grid, &d, &d);
    (gb + gs + l2, l2)
}

/// Fit the decay of stored snapshots toward `phi_inf` over samples with
/// `t ≥ 1`. Requires a record made with `record_states`.
pub fn fit_convergence_rate(grid: &SlabGrid, record: &TrajectoryRecord, phi_inf: &FieldPair) -> Result<RateReport> {
    if record.states.len() != record.samples.len() {
        return Err(Error::Fit("record carries no state snapshots".into()));
    }
    let mut t = Vec::new();
    let mut h1 = Vec::new();
    let mut l2 = Vec::new();
    for (s, phi) in record.samples.iter().zip(&record.states) {
        if s.t >= 1.0 {
            let (a, b) = h1_l2_sq(grid, phi, phi_inf);
            t.push(s.t);
            h1.push(a.sqrt());
            l2.push(b.sqrt());
        }
    }
    if t.len() < 10 {
        return Err(Error::Fit(format!(
            "need at least 10 samples with t >= 1, have {}",
            t.len()
        )));
    }
    Ok(RateReport {
        h1: fit_power_law(&t, &h1)?,
        l2: fit_power_law(&t, &l2)?,
    })
}

/// One row of a trajectory record.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub step: u64,
    pub energy: f64,
    pub mean: f64,
    pub dissipation: f64,
    /// NaN when not measured (the initial sample).
    pub velocity_norm: f64,
    pub separation: f64,
    pub max_abs_phi: f64,
    pub min_phi: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Stopped early because the state became stationary.
    Converged,
}

/// Running totals over every step (not only sampled ones). Stored in
/// checkpoints so a resumed run reports the same totals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunTotals {
    pub energy0: f64,
    pub mean0: f64,
    /// `Σ τ D`.
    pub tau_dissipation: f64,
    /// Largest `|E_old - E_new - τ D|`.
    pub max_step_defect: f64,
    /// Largest `E_new - E_old`.
    pub max_energy_increase: f64,
    pub max_mean_drift: f64,
    pub min_separation: f64,
    pub newton_iters: u64,
    pub max_newton_iters: u64,
    pub factorizations: u64,
    pub substeps: u64,
}

impl RunTotals {
    pub fn new(energy0: f64, mean0: f64, separation0: f64) -> Self {
        RunTotals {
            energy0,
            mean0,
            tau_dissipation: 0.0,
            max_step_defect: 0.0,
            max_energy_increase: f64::NEG_INFINITY,
            max_mean_drift: 0.0,
            min_separation: separation0,
            newton_iters: 0,
            max_newton_iters: 0,
            factorizations: 0,
            substeps: 0,
        }
    }

    pub fn update(&mut self, d: &StepDiagnostics) {
        self.tau_dissipation += d.energy_drop - d.defect;
        self.max_step_defect = self.max_step_defect.max(d.defect.abs());
        self.max_energy_increase = self.max_energy_increase.max(-d.energy_drop);
        self.max_mean_drift = self.max_mean_drift.max((d.mean - self.mean0).abs());
        self.min_separation = self.min_separation.min(d.separation);
        self.newton_iters += d.newton_iters as u64;
        self.max_newton_iters = self.max_newton_iters.max(d.newton_iters as u64);
        self.factorizations += d.factorizations as u64;
        self.substeps += d.substeps as u64;
    }

    /// Bit-exact word encoding for checkpoints.
    pub fn to_words(&self) -> Vec<u64> {
        vec![
            self.energy0.to_bits(),
            self.mean0.to_bits(),
            self.tau_dissipation.to_bits(),
            self.max_step_defect.to_bits(),
            self.max_energy_increase.to_bits(),
            self.max_mean_drift.to_bits(),
            self.min_separation.to_bits(),
            self.newton_iters,
            self.max_newton_iters,
            self.factorizations,
            self.substeps,
        ]
    }

    pub fn from_words(w: &[u64]) -> Result<Self> {
        if w.len() != 11 {
            return Err(Error::Io(format!("expected 11 total words, found {}", w.len())));
        }
        let f = f64::from_bits;
        Ok(RunTotals {
            energy0: f(w[0]),
            mean0: f(w[1]),
            tau_dissipation: f(w[2]),
            max_step_defect: f(w[3]),
            max_energy_increase: f(w[4]),
            max_mean_drift: f(w[5]),
            min_separation: f(w[6]),
            newton_iters: w[7],
            max_newton_iters: w[8],
            factorizations: w[9],
            substeps: w[10],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub tau: f64,
    pub samples: Vec<Sample>,
    pub status: RunStatus,
    pub totals: RunTotals,
    /// φ snapshots at the sample times when requested.
    pub states: Vec<FieldPair>,
    pub ladders: Vec<(f64, LevelSetLadder)>,
    pub final_state: SimState,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("records hold at least the initial sample")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyAudit {
    /// Largest per-step `|E(tⁿ) - E(tⁿ⁺¹) - τ Dⁿ⁺¹|`.
    pub max_step_defect: f64,
    pub max_energy_increase: f64,
    /// `E(0) - E(T) - Σ τ D`.
    pub cumulative_defect: f64,
    pub energy_drop: f64,
    pub dissipation_integral: f64,
}

pub fn energy_balance_audit(record: &TrajectoryRecord) -> EnergyAudit {
    let t = &record.totals;
    let drop = t.energy0 - record.final_sample().energy;
    EnergyAudit {
        max_step_defect: t.max_step_defect,
        max_energy_increase: t.max_energy_increase.max(0.0),
        cumulative_defect: drop - t.tau_dissipation,
        energy_drop: drop,
        dissipation_integral: t.tau_dissipation,
    }
}

/// First sample time after which the separation margin never drops below
/// `threshold` (over the recorded samples).
pub fn separation_time(record: &TrajectoryRecord, threshold: f64) -> Option<f64> {
    let s = &record.samples;
    let mut first = None;
    for (i, smp) in s.iter().enumerate().rev() {
        if smp.separation >= threshold {
            first = Some(i);
        } else {
            break;
        }
    }
    first.map(|i| s[i].t)
}

/// Trace-linked pair with all entries equal to `c`.
pub fn constant_pair(grid: &SlabGrid, c: f64) -> FieldPair {
    FieldPair::constant(grid, c, Linkage::TraceLinked)
}
