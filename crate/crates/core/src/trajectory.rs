//! Driving a stepper over a time interval with sampling, early stopping at
//! stationarity, and resumable running totals.

use crate::diagnostics::{
    level_set_measures, separation_delta, LevelSetLadder, RunStatus, RunTotals, Sample, StepDiagnostics,
    TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::fields::{generalized_mean, FieldPair};
use crate::grid::SlabGrid;
use crate::stationary::{mu_infty_formula_with, steady_residual_with};
use crate::stepper::{ModelParams, SimState, StepConfig, Stepper};

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Sample every this many steps (the last step is always sampled).
    pub output_every: u64,
    /// Stop once the velocity norm at a sample falls below this; 0 disables.
    pub steady_tol: f64,
    /// Keep φ snapshots at the sample times.
    pub record_states: bool,
    /// Superlevel ladder `(δ, n_max)` evaluated at sample times.
    pub ladder: Option<(f64, usize)>,
}

impl RunOptions {
    pub fn new(t_end: f64, output_every: u64) -> Self {
        RunOptions {
            t_end,
            output_every,
            steady_tol: 1e-9,
            record_states: false,
            ladder: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            bad.push(format!("t_end must be finite and nonnegative, got {}", self.t_end));
        }
        if self.output_every == 0 {
            bad.push("output_every must be at least 1".into());
        }
        if !(self.steady_tol >= 0.0) {
            bad.push("steady_tol must be nonnegative".into());
        }
        if let Some((d, n)) = self.ladder {
            if !(d > 0.0 && d < 1.0) || n < 1 {
                bad.push("ladder needs delta in (0, 1) and n_max >= 1".into());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// Step-by-step driver; `Runner::run` gives the whole record at once.
pub struct Runner {
    stepper: Stepper,
    state: SimState,
    totals: RunTotals,
    opts: RunOptions,
    n_steps: u64,
    samples: Vec<Sample>,
    states: Vec<FieldPair>,
    ladders: Vec<(f64, LevelSetLadder)>,
    status: Option<RunStatus>,
}

/// Largest |φ₀| accepted for a trajectory start in exact mode.
const INIT_CAP: f64 = 1.0 - 1e-6;

fn step_count(t_end: f64, tau: f64) -> u64 {
    (t_end / tau).round() as u64
}

impl Runner {
    /// Start from φ₀. If φ₀ is already stationary to `steady_tol` the run is
    /// complete immediately with a single sample.
    pub fn new(stepper: Stepper, phi0: &FieldPair, opts: RunOptions) -> Result<Self> {
        opts.validate()?;
        let grid = stepper.grid().clone();
        let params = stepper.params().clone();
        let state = SimState::initial(&grid, &params, phi0, stepper.config().phase_cap.min(INIT_CAP))?;
        let energy0 = stepper.energy(&state.phi.bulk)?;
        let mean0 = generalized_mean(&grid, &state.phi)?;
        let totals = RunTotals::new(energy0, mean0, separation_delta(&state.phi));
        let n_steps = step_count(opts.t_end, stepper.config().tau);
        let mut r = Runner {
            stepper,
            state,
            totals,
            opts,
            n_steps,
            samples: Vec::new(),
            states: Vec::new(),
            ladders: Vec::new(),
            status: None,
        };
        let s0 = Sample {
            t: 0.0,
            step: 0,
            energy: energy0,
            mean: mean0,
            dissipation: r.stepper.dissipation(&r.state.mu),
            velocity_norm: f64::NAN,
            separation: separation_delta(&r.state.phi),
            max_abs_phi: r.state.phi.max_abs(),
            min_phi: r.state.phi.min(),
            newton_iters: 0,
        };
        r.record_sample(s0)?;
        if r.opts.steady_tol > 0.0 && r.initially_stationary(&grid, &params)? {
            r.status = Some(RunStatus::Converged);
        }
        Ok(r)
    }

    fn initially_stationary(&self, grid: &SlabGrid, params: &ModelParams) -> Result<bool> {
        let reg = &params.regularization;
        let mu = mu_infty_formula_with(grid, &params.potential, reg, &self.state.phi)?;
        let res = steady_residual_with(grid, &params.potential, reg, &self.state.phi, mu)?;
        Ok(res < self.opts.steady_tol)
    }

    /// Continue from a saved state and totals. No sample is written for the
    /// resume point itself.
    pub fn resume(stepper: Stepper, state: SimState, totals: RunTotals, opts: RunOptions) -> Result<Self> {
        opts.validate()?;
        state.phi.check_shape(stepper.grid())?;
        state.mu.check_shape(stepper.grid())?;
        let n_steps = step_count(opts.t_end, stepper.config().tau);
        Ok(Runner {
            stepper,
            state,
            totals,
            opts,
            n_steps,
            samples: Vec::new(),
            states: Vec::new(),
            ladders: Vec::new(),
            status: None,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn totals(&self) -> &RunTotals {
        &self.totals
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn ladders(&self) -> &[(f64, LevelSetLadder)] {
        &self.ladders
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.status
    }

    pub fn done(&self) -> bool {
        self.status.is_some() || self.state.step >= self.n_steps
    }

    fn record_sample(&mut self, s: Sample) -> Result<()> {
        if self.opts.record_states {
            self.states.push(self.state.phi.clone());
        }
        if let Some((delta, n_max)) = self.opts.ladder {
            let l = level_set_measures(self.stepper.grid(), &self.state.phi, delta, n_max)?;
            self.ladders.push((s.t, l));
        }
        self.samples.push(s);
        Ok(())
    }

    /// Take one step. Returns the diagnostics and whether it was sampled, or
    /// `None` when the run is already finished.
    pub fn step(&mut self) -> Result<Option<(StepDiagnostics, bool)>> {
        if self.done() {
            return Ok(None);
        }
        let next_step = self.state.step + 1;
        let sampled = next_step.is_multiple_of(self.opts.output_every) || next_step == self.n_steps;
        let (next, d) = self.stepper.advance_with(&self.state, sampled)?;
        self.state = next;
        self.totals.update(&d);
        if sampled {
            let v = d.velocity_norm.unwrap_or(f64::NAN);
            self.record_sample(Sample {
                t: d.t,
                step: d.step,
                energy: d.energy,
                mean: d.mean,
                dissipation: d.dissipation,
                velocity_norm: v,
                separation: d.separation,
                max_abs_phi: d.max_abs_phi,
                min_phi: d.min_phi,
                newton_iters: d.newton_iters,
            })?;
            if self.opts.steady_tol > 0.0 && v < self.opts.steady_tol {
                self.status = Some(RunStatus::Converged);
            }
        }
        if self.status.is_none() && self.state.step >= self.n_steps {
            self.status = Some(RunStatus::Completed);
        }
        Ok(Some((d, sampled)))
    }

    pub fn run(mut self) -> Result<TrajectoryRecord> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> TrajectoryRecord {
        TrajectoryRecord {
            tau: self.stepper.config().tau,
            samples: self.samples,
            status: self.status.unwrap_or(RunStatus::Completed),
            totals: self.totals,
            states: self.states,
            ladders: self.ladders,
            final_state: self.state,
        }
    }
}

/// Run from φ₀ to `t_end`, sampling every `output_every` steps and stopping
/// early at stationarity (velocity norm below 1e-9).
pub fn run_trajectory(
    grid: &SlabGrid,
    params: &ModelParams,
    cfg: &StepConfig,
    phi0: &FieldPair,
    t_end: f64,
    output_every: u64,
) -> Result<TrajectoryRecord> {
    run_with(grid, params, cfg, phi0, RunOptions::new(t_end, output_every))
}

pub fn run_with(
    grid: &SlabGrid,
    params: &ModelParams,
    cfg: &StepConfig,
    phi0: &FieldPair,
    opts: RunOptions,
) -> Result<TrajectoryRecord> {
    Runner::new(Stepper::new(grid, params, cfg)?, phi0, opts)?.run()
}
