//! Command implementations behind the `chdbc` binary: run, sweep, check,
//! steady and report. Each returns key/value summary lines; the binary only
//! parses arguments and maps errors to exit codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{InitKind, RegularizationKind, RunConfig, SchemeName, SweepAxis};
use crate::diagnostics::{separation_delta, RunStatus, RunTotals, Sample};
use crate::error::{Error, Result};
use crate::fields::{generalized_mean, hminus_norm_zero_mean, hminus_solve, inner, project_zero_mean, FieldPair};
use crate::grid::{bilinear_a, lap_bulk, normal_derivative, Regime, SlabGrid};
use crate::par::Execution;
use crate::potentials::check_assumptions;
use crate::stationary::{solve_stationary_with, steady_residual_with, StationaryOptions};
use crate::stepper::{SimState, Stepper};
use crate::trajectory::Runner;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Per-run mass drift tolerated before a run is flagged.
const MASS_GUARD: f64 = 1e-10;
/// Per-step energy increase tolerated for the convex split.
const ENERGY_GUARD: f64 = 1e-10;

pub type Summary = Vec<(String, String)>;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::Config(_)
        | Error::Param(_)
        | Error::Regime(_)
        | Error::Init(_) => EXIT_CONFIG,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_SOLVER,
    }
}

fn kind_name(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Convergence { .. } => "convergence",
        Error::Config(_) => "config",
        Error::Shape { .. } => "shape",
        Error::Regime(_) => "regime",
        Error::Mean(_) => "mean",
        Error::Solver(_) => "solver",
        Error::Init(_) => "init",
        Error::Param(_) => "param",
        Error::Fit(_) => "fit",
        Error::Parse { .. } => "parse",
        Error::Validation(_) => "validation",
        Error::Invariant(_) => "invariant",
        Error::Io(_) => "io",
    }
}

/// Machine-readable failure record (`failure.txt`).
pub fn failure_record(e: &Error) -> String {
    let message = e.to_string().replace('\n', " ");
    format!(
        "kind={}\nexit_code={}\nmessage={}\n",
        kind_name(e),
        exit_code(e),
        message
    )
}

pub fn write_failure(dir: &Path, e: &Error) {
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("failure.txt"), failure_record(e));
    }
}

pub fn format_summary(s: &Summary) -> String {
    s.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

const CSV_HEADER: &str = "t,step,energy,mean,dissipation,velocity_norm,separation,max_abs_phi,min_phi,newton_iters";

fn csv_row(s: &Sample) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        num(s.t),
        s.step,
        num(s.energy),
        num(s.mean),
        num(s.dissipation),
        num(s.velocity_norm),
        num(s.separation),
        num(s.max_abs_phi),
        num(s.min_phi),
        s.newton_iters
    )
}

/// Outcome of one trajectory, independent of where its files went.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub t_final: f64,
    pub steps: u64,
    pub energy0: f64,
    pub energy_final: f64,
    pub mass_drift: f64,
    pub min_separation: f64,
    pub max_energy_increase: f64,
    pub cumulative_defect: f64,
    pub newton_iters: u64,
    pub max_newton_iters: u64,
    pub factorizations: u64,
    pub substeps: u64,
    pub final_velocity: f64,
    pub resumed_from: Option<u64>,
}

impl RunSummary {
    fn new(totals: &RunTotals, state: &SimState, last: Option<&Sample>, status: RunStatus, energy: f64) -> Self {
        RunSummary {
            status,
            t_final: state.t,
            steps: state.step,
            energy0: totals.energy0,
            energy_final: energy,
            mass_drift: totals.max_mean_drift,
            min_separation: totals.min_separation,
            max_energy_increase: totals.max_energy_increase.max(0.0),
            cumulative_defect: totals.energy0 - energy - totals.tau_dissipation,
            newton_iters: totals.newton_iters,
            max_newton_iters: totals.max_newton_iters,
            factorizations: totals.factorizations,
            substeps: totals.substeps,
            final_velocity: last.map_or(f64::NAN, |s| s.velocity_norm),
            resumed_from: None,
        }
    }

    pub fn to_summary(&self) -> Summary {
        let status = match self.status {
            RunStatus::Completed => "completed",
            RunStatus::Converged => "converged",
        };
        let mut s: Summary = vec![
            ("status".into(), status.into()),
            ("t_final".into(), num(self.t_final)),
            ("steps".into(), self.steps.to_string()),
            ("energy_initial".into(), num(self.energy0)),
            ("energy_final".into(), num(self.energy_final)),
            ("mass_drift".into(), num(self.mass_drift)),
            ("min_separation".into(), num(self.min_separation)),
            ("max_energy_increase".into(), num(self.max_energy_increase)),
            ("cumulative_energy_defect".into(), num(self.cumulative_defect)),
            ("newton_iterations".into(), self.newton_iters.to_string()),
            ("newton_iterations_max".into(), self.max_newton_iters.to_string()),
            ("factorizations".into(), self.factorizations.to_string()),
            ("substeps".into(), self.substeps.to_string()),
            ("final_velocity_norm".into(), num(self.final_velocity)),
        ];
        if let Some(step) = self.resumed_from {
            s.push(("resumed_from_step".into(), step.to_string()));
        }
        s
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Start a runner: fresh from the configured φ₀, or resumed when the
/// initial data is a trajectory checkpoint written with the same physics.
fn start_runner(cfg: &RunConfig, grid: &SlabGrid) -> Result<Runner> {
    let params = cfg.model_params()?;
    let step = cfg.step_config()?;
    let opts = cfg.run_options()?;
    let stepper = Stepper::new(grid, &params, &step)?;
    if cfg.init.kind != InitKind::Checkpoint {
        return Runner::new(stepper, &cfg.initial_pair(grid)?, opts);
    }
    let path = cfg.init.path.as_ref().expect("validated: checkpoint init has a path");
    let ck = Checkpoint::read(path)?;
    if (ck.nx, ck.ny) != (grid.nx, grid.ny) || ck.lx != grid.lx {
        return Err(Error::Init(format!(
            "checkpoint grid {}x{} (lx {}) does not match the configured grid",
            ck.nx, ck.ny, ck.lx
        )));
    }
    if !ck.stationary && ck.params_hash == cfg.params_hash() {
        if let Ok((state, totals)) = ck.state() {
            return Runner::resume(stepper, state, totals, opts);
        }
    }
    Runner::new(stepper, &ck.phi, opts)
}

/// Run one trajectory. With `out` set, writes `diagnostics.csv`,
/// `ladder.csv` (if requested), periodic and final checkpoints and
/// `summary.txt`.
pub fn execute_run(cfg: &RunConfig, out: Option<&Path>) -> Result<(RunSummary, SimState)> {
    let grid = cfg.build_grid()?;
    let mut runner = start_runner(cfg, &grid)?;
    let resumed = runner.samples().is_empty().then(|| runner.state().step);
    let hash = cfg.params_hash();

    let mut csv = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let p = dir.join("diagnostics.csv");
            let mut w = BufWriter::new(File::create(&p).map_err(|e| io_err(&p, e))?);
            writeln!(w, "{CSV_HEADER}")?;
            for s in runner.samples() {
                writeln!(w, "{}", csv_row(s))?;
            }
            Some(w)
        }
        None => None,
    };
    let every = cfg.run.checkpoint_every;
    while let Some((d, sampled)) = runner.step()? {
        if let Some(w) = csv.as_mut() {
            if sampled {
                writeln!(w, "{}", csv_row(runner.samples().last().expect("sample just pushed")))?;
            }
        }
        if let Some(dir) = out {
            if every > 0 && d.step % every == 0 {
                Checkpoint::from_state(&grid, hash, runner.state(), runner.totals())
                    .write(&dir.join(format!("ckpt_{:010}.ckpt", d.step)))?;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }

    let ladders = runner.ladders().to_vec();
    let record = runner.finish();
    let params = cfg.model_params()?;
    let stepper = Stepper::new(&grid, &params, &cfg.step_config()?)?;
    let energy = stepper.energy(&record.final_state.phi.bulk)?;
    let last = record.samples.last().filter(|s| s.step == record.final_state.step);
    let mut summary = RunSummary::new(&record.totals, &record.final_state, last, record.status, energy);
    summary.resumed_from = resumed;

    if let Some(dir) = out {
        if !ladders.is_empty() {
            let mut text = String::from("t,n,k_n,z_n\n");
            for (t, l) in &ladders {
                for (n, (k, z)) in l.k.iter().zip(&l.z).enumerate() {
                    text.push_str(&format!("{},{},{},{}\n", num(*t), n, num(*k), num(*z)));
                }
            }
            write_file(&dir.join("ladder.csv"), &text)?;
        }
        Checkpoint::from_state(&grid, hash, &record.final_state, &record.totals).write(&dir.join("final.ckpt"))?;
        let mut s = summary.to_summary();
        s.push(("seed".into(), cfg.init.seed.to_string()));
        s.push(("params_hash".into(), hex(&hash)));
        write_file(&dir.join("summary.txt"), &format_summary(&s))?;
    }
    Ok((summary, record.final_state))
}

/// Runtime guards on a finished run: mass conservation, energy decay for
/// the convex split, and strict separation in exact mode.
pub fn check_run_invariants(cfg: &RunConfig, s: &RunSummary) -> Result<()> {
    let mut bad = Vec::new();
    if !(s.mass_drift <= MASS_GUARD) {
        bad.push(format!("mass drift {:e} exceeds {MASS_GUARD:e}", s.mass_drift));
    }
    if cfg.step.scheme == SchemeName::ConvexSplit && !(s.max_energy_increase <= ENERGY_GUARD * s.energy0.abs().max(1.0)) {
        bad.push(format!("energy increased by {:e} in one step", s.max_energy_increase));
    }
    if cfg.model.regularization == RegularizationKind::Exact && !(s.min_separation > 0.0) {
        bad.push(format!("separation margin reached {:e}", s.min_separation));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(bad.join("; ")))
    }
}

pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let result = execute_run(cfg, Some(out)).and_then(|(s, _)| {
        check_run_invariants(cfg, &s)?;
        Ok(s)
    });
    match result {
        Ok(s) => Ok(s.to_summary()),
        Err(e) => {
            write_failure(out, &e);
            Err(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Axis value; for grid sweeps the bulk node count.
    pub value: f64,
    pub label: String,
    pub outcome: std::result::Result<RunSummary, String>,
    /// L² distance of the final state to the sweep reference (NaN if none).
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub reference: Option<String>,
    /// Sorted by axis value.
    pub rows: Vec<SweepRow>,
    /// `(i, j, distance)` between final states on a common grid.
    pub pairwise: Vec<(usize, usize, f64)>,
    /// Observed temporal order from consecutive τ triples (τ sweeps only).
    pub orders: Vec<f64>,
}

fn l2_distance(grid: &SlabGrid, a: &FieldPair, b: &FieldPair) -> f64 {
    let d = a.sub(b);
    inner(grid, &d, &d).sqrt()
}

/// One run per axis value (plus a reference run for the L and ε axes),
/// fanned out over the worker pool. Early stopping is disabled so every run
/// reaches the same final time. Individual failures are recorded, not
/// propagated.
pub fn sweep(cfg: &RunConfig, exec: Execution) -> Result<SweepReport> {
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("no [sweep] section in the configuration".into()))?;
    let mut base = cfg.clone();
    base.sweep = None;
    base.run.steady_tol = 0.0;

    let mut jobs: Vec<(f64, String, RunConfig)> = Vec::new();
    if sw.axis == SweepAxis::Grid {
        for g in &sw.grids {
            jobs.push(((g[0] * g[1]) as f64, format!("{}x{}", g[0], g[1]), base.with_grid(g[0], g[1])));
        }
    } else {
        for &v in &sw.values {
            jobs.push((v, format!("{v:e}"), base.apply_axis(sw.axis, v)?));
        }
    }
    jobs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reference = match sw.axis {
        SweepAxis::L => {
            let mut r = base.clone();
            r.model.l = 0.0;
            Some(("l=0".to_string(), r))
        }
        SweepAxis::Epsilon => {
            let mut r = base.clone();
            r.model.regularization = RegularizationKind::Exact;
            Some(("exact".to_string(), r))
        }
        _ => None,
    };
    let mut all: Vec<RunConfig> = jobs.iter().map(|j| j.2.clone()).collect();
    if let Some((_, r)) = &reference {
        all.push(r.clone());
    }
    let results = exec.map(&all, |c| execute_run(c, None));
    let ref_state = if reference.is_some() {
        Some(results.last().expect("reference run").clone()?.1)
    } else {
        None
    };

    let grid = base.build_grid()?;
    let same_grid = sw.axis != SweepAxis::Grid;
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    for ((value, label, _), res) in jobs.iter().zip(&results) {
        let (outcome, distance) = match res {
            Ok((s, state)) => {
                finals.push(Some(state.phi.clone()));
                let d = match (&ref_state, same_grid) {
                    (Some(r), true) => l2_distance(&grid, &state.phi, &r.phi),
                    _ => f64::NAN,
                };
                (Ok(s.clone()), d)
            }
            Err(e) => {
                finals.push(None);
                (Err(e.to_string()), f64::NAN)
            }
        };
        rows.push(SweepRow {
            value: *value,
            label: label.clone(),
            outcome,
            distance,
        });
    }
    let mut pairwise = Vec::new();
    if same_grid {
        for i in 0..finals.len() {
            for j in i + 1..finals.len() {
                if let (Some(a), Some(b)) = (&finals[i], &finals[j]) {
                    pairwise.push((i, j, l2_distance(&grid, a, b)));
                }
            }
        }
    }
    let mut orders = Vec::new();
    if sw.axis == SweepAxis::Tau {
        // Rows are in increasing τ: row i is finer than row i + 1.
        if let (Some(fine), true) = (finals.first().cloned().flatten(), rows.len() > 1) {
            for (i, row) in rows.iter_mut().enumerate() {
                if let Some(f) = &finals[i] {
                    row.distance = l2_distance(&grid, f, &fine);
                }
            }
        }
        for i in 0..finals.len().saturating_sub(2) {
            if let (Some(a), Some(b), Some(c)) = (&finals[i], &finals[i + 1], &finals[i + 2]) {
                let fine = l2_distance(&grid, a, b);
                let coarse = l2_distance(&grid, b, c);
                let ratio = rows[i + 2].value / rows[i + 1].value;
                orders.push((coarse / fine).ln() / ratio.ln());
            }
        }
    }
    Ok(SweepReport {
        axis: sw.axis,
        reference: reference.map(|r| r.0),
        rows,
        pairwise,
        orders,
    })
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let report = sweep(cfg, Execution::default())?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut text = String::from(
        "value,label,status,t_final,energy_final,mass_drift,min_separation,newton_iterations,distance_to_reference\n",
    );
    for r in &report.rows {
        match &r.outcome {
            Ok(s) => {
                let status = if s.status == RunStatus::Converged { "converged" } else { "completed" };
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    num(r.value),
                    r.label,
                    status,
                    num(s.t_final),
                    num(s.energy_final),
                    num(s.mass_drift),
                    num(s.min_separation),
                    s.newton_iters,
                    num(r.distance)
                ));
            }
            Err(msg) => {
                let msg = msg.replace([',', '\n'], ";");
                text.push_str(&format!("{},{},failed: {msg},,,,,,\n", num(r.value), r.label));
            }
        }
    }
    write_file(&out.join("sweep.csv"), &text)?;
    let mut pw = String::from("i,j,label_i,label_j,distance\n");
    for &(i, j, d) in &report.pairwise {
        pw.push_str(&format!("{i},{j},{},{},{}\n", report.rows[i].label, report.rows[j].label, num(d)));
    }
    write_file(&out.join("sweep_distances.csv"), &pw)?;

    let failed = report.rows.iter().filter(|r| r.outcome.is_err()).count();
    let mut s: Summary = vec![
        ("axis".into(), format!("{:?}", report.axis).to_lowercase()),
        ("runs".into(), report.rows.len().to_string()),
        ("failed".into(), failed.to_string()),
    ];
    if let Some(r) = &report.reference {
        s.push(("reference".into(), r.clone()));
    }
    for (i, o) in report.orders.iter().enumerate() {
        s.push((format!("observed_order_{i}"), num(*o)));
    }
    write_file(&out.join("summary.txt"), &format_summary(&s))?;
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTest {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_pair(grid: &SlabGrid, rng: &mut ChaCha8Rng, linked: bool) -> FieldPair {
    let bulk: Vec<f64> = (0..grid.n_bulk()).map(|_| rng.random_range(-1.0..1.0)).collect();
    if linked {
        FieldPair::trace_linked(grid, bulk).expect("sizes match")
    } else {
        let surf = (0..grid.n_surf()).map(|_| rng.random_range(-1.0..1.0)).collect();
        FieldPair::independent(grid, bulk, surf).expect("sizes match")
    }
}

/// Discrete identities of the grid operators on seeded random fields:
/// summation by parts, symmetry and constant kernel of the bilinear form,
/// and the duality identity of the elliptic solve in every regime.
pub fn operator_self_tests(grid: &SlabGrid) -> Result<Vec<SelfTest>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tests = Vec::new();
    let mut push = |name: &str, err: f64, tol: f64| {
        tests.push(SelfTest {
            name: name.into(),
            passed: err <= tol,
            detail: format!("error {err:e} (tolerance {tol:e})"),
        });
    };

    let u = random_pair(grid, &mut rng, true);
    let v = random_pair(grid, &mut rng, true);
    let lap = lap_bulk(grid, &v.bulk)?;
    let dn = normal_derivative(grid, &v.bulk)?;
    let lhs: f64 = grid.weights().iter().zip(&u.bulk).zip(&lap).map(|((w, a), b)| w * a * b).sum();
    let kv = grid.stiffness_bulk(&v.bulk);
    let mut rhs: f64 = -u.bulk.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>();
    for (s, d) in dn.iter().enumerate() {
        rhs += grid.hx * u.bulk[grid.trace_node(s)] * d;
    }
    push("summation_by_parts", (lhs - rhs).abs(), 1e-10 * (1.0 + lhs.abs()));

    for regime in [Regime { l: 1.0, sigma: 1.0 }, Regime { l: 0.0, sigma: 1.0 }, Regime { l: 0.0, sigma: 0.0 }] {
        let tag = format!("l{}_sigma{}", regime.l, regime.sigma);
        let linked = regime.trace_linked();
        let a = random_pair(grid, &mut rng, linked);
        let b = random_pair(grid, &mut rng, linked);
        let ab = bilinear_a(grid, regime, &a, &b)?;
        let ba = bilinear_a(grid, regime, &b, &a)?;
        push(&format!("symmetry_{tag}"), (ab - ba).abs(), 1e-12 * (1.0 + ab.abs()));
        let one = FieldPair::constant(grid, 1.0, a.linkage);
        push(&format!("constant_kernel_{tag}"), bilinear_a(grid, regime, &one, &a)?.abs(), 1e-10);
        let y = project_zero_mean(grid, &a)?;
        let sy = hminus_solve(grid, regime, &y)?;
        let norm2 = hminus_norm_zero_mean(grid, regime, &y)?.powi(2);
        let pairing = bilinear_a(grid, regime, &sy, &sy)?;
        push(&format!("duality_{tag}"), (norm2 - pairing).abs(), 1e-9 * (1.0 + norm2));
        push(&format!("solution_mean_{tag}"), generalized_mean(grid, &sy)?.abs(), 1e-12);
    }
    Ok(tests)
}

pub fn cmd_check(cfg: &RunConfig, out: Option<&Path>) -> Result<Summary> {
    let spec = cfg.potential_spec()?;
    let report = check_assumptions(&spec, 1000, cfg.init.mean)?;
    let grid = cfg.build_grid()?;
    let tests = operator_self_tests(&grid)?;
    let mut s: Summary = report.to_key_values();
    for w in report.warnings() {
        s.push(("warning".into(), w));
    }
    for t in &tests {
        s.push((
            format!("selftest.{}", t.name),
            format!("{} {}", if t.passed { "pass" } else { "FAIL" }, t.detail),
        ));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_file(&dir.join("check.txt"), &format_summary(&s))?;
    }
    let mut failures: Vec<String> = tests.iter().filter(|t| !t.passed).map(|t| t.name.clone()).collect();
    if !report.all_pass() {
        failures.push("assumptions".into());
    }
    if failures.is_empty() {
        Ok(s)
    } else {
        Err(Error::Invariant(format!("check failed: {}", failures.join(", "))))
    }
}

/// Steady state with the configured potential and mean, started from the
/// configured initial data. Writes `steady.ckpt` and `summary.txt`.
pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let result = (|| {
        let grid = cfg.build_grid()?;
        let init = match cfg.init.kind {
            InitKind::Checkpoint => {
                let p = cfg.init.path.as_ref().expect("validated: checkpoint init has a path");
                Checkpoint::read(p)?.phi
            }
            _ => cfg.initial_pair(&grid)?,
        };
        let opts = StationaryOptions {
            regularization: cfg.regularization()?,
            ..StationaryOptions::default()
        };
        let spec = cfg.potential_spec()?;
        let st = solve_stationary_with(&grid, &spec, cfg.init.mean, &init, &opts)?;
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        Checkpoint::steady(&grid, cfg.params_hash(), &st.phi, st.mu_infty).write(&out.join("steady.ckpt"))?;
        let gap = (st.mu_infty - st.mu_formula).abs();
        let s: Summary = vec![
            ("mu_infty".into(), num(st.mu_infty)),
            ("mu_infty_formula".into(), num(st.mu_formula)),
            ("multiplier_gap".into(), num(gap)),
            ("residual_norm".into(), num(st.residual_norm)),
            ("mean".into(), num(generalized_mean(&grid, &st.phi)?)),
            ("separation".into(), num(st.separation)),
            ("iterations".into(), st.iterations.to_string()),
            ("used_fallback".into(), st.used_fallback.to_string()),
        ];
        write_file(&out.join("summary.txt"), &format_summary(&s))?;
        if !(gap < 1e-8) {
            return Err(Error::Invariant(format!("multiplier and quadrature differ by {gap:e}")));
        }
        if !(st.separation > 0.0) {
            return Err(Error::Invariant("steady state touches a pure phase".into()));
        }
        Ok(s)
    })();
    if let Err(e) = &result {
        write_failure(out, e);
    }
    result
}

fn checkpoint_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Re-derive summaries from checkpoints in `path` (a file or a directory)
/// using the physics of `cfg`. Writes `report.txt` next to them.
pub fn cmd_report(cfg: &RunConfig, path: &Path) -> Result<Summary> {
    let files = checkpoint_files(path)?;
    if files.is_empty() {
        return Err(Error::Io(format!("no checkpoints under {}", path.display())));
    }
    let params = cfg.model_params()?;
    let hash = cfg.params_hash();
    let mut s = Summary::new();
    for f in &files {
        let ck = Checkpoint::read(f)?;
        let grid = ck.grid()?;
        let stepper = Stepper::new(&grid, &params, &cfg.step_config()?)?;
        let name = f.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let energy = stepper.energy(&ck.phi.bulk)?;
        s.push((format!("{name}.kind"), if ck.stationary { "stationary" } else { "trajectory" }.into()));
        s.push((format!("{name}.params_match"), (ck.params_hash == hash).to_string()));
        s.push((format!("{name}.t"), num(ck.t)));
        s.push((format!("{name}.step"), ck.step.to_string()));
        s.push((format!("{name}.energy"), num(energy)));
        s.push((format!("{name}.mean"), num(generalized_mean(&grid, &ck.phi)?)));
        s.push((format!("{name}.separation"), num(separation_delta(&ck.phi))));
        if ck.stationary {
            let r = steady_residual_with(&grid, &params.potential, &params.regularization, &ck.phi, ck.mu_infty)?;
            s.push((format!("{name}.mu_infty"), num(ck.mu_infty)));
            s.push((format!("{name}.steady_residual"), num(r)));
        }
        if let Some(t) = ck.totals {
            s.push((format!("{name}.mass_drift"), num(t.max_mean_drift)));
            s.push((format!("{name}.min_separation"), num(t.min_separation)));
            s.push((format!("{name}.newton_iterations"), t.newton_iters.to_string()));
        }
    }
    let dir = if path.is_file() { path.parent().unwrap_or(Path::new(".")) } else { path };
    write_file(&dir.join("report.txt"), &format_summary(&s))?;
    Ok(s)
}
