//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion failed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chdbc_core::app::{execute_run, sweep};
use chdbc_core::config::{InitKind, RunConfig, SweepAxis, SweepSection};
use chdbc_core::diagnostics::{
    degiorgi_check, degiorgi_threshold, energy_balance_audit, fit_power_law, level_set_measures, RunStatus,
    TrajectoryRecord,
};
use chdbc_core::fields::{generalized_mean, hminus_norm_zero_mean, hminus_solve, inner, project_zero_mean};
use chdbc_core::grid::{bilinear_a, build_grid, Regime};
use chdbc_core::par::Execution;
use chdbc_core::potentials::{eval_beta, yosida_beta, PotentialSpec, Regularization, Side, YosidaConfig};
use chdbc_core::stationary::{mu_infty_formula, solve_stationary, steady_residual};
use chdbc_core::stepper::{ModelParams, Scheme, Stepper};
use chdbc_core::trajectory::{RunOptions, Runner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{dense_oracle, jacobian_block_errors, linkage_for, max_diff, random_pair, REGIMES};

/// Final separation margin of the golden runs, one per regime in
/// `REGIMES` order, measured on x86_64 Linux. All admissible modes decay at
/// this domain length, so the margin settles near 1 - m̄₀.
const SEPARATION_PLATEAU: [f64; 3] = [0.799_995_34, 0.800_000_00, 0.799_999_96];

struct Outcome {
    results: Vec<(usize, bool)>,
}

impl Outcome {
    fn record(&mut self, n: usize, name: &str, pass: bool, detail: String) {
        let line = format!("criterion {n:2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        // Written straight to the stream so the line shows without --nocapture.
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        self.results.push((n, pass));
    }
}

fn golden(l: f64, sigma: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.model.l = l;
    c.model.sigma = sigma;
    c
}

/// Golden trajectory to t = 10 without early stopping, sampled every
/// 0.05 time units.
fn golden_trajectory(l: f64, sigma: f64, tau: f64) -> TrajectoryRecord {
    let mut c = golden(l, sigma);
    c.step.tau = tau;
    let grid = c.build_grid().unwrap();
    let stepper = Stepper::new(&grid, &c.model_params().unwrap(), &c.step_config().unwrap()).unwrap();
    let mut opts = RunOptions::new(10.0, (0.05 / tau).round() as u64);
    opts.steady_tol = 0.0;
    Runner::new(stepper, &c.initial_pair(&grid).unwrap(), opts).unwrap().run().unwrap()
}

/// Bisection for `tanh(z) + s·z = r`, the log resolvent in the variable
/// z = atanh(J) = β(J)/θ.
fn log_resolvent_z(s: f64, r: f64) -> f64 {
    let f = |z: f64| z.tanh() + s * z - r;
    let (mut lo, mut hi) = (-(r.abs() + 1.0) / s, (r.abs() + 1.0) / s);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn trajectories(o: &mut Outcome) {
    let mut mass = (true, 0.0_f64, 0.0_f64);
    let mut energy = (true, 0.0_f64, f64::INFINITY);
    let mut sep = (true, Vec::new());
    for (i, (l, sigma)) in REGIMES.into_iter().enumerate() {
        let clock = Instant::now();
        let coarse = golden_trajectory(l, sigma, 1e-3);
        let secs = clock.elapsed().as_secs_f64();
        let fine = golden_trajectory(l, sigma, 5e-4);
        assert_eq!(coarse.final_state.step, 10_000);

        // Mass at every sample, and every step through the running totals.
        let m0 = coarse.samples[0].mean;
        let drift = coarse
            .samples
            .iter()
            .map(|s| (s.mean - m0).abs())
            .fold(coarse.totals.max_mean_drift, f64::max);
        mass.0 &= drift < 1e-12 && secs <= 300.0;
        mass.1 = mass.1.max(drift);
        mass.2 = mass.2.max(secs);

        // Energy: per-step increase and the τ-halving defect ratio.
        let a = energy_balance_audit(&coarse);
        let b = energy_balance_audit(&fine);
        let slack = coarse.totals.max_energy_increase.max(fine.totals.max_energy_increase);
        let ratio = a.cumulative_defect.abs() / b.cumulative_defect.abs();
        energy.0 &= slack <= 1e-10 && ratio >= 1.8;
        energy.1 = energy.1.max(slack);
        energy.2 = energy.2.min(ratio);

        // Separation after the transient and the ladder at half the plateau.
        let positive = coarse.samples.iter().filter(|s| s.t >= 0.5).all(|s| s.separation > 0.0);
        let plateau = coarse.final_sample().separation;
        let golden_ok = (plateau - SEPARATION_PLATEAU[i]).abs() <= 0.05 * SEPARATION_PLATEAU[i];
        let grid = golden(l, sigma).build_grid().unwrap();
        let ladder = level_set_measures(&grid, &coarse.final_state.phi, 0.5 * plateau, 60).unwrap();
        let zero_at = ladder.first_zero();
        sep.0 &= positive && golden_ok && zero_at.is_some();
        sep.1.push(format!(
            "({l},{sigma}): plateau {plateau:.6} vs {:.6}, z_n = 0 at n = {zero_at:?}",
            SEPARATION_PLATEAU[i]
        ));
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "  regime ({l},{sigma}): drift {drift:.2e}, {secs:.1}s, slack {slack:.2e}, defects {:.3e}/{:.3e} ratio {ratio:.4}, plateau {plateau:.8}",
            a.cumulative_defect, b.cumulative_defect
        );
    }
    o.record(
        1,
        "mass conservation",
        mass.0,
        format!("max drift {:.2e} < 1e-12, slowest regime {:.1}s", mass.1, mass.2),
    );
    o.record(
        2,
        "energy dissipation",
        energy.0,
        format!("max per-step increase {:.2e} <= 1e-10, min defect ratio {:.4} >= 1.8", energy.1, energy.2),
    );
    o.record(3, "strict separation", sep.0, sep.1.join("; "));
}

fn stationary(o: &mut Outcome) {
    let mut ok = true;
    let mut details = Vec::new();
    let mut converged = 0;
    for (l, sigma) in REGIMES {
        let mut c = golden(l, sigma).with_grid(32, 17);
        c.step.tau = 1e-2;
        c.run.t_end = 200.0;
        let grid = c.build_grid().unwrap();
        let spec = c.potential_spec().unwrap();
        let stepper = Stepper::new(&grid, &c.model_params().unwrap(), &c.step_config().unwrap()).unwrap();
        let mut opts = RunOptions::new(c.run.t_end, 10);
        opts.steady_tol = 1e-9;
        let rec = Runner::new(stepper, &c.initial_pair(&grid).unwrap(), opts).unwrap().run().unwrap();
        if rec.status != RunStatus::Converged {
            details.push(format!("({l},{sigma}) did not converge"));
            continue;
        }
        converged += 1;
        let phi = &rec.final_state.phi;
        let lagrange = generalized_mean(&grid, &rec.final_state.mu).unwrap();
        let residual = steady_residual(&grid, &spec, phi, lagrange).unwrap();
        let gap = (lagrange - mu_infty_formula(&grid, &spec, phi).unwrap()).abs();
        let solved = solve_stationary(&grid, &spec, c.init.mean, phi).unwrap();
        let solved_gap = (solved.mu_infty - solved.mu_formula).abs();
        ok &= residual < 1e-6 && gap < 1e-8 && solved_gap < 1e-8;
        details.push(format!(
            "({l},{sigma}) t={:.2}: residual {residual:.1e}, gap {gap:.1e}, solver gap {solved_gap:.1e}",
            rec.final_state.t
        ));
    }
    ok &= converged == REGIMES.len();

    let grid = build_grid(4.0, 64, 33).unwrap();
    let convex = PotentialSpec::logarithmic(0.3, 0.0).unwrap();
    let noise = random_pair(&grid, 21, chdbc_core::fields::Linkage::TraceLinked).scale(0.1);
    let shifted = chdbc_core::fields::FieldPair::trace_linked(&grid, noise.bulk.iter().map(|v| v + 0.2).collect()).unwrap();
    let s = solve_stationary(&grid, &convex, 0.2, &shifted).unwrap();
    let beta = 0.15 * (1.2f64 / 0.8).ln();
    let mu_err = (s.mu_infty - beta).abs();
    let flat = s.phi.bulk.iter().chain(&s.phi.surf).map(|v| (v - 0.2).abs()).fold(0.0, f64::max);
    ok &= mu_err < 1e-10 && flat < 1e-9;
    details.push(format!("convex: |mu - beta(0.2)| {mu_err:.1e}, max |phi - 0.2| {flat:.1e}"));
    o.record(4, "stationary consistency", ok, details.join("; "));
}

fn yosida(o: &mut Outcome) {
    let clock = Instant::now();
    let theta = 0.3;
    let spec = PotentialSpec::logarithmic(theta, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut residual, mut oracle, mut mono, mut lip, mut under, mut conv) = (0.0_f64, 0.0_f64, 0, 0, 0, 0);
    let eps_ladder: Vec<f64> = (1..=10).map(|k| 0.5f64.powi(k)).collect();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for _ in 0..10_000 {
        let r: f64 = rng.random_range(-3.0..3.0);
        let k = rng.random_range(0..eps_ladder.len());
        let eps = eps_ladder[k];
        let res = spec.resolve(Side::Bulk, r, &YosidaConfig::new(eps).unwrap()).unwrap();
        let z = res.beta_j / theta;
        residual = residual.max((z.tanh() + eps * theta * z - r).abs());
        // Distance to the bisection root, in residual units via the local slope.
        let zo = log_resolvent_z(eps * theta, r);
        let slope = 1.0 / zo.cosh().powi(2) + eps * theta;
        oracle = oracle.max((z - zo).abs() * slope);

        let values: Vec<f64> = eps_ladder
            .iter()
            .map(|&e| yosida_beta(&spec, Side::Bulk, r, e).unwrap())
            .collect();
        if let Some((r0, v0)) = &prev {
            for (e, (a, b)) in eps_ladder.iter().zip(v0.iter().zip(&values)) {
                if (b - a) * (r - r0) < -1e-12 {
                    mono += 1;
                }
                if (b - a).abs() > (r - r0).abs() / e * (1.0 + 1e-9) + 1e-12 {
                    lip += 1;
                }
            }
        }
        if r.abs() < 1.0 {
            let exact = eval_beta(&spec, Side::Bulk, r).unwrap().0;
            let test_beta = 0.5 * theta * ((1.0 + r) / (1.0 - r)).ln();
            oracle = oracle.max((exact - test_beta).abs() / test_beta.abs().max(1.0));
            let mut gap = f64::INFINITY;
            for v in &values {
                if v.abs() > exact.abs() * (1.0 + 1e-12) + 1e-15 {
                    under += 1;
                }
                let g = (v - exact).abs();
                if g > gap {
                    conv += 1;
                }
                gap = g;
            }
        }
        prev = Some((r, values));
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = residual < 1e-12 && oracle < 1e-12 && mono + lip + under + conv == 0 && secs <= 10.0;
    o.record(
        5,
        "Yosida suite",
        ok,
        format!(
            "resolvent residual {residual:.1e}, oracle {oracle:.1e}, violations monotone {mono} / Lipschitz {lip} / bound {under} / convergence {conv}, {secs:.2}s"
        ),
    );
}

fn elliptic(o: &mut Outcome) {
    let g = build_grid(2.0, 8, 5).unwrap();
    let (mut solve, mut dual) = (0.0_f64, 0.0_f64);
    for (l, s) in REGIMES {
        let regime = Regime::new(l, s).unwrap();
        for seed in 0..3 {
            let rhs = project_zero_mean(&g, &random_pair(&g, 300 + seed, linkage_for(regime))).unwrap();
            let u = hminus_solve(&g, regime, &rhs).unwrap();
            solve = solve.max(max_diff(&u, &dense_oracle(&g, regime, &rhs)));
            let pairing = inner(&g, &u, &rhs);
            let n0 = hminus_norm_zero_mean(&g, regime, &rhs).unwrap();
            let a = bilinear_a(&g, regime, &u, &u).unwrap();
            dual = dual.max((pairing - n0 * n0).abs()).max((pairing - a).abs());
        }
    }
    o.record(
        6,
        "elliptic oracle",
        solve < 1e-10 && dual < 1e-10,
        format!("dense solve gap {solve:.1e}, duality gap {dual:.1e}"),
    );
}

fn jacobian(o: &mut Outcome) {
    let grid = build_grid(2.0, 8, 5).unwrap();
    let mut worst = 0.0_f64;
    for (l, sigma) in REGIMES {
        for reg in [Regularization::Exact, Regularization::Yosida(YosidaConfig::new(0.05).unwrap())] {
            for scheme in [Scheme::ConvexSplit, Scheme::FullyImplicit] {
                let p = ModelParams::new(Regime::new(l, sigma).unwrap(), PotentialSpec::logarithmic(0.3, 1.0).unwrap(), reg)
                    .unwrap();
                for (_, err, scale) in jacobian_block_errors(&grid, &p, scheme, 17) {
                    worst = worst.max(err / scale);
                }
            }
        }
    }
    o.record(
        7,
        "Jacobian vs finite differences",
        worst < 1e-6,
        format!("worst relative block error {worst:.1e}"),
    );
}

fn limits(o: &mut Outcome) {
    let mut ok = true;
    let mut details = Vec::new();
    for axis in [SweepAxis::L, SweepAxis::Epsilon] {
        let mut c = RunConfig::default();
        c.run.t_end = 0.5;
        c.sweep = Some(SweepSection {
            axis,
            values: vec![1e-1, 1e-2, 1e-3],
            grids: Vec::new(),
        });
        let report = sweep(&c, Execution::default()).unwrap();
        let d: Vec<f64> = report.rows.iter().map(|r| r.distance).collect();
        // Rows come in increasing value; the distance must shrink with it.
        let decreasing = report.rows.iter().all(|r| r.outcome.is_ok()) && d.windows(2).all(|w| w[0] < w[1]);
        ok &= decreasing && d.len() == 3;
        details.push(format!("{axis:?} distances {:?}", d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()));
    }
    o.record(8, "limit trends", ok, details.join("; "));
}

fn tooling(o: &mut Outcome) {
    let t: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let mut worst = 0.0_f64;
    let mut ok = true;
    for p in [0.5, 1.0, 2.0, 5.0] {
        let d: Vec<f64> = t.iter().map(|ti| 2.5 * (1.0 + ti).powf(-p)).collect();
        let fit = fit_power_law(&t, &d).unwrap();
        worst = worst.max(fit.rms);
        ok &= fit.rms < 1e-10 && (fit.p - p).abs() < 1e-9;
    }
    let (c, b, eps) = (2.0, 4.0, 0.5);
    let sig = degiorgi_threshold(c, b, eps).unwrap();
    let decay: Vec<f64> = (0..25).map(|n| sig * b.powf(-(n as f64) / eps)).collect();
    let accepts = degiorgi_check(&decay, c, b, eps).unwrap().passed();
    let rejects = !degiorgi_check(&[sig; 25], c, b, eps).unwrap().passed();
    ok &= accepts && rejects;
    o.record(
        9,
        "rate fits and De Giorgi checker",
        ok,
        format!("worst fit rms {worst:.1e}, decay accepted {accepts}, constant rejected {rejects}"),
    );
}

fn determinism(o: &mut Outcome) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (sa, _) = execute_run(&cfg, Some(&a)).unwrap();
    execute_run(&cfg, Some(&b)).unwrap();
    let identical = read_dir(&a) == read_dir(&b);

    // Resume from the latest periodic checkpoint before the end.
    let mut ckpts: Vec<String> = read_dir(&a).into_keys().filter(|k| k.starts_with("ckpt_")).collect();
    ckpts.sort();
    let resume = ckpts
        .iter()
        .rev()
        .find(|k| *k != &format!("ckpt_{:010}.ckpt", sa.steps))
        .cloned();
    let bit_exact = match &resume {
        Some(name) => {
            let mut rc = cfg.clone();
            rc.init.kind = InitKind::Checkpoint;
            rc.init.path = Some(a.join(name));
            let r = tmp.path().join("r");
            let (sr, _) = execute_run(&rc, Some(&r)).unwrap();
            sr.resumed_from.is_some() && fs::read(a.join("final.ckpt")).unwrap() == fs::read(r.join("final.ckpt")).unwrap()
        }
        None => false,
    };
    o.record(
        10,
        "determinism",
        identical && bit_exact,
        format!(
            "reruns identical {identical}, resume from {} bit-exact {bit_exact}, {} steps",
            resume.as_deref().unwrap_or("none"),
            sa.steps
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let mut o = Outcome { results: Vec::new() };
    yosida(&mut o);
    elliptic(&mut o);
    jacobian(&mut o);
    tooling(&mut o);
    limits(&mut o);
    stationary(&mut o);
    determinism(&mut o);
    trajectories(&mut o);
    o.results.sort();
    let failed: Vec<usize> = o.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert_eq!(o.results.len(), 10);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
