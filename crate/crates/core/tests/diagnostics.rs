use chdbc_core::diagnostics::{
    degiorgi_check, degiorgi_threshold, dissipation_terms, energy_balance_audit, fit_convergence_rate,
    fit_power_law, ladder_levels, level_set_measures, separation_delta, separation_time, RunStatus,
};
use chdbc_core::fields::{FieldPair, Linkage};
use chdbc_core::grid::{bilinear_a, build_grid, Regime, SlabGrid};
use chdbc_core::init::{constant, seeded_noise, NoiseSpec};
use chdbc_core::potentials::{PotentialSpec, Regularization};
use chdbc_core::stationary::solve_stationary;
use chdbc_core::stepper::{ModelParams, Scheme, StepConfig};
use chdbc_core::trajectory::{run_with, RunOptions};
use chdbc_core::Error;
use proptest::prelude::*;

fn golden_run(grid: &SlabGrid, t_end: f64, every: u64, tau: f64, record_states: bool) -> chdbc_core::diagnostics::TrajectoryRecord {
    let params = ModelParams::new(
        Regime::new(1.0, 1.0).unwrap(),
        PotentialSpec::logarithmic(0.3, 1.0).unwrap(),
        Regularization::Exact,
    )
    .unwrap();
    let cfg = StepConfig::new(tau, Scheme::ConvexSplit).unwrap();
    let mut opts = RunOptions::new(t_end, every);
    opts.steady_tol = 0.0;
    opts.record_states = record_states;
    let phi0 = seeded_noise(grid, &NoiseSpec::new(0.2, 0.05, 7)).unwrap();
    run_with(grid, &params, &cfg, &phi0, opts).unwrap()
}

#[test]
fn separation_examples() {
    let g = build_grid(1.0, 4, 3).unwrap();
    let mut bulk = vec![0.8; g.n_bulk()];
    bulk[g.idx(2, g.ny - 1)] = 0.9;
    let p = FieldPair::trace_linked(&g, bulk).unwrap();
    assert!((separation_delta(&p) - 0.1).abs() < 1e-15);
    assert_eq!(separation_delta(&FieldPair::constant(&g, 0.0, Linkage::TraceLinked)), 1.0);
}

#[test]
fn ladder_examples() {
    let g = build_grid(1.0, 8, 5).unwrap();
    let high = FieldPair::constant(&g, 0.95, Linkage::TraceLinked);
    let l = level_set_measures(&g, &high, 0.1, 10).unwrap();
    assert!(l.z.iter().all(|z| (z - 3.0).abs() < 1e-14));
    let mid = FieldPair::constant(&g, 0.5, Linkage::TraceLinked);
    let l = level_set_measures(&g, &mid, 0.1, 10).unwrap();
    assert!(l.z.iter().all(|&z| z == 0.0));

    let delta = 0.2;
    let k = ladder_levels(delta, 30);
    assert!((k[0] - (1.0 - 2.0 * delta)).abs() < 1e-15);
    for n in 1..k.len() {
        assert!(k[n] > 1.0 - 2.0 * delta && k[n] < 1.0 - delta);
        assert!(k[n] > k[n - 1]);
    }
    assert!(matches!(level_set_measures(&g, &mid, 0.0, 5), Err(Error::Param(_))));
}

#[test]
fn ladder_vanishes_after_the_transient() {
    let g = build_grid(4.0, 16, 9).unwrap();
    let rec = golden_run(&g, 2.0, 100, 1e-3, false);
    let phi = &rec.final_state.phi;
    let sep = separation_delta(phi);
    assert!(sep > 0.0);
    let l = level_set_measures(&g, phi, 0.5 * sep, 40).unwrap();
    assert!(l.first_zero().is_some());
    let t = separation_time(&rec, 0.5 * sep).unwrap();
    assert!(t <= 2.0);
}

#[test]
fn degiorgi_examples() {
    assert!((degiorgi_threshold(1.0, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    let s = degiorgi_threshold(1.0, 8.0, 0.75).unwrap();
    assert!((s - 8f64.powf(-16.0 / 9.0)).abs() < 1e-15);
    assert!((s - 0.0248).abs() < 1e-4);
    assert!(matches!(degiorgi_threshold(1.0, 1.0, 1.0), Err(Error::Param(_))));
    assert!(matches!(degiorgi_threshold(0.0, 2.0, 1.0), Err(Error::Param(_))));

    let (c, b, eps) = (1.5, 3.0, 0.5);
    let sig = degiorgi_threshold(c, b, eps).unwrap();
    let synthetic: Vec<f64> = (0..20).map(|n| sig * b.powf(-(n as f64) / eps)).collect();
    let out = degiorgi_check(&synthetic, c, b, eps).unwrap();
    assert!(out.hypothesis_met && out.decay_holds && out.passed());

    let flat = vec![sig; 20];
    let out = degiorgi_check(&flat, c, b, eps).unwrap();
    assert!(out.hypothesis_met);
    assert_eq!(out.first_violation, Some(1));
    assert!(!out.passed());
}

#[test]
fn power_law_fits_are_exact() {
    let t: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    for p in [0.5, 1.0, 2.0, 5.0] {
        let d: Vec<f64> = t.iter().map(|ti| 3.0 * (1.0 + ti).powf(-p)).collect();
        let fit = fit_power_law(&t, &d).unwrap();
        assert!((fit.p - p).abs() < 1e-10);
        assert!((fit.c - 3.0).abs() < 1e-9);
        assert!(fit.rms < 1e-10);
        if p == 2.0 {
            assert!((fit.theta_star - 0.4).abs() < 1e-10);
        }
    }
    let t: Vec<f64> = (1..=40).map(|k| k as f64).collect();
    let d: Vec<f64> = t.iter().map(|ti| (-ti).exp()).collect();
    assert!(matches!(fit_power_law(&t, &d), Err(Error::Fit(_))));
}

#[test]
fn rate_fit_on_a_trajectory() {
    let g = build_grid(4.0, 16, 9).unwrap();
    let rec = golden_run(&g, 5.0, 20, 1e-2, true);
    let steady = solve_stationary(&g, &PotentialSpec::logarithmic(0.3, 1.0).unwrap(), 0.2, &rec.final_state.phi).unwrap();
    let r = fit_convergence_rate(&g, &rec, &steady.phi).unwrap();
    assert!(r.h1.p > 0.0 && r.l2.p > 0.0);
    assert!(r.h1.rms.is_finite());
    assert!(r.h1.theta_star > 0.0 && r.h1.theta_star < 0.5);

    let bare = golden_run(&g, 5.0, 20, 1e-2, false);
    assert!(matches!(fit_convergence_rate(&g, &bare, &steady.phi), Err(Error::Fit(_))));
}

#[test]
fn dissipation_identity_and_errors() {
    let g = build_grid(2.0, 8, 5).unwrap();
    let c = FieldPair::constant(&g, 0.4, Linkage::Independent);
    let d = dissipation_terms(&g, Regime::new(1.0, 1.0).unwrap(), &c).unwrap();
    assert_eq!((d.bulk, d.surface, d.jump, d.total), (0.0, 0.0, 0.0, 0.0));

    let mu = seeded_noise(&g, &NoiseSpec::new(0.0, 0.4, 2)).unwrap();
    let mu = FieldPair::independent(&g, mu.bulk, mu.surf.iter().map(|v| 0.5 * v + 0.1).collect()).unwrap();
    let r = Regime::new(0.5, 2.0).unwrap();
    let d = dissipation_terms(&g, r, &mu).unwrap();
    let a = bilinear_a(&g, r, &mu, &mu).unwrap();
    assert!((d.total - a).abs() < 1e-13 * a);
    assert!(matches!(
        dissipation_terms(&g, Regime::new(0.0, 1.0).unwrap(), &mu),
        Err(Error::Regime(_))
    ));
}

#[test]
fn stationary_run_has_zero_defect() {
    let g = build_grid(4.0, 16, 9).unwrap();
    let params = ModelParams::new(
        Regime::new(1.0, 1.0).unwrap(),
        PotentialSpec::logarithmic(0.5, 0.0).unwrap(),
        Regularization::Exact,
    )
    .unwrap();
    let cfg = StepConfig::new(1e-3, Scheme::ConvexSplit).unwrap();
    let mut opts = RunOptions::new(0.05, 10);
    opts.steady_tol = 0.0;
    let rec = run_with(&g, &params, &cfg, &constant(&g, 0.2).unwrap(), opts).unwrap();
    assert_eq!(rec.status, RunStatus::Completed);
    let audit = energy_balance_audit(&rec);
    assert_eq!(audit.max_step_defect, 0.0);
    assert_eq!(audit.cumulative_defect, 0.0);
    assert_eq!(audit.energy_drop, 0.0);
}

#[test]
fn defect_shrinks_with_the_step() {
    let g = build_grid(4.0, 16, 9).unwrap();
    let coarse = energy_balance_audit(&golden_run(&g, 0.2, 1000, 1e-3, false));
    let fine = energy_balance_audit(&golden_run(&g, 0.2, 1000, 5e-4, false));
    assert!(coarse.energy_drop >= 0.0 && fine.energy_drop >= 0.0);
    let ratio = coarse.cumulative_defect / fine.cumulative_defect;
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn defect_is_first_order_after_the_initial_layer() {
    // Noise data violate the trace compatibility of the L = 0 regimes, so
    // the comparison starts from a state past the initial layer.
    let g = build_grid(4.0, 16, 9).unwrap();
    for (l, sigma) in [(0.0, 1.0), (0.0, 0.0)] {
        let params = ModelParams::new(
            Regime::new(l, sigma).unwrap(),
            PotentialSpec::logarithmic(0.3, 1.0).unwrap(),
            Regularization::Exact,
        )
        .unwrap();
        let run = |phi0: &FieldPair, tau: f64, t_end: f64| {
            let mut opts = RunOptions::new(t_end, 1_000_000);
            opts.steady_tol = 0.0;
            run_with(&g, &params, &StepConfig::new(tau, Scheme::ConvexSplit).unwrap(), phi0, opts).unwrap()
        };
        let phi0 = seeded_noise(&g, &NoiseSpec::new(0.2, 0.05, 7)).unwrap();
        let settled = run(&phi0, 1e-5, 0.05).final_state.phi;
        let coarse = energy_balance_audit(&run(&settled, 1e-3, 0.5)).cumulative_defect;
        let fine = energy_balance_audit(&run(&settled, 5e-4, 0.5)).cumulative_defect;
        let ratio = coarse / fine;
        assert!(ratio > 1.95 && ratio < 2.05, "({l}, {sigma}): ratio {ratio}");
    }
}

#[test]
fn samples_are_strictly_increasing_in_time() {
    let g = build_grid(4.0, 8, 5).unwrap();
    let rec = golden_run(&g, 0.3, 7, 1e-2, false);
    for w in rec.samples.windows(2) {
        assert!(w[1].t > w[0].t);
    }
    assert_eq!(rec.final_sample().step, 30);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ladder_is_nested(seed in any::<u64>(), amp in 0.0f64..0.45, delta in 0.01f64..0.5) {
        let g = build_grid(2.0, 8, 5).unwrap();
        let spec = NoiseSpec { mean: 0.0, amplitude: amp, seed, modes_x: 3, modes_y: 2 };
        let phi = seeded_noise(&g, &spec).unwrap();
        let l = level_set_measures(&g, &phi, delta, 20).unwrap();
        for n in 1..l.z.len() {
            prop_assert!(l.z[n] <= l.z[n - 1]);
            prop_assert!(l.z_lower[n] <= l.z_lower[n - 1]);
        }
    }
}
