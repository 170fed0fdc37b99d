use chdbc_core::checkpoint::Checkpoint;
use chdbc_core::config::RunConfig;
use chdbc_core::diagnostics::RunTotals;
use chdbc_core::fields::{FieldPair, Linkage};
use chdbc_core::grid::build_grid;
use chdbc_core::stepper::{SimState, Stepper};
use chdbc_core::trajectory::{RunOptions, Runner};
use chdbc_core::Error;

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.grid.nx = 16;
    c.grid.ny = 9;
    c
}

#[test]
fn trajectory_state_round_trips_through_a_file() {
    let cfg = small_config();
    let grid = cfg.build_grid().unwrap();
    let stepper = Stepper::new(&grid, &cfg.model_params().unwrap(), &cfg.step_config().unwrap()).unwrap();
    let mut opts = RunOptions::new(0.05, 10);
    opts.steady_tol = 0.0;
    let rec = Runner::new(stepper, &cfg.initial_pair(&grid).unwrap(), opts).unwrap().run().unwrap();

    let ck = Checkpoint::from_state(&grid, cfg.params_hash(), &rec.final_state, &rec.totals);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    ck.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back.to_bytes(), ck.to_bytes());
    let (state, totals) = back.state().unwrap();
    assert_eq!(state, rec.final_state);
    assert_eq!(totals.to_words(), rec.totals.to_words());
    assert_eq!(back.grid().unwrap(), grid);
    assert_eq!(state.mu.linkage, Linkage::Independent);
}

#[test]
fn steady_checkpoint_has_no_trajectory_state() {
    let grid = build_grid(2.0, 8, 5).unwrap();
    let phi = FieldPair::constant(&grid, 0.3, Linkage::TraceLinked);
    let ck = Checkpoint::steady(&grid, [9; 8], &phi, 0.25);
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert!(back.stationary);
    assert_eq!(back.mu_infty, 0.25);
    assert!(back.mu.is_none());
    assert!(matches!(back.state(), Err(Error::Io(_))));
}

#[test]
fn corrupt_files_are_rejected() {
    let grid = build_grid(2.0, 8, 5).unwrap();
    let phi = FieldPair::constant(&grid, 0.1, Linkage::TraceLinked);
    let state = SimState {
        t: 0.0,
        step: 0,
        phi: phi.clone(),
        mu: phi.clone(),
    };
    let bytes = Checkpoint::from_state(&grid, [0; 8], &state, &RunTotals::new(0.0, 0.1, 0.9)).to_bytes();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad_magic).is_err());
    let mut bad_version = bytes.clone();
    bad_version[8] = 2;
    assert!(Checkpoint::from_bytes(&bad_version).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());

    // A trace-linked pair whose surface disagrees with its boundary rows.
    let mut broken = bytes.clone();
    let tail = broken.len() - 8;
    broken[tail..].copy_from_slice(&0.7f64.to_le_bytes());
    assert!(Checkpoint::from_bytes(&broken).is_err());
}
