//! Initial data: constants and seeded smooth noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{generalized_mean, FieldPair};
use crate::grid::SlabGrid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub mean: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Highest Fourier index in x (periodic) and in y (cosine).
    pub modes_x: usize,
    pub modes_y: usize,
}

impl NoiseSpec {
    pub fn new(mean: f64, amplitude: f64, seed: u64) -> Self {
        NoiseSpec {
            mean,
            amplitude,
            seed,
            modes_x: 2,
            modes_y: 1,
        }
    }
}

pub fn constant(grid: &SlabGrid, c: f64) -> Result<FieldPair> {
    if !(c.abs() < 1.0) {
        return Err(Error::Init(format!("constant {c} is outside (-1, 1)")));
    }
    FieldPair::trace_linked(grid, vec![c; grid.n_bulk()])
}

/// `mean + noise`, where the noise is a random combination of low Fourier
/// modes damped by `1/(1 + |k|²)`, rescaled to max modulus `amplitude` and
/// then shifted so the generalized mean is exactly `mean`. ChaCha8 seeded
/// from `seed` makes the field reproducible across platforms.
pub fn seeded_noise(grid: &SlabGrid, spec: &NoiseSpec) -> Result<FieldPair> {
    if !(spec.mean.abs() < 1.0) {
        return Err(Error::Init(format!("mean {} is outside (-1, 1)", spec.mean)));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(Error::Init(format!("amplitude {} must be finite and nonnegative", spec.amplitude)));
    }
    if spec.modes_x == 0 && spec.modes_y == 0 {
        return Err(Error::Init("at least one noise mode is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut modes = Vec::new();
    for ky in 0..=spec.modes_y {
        for kx in 0..=spec.modes_x {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = if kx > 0 { rng.random_range(-1.0..1.0) } else { 0.0 };
            let damp = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            modes.push((kx as f64, ky as f64, a * damp, b * damp));
        }
    }
    let mut noise: Vec<f64> = (0..grid.n_bulk())
        .map(|k| {
            let (x, y) = grid.xy(k);
            modes
                .iter()
                .map(|&(kx, ky, a, b)| {
                    let arg = 2.0 * PI * kx * x / grid.lx;
                    (a * arg.cos() + b * arg.sin()) * (PI * ky * y).cos()
                })
                .sum()
        })
        .collect();
    let peak = noise.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { spec.amplitude / peak } else { 0.0 };
    noise.iter_mut().for_each(|v| *v *= scale);
    let shift = spec.mean - generalized_mean(grid, &FieldPair::trace_linked(grid, noise.clone())?)?;
    let phi: Vec<f64> = noise.iter().map(|v| v + shift).collect();
    let pair = FieldPair::trace_linked(grid, phi)?;
    if !(pair.max_abs() < 1.0) {
        return Err(Error::Init(format!(
            "mean {} with amplitude {} leaves (-1, 1)",
            spec.mean, spec.amplitude
        )));
    }
    Ok(pair)
}
