#![allow(dead_code)]

use chdbc_core::fields::{inner, FieldPair, Linkage};
use chdbc_core::grid::{bilinear_a, Regime, SlabGrid};
use chdbc_core::stepper::{ModelParams, Scheme, SimState, StepConfig, Stepper, Unknowns};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REGIMES: [(f64, f64); 3] = [(1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];

pub fn linkage_for(regime: Regime) -> Linkage {
    if regime.trace_linked() {
        Linkage::TraceLinked
    } else {
        Linkage::Independent
    }
}

pub fn random_pair(grid: &SlabGrid, seed: u64, linkage: Linkage) -> FieldPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bulk: Vec<f64> = (0..grid.n_bulk()).map(|_| rng.random_range(-1.0..1.0)).collect();
    match linkage {
        Linkage::TraceLinked => FieldPair::trace_linked(grid, bulk).unwrap(),
        Linkage::Independent => {
            let surf = (0..grid.n_surf()).map(|_| rng.random_range(-1.0..1.0)).collect();
            FieldPair::independent(grid, bulk, surf).unwrap()
        }
    }
}

pub fn max_diff(a: &FieldPair, b: &FieldPair) -> f64 {
    a.bulk
        .iter()
        .zip(&b.bulk)
        .chain(a.surf.iter().zip(&b.surf))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense bordered solve of the weak form, assembled entrywise from the
/// bilinear form and factorized with LU.
pub fn dense_oracle(grid: &SlabGrid, regime: Regime, rhs: &FieldPair) -> FieldPair {
    let (n, ns) = (grid.n_bulk(), grid.n_surf());
    let linked = regime.trace_linked();
    let dim = if linked { n } else { n + ns };
    let basis = |i: usize| -> FieldPair {
        let mut bulk = vec![0.0; n];
        let mut surf = vec![0.0; ns];
        if i < n {
            bulk[i] = 1.0;
        } else {
            surf[i - n] = 1.0;
        }
        if linked {
            FieldPair::trace_linked(grid, bulk).unwrap()
        } else {
            FieldPair::independent(grid, bulk, surf).unwrap()
        }
    };
    let basis: Vec<FieldPair> = (0..dim).map(basis).collect();
    let mut m = DMatrix::<f64>::zeros(dim + 1, dim + 1);
    let mut b = DVector::<f64>::zeros(dim + 1);
    let one = FieldPair::constant(grid, 1.0, linkage_for(regime));
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = bilinear_a(grid, regime, &basis[i], &basis[j]).unwrap();
        }
        let mass = inner(grid, &basis[i], &one);
        m[(i, dim)] = mass;
        m[(dim, i)] = mass;
        b[i] = inner(grid, rhs, &basis[i]);
    }
    let x = m.lu().solve(&b).expect("bordered system is nonsingular");
    let bulk = x.rows(0, n).iter().copied().collect();
    if linked {
        FieldPair::trace_linked(grid, bulk).unwrap()
    } else {
        FieldPair::independent(grid, bulk, x.rows(n, ns).iter().copied().collect()).unwrap()
    }
}

fn dense(dim: usize, triplets: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; dim]; dim];
    for &(r, c, v) in triplets {
        m[r][c] += v;
    }
    m
}

/// Analytic Jacobian against central differences at a random state near
/// φ = 0.2. Returns (row block, max abs error, max abs entry) per block.
pub fn jacobian_block_errors(grid: &SlabGrid, p: &ModelParams, scheme: Scheme, seed: u64) -> Vec<(&'static str, f64, f64)> {
    let (n, ns) = (grid.n_bulk(), grid.n_surf());
    let cfg = StepConfig::new(1e-2, scheme).unwrap();
    let st = Stepper::new(grid, p, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old_bulk: Vec<f64> = (0..n).map(|_| 0.2 + rng.random_range(-0.3..0.3)).collect();
    let old = SimState {
        t: 0.0,
        step: 0,
        phi: FieldPair::trace_linked(grid, old_bulk.clone()).unwrap(),
        mu: FieldPair::constant(grid, 0.0, Linkage::Independent),
    };
    let x = Unknowns {
        phi: old_bulk.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect(),
        mu: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        theta: (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let dim = st.dim();
    let jac = dense(dim, &st.jacobian_triplets(&old, &x).unwrap());
    let base = x.to_vec();
    let h = 1e-6;
    let mut fd = vec![vec![0.0; dim]; dim];
    for c in 0..dim {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[c] += h;
        minus[c] -= h;
        let rp = st.residual(&old, &Unknowns::from_slice(grid, &plus)).unwrap();
        let rm = st.residual(&old, &Unknowns::from_slice(grid, &minus)).unwrap();
        for r in 0..dim {
            fd[r][c] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    // Row blocks: bulk mass / chemical potential on interior and boundary
    // rows, then the coupling rows.
    let blocks: [(&str, Box<dyn Fn(usize) -> bool>); 5] = [
        ("interior mass", Box::new(|r| r < n && grid.surface_of(r).is_none())),
        ("boundary mass", Box::new(|r| r < n && grid.surface_of(r).is_some())),
        ("interior potential", Box::new(|r| r >= n && r < 2 * n && grid.surface_of(r - n).is_none())),
        ("boundary potential", Box::new(|r| r >= n && r < 2 * n && grid.surface_of(r - n).is_some())),
        ("coupling", Box::new(|r| r >= 2 * n)),
    ];
    blocks
        .iter()
        .map(|(name, in_block)| {
            let (mut err, mut scale) = (0.0_f64, 0.0_f64);
            for r in (0..dim).filter(|&r| in_block(r)) {
                for c in 0..dim {
                    err = err.max((jac[r][c] - fd[r][c]).abs());
                    scale = scale.max(jac[r][c].abs());
                }
            }
            (*name, err, scale)
        })
        .collect()
}
