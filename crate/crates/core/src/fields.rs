//! Bulk–surface field pairs: generalized mean, zero-mean projection, free
//! energy and the discrete H⁻¹-type solve and norms.

use crate::error::{check_len, Error, Result};
use crate::grid::{form_parts, linked_stiffness, pair_stiffness, Regime, SlabGrid};
use crate::linalg::pcg;
use crate::potentials::{PotentialSpec, Regularization, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Linkage {
    /// Surface values are the trace of the bulk field.
    TraceLinked,
    Independent,
}

/// A bulk field of `nx * ny` nodes and a surface field of `2 * nx` nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub bulk: Vec<f64>,
    pub surf: Vec<f64>,
    pub linkage: Linkage,
}

impl FieldPair {
    pub fn trace_linked(grid: &SlabGrid, bulk: Vec<f64>) -> Result<Self> {
        check_len(grid.n_bulk(), bulk.len())?;
        Ok(FieldPair {
            surf: grid.trace(&bulk),
            bulk,
            linkage: Linkage::TraceLinked,
        })
    }

    pub fn independent(grid: &SlabGrid, bulk: Vec<f64>, surf: Vec<f64>) -> Result<Self> {
        check_len(grid.n_bulk(), bulk.len())?;
        check_len(grid.n_surf(), surf.len())?;
        Ok(FieldPair {
            bulk,
            surf,
            linkage: Linkage::Independent,
        })
    }

    pub fn constant(grid: &SlabGrid, c: f64, linkage: Linkage) -> Self {
        FieldPair {
            bulk: vec![c; grid.n_bulk()],
            surf: vec![c; grid.n_surf()],
            linkage,
        }
    }

    pub fn check_shape(&self, grid: &SlabGrid) -> Result<()> {
        check_len(grid.n_bulk(), self.bulk.len())?;
        check_len(grid.n_surf(), self.surf.len())
    }

    /// Whether the surface values coincide with the boundary rows.
    pub fn is_trace(&self, grid: &SlabGrid) -> bool {
        (0..grid.n_surf()).all(|s| self.surf[s] == self.bulk[grid.trace_node(s)])
    }

    pub fn max_abs(&self) -> f64 {
        self.bulk
            .iter()
            .chain(self.surf.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.bulk
            .iter()
            .chain(self.surf.iter())
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// `self - other`, keeping the linkage when both agree.
    pub fn sub(&self, other: &FieldPair) -> FieldPair {
        FieldPair {
            bulk: self.bulk.iter().zip(&other.bulk).map(|(a, b)| a - b).collect(),
            surf: self.surf.iter().zip(&other.surf).map(|(a, b)| a - b).collect(),
            linkage: if self.linkage == other.linkage {
                self.linkage
            } else {
                Linkage::Independent
            },
        }
    }

    pub fn scale(&self, a: f64) -> FieldPair {
        FieldPair {
            bulk: self.bulk.iter().map(|v| a * v).collect(),
            surf: self.surf.iter().map(|v| a * v).collect(),
            linkage: self.linkage,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanInfo {
    pub bulk_mean: f64,
    pub surface_mean: f64,
    pub mean: f64,
}

/// Weighted L² pairing `Σ w u v + Σ hx u_s v_s`.
pub fn inner(grid: &SlabGrid, u: &FieldPair, v: &FieldPair) -> f64 {
    let b: f64 = grid
        .weights()
        .iter()
        .zip(u.bulk.iter().zip(&v.bulk))
        .map(|(w, (a, b))| w * a * b)
        .sum();
    let s: f64 = u.surf.iter().zip(&v.surf).map(|(a, b)| a * b).sum();
    b + grid.hx * s
}

pub fn mean_info(grid: &SlabGrid, pair: &FieldPair) -> Result<MeanInfo> {
    pair.check_shape(grid)?;
    let ib: f64 = grid.weights().iter().zip(&pair.bulk).map(|(w, v)| w * v).sum();
    let is = grid.hx * pair.surf.iter().sum::<f64>();
    Ok(MeanInfo {
        bulk_mean: ib / grid.omega(),
        surface_mean: is / grid.gamma(),
        mean: (ib + is) / (grid.omega() + grid.gamma()),
    })
}

/// `(|Ω|⟨y⟩_Ω + |Γ|⟨y_Γ⟩_Γ) / (|Ω| + |Γ|)`.
pub fn generalized_mean(grid: &SlabGrid, pair: &FieldPair) -> Result<f64> {
    Ok(mean_info(grid, pair)?.mean)
}

/// `y - m̄(y)` applied to both components.
pub fn project_zero_mean(grid: &SlabGrid, pair: &FieldPair) -> Result<FieldPair> {
    let m = generalized_mean(grid, pair)?;
    Ok(FieldPair {
        bulk: pair.bulk.iter().map(|v| v - m).collect(),
        surf: pair.surf.iter().map(|v| v - m).collect(),
        linkage: pair.linkage,
    })
}

/// Total free energy of a trace-linked pair with the exact potentials.
pub fn total_energy(grid: &SlabGrid, spec: &PotentialSpec, phi: &FieldPair) -> Result<f64> {
    total_energy_with(grid, spec, &Regularization::Exact, phi)
}

/// Total free energy with either exact or regularized convex parts.
pub fn total_energy_with(
    grid: &SlabGrid,
    spec: &PotentialSpec,
    reg: &Regularization,
    phi: &FieldPair,
) -> Result<f64> {
    phi.check_shape(grid)?;
    if !phi.is_trace(grid) {
        return Err(Error::Regime("energy needs a trace-linked pair".into()));
    }
    let (gb, gs, _) = form_parts(grid, phi, phi);
    let mut e = 0.5 * (gb + gs);
    for (w, &r) in grid.weights().iter().zip(&phi.bulk) {
        e += w * spec.density(Side::Bulk, reg, r)?;
    }
    for &r in &phi.surf {
        e += grid.hx * spec.density(Side::Boundary, reg, r)?;
    }
    Ok(e)
}

pub(crate) const LINEAR_TOL: f64 = 1e-11;

/// Mass tolerance for right-hand sides of the elliptic solve.
fn mean_tolerance(pair: &FieldPair) -> f64 {
    1e-12 * pair.max_abs().max(1.0)
}

/// Solution operator of the elliptic problem: `(u, u_Γ)` with zero
/// generalized mean and `a_{L,σ}(u, ζ) = (rhs, ζ)` for all test pairs.
///
/// For L > 0 the result is an independent pair; for L = 0 the surface
/// unknown is the trace and the result is trace-linked.
pub fn hminus_solve(grid: &SlabGrid, regime: Regime, rhs: &FieldPair) -> Result<FieldPair> {
    rhs.check_shape(grid)?;
    let m = generalized_mean(grid, rhs)?;
    if m.abs() > mean_tolerance(rhs) {
        return Err(Error::Mean(m));
    }
    let (n, ns) = (grid.n_bulk(), grid.n_surf());
    let hx = grid.hx;
    let total = grid.omega() + grid.gamma();

    if regime.trace_linked() {
        // Unknown: bulk array; mass vector M = w + Tᵀ hx.
        let mut mass = grid.weights().to_vec();
        let mut b: Vec<f64> = grid.weights().iter().zip(&rhs.bulk).map(|(w, v)| w * v).collect();
        for s in 0..ns {
            let k = grid.trace_node(s);
            mass[k] += hx;
            b[k] += hx * rhs.surf[s];
        }
        let bsum: f64 = b.iter().sum();
        for (bk, mk) in b.iter_mut().zip(&mass) {
            *bk -= bsum / total * mk;
        }
        let mut diag = vec![0.0; n];
        grid.for_each_bulk_edge(|a, c, coef| {
            diag[a] += coef;
            diag[c] += coef;
        });
        for s in 0..ns {
            diag[grid.trace_node(s)] += regime.sigma * 2.0 / hx;
        }
        let project = |x: &mut [f64]| {
            let mx: f64 = x.iter().zip(&mass).map(|(a, b)| a * b).sum::<f64>() / total;
            for v in x.iter_mut() {
                *v -= mx;
            }
        };
        let u = pcg(
            |x| linked_stiffness(grid, regime.sigma, x),
            &b,
            &diag,
            project,
            LINEAR_TOL,
            20 * n,
        )?;
        return FieldPair::trace_linked(grid, u);
    }

    // Independent pair stacked as [bulk; surf].
    let mut b = Vec::with_capacity(n + ns);
    let mut mass = Vec::with_capacity(n + ns);
    for (w, v) in grid.weights().iter().zip(&rhs.bulk) {
        b.push(w * v);
        mass.push(*w);
    }
    for v in &rhs.surf {
        b.push(hx * v);
        mass.push(hx);
    }
    let bsum: f64 = b.iter().sum();
    for (bk, mk) in b.iter_mut().zip(&mass) {
        *bk -= bsum / total * mk;
    }
    let chi = regime.chi();
    let mut diag = vec![0.0; n + ns];
    grid.for_each_bulk_edge(|a, c, coef| {
        diag[a] += coef;
        diag[c] += coef;
    });
    for s in 0..ns {
        diag[grid.trace_node(s)] += chi * hx;
        diag[n + s] = regime.sigma * 2.0 / hx + chi * hx;
    }
    let project = |x: &mut [f64]| {
        let mx: f64 = x.iter().zip(&mass).map(|(a, b)| a * b).sum::<f64>() / total;
        for v in x.iter_mut() {
            *v -= mx;
        }
    };
    let apply = |x: &[f64]| {
        let (ob, os) = pair_stiffness(grid, regime, &x[..n], &x[n..]);
        let mut out = ob;
        out.extend(os);
        out
    };
    let u = pcg(apply, &b, &diag, project, LINEAR_TOL, 20 * (n + ns))?;
    FieldPair::independent(grid, u[..n].to_vec(), u[n..].to_vec())
}

/// `a(𝔖y, 𝔖y)` for a zero-mean `y`, computed as the pairing `(y, 𝔖y)`.
pub fn hminus_norm_zero_mean(grid: &SlabGrid, regime: Regime, y: &FieldPair) -> Result<f64> {
    let u = hminus_solve(grid, regime, y)?;
    Ok(inner(grid, y, &u).max(0.0).sqrt())
}

/// Full norm `sqrt(a(𝔖Py, 𝔖Py) + m̄(y)²)`.
pub fn hminus_norm(grid: &SlabGrid, regime: Regime, y: &FieldPair) -> Result<f64> {
    let m = generalized_mean(grid, y)?;
    let py = project_zero_mean(grid, y)?;
    let u = hminus_solve(grid, regime, &py)?;
    let (b, s, j) = form_parts(grid, &u, &u);
    let a = b + regime.sigma * s + regime.chi() * j;
    Ok((a + m * m).sqrt())
}
