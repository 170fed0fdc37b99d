//! Periodic slab (0, Lx) x (0, 1) with boundary rows y = 0 and y = 1.
//!
//! Nodes are stored row-major, `k = j * nx + i`, with `i` periodic in x and
//! `j = 0..ny` including both boundary rows. Surface nodes are numbered
//! `s = side * nx + i` with side 0 at y = 0 and side 1 at y = 1.
//!
//! All operators come from one edge-based discrete energy, so summation by
//! parts holds to roundoff and constants are annihilated exactly.

use crate::error::{check_len, Error, Result};
use crate::fields::FieldPair;

#[derive(Clone, Debug, PartialEq)]
pub struct SlabGrid {
    pub lx: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    weights: Vec<f64>,
    omega: f64,
    gamma: f64,
}

/// Kinetic coupling and surface diffusion: the pair (L, σ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regime {
    pub l: f64,
    pub sigma: f64,
}

impl Regime {
    pub fn new(l: f64, sigma: f64) -> Result<Self> {
        let r = Regime { l, sigma };
        r.validate()?;
        Ok(r)
    }

    /// Admissible pairs: L > 0 with σ > 0, or L = 0 with σ ≥ 0.
    pub fn validate(&self) -> Result<()> {
        if !(self.l >= 0.0 && self.l.is_finite()) || !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Regime(format!(
                "L and sigma must be finite and nonnegative (L={}, sigma={})",
                self.l, self.sigma
            )));
        }
        if self.l > 0.0 && self.sigma == 0.0 {
            return Err(Error::Regime(format!(
                "L={} > 0 requires sigma > 0; admissible pairs are L>0 with sigma>0, or L=0 with sigma>=0",
                self.l
            )));
        }
        Ok(())
    }

    /// Jump coefficient: 1/L for L > 0, zero for L = 0.
    pub fn chi(&self) -> f64 {
        if self.l > 0.0 {
            1.0 / self.l
        } else {
            0.0
        }
    }

    /// L = 0 forces the surface chemical potential to equal the trace.
    pub fn trace_linked(&self) -> bool {
        self.l == 0.0
    }
}

pub fn build_grid(lx: f64, nx: usize, ny: usize) -> Result<SlabGrid> {
    SlabGrid::new(lx, nx, ny)
}

impl SlabGrid {
    pub fn new(lx: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && lx.is_finite()) {
            return Err(Error::Config(format!("Lx must be positive, got {lx}")));
        }
        if nx < 4 || !nx.is_multiple_of(2) {
            return Err(Error::Config(format!("Nx must be even and at least 4, got {nx}")));
        }
        if ny < 3 {
            return Err(Error::Config(format!("Ny must be at least 3, got {ny}")));
        }
        let hx = lx / nx as f64;
        let hy = 1.0 / (ny - 1) as f64;
        let mut weights = vec![hx * hy; nx * ny];
        for i in 0..nx {
            weights[i] *= 0.5;
            weights[(ny - 1) * nx + i] *= 0.5;
        }
        let omega = weights.iter().sum();
        let gamma = 2.0 * nx as f64 * hx;
        Ok(SlabGrid {
            lx,
            nx,
            ny,
            hx,
            hy,
            weights,
            omega,
            gamma,
        })
    }

    pub fn n_bulk(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_surf(&self) -> usize {
        2 * self.nx
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Bulk node underlying surface node `s`.
    pub fn trace_node(&self, s: usize) -> usize {
        let (side, i) = (s / self.nx, s % self.nx);
        if side == 0 {
            i
        } else {
            (self.ny - 1) * self.nx + i
        }
    }

    /// Surface node above bulk node `k`, if `k` lies on a boundary row.
    pub fn surface_of(&self, k: usize) -> Option<usize> {
        let (i, j) = (k % self.nx, k / self.nx);
        if j == 0 {
            Some(i)
        } else if j == self.ny - 1 {
            Some(self.nx + i)
        } else {
            None
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn surf_weight(&self) -> f64 {
        self.hx
    }

    /// |Ω| as the sum of quadrature weights.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// |Γ| as the sum of surface weights.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Node coordinates.
    pub fn xy(&self, k: usize) -> (f64, f64) {
        ((k % self.nx) as f64 * self.hx, (k / self.nx) as f64 * self.hy)
    }

    /// Trace of a bulk field on the two boundary rows.
    pub fn trace(&self, bulk: &[f64]) -> Vec<f64> {
        (0..self.n_surf()).map(|s| bulk[self.trace_node(s)]).collect()
    }

    /// Visit every bulk edge once as `(a, b, coefficient)`. The bulk
    /// Dirichlet energy is `Σ coef (u_a - u_b)^2`.
    pub fn for_each_bulk_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        let (nx, ny) = (self.nx, self.ny);
        let cx = self.hy / self.hx;
        let cy = self.hx / self.hy;
        for j in 0..ny {
            let c = if j == 0 || j == ny - 1 { 0.5 * cx } else { cx };
            for i in 0..nx {
                f(j * nx + i, j * nx + (i + 1) % nx, c);
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                f(j * nx + i, (j + 1) * nx + i, cy);
            }
        }
    }

    /// Visit every surface edge as `(s, t, coefficient)`.
    pub fn for_each_surface_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        let c = 1.0 / self.hx;
        for side in 0..2 {
            for i in 0..self.nx {
                f(side * self.nx + i, side * self.nx + (i + 1) % self.nx, c);
            }
        }
    }

    /// Bulk stiffness action `K_b u`.
    pub fn stiffness_bulk(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.for_each_bulk_edge(|a, b, c| {
            let f = c * (u[a] - u[b]);
            out[a] += f;
            out[b] -= f;
        });
        out
    }

    /// Surface stiffness action `K_s u = -hx Δ_Γ u`.
    pub fn stiffness_surf(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.for_each_surface_edge(|a, b, c| {
            let f = c * (u[a] - u[b]);
            out[a] += f;
            out[b] -= f;
        });
        out
    }

    /// `(∂_n u)` at a surface node using the second-order one-sided stencil,
    /// outward normal.
    fn normal_at(&self, u: &[f64], s: usize) -> f64 {
        let (side, i) = (s / self.nx, s % self.nx);
        let nx = self.nx;
        let (k0, k1, k2) = if side == 0 {
            (i, nx + i, 2 * nx + i)
        } else {
            let j = self.ny - 1;
            (j * nx + i, (j - 1) * nx + i, (j - 2) * nx + i)
        };
        // Difference form so constants cancel exactly.
        (3.0 * (u[k0] - u[k1]) - (u[k1] - u[k2])) / (2.0 * self.hy)
    }

    /// Normal-derivative stencil weights as `[(node, coefficient); 3]`.
    pub fn normal_stencil(&self, s: usize) -> [(usize, f64); 3] {
        let (side, i) = (s / self.nx, s % self.nx);
        let nx = self.nx;
        let h = 2.0 * self.hy;
        if side == 0 {
            [(i, 3.0 / h), (nx + i, -4.0 / h), (2 * nx + i, 1.0 / h)]
        } else {
            let j = self.ny - 1;
            [
                (j * nx + i, 3.0 / h),
                ((j - 1) * nx + i, -4.0 / h),
                ((j - 2) * nx + i, 1.0 / h),
            ]
        }
    }
}

pub fn integrate_bulk(grid: &SlabGrid, field: &[f64]) -> Result<f64> {
    check_len(grid.n_bulk(), field.len())?;
    Ok(field.iter().zip(grid.weights()).map(|(f, w)| f * w).sum())
}

pub fn integrate_surface(grid: &SlabGrid, field: &[f64]) -> Result<f64> {
    check_len(grid.n_surf(), field.len())?;
    Ok(grid.hx * field.iter().sum::<f64>())
}

pub fn normal_derivative(grid: &SlabGrid, field: &[f64]) -> Result<Vec<f64>> {
    check_len(grid.n_bulk(), field.len())?;
    Ok((0..grid.n_surf()).map(|s| grid.normal_at(field, s)).collect())
}

/// Discrete bulk Laplacian. Interior rows give the 5-point stencil; boundary
/// rows are closed with the normal derivative so that
/// `Σ w (-Δ_h u) v = uᵀ K_b v - Σ hx (∂_n u) v` holds exactly.
pub fn lap_bulk(grid: &SlabGrid, field: &[f64]) -> Result<Vec<f64>> {
    check_len(grid.n_bulk(), field.len())?;
    let mut out = grid.stiffness_bulk(field);
    for (k, o) in out.iter_mut().enumerate() {
        *o = -*o;
        if let Some(s) = grid.surface_of(k) {
            *o += grid.hx * grid.normal_at(field, s);
        }
        *o /= grid.weights[k];
    }
    Ok(out)
}

/// Periodic second difference along each boundary curve.
pub fn lap_surface(grid: &SlabGrid, field: &[f64]) -> Result<Vec<f64>> {
    check_len(grid.n_surf(), field.len())?;
    let mut out = grid.stiffness_surf(field);
    for o in out.iter_mut() {
        *o = -*o / grid.hx;
    }
    Ok(out)
}

fn require_trace(grid: &SlabGrid, p: &FieldPair) -> Result<()> {
    let linked = (0..grid.n_surf()).all(|s| p.surf[s] == p.bulk[grid.trace_node(s)]);
    if linked {
        Ok(())
    } else {
        Err(Error::Regime(
            "L = 0 requires trace-linked pairs (surface values equal to the boundary rows)".into(),
        ))
    }
}

/// `Σ_k hx (u_b - u_s)(v_b - v_s)` over surface nodes.
fn jump_product(grid: &SlabGrid, u: &FieldPair, v: &FieldPair) -> f64 {
    (0..grid.n_surf())
        .map(|s| {
            let k = grid.trace_node(s);
            grid.hx * (u.bulk[k] - u.surf[s]) * (v.bulk[k] - v.surf[s])
        })
        .sum()
}

/// The three pieces of the bilinear form: bulk gradients, surface gradients
/// (without σ) and the jump (without χ).
pub(crate) fn form_parts(grid: &SlabGrid, u: &FieldPair, v: &FieldPair) -> (f64, f64, f64) {
    let mut bulk = 0.0;
    grid.for_each_bulk_edge(|a, b, c| bulk += c * (u.bulk[a] - u.bulk[b]) * (v.bulk[a] - v.bulk[b]));
    let mut surf = 0.0;
    grid.for_each_surface_edge(|a, b, c| surf += c * (u.surf[a] - u.surf[b]) * (v.surf[a] - v.surf[b]));
    (bulk, surf, jump_product(grid, u, v))
}

/// Discrete `a_{L,σ}(u, v)`. For L = 0 both pairs must be trace-linked.
pub fn bilinear_a(grid: &SlabGrid, regime: Regime, u: &FieldPair, v: &FieldPair) -> Result<f64> {
    u.check_shape(grid)?;
    v.check_shape(grid)?;
    if regime.trace_linked() {
        require_trace(grid, u)?;
        require_trace(grid, v)?;
    }
    let (b, s, j) = form_parts(grid, u, v);
    Ok(b + regime.sigma * s + regime.chi() * j)
}

/// Matrix-free action of the pair stiffness for an independent pair:
/// bulk rows `K_b u + χ hx (u_b - u_s)`, surface rows `σ K_s u_s + χ hx (u_s - u_b)`.
pub(crate) fn pair_stiffness(grid: &SlabGrid, regime: Regime, bulk: &[f64], surf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ob = grid.stiffness_bulk(bulk);
    let mut os = grid.stiffness_surf(surf);
    for v in os.iter_mut() {
        *v *= regime.sigma;
    }
    let chi = regime.chi();
    if chi != 0.0 {
        for s in 0..grid.n_surf() {
            let k = grid.trace_node(s);
            let f = chi * grid.hx * (bulk[k] - surf[s]);
            ob[k] += f;
            os[s] -= f;
        }
    }
    (ob, os)
}

/// Trace-linked stiffness `K_b u + σ Tᵀ K_s T u` acting on the bulk array.
pub(crate) fn linked_stiffness(grid: &SlabGrid, sigma: f64, bulk: &[f64]) -> Vec<f64> {
    let mut out = grid.stiffness_bulk(bulk);
    if sigma != 0.0 {
        let ks = grid.stiffness_surf(&grid.trace(bulk));
        for (s, v) in ks.iter().enumerate() {
            out[grid.trace_node(s)] += sigma * v;
        }
    }
    out
}
