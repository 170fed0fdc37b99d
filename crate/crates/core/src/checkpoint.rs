//! Binary checkpoints.
//!
//! Layout, all little-endian: the 8-byte magic `CHDBCKPT`, a u32 version,
//! then `nx: u64`, `ny: u64`, `lx: f64`, the φ and μ linkage bytes
//! (0 trace-linked, 1 independent, 255 absent), the stationary flag byte,
//! 8 bytes of parameter hash, `mu_infty: f64`, `t: f64`, `step: u64`, a u32
//! count of total words followed by those words, and finally the pairs
//! (φ, then μ when present), each as its bulk array in row-major order
//! followed by its surface array.

use std::fs;
use std::path::Path;

use crate::diagnostics::RunTotals;
use crate::error::{Error, Result};
use crate::fields::{FieldPair, Linkage};
use crate::grid::SlabGrid;
use crate::stepper::SimState;

const MAGIC: &[u8; 8] = b"CHDBCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub params_hash: [u8; 8],
    pub stationary: bool,
    /// Multiplier of a steady state; NaN for trajectory checkpoints.
    pub mu_infty: f64,
    pub t: f64,
    pub step: u64,
    pub totals: Option<RunTotals>,
    pub phi: FieldPair,
    pub mu: Option<FieldPair>,
}

impl Checkpoint {
    pub fn from_state(grid: &SlabGrid, params_hash: [u8; 8], state: &SimState, totals: &RunTotals) -> Self {
        Checkpoint {
            nx: grid.nx,
            ny: grid.ny,
            lx: grid.lx,
            params_hash,
            stationary: false,
            mu_infty: f64::NAN,
            t: state.t,
            step: state.step,
            totals: Some(*totals),
            phi: state.phi.clone(),
            mu: Some(state.mu.clone()),
        }
    }

    pub fn steady(grid: &SlabGrid, params_hash: [u8; 8], phi: &FieldPair, mu_infty: f64) -> Self {
        Checkpoint {
            nx: grid.nx,
            ny: grid.ny,
            lx: grid.lx,
            params_hash,
            stationary: true,
            mu_infty,
            t: 0.0,
            step: 0,
            totals: None,
            phi: phi.clone(),
            mu: None,
        }
    }

    pub fn grid(&self) -> Result<SlabGrid> {
        SlabGrid::new(self.lx, self.nx, self.ny)
    }

    /// The stored trajectory state; fails for steady-state checkpoints.
    pub fn state(&self) -> Result<(SimState, RunTotals)> {
        match (&self.mu, self.totals) {
            (Some(mu), Some(totals)) => Ok((
                SimState {
                    t: self.t,
                    step: self.step,
                    phi: self.phi.clone(),
                    mu: mu.clone(),
                },
                totals,
            )),
            _ => Err(Error::Io("checkpoint holds no trajectory state".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.nx as u64).to_le_bytes());
        b.extend_from_slice(&(self.ny as u64).to_le_bytes());
        b.extend_from_slice(&self.lx.to_le_bytes());
        b.push(linkage_byte(Some(&self.phi)));
        b.push(linkage_byte(self.mu.as_ref()));
        b.push(self.stationary as u8);
        b.extend_from_slice(&self.params_hash);
        b.extend_from_slice(&self.mu_infty.to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        b.extend_from_slice(&self.step.to_le_bytes());
        let words = self.totals.map(|t| t.to_words()).unwrap_or_default();
        b.extend_from_slice(&(words.len() as u32).to_le_bytes());
        for w in words {
            b.extend_from_slice(&w.to_le_bytes());
        }
        for pair in std::iter::once(&self.phi).chain(self.mu.as_ref()) {
            for v in pair.bulk.iter().chain(&pair.surf) {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Io("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Io(format!("unsupported checkpoint version {version}")));
        }
        let nx = r.u64()? as usize;
        let ny = r.u64()? as usize;
        let lx = r.f64()?;
        let phi_link = r.take(1)?[0];
        let mu_link = r.take(1)?[0];
        let stationary = match r.take(1)?[0] {
            0 => false,
            1 => true,
            v => return Err(Error::Io(format!("bad stationary flag {v}"))),
        };
        let mut params_hash = [0u8; 8];
        params_hash.copy_from_slice(r.take(8)?);
        let mu_infty = r.f64()?;
        let t = r.f64()?;
        let step = r.u64()?;
        let n_words = r.u32()? as usize;
        let words = (0..n_words).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let totals = if words.is_empty() {
            None
        } else {
            Some(RunTotals::from_words(&words)?)
        };
        let grid = SlabGrid::new(lx, nx, ny).map_err(|e| Error::Io(format!("checkpoint grid: {e}")))?;
        let phi = r
            .pair(&grid, phi_link)?
            .ok_or_else(|| Error::Io("checkpoint has no order parameter".into()))?;
        let mu = r.pair(&grid, mu_link)?;
        if r.pos != bytes.len() {
            return Err(Error::Io(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            nx,
            ny,
            lx,
            params_hash,
            stationary,
            mu_infty,
            t,
            step,
            totals,
            phi,
            mu,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn linkage_byte(p: Option<&FieldPair>) -> u8 {
    match p.map(|p| p.linkage) {
        Some(Linkage::TraceLinked) => 0,
        Some(Linkage::Independent) => 1,
        None => 255,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Io("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn pair(&mut self, grid: &SlabGrid, link: u8) -> Result<Option<FieldPair>> {
        let linkage = match link {
            0 => Linkage::TraceLinked,
            1 => Linkage::Independent,
            255 => return Ok(None),
            v => return Err(Error::Io(format!("bad linkage byte {v}"))),
        };
        let bulk = self.floats(grid.n_bulk())?;
        let surf = self.floats(grid.n_surf())?;
        let pair = FieldPair { bulk, surf, linkage };
        if linkage == Linkage::TraceLinked && !pair.is_trace(grid) {
            return Err(Error::Io("trace-linked pair in checkpoint is not a trace".into()));
        }
        Ok(Some(pair))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let grid = SlabGrid::new(2.0, 4, 3).unwrap();
        let phi = FieldPair::trace_linked(&grid, (0..12).map(|k| 0.01 * k as f64).collect()).unwrap();
        let mu = FieldPair::independent(&grid, vec![0.5; 12], vec![-0.25; 8]).unwrap();
        let state = SimState { t: 0.125, step: 9, phi, mu };
        let totals = RunTotals::new(1.0, 0.2, 0.7);
        let c = Checkpoint::from_state(&grid, [1, 2, 3, 4, 5, 6, 7, 8], &state, &totals);
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        assert_eq!(back.state().unwrap(), (state, totals));
        let bytes = c.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
