//! Cahn–Hilliard dynamics with dynamic boundary conditions and singular
//! potentials on a periodic slab.
//!
//! The bulk order parameter φ and its boundary trace ψ evolve by mass-conserving
//! gradient flows coupled through the chemical potentials μ (bulk) and θ
//! (boundary), with kinetic rate 1/L and surface diffusion σ.

pub mod app;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod init;
pub(crate) mod linalg;
pub mod par;
pub mod potentials;
pub mod stationary;
pub mod stepper;
pub mod trajectory;

pub use error::{Error, Result};
