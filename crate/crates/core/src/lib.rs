//! Phase-space simulation of the kicked harmonic oscillator coupled to a
//! purely diffusive environment.
//!
//! The Wigner function and the classical Liouville density are evolved on
//! the same periodic grid with spectral operations, compared through Renyi-2
//! entropies, Wigner negativity and L1 distance, and swept over
//! `(eta, D)` to expose the scaling with `chi' = hbar^2 / D` and
//! `chi = hbar^2 K / 4 D^(3/2)`.
//!
//! Module map:
//! * [`phase_space`]: grids, fields, diffusion, rotation.
//! * [`quantum`] / [`classical`]: one-kick maps and their iteration.
//! * [`kernel_oracle`]: quadrature of the one-step propagators, used to
//!   validate the grid engines.
//! * [`observables`]: purity, entropy, Lyapunov rate, slope fits.
//! * [`sweep`]: experiment configs, paired runs, CSV and snapshot output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod error;
pub mod kernel_oracle;
pub mod observables;
pub mod phase_space;
pub mod quantum;
mod spectral;
pub mod sweep;

pub use error::{Error, Result};
pub use phase_space::{DiffusionParams, GridSpec, PhaseSpaceField, SystemParams};
