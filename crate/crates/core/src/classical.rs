//! One-kick Liouville map on the same grid as the Wigner engine: the
//! deterministic momentum shear `p -> p + K sin(q)`, then diffusion, then the
//! harmonic rotation.

use crate::error::Result;
use crate::phase_space::{shift_columns, DiffusionParams, PhaseSpaceField, SystemParams};
use crate::quantum::{evolve_with, step_with, StepReport};

/// Translates every q-column by `K sin(q)` in momentum.
pub fn classical_kick(field: &PhaseSpaceField, params: &SystemParams) -> Result<PhaseSpaceField> {
    let k = params.kick_strength();
    if k == 0.0 {
        return Ok(field.clone());
    }
    Ok(shift_columns(field, |q| k * q.sin()))
}

pub fn step_classical(
    field: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
) -> Result<(PhaseSpaceField, StepReport)> {
    step_with(field, params, d, |f| classical_kick(f, params))
}

/// Mirror of [`crate::quantum::evolve_quantum`] with the classical step.
pub fn evolve_classical(
    initial: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
    n_kicks: usize,
    observer: impl FnMut(usize, &PhaseSpaceField),
) -> Result<PhaseSpaceField> {
    evolve_with(initial, n_kicks, observer, |f| step_classical(f, params, d))
}

/// Point map of one noiseless period, used by trajectory cross-checks.
pub fn map_point(params: &SystemParams, q: f64, p: f64) -> (f64, f64) {
    let p = p + params.kick_strength() * q.sin();
    let (s, c) = params.theta().sin_cos();
    (q * c + p * s, -q * s + p * c)
}
