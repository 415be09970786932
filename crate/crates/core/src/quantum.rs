//! One-kick quantum map for the Wigner function.
//!
//! The kick `exp(-i K cos(q) / hbar)` acts on the chord (p -> mu) transform
//! of each q-column as multiplication by `exp(i 2K sin(q) sin(mu/2) / hbar)`.
//! Its classical limit is the momentum translation `p -> p + K sin(q)`.
//! Expanding the phase with the Jacobi-Anger identity gives the equivalent
//! Bessel sum `W'(q, p) = sum_m J_m(2K sin(q) / hbar) W(q, p - m hbar / 2)`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{
    diffuse, mass, rotate, wrap_mass, DiffusionParams, PhaseSpaceField, SystemParams, BOUNDARY_LIMIT,
};
use crate::spectral::{self, wavenumber};

/// Diagnostics attached to every engine step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub boundary_mass: f64,
    pub min_value: f64,
    pub mass_error: f64,
}

/// Steps whose mass drifts by more than this fail.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Which implementation of the unitary kick to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KickPath {
    /// Spectral multiplication along each column; always available.
    #[default]
    Chord,
    /// Bessel-weighted sum of exact lattice translations; needs `hbar / 2` to
    /// be an integer number of momentum cells.
    Bessel,
}

/// Exact unitary kick `exp(-i K cos(q) / hbar)` through the chord transform.
pub fn quantum_kick(field: &PhaseSpaceField, params: &SystemParams) -> Result<PhaseSpaceField> {
    quantum_kick_with(field, params, KickPath::Chord)
}

pub fn quantum_kick_with(field: &PhaseSpaceField, params: &SystemParams, path: KickPath) -> Result<PhaseSpaceField> {
    let k = params.kick_strength();
    if k == 0.0 {
        return Ok(field.clone());
    }
    check_kick_nyquist(field, k)?;
    match path {
        KickPath::Chord => Ok(chord_kick(field, params)),
        KickPath::Bessel => bessel_kick(field, params),
    }
}

/// The chord phase `z sin(hbar k / 2)` has slope at most `K |sin q|` in k;
/// its step between neighbouring momentum modes must stay below pi.
pub(crate) fn check_kick_nyquist(field: &PhaseSpaceField, k: f64) -> Result<()> {
    let grid = field.grid();
    let dk = std::f64::consts::PI / grid.half_width();
    let max_force = (0..grid.n_points()).map(|i| grid.coord(i).sin().abs()).fold(0.0, f64::max);
    let per_sample = k * max_force * dk;
    if per_sample >= std::f64::consts::PI {
        return Err(Error::Resolution { per_sample });
    }
    Ok(())
}

fn chord_kick(field: &PhaseSpaceField, params: &SystemParams) -> PhaseSpaceField {
    let grid = *field.grid();
    let n = grid.n_points();
    let hw = grid.half_width();
    let hbar = params.hbar_eff();
    let k = params.kick_strength();
    let half_chords: Vec<f64> = (0..n).map(|j| (0.5 * hbar * wavenumber(j, n, hw)).sin()).collect();
    let mut out = field.clone();
    spectral::filter_cols(out.values_mut(), n, |iq, s| {
        let z = 2.0 * k * grid.coord(iq).sin() / hbar;
        for (c, h) in s.iter_mut().zip(half_chords.iter()) {
            *c *= Complex64::from_polar(1.0, -z * h);
        }
    });
    out
}

/// Cells per momentum quantum `hbar / 2`, if that is an integer.
pub fn bessel_cells(field: &PhaseSpaceField, params: &SystemParams) -> Result<usize> {
    let ratio = 0.5 * params.hbar_eff() / field.grid().spacing();
    let cells = ratio.round();
    if cells < 1.0 || (ratio - cells).abs() > 1e-9 * ratio {
        return Err(Error::BesselPathDisabled { ratio });
    }
    Ok(cells as usize)
}

fn bessel_kick(field: &PhaseSpaceField, params: &SystemParams) -> Result<PhaseSpaceField> {
    let cells = bessel_cells(field, params)?;
    let grid = *field.grid();
    let n = grid.n_points();
    let hbar = params.hbar_eff();
    let k = params.kick_strength();
    let mut out = field.clone();
    spectral::map_cols(out.values_mut(), n, |iq, src, dst| {
        let z = 2.0 * k * grid.coord(iq).sin() / hbar;
        let (orders, coeffs) = bessel_orders(z);
        dst.iter_mut().for_each(|v| *v = 0.0);
        for (m, c) in orders.zip(coeffs.iter()) {
            if c.abs() < 1e-18 {
                continue;
            }
            let offset = (m * cells as i64).rem_euclid(n as i64) as usize;
            for (ip, d) in dst.iter_mut().enumerate() {
                *d += c * src[(ip + n - offset) % n];
            }
        }
    });
    Ok(out)
}

/// Integer-order Bessel functions `J_m(z)` for every order that matters,
/// read off the Fourier series `exp(i z sin(phi)) = sum_m J_m(z) exp(i m phi)`.
///
/// Returns the order range together with the coefficients in matching order.
pub fn bessel_orders(z: f64) -> (std::ops::RangeInclusive<i64>, Vec<f64>) {
    let za = z.abs();
    let m_max = (za + 20.0 + 10.0 * za.cbrt()).ceil() as i64;
    let samples = (4 * m_max as usize + 64).next_power_of_two();
    let plan = spectral::plan(samples);
    let mut buf: Vec<Complex64> = (0..samples)
        .map(|j| {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / samples as f64;
            Complex64::from_polar(1.0, z * phi.sin())
        })
        .collect();
    plan.fft(&mut buf);
    let scale = 1.0 / samples as f64;
    let coeffs = (-m_max..=m_max).map(|m| buf[m.rem_euclid(samples as i64) as usize].re * scale).collect();
    (-m_max..=m_max, coeffs)
}

/// `J_m(z)` for a single integer order.
pub fn bessel_j(m: i64, z: f64) -> f64 {
    let (orders, coeffs) = bessel_orders(z);
    if !orders.contains(&m) {
        return 0.0;
    }
    coeffs[(m - orders.start()) as usize]
}

/// One period of the open-system map: kick, diffuse, rotate.
pub fn step_quantum(
    field: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
) -> Result<(PhaseSpaceField, StepReport)> {
    step_with(field, params, d, |f| quantum_kick(f, params))
}

pub(crate) fn step_with(
    field: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
    kick: impl Fn(&PhaseSpaceField) -> Result<PhaseSpaceField>,
) -> Result<(PhaseSpaceField, StepReport)> {
    let k = params.kick_strength();
    let wrap = wrap_mass(field, |q| k * q.sin());
    if wrap >= BOUNDARY_LIMIT {
        return Err(Error::BoundaryMass { fraction: wrap, limit: BOUNDARY_LIMIT });
    }
    let kicked = kick(field)?;
    let smoothed = diffuse(&kicked, d);
    let next = rotate(&smoothed, params.theta())?;
    let report = StepReport {
        boundary_mass: next.boundary_mass(),
        min_value: next.min_value(),
        mass_error: (mass(&next) - mass(field)).abs(),
    };
    if !(report.mass_error < MASS_TOLERANCE) {
        return Err(Error::MassDrift { mass_error: report.mass_error });
    }
    Ok((next, report))
}

/// Iterates [`step_quantum`]; `observer(n, state)` sees the state immediately
/// before kick `n` for every `n` in `0..=n_kicks`.
pub fn evolve_quantum(
    initial: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
    n_kicks: usize,
    observer: impl FnMut(usize, &PhaseSpaceField),
) -> Result<PhaseSpaceField> {
    evolve_with(initial, n_kicks, observer, |f| step_quantum(f, params, d))
}

pub(crate) fn evolve_with(
    initial: &PhaseSpaceField,
    n_kicks: usize,
    mut observer: impl FnMut(usize, &PhaseSpaceField),
    step: impl Fn(&PhaseSpaceField) -> Result<(PhaseSpaceField, StepReport)>,
) -> Result<PhaseSpaceField> {
    let mut state = initial.clone();
    observer(0, &state);
    for kick in 0..n_kicks {
        let (next, _) = step(&state).map_err(|e| Error::AtKick { kick, source: Box::new(e) })?;
        state = next;
        observer(kick + 1, &state);
    }
    Ok(state)
}
