//! Direct quadrature of the one-kick propagators. These are slow reference
//! implementations used to validate the grid engines.
//!
//! A field is mapped by `W'(x) = integral dx' L(R^-1 x, x') W(x')`, where the
//! propagator
//!
//! ```text
//! L(x^R, x') = G(q^R - q') integral dmu / (2 pi hbar) exp(-D mu^2 / hbar^2)
//!              exp(i [V(q' - mu/2) - V(q' + mu/2) - mu (p^R - p')] / hbar)
//! ```
//!
//! combines one kick of `V = K cos q` with one period of diffusion. Here `G` is
//! the heat kernel `exp(-u^2 / 4D) / sqrt(4 pi D)`. For this potential the
//! bracket equals `2K sin(q') sin(mu/2)`. Keeping only its linear term gives the
//! classical Gaussian kernel. Keeping the cubic term to first order gives
//! `L_cl [1 - chi sin(q') f(y)]` with `f(y) = (y - 2y^3/3) / 4` and
//! `y = (p^R - p' - K sin q') / 2 sqrt(D)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussHermite;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::composite_params;
use crate::phase_space::{mass, DiffusionParams, PhaseSpaceField, SystemParams};
use crate::spectral::wavenumber;

/// Largest grid accepted by [`apply_kernel_step`].
pub const ORACLE_MAX_POINTS: usize = 256;
/// Allowed mass error of an oracle step.
pub const ORACLE_MASS_TOLERANCE: f64 = 1e-4;
/// Imaginary part of the momentum integral, relative to its peak value,
/// above which evaluation fails.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// A propagator argument: the pre-rotated target `x^R` and the source `x'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEvalPoint {
    pub rotated: (f64, f64),
    pub source: (f64, f64),
}

impl KernelEvalPoint {
    pub fn new(rotated: (f64, f64), source: (f64, f64)) -> Result<Self> {
        if ![rotated.0, rotated.1, source.0, source.1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter { name: "point", reason: "coordinates must be finite".into() });
        }
        Ok(Self { rotated, source })
    }

    /// The point whose scaled offsets from the classical peak are `(x, y)`.
    pub fn from_scaled(source: (f64, f64), x: f64, y: f64, params: &SystemParams, d: &DiffusionParams) -> Result<Self> {
        let w = 2.0 * d.d_const().sqrt();
        let q = source.0 + w * x;
        let p = source.1 + params.kick_strength() * source.0.sin() + w * y;
        Self::new((q, p), source)
    }

    /// `(x, y)`: offsets from the classical peak in units of `2 sqrt(D)`.
    pub fn scaled(&self, params: &SystemParams, d: &DiffusionParams) -> (f64, f64) {
        let w = 2.0 * d.d_const().sqrt();
        let x = (self.rotated.0 - self.source.0) / w;
        let y = (self.rotated.1 - self.source.1 - params.kick_strength() * self.source.0.sin()) / w;
        (x, y)
    }
}

/// How the momentum integral of the quantum kernel is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Quadrature {
    /// Uniform trapezoid over `+-half_range_sigmas` standard deviations of
    /// the Gaussian weight.
    Trapezoid { half_range_sigmas: f64, samples: usize },
    /// Gauss-Hermite rule against the Gaussian weight.
    GaussHermite { degree: usize },
    /// Gauss-Hermite when the phase changes by less than [`AUTO_PHASE_STEP`]
    /// between its central nodes, the default trapezoid otherwise.
    Auto,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Trapezoid { half_range_sigmas: 6.0, samples: 4096 }
    }
}

/// Gauss-Hermite degree used by [`Quadrature::Auto`].
pub const AUTO_DEGREE: usize = 96;
/// Largest phase step between central Gauss-Hermite nodes that
/// [`Quadrature::Auto`] accepts.
pub const AUTO_PHASE_STEP: f64 = PI / 4.0;

/// Which propagator [`apply_kernel_step`] integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Classical,
    Quantum,
    Approx,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(KernelKind::Classical),
            "quantum" => Ok(KernelKind::Quantum),
            "approx" => Ok(KernelKind::Approx),
            other => Err(Error::InvalidParameter { name: "kernel", reason: format!("unknown kernel '{other}'") }),
        }
    }
}

/// Variance `hbar^2 / 2D` of the Gaussian weight on the chord variable, which
/// equals `chi' / 2`.
pub fn mu_gaussian_variance(params: &SystemParams, d: &DiffusionParams) -> Result<f64> {
    let dc = positive_diffusion(d)?;
    Ok(params.hbar_eff().powi(2) / (2.0 * dc))
}

/// `f(y) = (y - 2y^3/3) / 4`.
pub fn cubic_profile(y: f64) -> f64 {
    0.25 * (y - 2.0 * y.powi(3) / 3.0)
}

fn positive_diffusion(d: &DiffusionParams) -> Result<f64> {
    match d.d_const() {
        dc if dc > 0.0 => Ok(dc),
        _ => Err(Error::ZeroDiffusion),
    }
}

fn heat_kernel(u: f64, dc: f64) -> f64 {
    (-u * u / (4.0 * dc)).exp() / (4.0 * PI * dc).sqrt()
}

/// `exp(-(x^2 + y^2)) / 4 pi D`.
pub fn kernel_classical(pt: &KernelEvalPoint, params: &SystemParams, d: &DiffusionParams) -> Result<f64> {
    let dc = positive_diffusion(d)?;
    let (x, y) = pt.scaled(params, d);
    Ok((-(x * x + y * y)).exp() / (4.0 * PI * dc))
}

/// The full propagator, integrating the chord variable numerically.
pub fn kernel_quantum(
    pt: &KernelEvalPoint,
    params: &SystemParams,
    d: &DiffusionParams,
    quadrature: Quadrature,
) -> Result<f64> {
    let dc = positive_diffusion(d)?;
    let hbar = params.hbar_eff();
    let (qs, ps) = pt.source;
    let force = params.kick_strength() * qs.sin();
    let dp = pt.rotated.1 - ps;
    let phase = |mu: f64| (2.0 * force * (0.5 * mu).sin() - mu * dp) / hbar;
    // the phase slope in mu never exceeds this
    let slope = (force.abs() + dp.abs()) / hbar;
    let sigma = hbar / (2.0 * dc).sqrt();

    let rule = match quadrature {
        Quadrature::Auto => {
            let step = slope * sigma * (2.0f64).sqrt() * PI / (2.0 * AUTO_DEGREE as f64).sqrt();
            if step < AUTO_PHASE_STEP {
                Quadrature::GaussHermite { degree: AUTO_DEGREE }
            } else {
                Quadrature::default()
            }
        }
        other => other,
    };

    let integral = match rule {
        Quadrature::Trapezoid { half_range_sigmas, samples } => {
            if samples < 3 || !(half_range_sigmas > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "quadrature",
                    reason: format!(
                        "trapezoid needs >= 3 samples and a positive range, got {samples}, {half_range_sigmas}"
                    ),
                });
            }
            let half = half_range_sigmas * sigma;
            let h = 2.0 * half / (samples - 1) as f64;
            if slope * h >= PI {
                return Err(Error::Resolution { per_sample: slope * h });
            }
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 0..samples {
                let mu = -half + j as f64 * h;
                let w = if j == 0 || j == samples - 1 { 0.5 } else { 1.0 };
                sum += w * (-dc * mu * mu / (hbar * hbar)).exp() * Complex64::from_polar(1.0, phase(mu));
            }
            sum * h / (2.0 * PI * hbar)
        }
        Quadrature::GaussHermite { degree } => {
            let rule = hermite_rule(degree)?;
            let scale = hbar / dc.sqrt();
            let mut sum = Complex64::new(0.0, 0.0);
            for &(t, w) in rule.as_node_weight_pairs() {
                sum += w * Complex64::from_polar(1.0, phase(scale * t));
            }
            sum / (2.0 * PI * dc.sqrt())
        }
        Quadrature::Auto => unreachable!("resolved above"),
    };

    let peak = 1.0 / (4.0 * PI * dc).sqrt();
    if integral.im.abs() > IMAGINARY_TOLERANCE * peak {
        return Err(Error::ImaginaryKernel { imag: integral.im / peak });
    }
    Ok(heat_kernel(pt.rotated.0 - qs, dc) * integral.re)
}

fn hermite_rule(degree: usize) -> Result<Arc<GaussHermite>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    if let Some(rule) = guard.get(&degree) {
        return Ok(rule.clone());
    }
    let rule =
        GaussHermite::new(degree).map_err(|e| Error::InvalidParameter { name: "quadrature", reason: e.to_string() })?;
    let rule = Arc::new(rule);
    guard.insert(degree, rule.clone());
    Ok(rule)
}

/// First-order expansion of [`kernel_quantum`] in the cubic term of the
/// potential difference: `L_cl [1 - chi sin(q') f(y)]`.
pub fn kernel_approx(pt: &KernelEvalPoint, params: &SystemParams, d: &DiffusionParams) -> Result<f64> {
    let classical = kernel_classical(pt, params, d)?;
    let (_, chi) = composite_params(params, d);
    if params.kick_strength() == 0.0 {
        return Ok(classical);
    }
    let (_, y) = pt.scaled(params, d);
    Ok(classical * (1.0 - chi * pt.source.0.sin() * cubic_profile(y)))
}

/// Maps `field` through one period with the chosen propagator.
///
/// The source integral is evaluated in mixed representation. Each momentum
/// line is transformed at continuous wavenumbers `k = mu / hbar` up to its
/// sampling limit. The propagator phase and the Gaussian weight are applied
/// at every `k`. The position convolution runs on the band-limited
/// interpolant of the source columns. The result is then summed directly at
/// every pre-rotated target point.
pub fn apply_kernel_step(
    field: &PhaseSpaceField,
    params: &SystemParams,
    d: &DiffusionParams,
    which: KernelKind,
) -> Result<PhaseSpaceField> {
    let grid = *field.grid();
    let n = grid.n_points();
    if n > ORACLE_MAX_POINTS {
        return Err(Error::GridTooLarge { n_points: n, limit: ORACLE_MAX_POINTS });
    }
    let dc = positive_diffusion(d)?;
    let hw = grid.half_width();
    let dx = grid.spacing();
    let hbar = params.hbar_eff();
    let k_strength = params.kick_strength();

    // continuous momentum wavenumbers; the spacing makes the sum periodic
    // over twice the grid width so the momentum axis is effectively open
    let dk = PI / (2.0 * hw);
    let k_max = PI / dx;
    let m_count = (2.0 * k_max / dk).round() as usize + 1;
    let kappas: Vec<f64> = (0..m_count).map(|m| -k_max + m as f64 * dk).collect();
    let coords: Vec<f64> = (0..n).map(|i| grid.coord(i)).collect();

    // b[i][m]: transformed, propagated source column i at wavenumber m
    let b: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|iq| {
            let column = field.column(iq);
            let force = k_strength * coords[iq].sin();
            kappas
                .iter()
                .enumerate()
                .map(|(m, &k)| {
                    let mut spec = Complex64::new(0.0, 0.0);
                    for (&p, &w) in coords.iter().zip(column.iter()) {
                        spec += w * Complex64::from_polar(1.0, -k * p);
                    }
                    let propagator = match which {
                        KernelKind::Classical => Complex64::from_polar(1.0, -k * force),
                        KernelKind::Quantum => Complex64::from_polar(1.0, -2.0 * force / hbar * (0.5 * hbar * k).sin()),
                        KernelKind::Approx => {
                            Complex64::from_polar(1.0, -k * force)
                                * Complex64::new(1.0, force * hbar * hbar * k.powi(3) / 24.0)
                        }
                    };
                    let end = if m == 0 || m == m_count - 1 { 0.5 } else { 1.0 };
                    spec * propagator * (-dc * k * k).exp() * (end * dx * dk / (2.0 * PI))
                })
                .collect()
        })
        .collect();

    // a[kq][m]: position spectrum with the heat factor applied
    let a: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|kq| {
            let kappa = wavenumber(kq, n, hw);
            let damping = (-dc * kappa * kappa).exp() / n as f64;
            let twiddles: Vec<Complex64> = coords.iter().map(|&q| Complex64::from_polar(damping, -kappa * q)).collect();
            (0..m_count).map(|m| twiddles.iter().zip(b.iter()).map(|(t, row)| t * row[m]).sum()).collect()
        })
        .collect();
    let q_kappas: Vec<f64> = (0..n).map(|k| wavenumber(k, n, hw)).collect();

    let (s, c) = params.theta().sin_cos();
    let mut values = vec![0.0; grid.len()];
    values.par_chunks_mut(n).enumerate().for_each(|(ip, row)| {
        let p = coords[ip];
        for (iq, out) in row.iter_mut().enumerate() {
            let q = coords[iq];
            let (qr, pr) = (q * c - p * s, q * s + p * c);
            let p_phase: Vec<Complex64> = kappas.iter().map(|&k| Complex64::from_polar(1.0, k * pr)).collect();
            let mut total = Complex64::new(0.0, 0.0);
            for (kq, line) in a.iter().enumerate() {
                let inner: Complex64 = line.iter().zip(p_phase.iter()).map(|(x, y)| x * y).sum();
                total += Complex64::from_polar(1.0, q_kappas[kq] * qr) * inner;
            }
            *out = total.re;
        }
    });

    let out = PhaseSpaceField::from_values(grid, values)?;
    let mass_error = (mass(&out) - mass(field)).abs();
    if mass_error > ORACLE_MASS_TOLERANCE {
        return Err(Error::MassDrift { mass_error });
    }
    Ok(out)
}
