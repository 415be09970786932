//! Phase-space grids, fields and the mass-preserving primitives every engine
//! step is built from: Gaussian diffusion, rigid rotation and per-column
//! momentum translations.
//!
//! Conventions used throughout the crate:
//!
//! * The domain is the periodic square `[-L, L) x [-L, L)` sampled on an
//!   `N x N` grid, stored row-major with q fastest (`values[ip * N + iq]`).
//! * The harmonic flow is `dq/dt = p`, `dp/dt = -q`, so a rotation by `theta`
//!   maps the point `(q, p)` to `(q cos + p sin, -q sin + p cos)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, wavenumber};

/// Boundary mass above which rotations refuse to run.
pub const BOUNDARY_LIMIT: f64 = 1e-6;
/// Boundary mass above which a warning is logged.
pub const BOUNDARY_WARN: f64 = 1e-9;
/// Width, in cells, of the border band monitored for wrap-around.
pub const BOUNDARY_CELLS: usize = 2;
/// Fraction of the Nyquist wavenumber above which spectral energy counts as
/// unresolved in [`PhaseSpaceField::spectral_tail`].
pub const TAIL_CUTOFF: f64 = 2.0 / 3.0;

/// Uniform periodic grid over `[-L, L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_points: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, half_width: f64) -> Result<Self> {
        if n_points < 64 || !n_points.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "grid.n_points",
                reason: format!("{n_points} is not a power of two >= 64"),
            });
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "grid.half_width",
                reason: format!("{half_width} must be positive and finite"),
            });
        }
        Ok(Self { n_points, half_width })
    }

    /// The production default: 1024 points over `[-4 pi, 4 pi)`.
    pub fn default_production() -> Self {
        Self { n_points: 1024, half_width: 4.0 * PI }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    /// Coordinate of node `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    pub fn len(&self) -> usize {
        self.n_points * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{} over [-{}, {})", self.n_points, self.n_points, self.half_width, self.half_width)
    }
}

/// Dimensionless parameters of the kicked oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    kick_strength: f64,
    lamb_dicke: f64,
    hbar_eff: f64,
    theta: f64,
}

impl SystemParams {
    /// `theta` is the harmonic phase advanced between kicks; `pi / 3` puts
    /// six kicks in one oscillator period.
    pub fn new(kick_strength: f64, lamb_dicke: f64, theta: f64) -> Result<Self> {
        if !(kick_strength >= 0.0 && kick_strength.is_finite()) {
            return Err(Error::InvalidParameter { name: "K", reason: format!("{kick_strength} must be >= 0") });
        }
        if !(lamb_dicke > 0.0 && lamb_dicke.is_finite()) {
            return Err(Error::InvalidParameter { name: "eta", reason: format!("{lamb_dicke} must be > 0") });
        }
        if !(theta > 0.0 && theta < 2.0 * PI) {
            return Err(Error::InvalidParameter { name: "theta", reason: format!("{theta} must lie in (0, 2 pi)") });
        }
        Ok(Self { kick_strength, lamb_dicke, hbar_eff: 2.0 * lamb_dicke * lamb_dicke, theta })
    }

    pub fn with_default_theta(kick_strength: f64, lamb_dicke: f64) -> Result<Self> {
        Self::new(kick_strength, lamb_dicke, PI / 3.0)
    }

    /// Builds parameters from the effective Planck constant instead of eta.
    pub fn from_hbar(kick_strength: f64, hbar_eff: f64, theta: f64) -> Result<Self> {
        if !(hbar_eff > 0.0) {
            return Err(Error::InvalidParameter { name: "hbar_eff", reason: format!("{hbar_eff} must be > 0") });
        }
        let mut p = Self::new(kick_strength, (hbar_eff / 2.0).sqrt(), theta)?;
        p.hbar_eff = hbar_eff;
        Ok(p)
    }

    pub fn kick_strength(&self) -> f64 {
        self.kick_strength
    }

    pub fn lamb_dicke(&self) -> f64 {
        self.lamb_dicke
    }

    pub fn hbar_eff(&self) -> f64 {
        self.hbar_eff
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Diffusion accumulated over one kick period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    d_const: f64,
}

impl DiffusionParams {
    pub fn new(d_const: f64) -> Result<Self> {
        if !(d_const >= 0.0 && d_const.is_finite()) {
            return Err(Error::InvalidParameter { name: "D", reason: format!("{d_const} must be >= 0") });
        }
        Ok(Self { d_const })
    }

    pub fn d_const(&self) -> f64 {
        self.d_const
    }
}

/// A real distribution sampled on a [`GridSpec`]; Wigner or Liouville.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl PhaseSpaceField {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("expected {} samples, got {}", grid.len(), values.len()),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(q, p)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n_points();
        let mut values = Vec::with_capacity(grid.len());
        for ip in 0..n {
            let p = grid.coord(ip);
            for iq in 0..n {
                values.push(f(grid.coord(iq), p));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, iq: usize, ip: usize) -> f64 {
        self.values[ip * self.grid.n_points() + iq]
    }

    /// Values along the column at node `iq`, ordered by increasing p.
    pub fn column(&self, iq: usize) -> Vec<f64> {
        let n = self.grid.n_points();
        (0..n).map(|ip| self.values[ip * n + iq]).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Renormalizes to unit mass.
    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / mass(self))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `cell_area * sum W^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_area() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Centroid `(<q>, <p>)` of the distribution.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.grid.n_points();
        let (mut m, mut sq, mut sp) = (0.0, 0.0, 0.0);
        for ip in 0..n {
            let p = self.grid.coord(ip);
            for iq in 0..n {
                let w = self.values[ip * n + iq];
                m += w;
                sq += w * self.grid.coord(iq);
                sp += w * p;
            }
        }
        (sq / m, sp / m)
    }

    /// Second central moments `(var q, var p)`.
    pub fn variances(&self) -> (f64, f64) {
        let (cq, cp) = self.centroid();
        let n = self.grid.n_points();
        let (mut m, mut vq, mut vp) = (0.0, 0.0, 0.0);
        for ip in 0..n {
            let dp = self.grid.coord(ip) - cp;
            for iq in 0..n {
                let w = self.values[ip * n + iq];
                let dq = self.grid.coord(iq) - cq;
                m += w;
                vq += w * dq * dq;
                vp += w * dp * dp;
            }
        }
        (vq / m, vp / m)
    }

    /// Fraction of the absolute mass lying within [`BOUNDARY_CELLS`] of the
    /// domain edge.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n_points();
        let b = BOUNDARY_CELLS;
        let mut edge = 0.0;
        let mut total = 0.0;
        for ip in 0..n {
            let row = &self.values[ip * n..(ip + 1) * n];
            let row_abs: f64 = row.iter().map(|v| v.abs()).sum();
            total += row_abs;
            if ip < b || ip >= n - b {
                edge += row_abs;
            } else {
                edge += row[..b].iter().chain(row[n - b..].iter()).map(|v| v.abs()).sum::<f64>();
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Largest fraction, over the two axes, of the spectral energy carried by
    /// wavenumbers above two thirds of the Nyquist wavenumber. Small values
    /// mean the field is resolved by the grid.
    pub fn spectral_tail(&self) -> f64 {
        let n = self.grid.n_points();
        let along_q = spectral::row_tail_fraction(&self.values, n, TAIL_CUTOFF);
        let along_p = spectral::row_tail_fraction(&spectral::transpose(&self.values, n), n, TAIL_CUTOFF);
        along_q.max(along_p)
    }

    pub(crate) fn check_boundary(&self) -> Result<f64> {
        let fraction = self.boundary_mass();
        if fraction >= BOUNDARY_LIMIT {
            return Err(Error::BoundaryMass { fraction, limit: BOUNDARY_LIMIT });
        }
        if fraction > BOUNDARY_WARN {
            log::warn!("boundary mass {fraction:.3e} above warning level {BOUNDARY_WARN:.0e}");
        }
        Ok(fraction)
    }

    pub(crate) fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { left: self.grid.to_string(), right: other.grid.to_string() });
        }
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Wigner function of a coherent state of width `eta` centred on `center`,
/// renormalized to unit mass on the grid.
pub fn make_coherent_wigner(params: &SystemParams, grid: &GridSpec, center: (f64, f64)) -> Result<PhaseSpaceField> {
    let width = params.lamb_dicke();
    let limit = width / 4.0;
    if grid.spacing() > limit {
        return Err(Error::GridTooCoarse { spacing: grid.spacing(), limit, width });
    }
    let hbar = params.hbar_eff();
    let (q0, p0) = center;
    let norm = 1.0 / (PI * hbar);
    let field = PhaseSpaceField::from_fn(*grid, |q, p| norm * (-((q - q0).powi(2) + (p - p0).powi(2)) / hbar).exp());
    Ok(field.normalized())
}

/// Grid quadrature of the total mass.
pub fn mass(field: &PhaseSpaceField) -> f64 {
    field.grid.cell_area() * field.values.iter().sum::<f64>()
}

/// Heat-kernel smoothing accumulated over one kick period: convolution with
/// `exp(-(dq^2 + dp^2) / 4D) / (4 pi D)`, applied as `exp(-D |k|^2)` per mode.
pub fn diffuse(field: &PhaseSpaceField, d: &DiffusionParams) -> PhaseSpaceField {
    let mut out = field.clone();
    let dc = d.d_const();
    if dc == 0.0 {
        return out;
    }
    let n = field.grid.n_points();
    let hw = field.grid.half_width();
    let damping: Vec<f64> = (0..n).map(|k| (-dc * wavenumber(k, n, hw).powi(2)).exp()).collect();
    let apply = |_: usize, s: &mut [rustfft::num_complex::Complex64]| {
        for (c, g) in s.iter_mut().zip(damping.iter()) {
            *c *= *g;
        }
    };
    spectral::filter_rows(out.values_mut(), n, apply);
    spectral::filter_cols(out.values_mut(), n, apply);
    out
}

/// Rigid rotation by the harmonic flow for phase `theta`.
///
/// Quarter turns are exact index permutations; the remainder, at most
/// `pi / 4` in magnitude, is done with three spectral shears
/// `Sq(tan(t/2)) Sp(-sin t) Sq(tan(t/2))`.
pub fn rotate(field: &PhaseSpaceField, theta: f64) -> Result<PhaseSpaceField> {
    field.check_boundary()?;
    let quarter = (theta / (PI / 2.0)).round();
    let rest = theta - quarter * PI / 2.0;
    let turns = (quarter as i64).rem_euclid(4) as usize;

    let mut out = field.clone();
    for _ in 0..turns {
        out = quarter_turn(&out);
    }
    if rest.abs() > 0.0 {
        let a = (rest / 2.0).tan();
        let b = -rest.sin();
        shear_q(&mut out, a);
        shear_p(&mut out, b);
        shear_q(&mut out, a);
    }
    Ok(out)
}

/// Rotation by `pi / 2`: `W'(q, p) = W(-p, q)`.
fn quarter_turn(field: &PhaseSpaceField) -> PhaseSpaceField {
    let n = field.grid.n_points();
    let mut values = vec![0.0; n * n];
    for ip in 0..n {
        let src_q = (n - ip) % n;
        for iq in 0..n {
            // source node: q index = src_q, p index = iq
            values[ip * n + iq] = field.values[iq * n + src_q];
        }
    }
    PhaseSpaceField { grid: field.grid, values }
}

/// Point map `q -> q + a p`: each row at momentum p moves by `a p`.
fn shear_q(field: &mut PhaseSpaceField, a: f64) {
    let grid = field.grid;
    let n = grid.n_points();
    let hw = grid.half_width();
    spectral::filter_rows(field.values_mut(), n, |ip, s| spectral::shift_spectrum(s, hw, a * grid.coord(ip)));
}

/// Point map `p -> p + b q`: each column at position q moves by `b q`.
fn shear_p(field: &mut PhaseSpaceField, b: f64) {
    let grid = field.grid;
    let n = grid.n_points();
    let hw = grid.half_width();
    spectral::filter_cols(field.values_mut(), n, |iq, s| spectral::shift_spectrum(s, hw, b * grid.coord(iq)));
}

/// Translates each column at position q by `shift(q)` in momentum.
pub fn shift_columns(field: &PhaseSpaceField, shift: impl Fn(f64) -> f64 + Sync) -> PhaseSpaceField {
    let mut out = field.clone();
    let grid = field.grid;
    let n = grid.n_points();
    let hw = grid.half_width();
    spectral::filter_cols(out.values_mut(), n, |iq, s| spectral::shift_spectrum(s, hw, shift(grid.coord(iq))));
    out
}

/// Fraction of absolute mass that a per-column momentum translation of up to
/// `|shift(q)|` (either direction) would carry across the periodic edge.
pub(crate) fn wrap_mass(field: &PhaseSpaceField, shift: impl Fn(f64) -> f64) -> f64 {
    let grid = field.grid;
    let n = grid.n_points();
    let dp = grid.spacing();
    let mut total = 0.0;
    let mut risky = 0.0;
    for iq in 0..n {
        let s = shift(grid.coord(iq)).abs();
        let band = ((s / dp).ceil() as usize + BOUNDARY_CELLS).min(n / 2);
        for ip in 0..n {
            let w = field.values[ip * n + iq].abs();
            total += w;
            if ip < band || ip >= n - band {
                risky += w;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        risky / total
    }
}

/// `cell_area * sum |a - b|`.
pub fn l1_distance(a: &PhaseSpaceField, b: &PhaseSpaceField) -> Result<f64> {
    a.ensure_same_grid(b)?;
    Ok(a.grid.cell_area() * a.values.iter().zip(b.values.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>())
}
