use thiserror::Error;

/// Errors raised by the grid engines, oracles and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: spacing {spacing:.6} exceeds {limit:.6} needed to resolve width {width}")]
    GridTooCoarse { spacing: f64, limit: f64, width: f64 },

    #[error("grid too large for the quadrature oracle: {n_points} points per axis (limit {limit})")]
    GridTooLarge { n_points: usize, limit: usize },

    #[error("grid mismatch between fields: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("boundary mass {fraction:.3e} exceeds limit {limit:.0e}")]
    BoundaryMass { fraction: f64, limit: f64 },

    #[error("phase undersampled: {per_sample:.3} rad per sample (must be < pi)")]
    Resolution { per_sample: f64 },

    #[error("mass drift {mass_error:.3e} exceeds tolerance")]
    MassDrift { mass_error: f64 },

    #[error("origin is not hyperbolic: |trace| = {trace_abs:.6} <= 2")]
    EllipticOrigin { trace_abs: f64 },

    #[error("kernel undefined for D = 0 (delta limit)")]
    ZeroDiffusion,

    #[error("quadrature produced imaginary part {imag:.3e} for a real kernel")]
    ImaginaryKernel { imag: f64 },

    #[error("Bessel kick unavailable: hbar_eff/2 is {ratio:.6} cells, not an integer")]
    BesselPathDisabled { ratio: f64 },

    #[error("window [{start}, {end}] invalid for series of {len} records")]
    Window { start: usize, end: usize, len: usize },

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("kick {kick}: {source}")]
    AtKick { kick: usize, source: Box<Error> },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::BoundaryMass { .. } => "boundary_mass",
            Error::Resolution { .. } => "resolution",
            Error::MassDrift { .. } => "mass_drift",
            Error::EllipticOrigin { .. } => "elliptic_origin",
            Error::ZeroDiffusion => "zero_diffusion",
            Error::ImaginaryKernel { .. } => "imaginary_kernel",
            Error::BesselPathDisabled { .. } => "bessel_disabled",
            Error::Window { .. } => "window",
            Error::Undefined(_) => "undefined",
            Error::AtKick { source, .. } => source.kind(),
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Strips any kick-index wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtKick { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
