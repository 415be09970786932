//! `kho`: command-line frontend for the kicked harmonic oscillator
//! phase-space simulator.
//!
//! Results go to stdout as CSV or `key=value` lines. Diagnostics go to
//! stderr, and a failure ends with one `error kind=<kind> msg=<text>` line.
//! Exit codes: 0 success, 2 invalid flags or config, 3 physics or grid
//! errors (including a truncated evolution or a failed oracle comparison).

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use kho_core::classical::step_classical;
use kho_core::kernel_oracle::{apply_kernel_step, KernelKind, ORACLE_MAX_POINTS};
use kho_core::observables::{composite_params, log_time_kick_index, lyapunov_origin};
use kho_core::phase_space::{l1_distance, make_coherent_wigner};
use kho_core::quantum::step_quantum;
use kho_core::sweep::{
    classify_regime, fmt_float, run_point, run_sweep, snapshot_wigner, write_outputs, write_series_csv,
    ExperimentConfig, GridConfig, PointStatus, WindowConfig,
};
use kho_core::{DiffusionParams, Error, GridSpec, SystemParams};

/// L1 tolerance for engine steps against the exact propagators.
const ORACLE_TOLERANCE: f64 = 1e-3;
/// L1 tolerance for the first-order kernel, applied only where `chi <= 1`.
const APPROX_TOLERANCE: f64 = 1e-2;

#[derive(Parser)]
#[command(name = "kho", version, about = "Kicked harmonic oscillator: quantum vs classical phase-space evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one (eta, D) point and write its entropy series as CSV.
    Evolve(EvolveArgs),
    /// Run every (eta, D) point of a TOML experiment config.
    Sweep(SweepArgs),
    /// Compare single engine steps with the quadrature propagators.
    OracleCheck(OracleArgs),
    /// Print the composite parameters of a configuration.
    Info(InfoArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct EvolveArgs {
    /// Lamb-Dicke parameter; hbar_eff = 2 eta^2.
    #[arg(long)]
    eta: f64,
    /// Diffusion constant per kick period.
    #[arg(long = "D")]
    d: f64,
    /// Kick strength.
    #[arg(long = "K", default_value_t = 2.0)]
    k: f64,
    /// Number of kicks.
    #[arg(long, default_value_t = 8)]
    kicks: usize,
    /// Rotation angle per period.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    theta: f64,
    /// Grid points per axis before automatic refinement.
    #[arg(long = "grid-n", default_value_t = GridConfig::default().n_points)]
    grid_n: usize,
    /// Half-width L of the domain [-L, L)^2.
    #[arg(long = "grid-l", default_value_t = GridConfig::default().half_width)]
    grid_l: f64,
    /// First kick of a fixed slope window.
    #[arg(long = "window-start", requires = "window_end")]
    window_start: Option<usize>,
    /// Last kick of a fixed slope window.
    #[arg(long = "window-end", requires = "window_start")]
    window_end: Option<usize>,
    /// Series CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the Wigner function just before this kick.
    #[arg(long = "snapshot-kick")]
    snapshot_kick: Option<usize>,
    /// Position of the momentum slice written with the snapshot.
    #[arg(long = "slice-q", allow_hyphen_values = true, requires = "snapshot_kick")]
    slice_q: Option<f64>,
    /// Directory for snapshot files.
    #[arg(long = "output-dir", default_value = "kho-output")]
    output_dir: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config's output directory.
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct OracleArgs {
    #[arg(long, default_value_t = 0.125)]
    eta: f64,
    #[arg(long = "D", default_value_t = 1e-3)]
    d: f64,
    #[arg(long = "K", default_value_t = 2.0)]
    k: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    theta: f64,
    /// Grid points per axis, at most 256.
    #[arg(long = "grid-n", default_value_t = 128)]
    grid_n: usize,
    #[arg(long = "grid-l", default_value_t = 2.0)]
    grid_l: f64,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct InfoArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long = "D")]
    d: f64,
    #[arg(long = "K", default_value_t = 2.0)]
    k: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    theta: f64,
}

/// Failure carrying its exit code and a stable kind for the error line.
struct Failure {
    code: u8,
    kind: String,
    error: anyhow::Error,
}

impl Failure {
    fn physics(kind: impl Into<String>, error: anyhow::Error) -> Self {
        Self { code: 3, kind: kind.into(), error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::InvalidParameter { .. } | Error::Config(_) => 2,
            _ => 3,
        };
        Self { code, kind: e.root().kind().to_string(), error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        match error.downcast_ref::<Error>() {
            Some(e) => {
                let mut f = Failure::from(e.clone());
                f.error = error;
                f
            }
            None => Self::physics("io", error),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Sweep(a) => sweep(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Info(a) => info(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} msg={:#}", f.kind, f.error);
            ExitCode::from(f.code)
        }
    }
}

fn evolve(a: EvolveArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::single(a.k, a.eta, a.d, a.kicks);
    config.theta = a.theta;
    config.grid = GridConfig { n_points: a.grid_n, half_width: a.grid_l };
    config.window = a.window_start.zip(a.window_end).map(|(start, end)| WindowConfig { start, end });
    config.output_dir = a.output_dir.clone();
    config.validate()?;

    let result = run_point(&config, a.eta, a.d);
    if let PointStatus::Failed { error } = &result.status {
        return Err(error.clone().into());
    }

    let mut csv = Vec::new();
    write_series_csv(&result.series, &mut csv)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            if let Some(grid) = result.grid {
                writeln!(out, "grid_n={}", grid.n_points()).context("stdout")?;
            }
            if let Some(s) = &result.scaling {
                writeln!(out, "gamma_q={}", fmt_float(s.gamma_q)).context("stdout")?;
                writeln!(out, "gamma_cl={}", fmt_float(s.gamma_cl)).context("stdout")?;
                writeln!(out, "chi_prime={}", fmt_float(s.chi_prime)).context("stdout")?;
                writeln!(out, "chi={}", fmt_float(s.chi)).context("stdout")?;
            }
            writeln!(out, "regime={}", result.regime()).context("stdout")?;
            writeln!(out, "status={}", result.status).context("stdout")?;
        }
        None => out.write_all(&csv).context("stdout")?,
    }

    if let Some(kick) = a.snapshot_kick {
        let (_, files) = snapshot_wigner(&config, a.eta, a.d, kick, a.slice_q, &a.output_dir)?;
        if a.out.is_some() {
            writeln!(out, "snapshot={}", files.meta.display()).context("stdout")?;
        }
    }

    match result.status {
        PointStatus::Truncated { error, .. } => Err(error.into()),
        _ => Ok(()),
    }
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::from_file(&a.config)?;
    if let Some(w) = a.workers {
        config.workers = w;
    }
    if let Some(dir) = a.output_dir {
        config.output_dir = dir;
    }
    config.validate()?;
    let results = run_sweep(&config)?;
    let path = write_outputs(&config.output_dir, &results)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in &results {
        writeln!(out, "eta={} D={} status={}", fmt_float(r.eta), fmt_float(r.d_const), r.status).context("stdout")?;
    }
    writeln!(out, "sweep_csv={}", path.display()).context("stdout")?;
    Ok(())
}

fn oracle_check(a: OracleArgs) -> Result<(), Failure> {
    if a.grid_n > ORACLE_MAX_POINTS {
        return Err(Error::GridTooLarge { n_points: a.grid_n, limit: ORACLE_MAX_POINTS }.into());
    }
    let params = SystemParams::new(a.k, a.eta, a.theta)?;
    let d = DiffusionParams::new(a.d)?;
    if a.d == 0.0 {
        return Err(Failure::physics(
            "zero_diffusion",
            anyhow::anyhow!("oracle unsupported for D = 0: the propagator degenerates to a delta function"),
        ));
    }
    let grid = GridSpec::new(a.grid_n, a.grid_l)?;
    let initial = make_coherent_wigner(&params, &grid, (0.0, 0.0))?;
    let (quantum, _) = step_quantum(&initial, &params, &d)?;
    let (classical, _) = step_classical(&initial, &params, &d)?;
    let (_, chi) = composite_params(&params, &d);

    let rows = [
        ("classical", &classical, KernelKind::Classical, Some(ORACLE_TOLERANCE)),
        ("quantum", &quantum, KernelKind::Quantum, Some(ORACLE_TOLERANCE)),
        ("approx", &quantum, KernelKind::Approx, (chi <= 1.0).then_some(APPROX_TOLERANCE)),
    ];
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "chi={}", fmt_float(chi)).context("stdout")?;
    let mut failed = Vec::new();
    for (name, engine, kind, tolerance) in rows {
        let oracle = apply_kernel_step(&initial, &params, &d, kind)?;
        let l1 = l1_distance(engine, &oracle)?;
        let verdict = match tolerance {
            Some(tol) if l1 < tol => "pass",
            Some(_) => {
                failed.push(name);
                "fail"
            }
            None => "info",
        };
        let tol = tolerance.map_or("none".to_string(), fmt_float);
        writeln!(out, "kernel={name} l1={} tolerance={tol} result={verdict}", fmt_float(l1)).context("stdout")?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::physics("oracle_mismatch", anyhow::anyhow!("L1 above tolerance for {}", failed.join(", "))))
    }
}

fn info(a: InfoArgs) -> Result<(), Failure> {
    let params = SystemParams::new(a.k, a.eta, a.theta)?;
    let d = DiffusionParams::new(a.d)?;
    let (chi_prime, chi) = composite_params(&params, &d);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut line = |key: &str, value: String| writeln!(out, "{key}={value}").context("stdout");
    line("hbar_eff", fmt_float(params.hbar_eff()))?;
    line("chi_prime", fmt_float(chi_prime))?;
    line("chi", fmt_float(chi))?;
    match lyapunov_origin(&params) {
        Ok(lambda) => {
            line("lambda", fmt_float(lambda))?;
            line("n_E", log_time_kick_index(&params)?.to_string())?;
        }
        Err(e @ Error::EllipticOrigin { .. }) => {
            line("lambda", "none".into())?;
            line("n_E", "none".into())?;
            line("origin", format!("elliptic ({e})"))?;
        }
        Err(e) => return Err(e.into()),
    }
    line("regime", classify_regime(chi_prime).to_string())?;
    Ok(())
}
