//! Declarative experiment runner: paired quantum and classical evolutions
//! over an `(eta, D)` grid, slope extraction, regime labels and persistence.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::step_classical;
use crate::error::{Error, Result};
use crate::observables::{
    auto_window, composite_params, fit_slope, log_time_kick_index, sigma_measure, EntropyRecord, EntropySeries,
    KickRange, ScalingPoint, Which,
};
use crate::phase_space::{make_coherent_wigner, DiffusionParams, GridSpec, PhaseSpaceField, SystemParams};
use crate::quantum::step_quantum;

/// Largest grid the escalation policy will try.
pub const MAX_ESCALATED_POINTS: usize = 4096;
/// Spectral tail above which a boundary-mass stop triggers grid refinement.
pub const REFINE_TAIL: f64 = 1e-8;

pub const SERIES_HEADER: &str = "n,s_quantum,s_classical,purity_q,purity_cl,negativity,l1_dist,boundary_mass";
pub const SWEEP_HEADER: &str = "eta,hbar_eff,D,chi_prime,chi,gamma_q,gamma_cl,r2_q,r2_cl,n_E,sigma_at_nE,regime,status";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub half_width: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default_production();
        Self { n_points: g.n_points(), half_width: g.half_width() }
    }
}

/// Inclusive kick range used instead of the automatic fit window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: usize,
    pub end: usize,
}

fn default_theta() -> f64 {
    std::f64::consts::PI / 3.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("kho-output")
}

fn default_workers() -> usize {
    1
}

/// One sweep, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "K")]
    pub kick_strength: f64,
    pub eta: Vec<f64>,
    #[serde(rename = "D")]
    pub diffusion: Vec<f64>,
    pub n_kicks: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// A single `(eta, D)` point on the production grid.
    pub fn single(kick_strength: f64, eta: f64, d_const: f64, n_kicks: usize) -> Self {
        Self {
            kick_strength,
            eta: vec![eta],
            diffusion: vec![d_const],
            n_kicks,
            theta: default_theta(),
            grid: GridConfig::default(),
            window: None,
            output_dir: default_output_dir(),
            workers: 1,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::Config(format!("{key}: {reason}")));
        if self.eta.is_empty() {
            return bad("eta", "list is empty".into());
        }
        if self.diffusion.is_empty() {
            return bad("D", "list is empty".into());
        }
        if self.n_kicks < 3 {
            return bad("n_kicks", format!("{} is below 3", self.n_kicks));
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        if let Some(w) = self.window {
            if w.end < w.start + 2 || w.end > self.n_kicks {
                return bad(
                    "window",
                    format!("[{}, {}] must hold >= 3 kicks within 0..={}", w.start, w.end, self.n_kicks),
                );
            }
        }
        for &d in &self.diffusion {
            DiffusionParams::new(d).map_err(|e| Error::Config(format!("D: {e}")))?;
        }
        GridSpec::new(self.grid.n_points, self.grid.half_width).map_err(|e| Error::Config(format!("grid: {e}")))?;
        for &eta in &self.eta {
            self.system(eta).map_err(|e| Error::Config(format!("eta/K/theta: {e}")))?;
            self.grid_for(eta).map_err(|e| Error::Config(format!("grid for eta = {eta}: {e}")))?;
        }
        Ok(())
    }

    pub fn system(&self, eta: f64) -> Result<SystemParams> {
        SystemParams::new(self.kick_strength, eta, self.theta)
    }

    /// The configured grid, refined by doubling until it resolves the
    /// coherent state of `eta`.
    pub fn grid_for(&self, eta: f64) -> Result<GridSpec> {
        let mut grid = GridSpec::new(self.grid.n_points, self.grid.half_width)?;
        let limit = eta / 4.0;
        while grid.spacing() > limit && grid.n_points() < MAX_ESCALATED_POINTS {
            grid = GridSpec::new(grid.n_points() * 2, grid.half_width())?;
        }
        if grid.spacing() > limit {
            return Err(Error::GridTooCoarse { spacing: grid.spacing(), limit, width: eta });
        }
        Ok(grid)
    }

    /// Every `(eta, D)` pair, sorted by eta then D.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> =
            self.eta.iter().flat_map(|&e| self.diffusion.iter().map(move |&d| (e, d))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts
    }
}

/// Decoherence regime selected by `chi'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Lyapunov,
    Crossover,
    GoldenRule,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Lyapunov => "lyapunov",
            RegimeLabel::Crossover => "crossover",
            RegimeLabel::GoldenRule => "golden_rule",
        })
    }
}

/// `chi' < 1` is lyapunov, `chi' > 100` golden_rule, crossover in between.
pub fn classify_regime(chi_prime: f64) -> RegimeLabel {
    if chi_prime < 1.0 {
        RegimeLabel::Lyapunov
    } else if chi_prime > 100.0 {
        RegimeLabel::GoldenRule
    } else {
        RegimeLabel::Crossover
    }
}

/// How far a point got.
#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// The evolution stopped before `n_kicks`; slopes come from the records
    /// obtained up to `kick`.
    Truncated {
        kick: usize,
        error: Error,
    },
    Failed {
        error: Error,
    },
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointStatus::Ok => f.write_str("ok"),
            PointStatus::Truncated { kick, error } => write!(f, "truncated:{}@{kick}", error.root().kind()),
            PointStatus::Failed { error } => write!(f, "failed:{}", error.root().kind()),
        }
    }
}

/// Everything produced for one `(eta, D)` point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub eta: f64,
    pub d_const: f64,
    pub kick_strength: f64,
    pub grid: Option<GridSpec>,
    pub series: EntropySeries,
    pub windows: Option<(KickRange, KickRange)>,
    pub scaling: Option<ScalingPoint>,
    pub status: PointStatus,
}

impl PointResult {
    pub fn regime(&self) -> RegimeLabel {
        let h = 2.0 * self.eta * self.eta;
        classify_regime(if self.d_const == 0.0 { f64::INFINITY } else { h * h / self.d_const })
    }

    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }
}

/// Quantum and classical states evolved in lockstep.
struct PairedRun {
    series: EntropySeries,
    stopped: Option<Stop>,
}

struct Stop {
    kick: usize,
    error: Error,
    /// [`PhaseSpaceField::spectral_tail`] of the state the failing step
    /// started from.
    tail: f64,
}

fn evolve_pair(
    params: &SystemParams,
    d: &DiffusionParams,
    grid: &GridSpec,
    n_kicks: usize,
    mut on_state: impl FnMut(usize, &PhaseSpaceField),
) -> Result<PairedRun> {
    let mut wigner = make_coherent_wigner(params, grid, (0.0, 0.0))?;
    let mut liouville = wigner.clone();
    let mut series = EntropySeries::new();
    for n in 0..=n_kicks {
        on_state(n, &wigner);
        series.push(EntropyRecord::from_fields(n, &wigner, &liouville, params)?)?;
        if n == n_kicks {
            break;
        }
        let next = step_quantum(&wigner, params, d)
            .map_err(|e| (e, &wigner))
            .and_then(|(q, _)| Ok((q, step_classical(&liouville, params, d).map_err(|e| (e, &liouville))?.0)));
        match next {
            Ok((q, c)) => {
                wigner = q;
                liouville = c;
            }
            Err((e, failed)) => {
                let tail = failed.spectral_tail();
                let error = Error::AtKick { kick: n, source: Box::new(e) };
                return Ok(PairedRun { series, stopped: Some(Stop { kick: n, error, tail }) });
            }
        }
    }
    Ok(PairedRun { series, stopped: None })
}

/// Runs one point: coherent state at the origin, both engines for
/// `n_kicks`, slopes on the configured or automatic window.
pub fn run_point(config: &ExperimentConfig, eta: f64, d_const: f64) -> PointResult {
    let mut result = PointResult {
        eta,
        d_const,
        kick_strength: config.kick_strength,
        grid: None,
        series: EntropySeries::new(),
        windows: None,
        scaling: None,
        status: PointStatus::Ok,
    };
    let setup = (|| -> Result<_> {
        let params = config.system(eta)?;
        let d = DiffusionParams::new(d_const)?;
        let grid = config.grid_for(eta)?;
        Ok((params, d, grid))
    })();
    let (params, d, mut grid) = match setup {
        Ok(v) => v,
        Err(error) => {
            result.status = PointStatus::Failed { error };
            return result;
        }
    };
    let run = loop {
        log::info!("point eta = {eta}, D = {d_const} on {grid}");
        let run = match evolve_pair(&params, &d, &grid, config.n_kicks, |_, _| {}) {
            Ok(run) => run,
            Err(error) => {
                result.grid = Some(grid);
                result.status = PointStatus::Failed { error };
                return result;
            }
        };
        match &run.stopped {
            Some(stop) if needs_refinement(stop) && grid.n_points() < MAX_ESCALATED_POINTS => {
                log::info!(
                    "point eta = {eta}, D = {d_const}: {} with spectral tail {:.2e}, refining",
                    stop.error,
                    stop.tail
                );
                grid = match GridSpec::new(grid.n_points() * 2, grid.half_width()) {
                    Ok(g) => g,
                    Err(error) => {
                        result.status = PointStatus::Failed { error };
                        return result;
                    }
                };
            }
            _ => break run,
        }
    };
    result.grid = Some(grid);
    result.series = run.series;
    if let Some(Stop { kick, error, tail }) = run.stopped {
        log::warn!("point eta = {eta}, D = {d_const} stopped: {error} (spectral tail {tail:.2e})");
        result.status = PointStatus::Truncated { kick, error };
    }

    match scaling_point(config, &params, &d, &result.series) {
        Ok((point, windows)) => {
            result.scaling = Some(point);
            result.windows = Some(windows);
        }
        Err(error) => {
            let error = match std::mem::replace(&mut result.status, PointStatus::Ok) {
                PointStatus::Truncated { error, .. } => error,
                _ => error,
            };
            result.status = PointStatus::Failed { error };
        }
    }
    result
}

/// A boundary-mass stop reached by an under-resolved state is wrap-around of
/// spectral ringing, which a finer grid removes.
fn needs_refinement(stop: &Stop) -> bool {
    matches!(stop.error.root(), Error::BoundaryMass { .. }) && stop.tail > REFINE_TAIL
}

fn scaling_point(
    config: &ExperimentConfig,
    params: &SystemParams,
    d: &DiffusionParams,
    series: &EntropySeries,
) -> Result<(ScalingPoint, (KickRange, KickRange))> {
    let window = |which| match config.window {
        Some(w) => Ok(KickRange::new(w.start, w.end)),
        None => auto_window(series, which),
    };
    let (wq, wc) = (window(Which::Quantum)?, window(Which::Classical)?);
    let fq = fit_slope(series, Which::Quantum, wq)?;
    let fc = fit_slope(series, Which::Classical, wc)?;
    let (chi_prime, chi) = composite_params(params, d);
    let n_e = log_time_kick_index(params)?;
    Ok((
        ScalingPoint {
            eta: params.lamb_dicke(),
            hbar_eff: params.hbar_eff(),
            d_const: d.d_const(),
            kick_strength: params.kick_strength(),
            chi_prime,
            chi,
            gamma_q: fq.gamma,
            gamma_cl: fc.gamma,
            fit_r2_q: fq.r2,
            fit_r2_cl: fc.r2,
            n_e,
            sigma_at_ne: sigma_measure(series, n_e).ok(),
        },
        (wq, wc),
    ))
}

/// Runs every point of the sweep on a pool of `config.workers` threads.
/// Results are in [`ExperimentConfig::points`] order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<PointResult>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let points = config.points();
    Ok(pool.install(|| points.par_iter().map(|&(eta, d)| run_point(config, eta, d)).collect()))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Series CSV with the exact [`SERIES_HEADER`] columns.
pub fn write_series_csv(series: &EntropySeries, out: &mut impl std::io::Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(SERIES_HEADER.split(',')).map_err(csv_error)?;
    for r in series.records() {
        wtr.write_record([
            r.n.to_string(),
            fmt_float(r.s_quantum),
            fmt_float(r.s_classical),
            fmt_float(r.purity_q),
            fmt_float(r.purity_cl),
            fmt_float(r.negativity),
            fmt_float(r.l1_dist),
            fmt_float(r.boundary_mass),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a file written by [`write_series_csv`].
pub fn read_series_csv(input: impl std::io::Read) -> Result<EntropySeries> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header.join(",") != SERIES_HEADER {
        return Err(Error::Config(format!("unexpected series header '{}'", header.join(","))));
    }
    let mut series = EntropySeries::new();
    for row in rdr.deserialize::<EntropyRecord>() {
        series.push(row.map_err(csv_error)?)?;
    }
    Ok(series)
}

/// Sweep CSV with the exact [`SWEEP_HEADER`] columns, one row per point.
pub fn write_sweep_csv(results: &[PointResult], out: &mut impl std::io::Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(SWEEP_HEADER.split(',')).map_err(csv_error)?;
    for r in results {
        let h = 2.0 * r.eta * r.eta;
        let (chi_prime, chi) = match r.scaling.as_ref() {
            Some(s) => (s.chi_prime, s.chi),
            None if r.d_const > 0.0 => (h * h / r.d_const, h * h * r.kick_strength / (4.0 * r.d_const.powf(1.5))),
            None => (f64::INFINITY, f64::INFINITY),
        };
        let s = r.scaling.as_ref();
        wtr.write_record([
            fmt_float(r.eta),
            fmt_float(h),
            fmt_float(r.d_const),
            fmt_float(chi_prime),
            fmt_float(chi),
            fmt_opt(s.map(|s| s.gamma_q)),
            fmt_opt(s.map(|s| s.gamma_cl)),
            fmt_opt(s.and_then(|s| s.fit_r2_q)),
            fmt_opt(s.and_then(|s| s.fit_r2_cl)),
            s.map(|s| s.n_e.to_string()).unwrap_or_default(),
            fmt_opt(s.and_then(|s| s.sigma_at_ne)),
            r.regime().to_string(),
            r.status.to_string(),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One parsed row of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub hbar_eff: f64,
    #[serde(rename = "D")]
    pub d_const: f64,
    pub chi_prime: f64,
    pub chi: f64,
    pub gamma_q: Option<f64>,
    pub gamma_cl: Option<f64>,
    pub r2_q: Option<f64>,
    pub r2_cl: Option<f64>,
    #[serde(rename = "n_E")]
    pub n_e: Option<usize>,
    #[serde(rename = "sigma_at_nE")]
    pub sigma_at_ne: Option<f64>,
    pub regime: RegimeLabel,
    pub status: String,
}

pub fn read_sweep_csv(input: impl std::io::Read) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<SweepRow>().map(|r| r.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// File stem shared by every artifact of one point.
pub fn point_stem(eta: f64, d_const: f64) -> String {
    format!("eta{}_D{}", fmt_float(eta), fmt_float(d_const))
}

/// Writes `sweep.csv` and one `series/<stem>.csv` per point under `dir`.
/// Returns the path of the sweep CSV.
pub fn write_outputs(dir: &Path, results: &[PointResult]) -> Result<PathBuf> {
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir)?;
    for r in results {
        let mut f = fs::File::create(series_dir.join(format!("{}.csv", point_stem(r.eta, r.d_const))))?;
        write_series_csv(&r.series, &mut f)?;
    }
    let path = dir.join("sweep.csv");
    let mut f = fs::File::create(&path)?;
    write_sweep_csv(results, &mut f)?;
    Ok(path)
}

/// Metadata written next to a binary Wigner dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n_points: usize,
    pub half_width: f64,
    pub eta: f64,
    #[serde(rename = "D")]
    pub d_const: f64,
    pub kick: usize,
    pub min: f64,
    pub max: f64,
    pub layout: String,
}

/// Byte layout of snapshot dumps.
pub const SNAPSHOT_LAYOUT: &str = "little-endian f64, row-major, q fastest: value(iq, ip) at index ip * n_points + iq";

/// Paths written by [`snapshot_wigner`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFiles {
    pub data: PathBuf,
    pub meta: PathBuf,
    pub slice: Option<PathBuf>,
}

/// Evolves the quantum state to the moment before `at_kick` and writes
/// `<stem>_n<kick>.f64`, its `.json` sidecar and optionally the momentum
/// slice at the column nearest to `slice_q` as `<stem>_n<kick>_slice.csv`.
pub fn snapshot_wigner(
    config: &ExperimentConfig,
    eta: f64,
    d_const: f64,
    at_kick: usize,
    slice_q: Option<f64>,
    dir: &Path,
) -> Result<(PhaseSpaceField, SnapshotFiles)> {
    let params = config.system(eta)?;
    let d = DiffusionParams::new(d_const)?;
    let grid = config.grid_for(eta)?;
    let mut field = make_coherent_wigner(&params, &grid, (0.0, 0.0))?;
    for kick in 0..at_kick {
        field = step_quantum(&field, &params, &d).map_err(|e| Error::AtKick { kick, source: Box::new(e) })?.0;
    }
    let files = write_snapshot(&field, eta, d_const, at_kick, slice_q, dir)?;
    Ok((field, files))
}

pub fn write_snapshot(
    field: &PhaseSpaceField,
    eta: f64,
    d_const: f64,
    kick: usize,
    slice_q: Option<f64>,
    dir: &Path,
) -> Result<SnapshotFiles> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}_n{kick}", point_stem(eta, d_const));
    let grid = *field.grid();

    let data = dir.join(format!("{stem}.f64"));
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data, bytes)?;

    let meta_value = SnapshotMeta {
        n_points: grid.n_points(),
        half_width: grid.half_width(),
        eta,
        d_const,
        kick,
        min: field.min_value(),
        max: field.max_value(),
        layout: SNAPSHOT_LAYOUT.into(),
    };
    let meta = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&meta_value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&meta, json)?;

    let slice = match slice_q {
        Some(q) => {
            let iq = nearest_node(&grid, q);
            let path = dir.join(format!("{stem}_slice.csv"));
            let mut f = fs::File::create(&path)?;
            writeln!(f, "# q = {}", fmt_float(grid.coord(iq)))?;
            writeln!(f, "p,w")?;
            for (ip, w) in field.column(iq).iter().enumerate() {
                writeln!(f, "{},{}", fmt_float(grid.coord(ip)), fmt_float(*w))?;
            }
            Some(path)
        }
        None => None,
    };
    Ok(SnapshotFiles { data, meta, slice })
}

fn nearest_node(grid: &GridSpec, x: f64) -> usize {
    let i = ((x + grid.half_width()) / grid.spacing()).round();
    (i.max(0.0) as usize).min(grid.n_points() - 1)
}

/// Loads a snapshot written by [`write_snapshot`] from its sidecar path.
pub fn read_snapshot(meta_path: &Path) -> Result<(SnapshotMeta, PhaseSpaceField)> {
    let text = fs::read_to_string(meta_path)?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
    let bytes = fs::read(meta_path.with_extension("f64"))?;
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes"))).collect();
    let grid = GridSpec::new(meta.n_points, meta.half_width)?;
    let field = PhaseSpaceField::from_values(grid, values)?;
    Ok((meta, field))
}
