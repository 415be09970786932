//! Scalar diagnostics of the evolved distributions and of the parameter
//! space: purity and Renyi-2 entropy, Wigner negativity, the expansion rate
//! at the hyperbolic origin, the log-time, the composite scaling parameters,
//! entropy slope fits and the quantum-classical entropy gap.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{DiffusionParams, PhaseSpaceField, SystemParams, BOUNDARY_LIMIT};

/// `2 pi hbar * integral W^2`, equal to `Tr rho^2` for a Wigner function.
/// Applied unchanged to Liouville densities so both are comparable.
pub fn purity(field: &PhaseSpaceField, params: &SystemParams) -> f64 {
    2.0 * PI * params.hbar_eff() * field.l2_norm_sq()
}

/// Renyi-2 entropy in nats.
pub fn renyi_entropy(field: &PhaseSpaceField, params: &SystemParams) -> f64 {
    -purity(field, params).ln()
}

/// `integral (|W| - W)`: twice the negative volume; zero iff `W >= 0`.
pub fn negativity(field: &PhaseSpaceField) -> f64 {
    field.grid().cell_area() * field.values().iter().map(|v| v.abs() - v).sum::<f64>()
}

/// One-period tangent map at the origin: rotation after the linearized kick
/// `dp' = dp + K dq`.
pub fn tangent_map(params: &SystemParams) -> [[f64; 2]; 2] {
    let (s, c) = params.theta().sin_cos();
    let k = params.kick_strength();
    [[c + s * k, s], [-s + c * k, c]]
}

/// Logarithm of the expanding eigenvalue of the tangent map at the origin,
/// in nats per kick.
pub fn lyapunov_origin(params: &SystemParams) -> Result<f64> {
    let m = tangent_map(params);
    let trace = m[0][0] + m[1][1];
    if trace.abs() <= 2.0 {
        return Err(Error::EllipticOrigin { trace_abs: trace.abs() });
    }
    let t = trace.abs();
    Ok(((t + (t * t - 4.0).sqrt()) / 2.0).ln())
}

/// `n_E = ln(1 / hbar) / (2 lambda)` in kicks.
pub fn log_time_kicks(params: &SystemParams) -> Result<f64> {
    let lambda = lyapunov_origin(params)?;
    Ok((1.0 / params.hbar_eff()).ln() / (2.0 * lambda))
}

/// [`log_time_kicks`] rounded to the nearest kick, at least 1.
pub fn log_time_kick_index(params: &SystemParams) -> Result<usize> {
    Ok((log_time_kicks(params)?.round() as usize).max(1))
}

/// `(chi', chi) = (hbar^2 / D, hbar^2 K / 4 D^(3/2))`; infinite when `D = 0`.
pub fn composite_params(params: &SystemParams, d: &DiffusionParams) -> (f64, f64) {
    let h2 = params.hbar_eff().powi(2);
    let dc = d.d_const();
    if dc == 0.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    (h2 / dc, h2 * params.kick_strength() / (4.0 * dc.powf(1.5)))
}

/// Per-kick diagnostics of a paired quantum/classical evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub n: usize,
    pub s_quantum: f64,
    pub s_classical: f64,
    pub purity_q: f64,
    pub purity_cl: f64,
    pub negativity: f64,
    pub l1_dist: f64,
    pub boundary_mass: f64,
}

impl EntropyRecord {
    pub fn from_fields(
        n: usize,
        wigner: &PhaseSpaceField,
        liouville: &PhaseSpaceField,
        params: &SystemParams,
    ) -> Result<Self> {
        let purity_q = purity(wigner, params);
        let purity_cl = purity(liouville, params);
        Ok(Self {
            n,
            s_quantum: -purity_q.ln(),
            s_classical: -purity_cl.ln(),
            purity_q,
            purity_cl,
            negativity: negativity(wigner),
            l1_dist: crate::phase_space::l1_distance(wigner, liouville)?,
            boundary_mass: wigner.boundary_mass().max(liouville.boundary_mass()),
        })
    }

    pub fn entropy(&self, which: Which) -> f64 {
        match which {
            Which::Quantum => self.s_quantum,
            Which::Classical => self.s_classical,
        }
    }
}

/// Selects the quantum or classical half of a paired record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Quantum,
    Classical,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    records: Vec<EntropyRecord>,
}

impl EntropySeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; kick indices must increase strictly.
    pub fn push(&mut self, record: EntropyRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.n <= last.n {
                return Err(Error::InvalidParameter {
                    name: "n",
                    reason: format!("kick {} does not follow {}", record.n, last.n),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EntropyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn at_kick(&self, n: usize) -> Option<&EntropyRecord> {
        self.records.iter().find(|r| r.n == n)
    }

    /// Builds a series from bare entropy values at kicks `0, 1, 2, ...`;
    /// mostly useful for synthetic tests.
    pub fn from_entropies(quantum: &[f64], classical: &[f64]) -> Self {
        let records = quantum
            .iter()
            .zip(classical)
            .enumerate()
            .map(|(n, (&sq, &sc))| EntropyRecord {
                n,
                s_quantum: sq,
                s_classical: sc,
                purity_q: (-sq).exp(),
                purity_cl: (-sc).exp(),
                negativity: 0.0,
                l1_dist: 0.0,
                boundary_mass: 0.0,
            })
            .collect();
        Self { records }
    }

    fn position(&self, n: usize) -> Option<usize> {
        self.records.iter().position(|r| r.n == n)
    }
}

/// Inclusive range of kick indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KickRange {
    pub start: usize,
    pub end: usize,
}

impl KickRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// nats per kick
    pub gamma: f64,
    /// `None` when the series is constant over the window.
    pub r2: Option<f64>,
}

/// Least-squares slope of the entropy over `window`.
pub fn fit_slope(series: &EntropySeries, which: Which, window: KickRange) -> Result<SlopeFit> {
    let bad = || Error::Window { start: window.start, end: window.end, len: series.len() };
    let (i0, i1) = match (series.position(window.start), series.position(window.end)) {
        (Some(a), Some(b)) if b >= a + 2 => (a, b),
        _ => return Err(bad()),
    };
    let pts: Vec<(f64, f64)> = series.records[i0..=i1].iter().map(|r| (r.n as f64, r.entropy(which))).collect();
    let (slope, r2) = least_squares(&pts);
    Ok(SlopeFit { gamma: slope, r2 })
}

/// Slope and coefficient of determination; r2 is `None` for a flat series.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, Option<f64>) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    if syy <= 1e-30 * (1.0 + my * my) {
        return (0.0, None);
    }
    (slope, Some(sxy * sxy / (sxx * syy)))
}

/// Thresholds of the linear-regime detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRule {
    /// The quadratic onset ends at the first kick whose backward second
    /// difference is below this fraction of its first difference. Concave
    /// growth ends it immediately.
    pub curvature_ratio: f64,
    /// Growth is saturated once a step falls below this fraction of the
    /// largest step since the window start.
    pub saturation_ratio: f64,
    pub boundary_limit: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self { curvature_ratio: 0.2, saturation_ratio: 0.75, boundary_limit: BOUNDARY_LIMIT }
    }
}

pub fn auto_window(series: &EntropySeries, which: Which) -> Result<KickRange> {
    auto_window_with(series, which, &WindowRule::default())
}

/// Picks the linear-growth window: after the initial quadratic onset, before
/// saturation or the first record with excessive boundary mass.
pub fn auto_window_with(series: &EntropySeries, which: Which, rule: &WindowRule) -> Result<KickRange> {
    let recs = series.records();
    let usable = recs
        .iter()
        .position(|r| !(r.boundary_mass < rule.boundary_limit) || !r.entropy(which).is_finite())
        .unwrap_or(recs.len());
    if usable < 3 {
        return Err(Error::Window { start: 0, end: usable.saturating_sub(1), len: recs.len() });
    }
    let s: Vec<f64> = recs[..usable].iter().map(|r| r.entropy(which)).collect();
    let last = usable - 1;

    let onset = (2..=last).find(|&i| {
        let d1 = s[i] - s[i - 1];
        let d2 = s[i] - 2.0 * s[i - 1] + s[i - 2];
        d2 < rule.curvature_ratio * d1
    });
    let mut start = match onset {
        Some(2) => 0,
        Some(i) => i,
        None => last.saturating_sub(2),
    };

    let mut end = last;
    let mut peak = f64::NEG_INFINITY;
    for i in (start + 1)..=last {
        let step = s[i] - s[i - 1];
        if i >= start + 2 && step < rule.saturation_ratio * peak {
            end = i - 1;
            break;
        }
        peak = peak.max(step);
    }
    if end < start + 2 {
        end = end.max(2);
        start = end - 2;
    }
    Ok(KickRange::new(recs[start].n, recs[end].n))
}

/// `|S_q - S_cl| / S_q` at kick `n`; undefined while `S_q` is still ~0.
pub fn sigma_measure(series: &EntropySeries, at_kick: usize) -> Result<f64> {
    let r = series.at_kick(at_kick).ok_or(Error::Undefined("no record at requested kick"))?;
    if !(r.s_quantum > 1e-12) {
        return Err(Error::Undefined("quantum entropy vanishes"));
    }
    Ok((r.s_quantum - r.s_classical).abs() / r.s_quantum)
}

/// Parameters and fitted growth rates of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub eta: f64,
    pub hbar_eff: f64,
    pub d_const: f64,
    pub kick_strength: f64,
    pub chi_prime: f64,
    pub chi: f64,
    pub gamma_q: f64,
    pub gamma_cl: f64,
    pub fit_r2_q: Option<f64>,
    pub fit_r2_cl: Option<f64>,
    pub n_e: usize,
    pub sigma_at_ne: Option<f64>,
}

impl ScalingPoint {
    /// True when the stored composite parameters follow from `(eta, K, D)`.
    pub fn is_consistent(&self) -> bool {
        let h = 2.0 * self.eta * self.eta;
        let h2 = h * h;
        let chi_prime = h2 / self.d_const;
        let chi = h2 * self.kick_strength / (4.0 * self.d_const.powf(1.5));
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.hbar_eff, h) && close(self.chi_prime, chi_prime) && close(self.chi, chi)
    }
}

/// Log-log least squares exponent of `y ~ x^a`, with r2.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<(f64, Option<f64>)> {
    fit_power_law_grouped(&[(xs.to_vec(), ys.to_vec())])
}

/// Common exponent of `y ~ c_g x^a` across groups with separate prefactors
/// (one intercept per group). Groups with fewer than two points are ignored.
pub fn fit_power_law_grouped(groups: &[(Vec<f64>, Vec<f64>)]) -> Option<(f64, Option<f64>)> {
    let mut centered = Vec::new();
    for (xs, ys) in groups {
        let pts: Vec<(f64, f64)> =
            xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
        if pts.len() < 2 {
            continue;
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        centered.extend(pts.iter().map(|p| (p.0 - mx, p.1 - my)));
    }
    if centered.len() < 2 {
        return None;
    }
    let sxx: f64 = centered.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = centered.iter().map(|p| p.0 * p.1).sum();
    let syy: f64 = centered.iter().map(|p| p.1 * p.1).sum();
    if sxx == 0.0 {
        return None;
    }
    let r2 = if syy > 0.0 { Some(sxy * sxy / (sxx * syy)) } else { None };
    Some((sxy / sxx, r2))
}

/// Spread statistics behind the scaling-collapse claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Largest `|g1 - g2| / max(g1, g2)` over pairs from different eta whose
    /// chi' agree within the ratio band.
    pub spread_at_matched_chi_prime: f64,
    pub pairs_matched_chi_prime: usize,
    /// Same statistic for pairs whose D agree within the ratio band.
    pub spread_at_matched_d: f64,
    pub pairs_matched_d: usize,
}

/// Compares growth rates across eta at matched chi' and at matched D.
/// `ratio_band` is the accepted ratio interval, e.g. `(0.8, 1.25)`.
pub fn collapse_report(points: &[ScalingPoint], which: Which, ratio_band: (f64, f64)) -> CollapseReport {
    let gamma = |p: &ScalingPoint| match which {
        Which::Quantum => p.gamma_q,
        Which::Classical => p.gamma_cl,
    };
    let in_band = |a: f64, b: f64| {
        let r = a / b;
        r >= ratio_band.0 && r <= ratio_band.1
    };
    let mut report = CollapseReport {
        spread_at_matched_chi_prime: 0.0,
        pairs_matched_chi_prime: 0,
        spread_at_matched_d: 0.0,
        pairs_matched_d: 0,
    };
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if a.eta == b.eta {
                continue;
            }
            let (ga, gb) = (gamma(a), gamma(b));
            let denom = ga.abs().max(gb.abs());
            let spread = if denom > 0.0 { (ga - gb).abs() / denom } else { 0.0 };
            if in_band(a.chi_prime, b.chi_prime) {
                report.pairs_matched_chi_prime += 1;
                report.spread_at_matched_chi_prime = report.spread_at_matched_chi_prime.max(spread);
            }
            if in_band(a.d_const, b.d_const) {
                report.pairs_matched_d += 1;
                report.spread_at_matched_d = report.spread_at_matched_d.max(spread);
            }
        }
    }
    report
}
