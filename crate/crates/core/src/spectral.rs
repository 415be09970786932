//! Line-wise FFT machinery shared by the phase-space operations.
//!
//! Fields are stored row-major with q fastest: `values[ip * n + iq]`. A "row"
//! is therefore a q-line at fixed p and a "column" a p-line at fixed q.
//! Column passes transpose into a scratch buffer so every FFT runs on
//! contiguous memory.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct LinePlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl LinePlan {
    /// Unnormalized forward transform in place.
    pub fn fft(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }
}

pub(crate) fn plan(n: usize) -> LinePlan {
    static CACHE: OnceLock<Mutex<HashMap<usize, LinePlan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            LinePlan { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
        })
        .clone()
}

/// Angular wavenumber of FFT bin `k` on a periodic line of length `2 * half_width`.
/// The Nyquist bin is reported with a negative sign.
#[inline]
pub(crate) fn wavenumber(k: usize, n: usize, half_width: f64) -> f64 {
    let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    std::f64::consts::PI * signed / half_width
}

/// Transforms every row, lets `multiply(row, spectrum)` act on the spectrum in
/// place, and stores the real part of the inverse transform.
///
/// Taking the real part symmetrizes the multiplier, which only matters for the
/// unpaired Nyquist bin.
pub(crate) fn filter_rows<F>(values: &mut [f64], n: usize, multiply: F)
where
    F: Fn(usize, &mut [Complex64]) + Sync,
{
    let plan = plan(n);
    let scale = 1.0 / n as f64;
    values.par_chunks_mut(n).enumerate().for_each_init(
        || {
            (
                vec![Complex64::new(0.0, 0.0); n],
                vec![
                    Complex64::new(0.0, 0.0);
                    plan.forward.get_inplace_scratch_len().max(plan.inverse.get_inplace_scratch_len())
                ],
            )
        },
        |(buf, scratch), (row, line)| {
            for (b, &v) in buf.iter_mut().zip(line.iter()) {
                *b = Complex64::new(v, 0.0);
            }
            plan.forward.process_with_scratch(buf, scratch);
            multiply(row, buf);
            plan.inverse.process_with_scratch(buf, scratch);
            for (v, b) in line.iter_mut().zip(buf.iter()) {
                *v = b.re * scale;
            }
        },
    );
}

/// Same as [`filter_rows`] but along columns (fixed q, varying p).
pub(crate) fn filter_cols<F>(values: &mut [f64], n: usize, multiply: F)
where
    F: Fn(usize, &mut [Complex64]) + Sync,
{
    let mut t = transpose(values, n);
    filter_rows(&mut t, n, multiply);
    transpose_into(&t, values, n);
}

/// Fraction of the spectral energy of all rows carried by wavenumbers whose
/// magnitude exceeds `cutoff` times the Nyquist wavenumber.
pub(crate) fn row_tail_fraction(values: &[f64], n: usize, cutoff: f64) -> f64 {
    let plan = plan(n);
    let (tail, total) = values
        .par_chunks(n)
        .map_init(
            || vec![Complex64::new(0.0, 0.0); n],
            |buf, line| {
                for (b, &v) in buf.iter_mut().zip(line.iter()) {
                    *b = Complex64::new(v, 0.0);
                }
                plan.fft(buf);
                let mut tail = 0.0;
                let mut total = 0.0;
                for (k, c) in buf.iter().enumerate() {
                    let signed = if k < n / 2 { k as f64 } else { n as f64 - k as f64 };
                    let power = c.norm_sqr();
                    total += power;
                    if signed > cutoff * (n / 2) as f64 {
                        tail += power;
                    }
                }
                (tail, total)
            },
        )
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Applies `map(row, line)` to every row of `values`, in parallel.
pub(crate) fn map_cols<F>(values: &mut [f64], n: usize, map: F)
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let t = transpose(values, n);
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).zip(t.par_chunks(n)).enumerate().for_each(|(col, (dst, src))| map(col, src, dst));
    transpose_into(&out, values, n);
}

pub(crate) fn transpose(values: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    transpose_into(values, &mut out, n);
    out
}

fn transpose_into(src: &[f64], dst: &mut [f64], n: usize) {
    const BLOCK: usize = 32;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (0..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                for j in bj..(bj + BLOCK).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Multiplies a spectrum by `exp(-i k s)`, translating the line by `+s`.
#[inline]
pub(crate) fn shift_spectrum(spectrum: &mut [Complex64], half_width: f64, shift: f64) {
    let n = spectrum.len();
    for (k, c) in spectrum.iter_mut().enumerate() {
        let kappa = wavenumber(k, n, half_width);
        *c *= Complex64::from_polar(1.0, -kappa * shift);
    }
}
