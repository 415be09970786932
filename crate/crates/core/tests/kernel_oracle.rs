use std::f64::consts::PI;

use kho_core::classical::step_classical;
use kho_core::kernel_oracle::{
    apply_kernel_step, cubic_profile, kernel_approx, kernel_classical, kernel_quantum, mu_gaussian_variance,
    KernelEvalPoint, KernelKind, Quadrature,
};
use kho_core::observables::composite_params;
use kho_core::phase_space::{l1_distance, make_coherent_wigner, GridSpec};
use kho_core::quantum::step_quantum;
use kho_core::{DiffusionParams, Error, SystemParams};

fn params(k: f64, eta: f64) -> SystemParams {
    SystemParams::with_default_theta(k, eta).unwrap()
}

fn diff(d: f64) -> DiffusionParams {
    DiffusionParams::new(d).unwrap()
}

/// Integrates a kernel over the target plane around its classical peak with
/// the trapezoid rule on a box of `+-half` scaled units.
fn target_integral(
    kernel: impl Fn(&KernelEvalPoint) -> f64,
    source: (f64, f64),
    p: &SystemParams,
    d: &DiffusionParams,
    half: f64,
    samples: usize,
) -> f64 {
    // the position factor is a normalized Gaussian, so only the momentum
    // integral needs resolving; integrate it on the line x = 0
    let h = 2.0 * half / (samples - 1) as f64;
    let w = 2.0 * d.d_const().sqrt();
    let mut sum = 0.0;
    for j in 0..samples {
        let y = -half + j as f64 * h;
        let pt = KernelEvalPoint::from_scaled(source, 0.0, y, p, d).unwrap();
        let end = if j == 0 || j == samples - 1 { 0.5 } else { 1.0 };
        sum += end * kernel(&pt);
    }
    // position integral of exp(-x^2) over scaled x is sqrt(pi); dq = w dx
    sum * h * w * w * PI.sqrt()
}

#[test]
fn classical_kernel_peak_value() {
    let p = params(2.0, 0.125);
    let d = diff(1e-3);
    let pt = KernelEvalPoint::from_scaled((0.3, -0.2), 0.0, 0.0, &p, &d).unwrap();
    let v = kernel_classical(&pt, &p, &d).unwrap();
    assert!((v - 79.577).abs() < 1e-3, "{v}");
}

#[test]
fn classical_kernel_without_kick_peaks_at_source() {
    let p = params(0.0, 0.125);
    let d = diff(1e-3);
    let pt = KernelEvalPoint::new((0.4, 0.9), (0.4, 0.9)).unwrap();
    assert!((kernel_classical(&pt, &p, &d).unwrap() - 1.0 / (4.0 * PI * 1e-3)).abs() < 1e-12);
}

#[test]
fn kernels_reject_zero_diffusion() {
    let p = params(2.0, 0.125);
    let d = diff(0.0);
    let pt = KernelEvalPoint::new((0.0, 0.0), (0.0, 0.0)).unwrap();
    assert_eq!(kernel_classical(&pt, &p, &d), Err(Error::ZeroDiffusion));
    assert_eq!(kernel_quantum(&pt, &p, &d, Quadrature::default()), Err(Error::ZeroDiffusion));
    assert_eq!(kernel_approx(&pt, &p, &d), Err(Error::ZeroDiffusion));
}

#[test]
fn eval_point_rejects_non_finite_coordinates() {
    assert!(KernelEvalPoint::new((f64::NAN, 0.0), (0.0, 0.0)).is_err());
}

#[test]
fn all_kernels_are_normalized() {
    let p = params(2.0, 0.125);
    let d = diff(1e-3);
    let source = (0.7, 0.1);
    let cl = target_integral(|pt| kernel_classical(pt, &p, &d).unwrap(), source, &p, &d, 8.0, 4001);
    let ap = target_integral(|pt| kernel_approx(pt, &p, &d).unwrap(), source, &p, &d, 8.0, 4001);
    // the quantum kernel spreads further in momentum than the classical one
    let qu =
        target_integral(|pt| kernel_quantum(pt, &p, &d, Quadrature::default()).unwrap(), source, &p, &d, 50.0, 10001);
    for (name, v) in [("classical", cl), ("approx", ap), ("quantum", qu)] {
        assert!((v - 1.0).abs() < 1e-6, "{name}: {v}");
    }
}

#[test]
fn mu_weight_variance_is_half_chi_prime() {
    let p = params(2.0, 0.125);
    let d = diff(9e-5);
    let (chi_prime, _) = composite_params(&p, &d);
    let var = mu_gaussian_variance(&p, &d).unwrap();
    assert!((var - chi_prime / 2.0).abs() < 1e-12 * var);
    assert!((var - 0.03125f64.powi(2) / 1.8e-4).abs() < 1e-12 * var);
}

#[test]
fn quantum_kernel_without_kick_is_classical() {
    let p = params(0.0, 0.125);
    let d = diff(1e-3);
    let peak = 1.0 / (4.0 * PI * 1e-3);
    for &(x, y) in &[(0.0, 0.0), (0.3, -1.1), (-1.0, 2.0), (0.5, 0.25)] {
        let pt = KernelEvalPoint::from_scaled((0.2, -0.4), x, y, &p, &d).unwrap();
        let cl = kernel_classical(&pt, &p, &d).unwrap();
        for quad in [Quadrature::default(), Quadrature::Auto, Quadrature::GaussHermite { degree: 64 }] {
            let qu = kernel_quantum(&pt, &p, &d, quad).unwrap();
            assert!((qu - cl).abs() < 1e-8 * peak, "{quad:?} at ({x}, {y}): {qu} vs {cl}");
        }
    }
}

#[test]
fn automatic_rule_matches_trapezoid() {
    let p = params(2.0, 0.125);
    let d = diff(1e-3);
    let peak = 1.0 / (4.0 * PI * 1e-3);
    for &(x, y) in &[(0.0, 0.0), (0.2, -0.8), (0.0, 1.5), (0.0, -2.5)] {
        let pt = KernelEvalPoint::from_scaled((1.1, 0.0), x, y, &p, &d).unwrap();
        let a = kernel_quantum(&pt, &p, &d, Quadrature::Auto).unwrap();
        let t = kernel_quantum(&pt, &p, &d, Quadrature::default()).unwrap();
        assert!((a - t).abs() < 1e-8 * peak, "({x}, {y}): {a} vs {t}");
    }
}

#[test]
fn trapezoid_rejects_undersampled_phase() {
    let p = params(2.0, 0.125);
    let d = diff(1e-6);
    let pt = KernelEvalPoint::new((1.0, 3.0), (1.0, 0.0)).unwrap();
    let quad = Quadrature::Trapezoid { half_range_sigmas: 6.0, samples: 64 };
    assert!(matches!(kernel_quantum(&pt, &p, &d, quad), Err(Error::Resolution { .. })));
}

#[test]
fn strong_quantum_regime_departs_from_classical() {
    let p = params(2.0, 0.125);
    let d = diff(9e-5);
    let (_, chi) = composite_params(&p, &d);
    assert!((chi - 571.0).abs() < 5.0, "{chi}");
    let peak = 1.0 / (4.0 * PI * 9e-5);
    let mut worst: f64 = 0.0;
    for i in 0..21 {
        let y = -3.0 + 0.3 * i as f64;
        let pt = KernelEvalPoint::from_scaled((1.0, 0.0), 0.0, y, &p, &d).unwrap();
        let qu = kernel_quantum(&pt, &p, &d, Quadrature::default()).unwrap();
        let cl = kernel_classical(&pt, &p, &d).unwrap();
        worst = worst.max((qu - cl).abs() / peak);
    }
    assert!(worst > 0.1, "max relative departure {worst}");
}

#[test]
fn profile_values() {
    assert_eq!(cubic_profile(0.0), 0.0);
    assert!((cubic_profile(1.0) - 1.0 / 12.0).abs() < 1e-15);
}

#[test]
fn approx_without_quantum_correction_is_classical() {
    let p = SystemParams::from_hbar(2.0, 1e-12, PI / 3.0).unwrap();
    let d = diff(1e-3);
    let pt = KernelEvalPoint::from_scaled((0.9, 0.0), 0.3, 0.7, &p, &d).unwrap();
    let a = kernel_approx(&pt, &p, &d).unwrap();
    let c = kernel_classical(&pt, &p, &d).unwrap();
    assert!((a - c).abs() < 1e-12 * c);
}

/// Points on the classical ridge around a source where `sin q' = 1`.
fn ridge(p: &SystemParams, d: &DiffusionParams) -> Vec<KernelEvalPoint> {
    (0..25).map(|i| KernelEvalPoint::from_scaled((PI / 2.0, 0.2), 0.0, -2.4 + 0.2 * i as f64, p, d).unwrap()).collect()
}

fn max_discrepancy(p: &SystemParams, d: &DiffusionParams) -> f64 {
    let peak = 1.0 / (4.0 * PI * d.d_const());
    ridge(p, d)
        .iter()
        .map(|pt| {
            let q = kernel_quantum(pt, p, d, Quadrature::default()).unwrap();
            let a = kernel_approx(pt, p, d).unwrap();
            (q - a).abs() / peak
        })
        .fold(0.0, f64::max)
}

#[test]
fn approx_matches_quantum_near_unit_chi() {
    let p = SystemParams::from_hbar(2.0, 2.0 * 0.0256f64.powi(2), PI / 3.0).unwrap();
    let d = diff(9e-5);
    let (_, chi) = composite_params(&p, &d);
    assert!((chi - 1.0).abs() < 0.01, "{chi}");
    for pt in ridge(&p, &d) {
        let (_, y) = pt.scaled(&p, &d);
        if y.abs() > 1.0 {
            continue;
        }
        let q = kernel_quantum(&pt, &p, &d, Quadrature::default()).unwrap();
        let a = kernel_approx(&pt, &p, &d).unwrap();
        assert!(((q - a) / a).abs() < 0.05, "y = {y}: {q} vs {a}");
    }
}

#[test]
fn approx_error_is_second_order_in_chi() {
    let p = SystemParams::from_hbar(2.0, 0.03125, PI / 3.0).unwrap();
    let d1 = diff(0.018);
    let d2 = diff(0.018 * 2f64.powf(2.0 / 3.0));
    let (_, chi1) = composite_params(&p, &d1);
    let (_, chi2) = composite_params(&p, &d2);
    assert!((chi1 / chi2 - 2.0).abs() < 1e-12);
    let ratio = max_discrepancy(&p, &d1) / max_discrepancy(&p, &d2);
    assert!((ratio - 4.0).abs() < 1.0, "chi = {chi1}, ratio = {ratio}");
}

#[test]
fn first_order_term_matches_chi_derivative() {
    // chi grows like hbar^2 at fixed D, so a small hbar probes the slope
    let d = diff(1e-3);
    let p = SystemParams::from_hbar(2.0, 4e-4, PI / 3.0).unwrap();
    let (_, chi) = composite_params(&p, &d);
    for pt in ridge(&p, &d) {
        let (_, y) = pt.scaled(&p, &d);
        if cubic_profile(y).abs() < 0.05 {
            continue;
        }
        let cl = kernel_classical(&pt, &p, &d).unwrap();
        let numeric = (kernel_quantum(&pt, &p, &d, Quadrature::default()).unwrap() - cl) / (chi * cl);
        let analytic = (kernel_approx(&pt, &p, &d).unwrap() - cl) / (chi * cl);
        assert!(numeric.signum() == analytic.signum(), "y = {y}: {numeric} vs {analytic}");
        assert!((numeric - analytic).abs() < 0.02 * analytic.abs(), "y = {y}: {numeric} vs {analytic}");
    }
}

fn coarse() -> GridSpec {
    GridSpec::new(128, 2.0).unwrap()
}

#[test]
fn oracle_rejects_large_grids() {
    let p = params(2.0, 0.125);
    let grid = GridSpec::new(512, 4.0).unwrap();
    let w = make_coherent_wigner(&p, &grid, (0.0, 0.0)).unwrap();
    assert!(matches!(apply_kernel_step(&w, &p, &diff(1e-3), KernelKind::Classical), Err(Error::GridTooLarge { .. })));
}

#[test]
fn classical_engine_matches_oracle() {
    let p = params(2.0, 0.125);
    let d = diff(1e-3);
    let w = make_coherent_wigner(&p, &coarse(), (0.0, 0.0)).unwrap();
    let oracle = apply_kernel_step(&w, &p, &d, KernelKind::Classical).unwrap();
    let (engine, _) = step_classical(&w, &p, &d).unwrap();
    let l1 = l1_distance(&engine, &oracle).unwrap();
    assert!(l1 < 1e-3, "{l1}");
}

#[test]
fn quantum_engine_matches_oracle() {
    let p = params(2.0, 0.125);
    for dc in [1e-4, 9e-5, 1e-3] {
        let d = diff(dc);
        let w = make_coherent_wigner(&p, &coarse(), (0.0, 0.0)).unwrap();
        let oracle = apply_kernel_step(&w, &p, &d, KernelKind::Quantum).unwrap();
        let (engine, _) = step_quantum(&w, &p, &d).unwrap();
        let l1 = l1_distance(&engine, &oracle).unwrap();
        assert!(l1 < 1e-3, "D = {dc}: {l1}");
    }
}

#[test]
fn approx_step_tracks_quantum_step_at_small_chi() {
    let p = params(2.0, 0.125);
    let d = diff(0.0288);
    let (_, chi) = composite_params(&p, &d);
    assert!((chi - 0.1).abs() < 0.01, "{chi}");
    let w = make_coherent_wigner(&p, &coarse(), (0.0, 0.0)).unwrap();
    let q = apply_kernel_step(&w, &p, &d, KernelKind::Quantum).unwrap();
    let a = apply_kernel_step(&w, &p, &d, KernelKind::Approx).unwrap();
    let l1 = l1_distance(&q, &a).unwrap();
    assert!(l1 < 1e-2, "{l1}");
}
