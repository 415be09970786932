use proptest::prelude::*;

use kho_core::classical::step_classical;
use kho_core::observables::purity;
use kho_core::phase_space::{diffuse, l1_distance, make_coherent_wigner, mass, rotate};
use kho_core::quantum::{evolve_quantum, step_quantum};
use kho_core::{DiffusionParams, GridSpec, PhaseSpaceField, SystemParams};

fn grid() -> GridSpec {
    GridSpec::new(128, 8.0).unwrap()
}

fn coherent(eta: f64, center: (f64, f64)) -> (SystemParams, PhaseSpaceField) {
    let p = SystemParams::with_default_theta(2.0, eta).unwrap();
    let w = make_coherent_wigner(&p, &grid(), center).unwrap();
    (p, w)
}

/// A smooth, anisotropic, signed field well inside the domain.
fn lumpy(seed: (f64, f64, f64)) -> PhaseSpaceField {
    let (a, b, c) = seed;
    PhaseSpaceField::from_fn(grid(), |q, p| {
        let g1 = (-((q - a).powi(2) / 0.8 + (p + b).powi(2) / 0.3)).exp();
        let g2 = (-((q + b).powi(2) / 0.4 + (p - c).powi(2) / 1.1)).exp();
        g1 - 0.4 * g2 * (3.0 * q).cos()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_conserve_mass(
        eta in 0.5f64..0.7,
        dc in 0.0f64..0.05,
        q0 in -1.0f64..1.0,
        p0 in -1.0f64..1.0,
    ) {
        let (p, w) = coherent(eta, (q0, p0));
        let d = DiffusionParams::new(dc).unwrap();
        let before = mass(&w);
        let (q, _) = step_quantum(&w, &p, &d).unwrap();
        let (c, _) = step_classical(&w, &p, &d).unwrap();
        prop_assert!((mass(&q) - before).abs() < 1e-6);
        prop_assert!((mass(&c) - before).abs() < 1e-6);
    }

    #[test]
    fn diffusion_is_a_semigroup(d1 in 0.0f64..0.05, d2 in 0.0f64..0.05, seed in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let f = lumpy(seed);
        let two = diffuse(&diffuse(&f, &DiffusionParams::new(d1).unwrap()), &DiffusionParams::new(d2).unwrap());
        let one = diffuse(&f, &DiffusionParams::new(d1 + d2).unwrap());
        prop_assert!(l1_distance(&two, &one).unwrap() < 1e-8);
    }

    #[test]
    fn rotation_commutes_with_diffusion(theta in -3.2f64..3.2, dc in 0.0f64..0.05, seed in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let f = lumpy(seed);
        let d = DiffusionParams::new(dc).unwrap();
        let a = rotate(&diffuse(&f, &d), theta).unwrap();
        let b = diffuse(&rotate(&f, theta).unwrap(), &d);
        prop_assert!(l1_distance(&a, &b).unwrap() < 1e-8);
    }

    #[test]
    fn rotation_is_an_l2_isometry(theta in -3.2f64..3.2, seed in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let f = lumpy(seed);
        let r = rotate(&f, theta).unwrap();
        prop_assert!((r.l2_norm_sq() / f.l2_norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rotation_inverts(theta in -3.2f64..3.2, seed in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let f = lumpy(seed);
        let back = rotate(&rotate(&f, theta).unwrap(), -theta).unwrap();
        prop_assert!(l1_distance(&back, &f).unwrap() < 1e-8);
    }

    #[test]
    fn diffused_coherent_purity(eta in 0.5f64..0.7, dc in 0.0f64..0.1) {
        let (p, w) = coherent(eta, (0.0, 0.0));
        let out = diffuse(&w, &DiffusionParams::new(dc).unwrap());
        let h = p.hbar_eff();
        prop_assert!((purity(&out, &p) - h / (h + 4.0 * dc)).abs() < 1e-4);
    }
}

#[test]
fn initial_coherent_purity_is_one() {
    for eta in [0.5, 0.3125, 0.125] {
        let p = SystemParams::with_default_theta(2.0, eta).unwrap();
        let w = make_coherent_wigner(&p, &GridSpec::default_production(), (0.0, 0.0)).unwrap();
        assert!((purity(&w, &p) - 1.0).abs() < 1e-6, "eta = {eta}");
    }
}

#[test]
fn unitary_evolution_keeps_purity() {
    let p = SystemParams::with_default_theta(2.0, 0.5).unwrap();
    let wide = GridSpec::new(1024, 8.0 * std::f64::consts::PI).unwrap();
    let w = make_coherent_wigner(&p, &wide, (0.0, 0.0)).unwrap();
    let d = DiffusionParams::new(0.0).unwrap();
    let mut drift: f64 = 0.0;
    evolve_quantum(&w, &p, &d, 8, |_, f| drift = drift.max((purity(f, &p) - 1.0).abs())).unwrap();
    assert!(drift < 1e-6, "{drift}");
}
