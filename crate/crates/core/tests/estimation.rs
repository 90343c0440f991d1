use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use starkloop::estimation::{
    estimate_phase, field_to_rabi, invert_response, log_sensitivity, monte_carlo_rmse, rabi_to_field,
    rmse_amp_theory, rmse_phase_theory, wrap_phase, McScenario, ResponseMap,
};

fn power_law_map(p: f64) -> ResponseMap {
    let grid: Vec<f64> = (1..=40).map(|k| k as f64 * 0.01).collect();
    let mags = grid.iter().map(|w| 0.3 * w.powf(p)).collect();
    ResponseMap::from_samples(grid, mags, 0.2).unwrap()
}

#[test]
fn theory_curves() {
    assert!((rmse_phase_theory(1, 50.0).unwrap() - 0.1).abs() < 1e-15);
    assert!((rmse_phase_theory(2, 50.0).unwrap() - 0.05).abs() < 1e-15);
    assert!((rmse_amp_theory(-0.5, 50.0).unwrap() - 0.2).abs() < 1e-15);
    assert!(rmse_amp_theory(0.0, 50.0).is_err());
}

#[test]
fn field_conversion_round_trip() {
    let a = rabi_to_field(0.12, 2.0, 1.0).unwrap();
    assert!((a - 0.12).abs() < 1e-15);
    assert!((field_to_rabi(a, 2.0, 1.0).unwrap() - 0.12).abs() < 1e-15);
}

#[test]
fn power_law_sensitivity_is_its_exponent() {
    for p in [0.5, 1.0, 2.0] {
        let s = log_sensitivity(&power_law_map(p), 0.2).unwrap();
        assert!((s - p).abs() < 2e-3 * p, "p = {p}: s = {s}");
    }
}

#[test]
fn monte_carlo_is_reproducible_and_seed_dependent() {
    let map = power_law_map(1.0);
    let z = Complex64::from_polar(0.06, 0.4);
    let sc = McScenario {
        phasor: z,
        reference: z,
        snr_magnitude: z.norm(),
        omega_true: 0.2,
        sensitivity: 1.0,
    };
    let a = monte_carlo_rmse(&sc, &map, &[1e3, 1e4], 2000, 3).unwrap();
    let b = monte_carlo_rmse(&sc, &map, &[1e3, 1e4], 2000, 3).unwrap();
    let c = monte_carlo_rmse(&sc, &map, &[1e3, 1e4], 2000, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.rmse_phase, c.rmse_phase);
    for k in 0..2 {
        assert!((a.rmse_phase[k] / a.theory_phase[k] - 1.0).abs() < 0.1);
        assert!((a.rmse_amp_rel[k] / a.theory_amp_rel[k] - 1.0).abs() < 0.1);
    }
}

proptest! {
    #[test]
    fn wrapped_phase_is_congruent_and_in_range(x in -100.0..100.0f64) {
        let y = wrap_phase(x);
        prop_assert!(y > -PI && y <= PI);
        let k = (x - y) / (2.0 * PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn noiseless_phase_is_recovered(phi in -3.0..3.0f64, mag in 1e-6..1.0f64, arg0 in -3.0..3.0f64) {
        let z0 = Complex64::from_polar(mag, arg0);
        let est = estimate_phase(z0 * Complex64::from_polar(1.0, phi), z0, 0.0, 1).unwrap();
        prop_assert!(wrap_phase(est - phi).abs() < 1e-12);
    }

    #[test]
    fn inversion_undoes_the_map(w in 0.011..0.399f64, p in 0.5..2.0f64) {
        let map = power_law_map(p);
        let m = map.interpolate(w).unwrap();
        let inv = invert_response(&map, m).unwrap();
        prop_assert!(!inv.out_of_range);
        prop_assert!((inv.omega - w).abs() < 1e-8);
    }
}
