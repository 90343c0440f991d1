use num_complex::Complex64;
use proptest::prelude::*;
use starkloop::model::{build_floquet_blocks, DissipationRates, OperatingPoint};
use starkloop::pss::{convergence_sequence, solve_pss, solve_pss_at_phase};
use starkloop::{MaxNorm, Op4};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Lindblad dissipator built from the rates directly, in matrix form.
fn dissipate(r: &DissipationRates, x: &Op4) -> Op4 {
    let mut out = Op4::zeros();
    for (to, from, g) in [
        (0, 1, r.gamma21),
        (1, 2, r.gamma32),
        (1, 3, r.gamma42),
        (2, 2, r.deph3),
        (3, 3, r.deph4),
    ] {
        let mut l = Op4::zeros();
        l[(to, from)] = c(g.sqrt());
        let ld = l.adjoint();
        out += l * x * ld - (ld * l * x + x * ld * l) * c(0.5);
    }
    out
}

fn comm(a: &Op4, b: &Op4) -> Op4 {
    a * b - b * a
}

/// Max residual of `i n w P_n = -i[H0,P_n] - i[H+,P_{n-1}] - i[H-,P_{n+1}] + D(P_n)`.
fn matrix_balance_residual(op: &OperatingPoint, n_max: usize) -> f64 {
    let sol = solve_pss(op, n_max).unwrap();
    let b = build_floquet_blocks(op);
    let zero = Op4::zeros();
    let get = |n: i32| *sol.harmonics.get(n).unwrap_or(&zero);
    let i = Complex64::i();
    let m = n_max as i32;
    let mut worst = 0.0f64;
    for n in (1 - m)..m {
        let p = get(n);
        let rhs = -(comm(&b.h0, &p) + comm(&b.hplus, &get(n - 1)) + comm(&b.hminus, &get(n + 1))) * i
            + dissipate(&op.rates, &p);
        let lhs = p * (i * n as f64 * op.omega_s_drive);
        worst = worst.max((lhs - rhs).max_norm());
    }
    worst
}

#[test]
fn harmonics_satisfy_matrix_form_balance() {
    for op in [OperatingPoint::nominal(), OperatingPoint::stress()] {
        let r = matrix_balance_residual(&op, 6);
        assert!(r < 1e-12, "{r:e}");
    }
}

#[test]
fn static_drive_gives_static_steady_state() {
    // Without the bias leg the Hamiltonian is static: only P^(0) survives.
    let op = OperatingPoint::nominal().with_theta(0.0);
    let sol = solve_pss(&op, 3).unwrap();
    for n in [1, 2, 3] {
        assert!(sol.harmonics.coeff(n).unwrap().max_norm() < 1e-14);
    }
    let p0 = sol.harmonics.coeff(0).unwrap();
    let b = build_floquet_blocks(&op);
    let l0 = -comm(&b.h0, p0) * Complex64::i() + dissipate(&op.rates, p0);
    assert!(l0.max_norm() < 1e-13);
}

#[test]
fn no_probe_leaves_ground_state() {
    let mut op = OperatingPoint::nominal();
    op.omega_p_rabi = 0.0;
    let sol = solve_pss(&op, 3).unwrap();
    let mut g = Op4::zeros();
    g[(0, 0)] = c(1.0);
    assert!((sol.harmonics.coeff(0).unwrap() - g).max_norm() < 1e-13);
}

#[test]
fn truncation_error_decays() {
    let e = convergence_sequence(&OperatingPoint::stress(), 8).unwrap();
    assert!(e[2] < 1e-7 && e[3] < 1e-11, "{e:?}");
    assert!(e.windows(2).all(|w| w[1] <= w[0].max(1e-15)));
}

fn arb_point() -> impl Strategy<Value = OperatingPoint> {
    (0.05..0.5f64, 0.3..2.0f64, 0.0..0.3f64, -0.3..0.3f64, -0.3..0.3f64, 0.5..12.0f64, 0.05..0.75f64).prop_map(
        |(p, cpl, s, dp, dc, w, th)| {
            let mut op = OperatingPoint::nominal();
            op.omega_p_rabi = p;
            op.omega_c_rabi = cpl;
            op.omega_s_rabi = s;
            op.delta_p = dp;
            op.delta_c = dc;
            op.omega_s_drive = w;
            op.theta = th;
            op
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_a_density_series(op in arb_point()) {
        let sol = solve_pss(&op, 4).unwrap();
        prop_assert!(sol.harmonics.trace_error() < 1e-12);
        prop_assert!(sol.harmonics.hermiticity_error() < 1e-11);
        prop_assert!(matrix_balance_residual(&op, 4) < 1e-11);
    }

    #[test]
    fn signal_phase_rotates_each_harmonic(op in arb_point(), phi in -6.0..6.0f64) {
        let base = solve_pss(&op, 3).unwrap();
        let moved = solve_pss_at_phase(&op, 3, phi).unwrap();
        for n in -3..=3i32 {
            let expect = base.harmonics.coeff(n).unwrap() * Complex64::from_polar(1.0, n as f64 * phi);
            prop_assert!((moved.harmonics.coeff(n).unwrap() - expect).max_norm() < 1e-12);
        }
    }
}
