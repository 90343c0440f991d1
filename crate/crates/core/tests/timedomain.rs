use num_complex::Complex64;
use starkloop::model::OperatingPoint;
use starkloop::pss::solve_pss;
use starkloop::timedomain::{
    demodulate, integrate_master, stroboscopic_state, IntegrationWindow, Scheme,
};
use starkloop::Op4;

fn undriven() -> OperatingPoint {
    let mut op = OperatingPoint::nominal();
    op.omega_p_rabi = 0.0;
    op.omega_c_rabi = 0.0;
    op.delta_p = 0.7;
    op
}

fn short() -> IntegrationWindow {
    IntegrationWindow {
        burn_in_periods: 1,
        eval_periods: 2,
        samples_per_period: 40,
    }
}

#[test]
fn excited_population_decays_exponentially() {
    let op = undriven();
    let mut rho0 = Op4::zeros();
    rho0[(1, 1)] = Complex64::new(1.0, 0.0);
    let traj = integrate_master(&op, 0.0, &short(), &rho0).unwrap();
    for (t, rho) in traj.times().iter().zip(traj.states()) {
        let expect = (-op.rates.gamma21 * t).exp();
        assert!((rho[(1, 1)].re - expect).abs() < 1e-9, "t = {t}");
        assert!((rho[(0, 0)].re - (1.0 - expect)).abs() < 1e-9);
    }
}

#[test]
fn free_coherence_precesses_and_decays() {
    let op = undriven();
    let h = Complex64::new(0.5, 0.0);
    let mut rho0 = Op4::zeros();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        rho0[(i, j)] = h;
    }
    let traj = integrate_master(&op, 0.0, &short(), &rho0).unwrap();
    for (t, z) in traj.times().iter().zip(traj.probe_series()) {
        let expect = h * Complex64::new(-0.5 * op.rates.gamma21, op.delta_p).scale(*t).exp();
        assert!((z - expect).norm() < 1e-9, "t = {t}: {z} vs {expect}");
    }
}

#[test]
fn demodulated_periodic_run_matches_harmonics() {
    let op = OperatingPoint::stress();
    let rho0 = stroboscopic_state(&op, 0.0, 0.0, Scheme::default()).unwrap();
    let w = IntegrationWindow {
        burn_in_periods: 2,
        eval_periods: 2,
        samples_per_period: 400,
    };
    let traj = integrate_master(&op, 0.0, &w, &rho0).unwrap();
    let sol = solve_pss(&op, 8).unwrap();
    let scale = (0..=2).map(|n| sol.probe_harmonic(n).unwrap().norm()).fold(0.0, f64::max);
    for n in 0..=2 {
        let d = demodulate(&traj, n).unwrap();
        let f = sol.probe_harmonic(n).unwrap();
        assert!((d - f).norm() / scale < 1e-8, "n = {n}");
    }
}
