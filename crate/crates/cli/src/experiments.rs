//! The seven experiments. Each returns a [`ResultBundle`]; writing it is the
//! caller's job.

use std::time::Instant;

use num_complex::Complex64;
use serde_json::{json, Map, Value as Json};
use starkloop::design::{
    degradations, joint_cost, perturbative_f, perturbative_seed, sweep_theta, theta_balanced, theta_joint_star,
    DesignWeights,
};
use starkloop::estimation::{
    build_response_map, log_sensitivity, monte_carlo_rmse, wrap_phase, McScenario, RmseCurve,
};
use starkloop::model::{beta_from_mixing_angle, mixing_angle_from_beta, OperatingPoint};
use starkloop::nonuniform::{averaged_first_harmonic, coherent_gain, collapse_study, discretize_bias_with};
use starkloop::pss::{convergence_error, convergence_sequence, min_eigenvalue, solve_pss, solve_pss_at_phase};
use starkloop::timedomain::{demodulate, ground_state, integrate_master_with, stroboscopic_state, Scheme};
use starkloop::MaxNorm;

use crate::config::{Experiment, ExperimentConfig, InitialState};
use crate::output::{complex_cells, Provenance, ResultBundle, Table};
use crate::CliError;

struct Ctx {
    experiment: Experiment,
    tables: Vec<Table>,
    summary: Map<String, Json>,
    warnings: Vec<String>,
}

impl Ctx {
    fn num<T>(&self, r: starkloop::Result<T>) -> Result<T, CliError> {
        r.map_err(|source| CliError::Numerical {
            experiment: self.experiment.name().to_string(),
            source,
        })
    }

    fn set(&mut self, key: &str, v: impl Into<Json>) {
        self.summary.insert(key.to_string(), v.into());
    }

    /// JSON has no NaN; non-finite values become null.
    fn set_f64(&mut self, key: &str, v: f64) {
        let j = if v.is_finite() { json!(v) } else { Json::Null };
        self.summary.insert(key.to_string(), j);
    }
}

/// Validates `cfg` and runs `experiment`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<ResultBundle, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut ctx = Ctx {
        experiment,
        tables: Vec::new(),
        summary: Map::new(),
        warnings: Vec::new(),
    };
    match experiment {
        Experiment::PhaseLaw => phase_law(&mut ctx, cfg)?,
        Experiment::ResponseMap => response_map(&mut ctx, cfg)?,
        Experiment::ThetaSweep => theta_sweep(&mut ctx, cfg)?,
        Experiment::RmseUniform => rmse_uniform(&mut ctx, cfg)?,
        Experiment::RmseNonuniform => rmse_nonuniform(&mut ctx, cfg)?,
        Experiment::GainCurve => gain_curve(&mut ctx, cfg)?,
        Experiment::Validate => validate(&mut ctx, cfg)?,
    }
    let epsilon_n = convergence_error(&cfg.operating_point(), cfg.n_max, cfg.n_ref).ok();
    let mut config = cfg.clone();
    config.experiment = Some(experiment);
    Ok(ResultBundle {
        config,
        tables: ctx.tables,
        summary: ctx.summary,
        warnings: ctx.warnings,
        provenance: Provenance {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment: experiment.name().to_string(),
            seed: cfg.seed,
            n_max: cfg.n_max,
            n_ref: cfg.n_ref,
            epsilon_n,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn phase_residual(z: Complex64, z0: Complex64, n: i32, phi: f64) -> f64 {
    if z.norm() == 0.0 || z0.norm() == 0.0 {
        return f64::NAN;
    }
    wrap_phase((z / z0).arg() - n as f64 * phi).abs()
}

fn phase_law(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let base = ctx.num(solve_pss(&op, cfg.n_max))?;
    let mut t = Table::new(
        "phase_law",
        &[
            "phi", "n", "apply_re", "apply_im", "resolve_re", "resolve_im", "magnitude", "residual_apply",
            "residual_resolve",
        ],
    );
    let (mut worst_apply, mut worst_resolve, mut worst_gap, mut max_mag1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for phi in cfg.phi_grid() {
        let applied = base.harmonics.apply_phase(phi);
        let resolved = ctx.num(solve_pss_at_phase(&op, cfg.n_max, phi))?;
        for n in 1..=cfg.n_max as i32 {
            let p0 = ctx.num(base.probe_harmonic(n))?;
            let a = ctx.num(applied.probe(n))?;
            let r = ctx.num(resolved.probe_harmonic(n))?;
            let ra = phase_residual(a, p0, n, phi);
            let rr = phase_residual(r, p0, n, phi);
            if n == 1 {
                worst_apply = worst_apply.max(ra);
                worst_resolve = worst_resolve.max(rr);
                max_mag1 = max_mag1.max(a.norm()).max(r.norm());
            }
            worst_gap = worst_gap.max((a - r).norm());
            let [are, aim] = complex_cells(a);
            let [rre, rim] = complex_cells(r);
            t.push(vec![
                phi.into(),
                n.into(),
                are,
                aim,
                rre,
                rim,
                a.norm().into(),
                ra.into(),
                rr.into(),
            ]);
        }
    }
    ctx.tables.push(t);
    ctx.set_f64("max_residual_apply_n1", worst_apply);
    ctx.set_f64("max_residual_resolve_n1", worst_resolve);
    ctx.set_f64("max_route_difference", worst_gap);
    ctx.set_f64("max_first_harmonic_magnitude", max_mag1);
    Ok(())
}

fn response_map(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let map = ctx.num(build_response_map(&op, &cfg.omega_grid, cfg.design_level, cfg.n_max))?;
    let (lo, hi) = map.branch();
    let mut t = Table::new("response_map", &["omega_s", "m", "in_branch", "s"]);
    for (k, (&w, &m)) in map.omega_grid().iter().zip(map.magnitudes()).enumerate() {
        let inside = (lo..=hi).contains(&k);
        let s = if inside { log_sensitivity(&map, w).unwrap_or(f64::NAN) } else { f64::NAN };
        t.push(vec![w.into(), m.into(), inside.into(), s.into()]);
    }
    ctx.tables.push(t);
    let (a, b) = map.branch_interval();
    ctx.set_f64("branch_lo", a);
    ctx.set_f64("branch_hi", b);
    ctx.set("branch_increasing", map.increasing());
    ctx.set_f64("design_level", cfg.design_level);
    let s0 = ctx.num(log_sensitivity(&map, cfg.design_level))?;
    ctx.set_f64("s_design", s0);
    Ok(())
}

fn theta_sweep(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let sweep = ctx.num(sweep_theta(&op, cfg.design_level, &cfg.theta_grid, cfg.n_max))?;
    for (k, msg) in &sweep.failures {
        ctx.warnings.push(format!("theta[{k}] = {}: {msg}", sweep.thetas[*k]));
    }
    let weights = ctx.num(DesignWeights::new(cfg.w_phase, cfg.w_amp))?;
    let bal = ctx.num(theta_balanced(&sweep))?;
    let joint = ctx.num(theta_joint_star(&sweep, &weights, cfg.sigma))?;
    let cost = ctx.num(joint_cost(&sweep, &weights, cfg.sigma))?;
    let (dp, da) = degradations(&sweep, &bal.phase_star, &bal.amp_star);
    let m_max = sweep.m_phi.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let f_max = perturbative_f(perturbative_seed().0);
    let mut t = Table::new(
        "theta_sweep",
        &[
            "theta", "m_phi", "m_amp", "s", "d_phi", "d_amp", "joint_cost", "m_phi_normalized", "proxy_f_normalized",
        ],
    );
    for k in 0..sweep.thetas.len() {
        let th = sweep.thetas[k];
        let norm = if m_max > 0.0 { sweep.m_phi[k] / m_max } else { f64::NAN };
        t.push(vec![
            th.into(),
            sweep.m_phi[k].into(),
            sweep.m_amp[k].into(),
            sweep.s_values[k].into(),
            dp[k].into(),
            da[k].into(),
            cost[k].into(),
            norm.into(),
            (perturbative_f(th) / f_max).into(),
        ]);
    }
    ctx.tables.push(t);
    let mut o = Table::new("optima", &["name", "theta", "value"]);
    o.push(vec!["phase".into(), bal.phase_star.theta.into(), bal.phase_star.value.into()]);
    o.push(vec!["amplitude".into(), bal.amp_star.theta.into(), bal.amp_star.value.into()]);
    o.push(vec!["balanced".into(), bal.theta.into(), bal.d_phi.max(bal.d_amp).into()]);
    o.push(vec!["joint".into(), joint.theta.into(), joint.value.into()]);
    o.push(vec!["proxy_seed".into(), perturbative_seed().0.into(), f_max.into()]);
    ctx.tables.push(o);
    ctx.set_f64("theta_phase_star", bal.phase_star.theta);
    ctx.set_f64("theta_amp_star", bal.amp_star.theta);
    ctx.set_f64("theta_balanced", bal.theta);
    ctx.set_f64("d_phi_balanced", bal.d_phi);
    ctx.set_f64("d_amp_balanced", bal.d_amp);
    ctx.set("balanced_crossing", bal.crossing);
    ctx.set_f64("theta_joint_star", joint.theta);
    if !bal.crossing {
        ctx.warnings.push("no D_phi = D_A crossing on the grid; balanced angle is the grid minimax".into());
    }
    Ok(())
}

fn curve_table(name: &str, curve: &RmseCurve) -> Table {
    let mut t = Table::new(
        name,
        &[
            "snr", "rmse_phase", "theory_phase", "ratio_phase", "rmse_amp_rel", "theory_amp_rel", "ratio_amp",
            "failed", "clamped",
        ],
    );
    for k in 0..curve.snr_grid.len() {
        t.push(vec![
            curve.snr_grid[k].into(),
            curve.rmse_phase[k].into(),
            curve.theory_phase[k].into(),
            (curve.rmse_phase[k] / curve.theory_phase[k]).into(),
            curve.rmse_amp_rel[k].into(),
            curve.theory_amp_rel[k].into(),
            (curve.rmse_amp_rel[k] / curve.theory_amp_rel[k]).into(),
            curve.failed[k].into(),
            curve.clamped[k].into(),
        ]);
    }
    t
}

fn rmse_uniform(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let map = ctx.num(build_response_map(&op, &cfg.omega_grid, cfg.design_level, cfg.n_max))?;
    let sc = ctx.num(McScenario::homogeneous(&op, &map, cfg.n_max))?;
    let curve = ctx.num(monte_carlo_rmse(&sc, &map, &cfg.snr_grid, cfg.trials, cfg.seed))?;
    ctx.warnings.extend(curve.warnings.iter().cloned());
    ctx.tables.push(curve_table("rmse_uniform", &curve));
    ctx.set_f64("s", sc.sensitivity);
    ctx.set_f64("phasor_re", sc.phasor.re);
    ctx.set_f64("phasor_im", sc.phasor.im);
    ctx.set("trials", curve.trials);
    Ok(())
}

fn rmse_nonuniform(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let beta0 = beta_from_mixing_angle(op.theta);
    let rule = cfg.quadrature_rule();
    let dists = cfg
        .rel_spreads
        .iter()
        .map(|&r| ctx.num(discretize_bias_with(beta0, r, cfg.node_count, rule)))
        .collect::<Result<Vec<_>, _>>()?;
    let map = ctx.num(build_response_map(&op, &cfg.omega_grid, cfg.design_level, cfg.n_max))?;
    let mode = cfg.detuning_mode();
    let study = ctx.num(collapse_study(
        &op,
        &map,
        &dists,
        &cfg.omega_grid,
        &mode,
        cfg.n_max,
        &cfg.snr_grid,
        cfg.trials,
        cfg.seed,
    ))?;
    ctx.warnings.extend(study.uniform.warnings.iter().cloned());
    let su = study.s_uniform;
    let mut t = Table::new(
        "collapse",
        &[
            "rel_spread", "gain", "s", "snr", "snr_phase_eff", "snr_amp_eff", "rmse_phase", "rmse_amp_rel",
            "ratio_phase", "ratio_amp_corrected", "ratio_amp_uncorrected",
        ],
    );
    let push = |t: &mut Table, rs: f64, g: f64, s: f64, curve: &RmseCurve, k: usize| {
        let snr = curve.snr_grid[k];
        let sp = g * g * snr;
        let sa = s * s * sp;
        t.push(vec![
            rs.into(),
            g.into(),
            s.into(),
            snr.into(),
            sp.into(),
            sa.into(),
            curve.rmse_phase[k].into(),
            curve.rmse_amp_rel[k].into(),
            (curve.rmse_phase[k] * (2.0 * sp).sqrt()).into(),
            (curve.rmse_amp_rel[k] * (2.0 * sa).sqrt()).into(),
            (curve.rmse_amp_rel[k] * su.abs() * (2.0 * sp).sqrt()).into(),
        ]);
    };
    for k in 0..study.uniform.snr_grid.len() {
        push(&mut t, 0.0, 1.0, su, &study.uniform, k);
    }
    let mut g = Table::new("distributions", &["rel_spread", "gain", "s_avg", "nodes"]);
    g.push(vec![0.0.into(), 1.0.into(), su.into(), 1usize.into()]);
    let mut worst_phase = 0.0f64;
    let mut worst_amp = 0.0f64;
    for (c, d) in study.cases.iter().zip(&dists) {
        ctx.warnings
            .extend(c.curve.warnings.iter().map(|w| format!("rel_spread {}: {w}", c.rel_spread)));
        for k in 0..c.curve.snr_grid.len() {
            push(&mut t, c.rel_spread, c.gain, c.s_avg, &c.curve, k);
            if c.snr_phase_axis[k] >= 1e3 {
                worst_phase = worst_phase.max((c.curve.rmse_phase[k] * (2.0 * c.snr_phase_axis[k]).sqrt() - 1.0).abs());
            }
            if c.snr_amp_axis[k] >= 1e3 {
                worst_amp = worst_amp.max((c.curve.rmse_amp_rel[k] * (2.0 * c.snr_amp_axis[k]).sqrt() - 1.0).abs());
            }
        }
        g.push(vec![c.rel_spread.into(), c.gain.into(), c.s_avg.into(), d.len().into()]);
    }
    ctx.tables.push(t);
    ctx.tables.push(g);
    let gains: Vec<f64> = study.cases.iter().map(|c| c.gain).collect();
    ctx.set("gain_strictly_decreasing", gains.windows(2).all(|w| w[1] < w[0]));
    ctx.set_f64("s_uniform", su);
    ctx.set_f64("max_phase_collapse_deviation", worst_phase);
    ctx.set_f64("max_amp_collapse_deviation", worst_amp);
    Ok(())
}

fn gain_curve(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let beta0 = beta_from_mixing_angle(op.theta);
    let mode = cfg.detuning_mode();
    let reference = ctx.num(starkloop::estimation::first_harmonic(
        &op.with_theta(ctx.num(mixing_angle_from_beta(beta0))?).with_signal(cfg.design_level),
        cfg.n_max,
    ))?;
    let mut t = Table::new("gain_curve", &["rel_spread", "gain", "p_bar_re", "p_bar_im"]);
    for &rs in &cfg.gain_spreads {
        let d = ctx.num(discretize_bias_with(beta0, rs, cfg.node_count, cfg.quadrature_rule()))?;
        let p = ctx.num(averaged_first_harmonic(&op, &d, cfg.design_level, &mode, cfg.n_max))?;
        let g = ctx.num(coherent_gain(p, reference))?;
        let [re, im] = complex_cells(p);
        t.push(vec![rs.into(), g.into(), re, im]);
    }
    ctx.tables.push(t);
    ctx.set_f64("beta0", beta0);
    ctx.set_f64("reference_re", reference.re);
    ctx.set_f64("reference_im", reference.im);
    Ok(())
}

fn validate(ctx: &mut Ctx, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let op = cfg.operating_point();
    let stress = OperatingPoint::stress();
    let eps_cfg = ctx.num(convergence_sequence(&op, cfg.n_ref))?;
    let eps_stress = ctx.num(convergence_sequence(&stress, cfg.n_ref))?;
    let mut t = Table::new("convergence", &["n", "epsilon_configured", "epsilon_stress"]);
    for (k, (a, b)) in eps_cfg.iter().zip(&eps_stress).enumerate() {
        t.push(vec![(k + 1).into(), (*a).into(), (*b).into()]);
    }
    ctx.tables.push(t);
    let nonincreasing = |e: &[f64]| e.windows(2).all(|w| w[1] <= w[0].max(1e-15));
    ctx.set("configured_nonincreasing", nonincreasing(&eps_cfg));
    ctx.set("stress_nonincreasing", nonincreasing(&eps_stress));
    if eps_stress.len() >= 4 {
        ctx.set_f64("stress_epsilon_3", eps_stress[2]);
        ctx.set_f64("stress_epsilon_4", eps_stress[3]);
    }

    let sol = ctx.num(solve_pss(&op, cfg.n_max))?;
    let scheme = Scheme::default();
    let rho0 = match cfg.initial_state {
        InitialState::Ground => ground_state(),
        InitialState::Periodic => ctx.num(stroboscopic_state(&op, 0.0, 0.0, scheme))?,
    };
    let window = cfg.window();
    let traj = ctx.num(integrate_master_with(&op, 0.0, &window, &rho0, 0.0, scheme))?;
    let n_show = cfg.n_max.min(2) as i32;
    let floquet = (0..=n_show)
        .map(|n| ctx.num(sol.probe_harmonic(n)))
        .collect::<Result<Vec<_>, _>>()?;
    let td = (0..=n_show)
        .map(|n| ctx.num(demodulate(&traj, n)))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = floquet.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut o = Table::new(
        "oracle",
        &["n", "floquet_re", "floquet_im", "timedomain_re", "timedomain_im", "abs_error", "scaled_error"],
    );
    let mut worst = 0.0f64;
    for n in 0..=n_show as usize {
        let err = (floquet[n] - td[n]).norm();
        let scaled = if scale > 0.0 { err / scale } else { err };
        worst = worst.max(scaled);
        let [fre, fim] = complex_cells(floquet[n]);
        let [tre, tim] = complex_cells(td[n]);
        o.push(vec![n.into(), fre, fim, tre, tim, err.into(), scaled.into()]);
    }
    ctx.tables.push(o);
    ctx.set_f64("oracle_max_scaled_error", worst);

    let mut ov = Table::new(
        "overlay",
        &["t", "floquet_re", "floquet_im", "timedomain_re", "timedomain_im"],
    );
    let times = traj.times();
    let states = traj.states();
    let first = times.len() - 1 - window.samples_per_period;
    let mut min_eig = f64::INFINITY;
    for k in first..times.len() {
        let r = sol.reconstruct_rho(times[k], 0.0);
        min_eig = min_eig.min(min_eigenvalue(&r));
        let [fre, fim] = complex_cells(r[(1, 0)]);
        let [tre, tim] = complex_cells(states[k][(1, 0)]);
        ov.push(vec![times[k].into(), fre, fim, tre, tim]);
    }
    ctx.tables.push(ov);
    ctx.set_f64("min_reconstructed_eigenvalue", min_eig);
    ctx.set_f64("trajectory_trace_error", traj.max_trace_error());
    ctx.set_f64("trajectory_hermiticity_error", traj.max_hermiticity_error());
    ctx.set_f64("harmonic_trace_error", sol.harmonics.trace_error());
    ctx.set_f64("harmonic_hermiticity_error", sol.harmonics.hermiticity_error());
    ctx.set_f64(
        "final_state_gap",
        (sol.reconstruct_rho(times[times.len() - 1], 0.0) - traj.last()).max_norm(),
    );
    Ok(())
}
