//! Mixing-angle design criteria.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::first_harmonic;
use crate::model::OperatingPoint;

/// Refinement tolerance for the optimal angles.
pub const THETA_TOLERANCE: f64 = 1e-4;
/// Central-difference step as a fraction of the design level.
pub const SLOPE_STEP_FRACTION: f64 = 0.02;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of `f` on `[a, b]`.
pub fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignWeights {
    pub w_phase: f64,
    pub w_amp: f64,
}

impl DesignWeights {
    /// Normalizes to unit sum.
    pub fn new(w_phase: f64, w_amp: f64) -> Result<Self> {
        if !(w_phase >= 0.0 && w_amp >= 0.0) || w_phase + w_amp <= 0.0 || !(w_phase + w_amp).is_finite() {
            return Err(Error::Domain(format!(
                "weights must be nonnegative and not both zero (got {w_phase}, {w_amp})"
            )));
        }
        let t = w_phase + w_amp;
        Ok(Self {
            w_phase: w_phase / t,
            w_amp: w_amp / t,
        })
    }

    pub fn equal() -> Self {
        Self {
            w_phase: 0.5,
            w_amp: 0.5,
        }
    }
}

/// Local metrics at one mixing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    /// `m(Omega_S0)`.
    pub m_phi: f64,
    /// `Omega_S0 |dm/dOmega_S|`.
    pub m_amp: f64,
    /// Signed logarithmic sensitivity.
    pub s: f64,
}

/// Evaluates the phase and amplitude metrics at `theta`.
pub fn design_point(base: &OperatingPoint, design_level: f64, theta: f64, n_max: usize) -> Result<DesignPoint> {
    let op = base.with_theta(theta);
    let h = SLOPE_STEP_FRACTION * design_level;
    let m0 = first_harmonic(&op.with_signal(design_level), n_max)?.norm();
    let mp = first_harmonic(&op.with_signal(design_level + h), n_max)?.norm();
    let mm = first_harmonic(&op.with_signal(design_level - h), n_max)?.norm();
    let slope = (mp - mm) / (2.0 * h);
    let m_amp = design_level * slope.abs();
    let s = if m0 > 0.0 {
        design_level * slope / m0
    } else {
        0.0
    };
    Ok(DesignPoint { m_phi: m0, m_amp, s })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSweep {
    pub base: OperatingPoint,
    pub design_level: f64,
    pub n_max: usize,
    pub thetas: Vec<f64>,
    /// NaN where the solve failed.
    pub m_phi: Vec<f64>,
    pub m_amp: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `(grid index, message)` for every failed point.
    pub failures: Vec<(usize, String)>,
}

/// 49 points on `[0.01, pi/4 - 0.01]`.
pub fn default_theta_grid() -> Vec<f64> {
    let (a, b) = (0.01, FRAC_PI_4 - 0.01);
    (0..49).map(|k| a + (b - a) * k as f64 / 48.0).collect()
}

pub fn sweep_theta(
    base: &OperatingPoint,
    design_level: f64,
    theta_grid: &[f64],
    n_max: usize,
) -> Result<ThetaSweep> {
    if theta_grid.len() < 16 {
        return Err(Error::Domain(format!(
            "theta grid needs at least 16 points, got {}",
            theta_grid.len()
        )));
    }
    if theta_grid.windows(2).any(|w| !(w[1] > w[0]))
        || theta_grid[0] < 0.0
        || theta_grid[theta_grid.len() - 1] > FRAC_PI_4 + 1e-12
    {
        return Err(Error::Domain(
            "theta grid must be strictly increasing inside [0, pi/4]".into(),
        ));
    }
    if !(design_level > 0.0) {
        return Err(Error::Domain(format!("design level must be positive, got {design_level}")));
    }
    let points: Vec<Result<DesignPoint>> = theta_grid
        .par_iter()
        .map(|&t| design_point(base, design_level, t, n_max))
        .collect();
    let mut sweep = ThetaSweep {
        base: *base,
        design_level,
        n_max,
        thetas: theta_grid.to_vec(),
        m_phi: Vec::with_capacity(points.len()),
        m_amp: Vec::with_capacity(points.len()),
        s_values: Vec::with_capacity(points.len()),
        failures: Vec::new(),
    };
    for (k, p) in points.into_iter().enumerate() {
        match p {
            Ok(p) => {
                sweep.m_phi.push(p.m_phi);
                sweep.m_amp.push(p.m_amp);
                sweep.s_values.push(p.s);
            }
            Err(e) => {
                sweep.m_phi.push(f64::NAN);
                sweep.m_amp.push(f64::NAN);
                sweep.s_values.push(f64::NAN);
                sweep.failures.push((k, e.to_string()));
            }
        }
    }
    Ok(sweep)
}

/// A refined optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub theta: f64,
    pub value: f64,
}

fn grid_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Grid argmax refined by golden section inside the neighboring cells.
fn refine_max<F>(thetas: &[f64], values: &[f64], what: &str, f: F) -> Result<Optimum>
where
    F: Fn(f64) -> Result<f64>,
{
    let k = grid_argmax(values).ok_or_else(|| Error::NoOptimum(format!("{what}: no valid points")))?;
    if values[k] <= 0.0 {
        return Err(Error::NoOptimum(format!("{what}: objective is flat at zero")));
    }
    let a = thetas[k.saturating_sub(1)];
    let b = thetas[(k + 1).min(thetas.len() - 1)];
    let (theta, value) = golden_section_max(&f, a, b, THETA_TOLERANCE)?;
    if value >= values[k] {
        Ok(Optimum { theta, value })
    } else {
        Ok(Optimum {
            theta: thetas[k],
            value: values[k],
        })
    }
}

pub fn theta_phase_star(sweep: &ThetaSweep) -> Result<Optimum> {
    refine_max(&sweep.thetas, &sweep.m_phi, "phase metric", |t| {
        design_point(&sweep.base, sweep.design_level, t, sweep.n_max).map(|p| p.m_phi)
    })
}

pub fn theta_amp_star(sweep: &ThetaSweep) -> Result<Optimum> {
    refine_max(&sweep.thetas, &sweep.m_amp, "amplitude metric", |t| {
        design_point(&sweep.base, sweep.design_level, t, sweep.n_max).map(|p| p.m_amp)
    })
}

fn cost_of(p: &DesignPoint, weights: &DesignWeights, sigma: f64) -> f64 {
    if p.m_phi <= 0.0 {
        return f64::INFINITY;
    }
    let amp = if weights.w_amp > 0.0 {
        if p.s == 0.0 {
            return f64::INFINITY;
        }
        weights.w_amp / (p.s * p.s)
    } else {
        0.0
    };
    sigma * sigma / (p.m_phi * p.m_phi) * (weights.w_phase + amp)
}

/// `J = (sigma^2 / m^2) (w_phi + w_A / s^2)` on the sweep grid.
pub fn joint_cost(sweep: &ThetaSweep, weights: &DesignWeights, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if weights.w_amp > 0.0 && sweep.s_values.iter().all(|s| !s.is_finite() || *s == 0.0) {
        return Err(Error::DegenerateSensitivity(
            "sensitivity vanishes on the whole grid".into(),
        ));
    }
    Ok((0..sweep.thetas.len())
        .map(|k| {
            let p = DesignPoint {
                m_phi: sweep.m_phi[k],
                m_amp: sweep.m_amp[k],
                s: sweep.s_values[k],
            };
            if p.m_phi.is_nan() {
                f64::NAN
            } else {
                cost_of(&p, weights, sigma)
            }
        })
        .collect())
}

pub fn theta_joint_star(sweep: &ThetaSweep, weights: &DesignWeights, sigma: f64) -> Result<Optimum> {
    let cost = joint_cost(sweep, weights, sigma)?;
    let neg: Vec<f64> = cost.iter().map(|c| -c).collect();
    let k = grid_argmax(&neg)
        .filter(|&k| neg[k].is_finite())
        .ok_or_else(|| Error::NoOptimum("joint cost is infinite everywhere".into()))?;
    let a = sweep.thetas[k.saturating_sub(1)];
    let b = sweep.thetas[(k + 1).min(sweep.thetas.len() - 1)];
    let f = |t: f64| {
        design_point(&sweep.base, sweep.design_level, t, sweep.n_max).map(|p| -cost_of(&p, weights, sigma))
    };
    let (theta, v) = golden_section_max(f, a, b, THETA_TOLERANCE)?;
    if -v <= cost[k] {
        Ok(Optimum { theta, value: -v })
    } else {
        Ok(Optimum {
            theta: sweep.thetas[k],
            value: cost[k],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balanced {
    pub theta: f64,
    pub d_phi: f64,
    pub d_amp: f64,
    /// False when no interior crossing exists and the grid minimax is returned.
    pub crossing: bool,
    pub phase_star: Optimum,
    pub amp_star: Optimum,
}

/// Degradation ratios `(D_phi, D_A)` on the sweep grid.
pub fn degradations(sweep: &ThetaSweep, phase_star: &Optimum, amp_star: &Optimum) -> (Vec<f64>, Vec<f64>) {
    let ratio = |best: f64, v: f64| if v > 0.0 { best / v } else { f64::INFINITY };
    (
        sweep.m_phi.iter().map(|&v| ratio(phase_star.value, v)).collect(),
        sweep.m_amp.iter().map(|&v| ratio(amp_star.value, v)).collect(),
    )
}

/// Minimax of `(D_phi, D_A)`, refined by bisection on the crossing.
pub fn theta_balanced(sweep: &ThetaSweep) -> Result<Balanced> {
    let phase_star = theta_phase_star(sweep)?;
    let amp_star = theta_amp_star(sweep)?;
    let (dp, da) = degradations(sweep, &phase_star, &amp_star);
    let worst: Vec<f64> = dp
        .iter()
        .zip(&da)
        .map(|(a, b)| if a.is_nan() || b.is_nan() { f64::NAN } else { -a.max(*b) })
        .collect();
    let k = grid_argmax(&worst)
        .filter(|&k| worst[k].is_finite())
        .ok_or_else(|| Error::NoOptimum("degradations undefined on the grid".into()))?;
    let diff = |j: usize| dp[j] - da[j];
    let is_cross = |j: usize| {
        let (x, y) = (diff(j), diff(j + 1));
        x.is_finite() && y.is_finite() && (x == 0.0 || x.signum() != y.signum())
    };
    let n = sweep.thetas.len();
    let cell = (0..n - 1)
        .filter(|&j| is_cross(j))
        .min_by_key(|&j| (j as i64 - k as i64).abs().min((j as i64 + 1 - k as i64).abs()));
    let Some(j) = cell else {
        return Ok(Balanced {
            theta: sweep.thetas[k],
            d_phi: dp[k],
            d_amp: da[k],
            crossing: false,
            phase_star,
            amp_star,
        });
    };
    let eval = |t: f64| -> Result<(f64, f64)> {
        let p = design_point(&sweep.base, sweep.design_level, t, sweep.n_max)?;
        Ok((phase_star.value / p.m_phi, amp_star.value / p.m_amp))
    };
    let (mut a, mut b) = (sweep.thetas[j], sweep.thetas[j + 1]);
    let sa = diff(j).signum();
    let mut best = (a, dp[j], da[j]);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let (x, y) = eval(mid)?;
        best = (mid, x, y);
        if x - y == 0.0 {
            break;
        }
        if (x - y).signum() == sa {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    Ok(Balanced {
        theta: best.0,
        d_phi: best.1,
        d_amp: best.2,
        crossing: true,
        phase_star,
        amp_star,
    })
}

/// `sin(theta) cos(theta) cos(2 theta)`.
pub fn perturbative_f(theta: f64) -> f64 {
    theta.sin() * theta.cos() * (2.0 * theta).cos()
}

/// The same proxy written in terms of `beta = tan(2 theta)`.
pub fn perturbative_f_beta(beta: f64) -> f64 {
    beta / (2.0 * (1.0 + beta * beta))
}

/// `(theta_seed, beta_seed) = (pi/8, 1)`.
pub fn perturbative_seed() -> (f64, f64) {
    (FRAC_PI_8, 1.0)
}
