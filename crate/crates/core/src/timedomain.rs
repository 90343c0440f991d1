//! Direct integration of the master equation and synchronous demodulation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{jump_operators, JumpOperatorSet};
use crate::model::{build_floquet_blocks, FloquetBlocks, OperatingPoint};
use crate::{MaxNorm, Op4};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sampled evaluation window of a master-equation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Op4>,
    omega_s_drive: f64,
}

impl Trajectory {
    /// Builds a trajectory from samples. Times must be strictly increasing.
    pub fn new(times: Vec<f64>, states: Vec<Op4>, omega_s_drive: f64) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::Window("need at least two samples".into()));
        }
        if !(omega_s_drive.is_finite() && omega_s_drive > 0.0) {
            return Err(Error::Domain(format!(
                "drive frequency must be positive, got {omega_s_drive}"
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Window("sample times not strictly increasing".into()));
        }
        Ok(Self {
            times,
            states,
            omega_s_drive,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Op4] {
        &self.states
    }

    pub fn omega_s_drive(&self) -> f64 {
        self.omega_s_drive
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Probe coherence `rho_21(t)` at every sample.
    pub fn probe_series(&self) -> Vec<Complex64> {
        self.states.iter().map(|r| r[(1, 0)]).collect()
    }

    pub fn last(&self) -> &Op4 {
        self.states.last().expect("trajectory is nonempty")
    }

    /// Largest `|tr rho - 1|` over the samples.
    pub fn max_trace_error(&self) -> f64 {
        self.states
            .iter()
            .map(|r| (r.trace() - Complex64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.states
            .iter()
            .map(|r| (r - r.adjoint()).max_norm())
            .fold(0.0, f64::max)
    }

    /// Pointwise `a * self + b * other` on a shared grid.
    pub fn combine(&self, a: Complex64, other: &Trajectory, b: Complex64) -> Result<Trajectory> {
        if self.times != other.times || self.omega_s_drive != other.omega_s_drive {
            return Err(Error::Window("trajectories are on different grids".into()));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Trajectory::new(self.times.clone(), states, self.omega_s_drive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationWindow {
    pub burn_in_periods: usize,
    pub eval_periods: usize,
    pub samples_per_period: usize,
}

impl Default for IntegrationWindow {
    fn default() -> Self {
        Self {
            burn_in_periods: 180,
            eval_periods: 6,
            samples_per_period: 400,
        }
    }
}

impl IntegrationWindow {
    pub fn validate(&self) -> Result<()> {
        if self.eval_periods == 0 || self.samples_per_period == 0 {
            return Err(Error::Window(
                "eval_periods and samples_per_period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Stepping scheme for [`integrate_master_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// Dormand–Prince 5(4) with mixed absolute/relative error control.
    Adaptive { rtol: f64, atol: f64 },
    /// Classical RK4 with at least `steps_per_period` uniform steps per period.
    FixedRk4 { steps_per_period: usize },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Adaptive {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

/// Right-hand side `-i[H(t), rho] + D[rho]`.
struct MasterRhs {
    blocks: FloquetBlocks,
    jumps: JumpOperatorSet,
    omega: f64,
    phi_s: f64,
}

impl MasterRhs {
    fn new(op: &OperatingPoint, phi_s: f64) -> Self {
        Self {
            blocks: build_floquet_blocks(op),
            jumps: jump_operators(&op.rates),
            omega: op.omega_s_drive,
            phi_s,
        }
    }

    fn eval(&self, t: f64, rho: &Op4) -> Op4 {
        let h = self.blocks.hamiltonian(self.omega, t, self.phi_s);
        (h * rho - rho * h) * (-I) + self.jumps.apply(rho)
    }
}

fn check_density(rho: &Op4) -> Result<()> {
    let tol = 1e-9;
    if (rho.trace() - Complex64::new(1.0, 0.0)).norm() > tol {
        return Err(Error::Domain("initial state must have unit trace".into()));
    }
    if (rho - rho.adjoint()).max_norm() > tol {
        return Err(Error::Domain("initial state must be Hermitian".into()));
    }
    if crate::pss::min_eigenvalue(rho) < -tol {
        return Err(Error::Domain("initial state must be positive semidefinite".into()));
    }
    Ok(())
}

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    rhs: &'a MasterRhs,
    scheme: Scheme,
    h: f64,
    max_h: f64,
    period: f64,
    steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(rhs: &'a MasterRhs, scheme: Scheme, period: f64) -> Self {
        Self {
            rhs,
            scheme,
            h: period / 64.0,
            max_h: period / 8.0,
            period,
            steps: 0,
        }
    }

    /// Advances `rho` from `t0` to `t1` exactly.
    fn advance(&mut self, rho: &mut Op4, t0: f64, t1: f64) -> Result<()> {
        match self.scheme {
            Scheme::FixedRk4 { steps_per_period } => {
                let n = ((t1 - t0) / self.period * steps_per_period as f64)
                    .ceil()
                    .max(1.0) as usize;
                let h = (t1 - t0) / n as f64;
                for k in 0..n {
                    *rho = self.rk4(t0 + k as f64 * h, rho, h);
                }
                self.steps += n;
                Ok(())
            }
            Scheme::Adaptive { rtol, atol } => self.dopri(rho, t0, t1, rtol, atol),
        }
    }

    fn rk4(&self, t: f64, y: &Op4, h: f64) -> Op4 {
        let f = |t, y: &Op4| self.rhs.eval(t, y);
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, &(y + k1 * Complex64::from(0.5 * h)));
        let k3 = f(t + 0.5 * h, &(y + k2 * Complex64::from(0.5 * h)));
        let k4 = f(t + h, &(y + k3 * Complex64::from(h)));
        y + (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4)
            * Complex64::from(h / 6.0)
    }

    fn dopri(&mut self, rho: &mut Op4, t0: f64, t1: f64, rtol: f64, atol: f64) -> Result<()> {
        let mut t = t0;
        let span = t1 - t0;
        let h_min = 1e-14 * span.abs().max(t0.abs()).max(1.0);
        while t < t1 {
            let last = t + self.h >= t1 - 1e-12 * span;
            let h = if last { t1 - t } else { self.h };
            let mut k: [Op4; 7] = [Matrix4::zeros(); 7];
            for s in 0..7 {
                let mut y = *rho;
                for j in 0..s {
                    if A[s][j] != 0.0 {
                        y += k[j] * Complex64::from(h * A[s][j]);
                    }
                }
                k[s] = self.rhs.eval(t + C[s] * h, &y);
            }
            let mut y5 = *rho;
            let mut err = Op4::zeros();
            for s in 0..7 {
                y5 += k[s] * Complex64::from(h * B5[s]);
                err += k[s] * Complex64::from(h * (B5[s] - B4[s]));
            }
            let scale = atol + rtol * rho.max_norm().max(y5.max_norm());
            let e = err.max_norm() / scale;
            if !e.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            if e <= 1.0 {
                t = if last { t1 } else { t + h };
                *rho = y5;
                self.steps += 1;
            }
            let factor = if e == 0.0 {
                5.0
            } else {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !(last && e <= 1.0) {
                self.h = (h * factor).min(self.max_h);
            }
            if self.h < h_min {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {:.3e}, error ratio {e:.3e})", self.h),
                });
            }
        }
        Ok(())
    }
}

/// Integrates from `t = 0` with the default scheme.
pub fn integrate_master(
    op: &OperatingPoint,
    phi_s: f64,
    window: &IntegrationWindow,
    rho0: &Op4,
) -> Result<Trajectory> {
    integrate_master_with(op, phi_s, window, rho0, 0.0, Scheme::default())
}

/// Integrates over `burn_in_periods + eval_periods` periods starting at `t0`
/// and returns only the evaluation window, endpoints included.
pub fn integrate_master_with(
    op: &OperatingPoint,
    phi_s: f64,
    window: &IntegrationWindow,
    rho0: &Op4,
    t0: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    op.validate()?;
    window.validate()?;
    check_density(rho0)?;
    let rhs = MasterRhs::new(op, phi_s);
    let period = op.period();
    let dt = period / window.samples_per_period as f64;
    let mut stepper = Stepper::new(&rhs, scheme, period);
    let mut rho = *rho0;

    for k in 0..window.burn_in_periods {
        let a = t0 + k as f64 * period;
        stepper.advance(&mut rho, a, a + period)?;
    }
    let start = t0 + window.burn_in_periods as f64 * period;
    let total = window.eval_periods * window.samples_per_period;
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    times.push(start);
    states.push(rho);
    for k in 0..total {
        let a = start + k as f64 * dt;
        let b = start + (k + 1) as f64 * dt;
        stepper.advance(&mut rho, a, b)?;
        times.push(b);
        states.push(rho);
    }
    let traj = Trajectory::new(times, states, op.omega_s_drive)?;
    let drift = traj.max_trace_error();
    if drift > 1e-8 {
        return Err(Error::Integration {
            t: start + window.eval_periods as f64 * period,
            reason: format!("trace drift {drift:.3e} after {} steps", stepper.steps),
        });
    }
    Ok(traj)
}

/// Ground state `|1><1|`.
pub fn ground_state() -> Op4 {
    let mut rho = Op4::zeros();
    rho[(0, 0)] = Complex64::new(1.0, 0.0);
    rho
}

/// Fixed point of the one-period propagator starting at `t0`, found by
/// propagating the 16 matrix units over one period and taking the null
/// vector of `M - I`. Independent of the harmonic-balance solve.
pub fn stroboscopic_state(
    op: &OperatingPoint,
    phi_s: f64,
    t0: f64,
    scheme: Scheme,
) -> Result<Op4> {
    op.validate()?;
    let rhs = MasterRhs::new(op, phi_s);
    let period = op.period();
    let mut m = DMatrix::<Complex64>::zeros(16, 16);
    for col in 0..16 {
        let mut x = Op4::zeros();
        x[(col % 4, col / 4)] = Complex64::new(1.0, 0.0);
        let mut stepper = Stepper::new(&rhs, scheme, period);
        stepper.advance(&mut x, t0, t0 + period)?;
        for row in 0..16 {
            m[(row, col)] = x[(row % 4, row / 4)];
        }
    }
    for d in 0..16 {
        m[(d, d)] -= Complex64::new(1.0, 0.0);
    }
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Integration {
            t: t0,
            reason: "SVD of the monodromy map failed".into(),
        })?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut rho = Op4::zeros();
    for k in 0..16 {
        rho[(k % 4, k / 4)] = v_t[(idx, k)].conj();
    }
    let tr = rho.trace();
    if tr.norm() < 1e-12 {
        return Err(Error::Integration {
            t: t0,
            reason: "periodic state has zero trace".into(),
        });
    }
    rho /= tr;
    Ok((rho + rho.adjoint()) * Complex64::new(0.5, 0.0))
}

/// `(1/T) * integral of rho_21(t) e^{-i n w t}` by the composite
/// trapezoidal rule over the sampled grid.
pub fn demodulate(traj: &Trajectory, n: i32) -> Result<Complex64> {
    let t = traj.times();
    let w = traj.omega_s_drive();
    let span = t[t.len() - 1] - t[0];
    let periods = span * w / (2.0 * PI);
    if periods.round() < 1.0 || (periods - periods.round()).abs() > 1e-8 * periods.max(1.0) {
        return Err(Error::Window(format!(
            "trajectory spans {periods:.9} periods, need a positive integer"
        )));
    }
    let y = traj.probe_series();
    let f = |k: usize| y[k] * Complex64::from_polar(1.0, -(n as f64) * w * t[k]);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = f(0);
    for k in 1..t.len() {
        let cur = f(k);
        acc += (prev + cur) * (0.5 * (t[k] - t[k - 1]));
        prev = cur;
    }
    Ok(acc / span)
}
