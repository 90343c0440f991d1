//! Stark-mixing geometry and the rotating-frame Floquet Hamiltonian.
//!
//! Levels are indexed `0..4` in code for the reduced basis
//! `{|1>, |2>, |3^(S)>, |4^(S)>}`. All frequencies are in units of the
//! probe-transition decay rate `gamma21`.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Op4;

/// Physical parameters of the bias-mixed upper pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkConfig {
    /// Bare splitting `omega_3 - omega_4 > 0`.
    pub delta34: f64,
    /// Magnitude of the static-field dipole element between the bare upper states.
    pub dipole_z: f64,
    /// Static bias field.
    pub bias: f64,
    pub hbar: f64,
}

impl StarkConfig {
    pub fn new(delta34: f64, dipole_z: f64, bias: f64, hbar: f64) -> Result<Self> {
        let cfg = Self {
            delta34,
            dipole_z,
            bias,
            hbar,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta34.is_finite() && self.delta34 > 0.0) {
            return Err(Error::Domain(format!("delta34 must be > 0, got {}", self.delta34)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::Domain(format!("hbar must be > 0, got {}", self.hbar)));
        }
        if !(self.dipole_z.is_finite() && self.dipole_z >= 0.0) {
            return Err(Error::Domain(format!("dipole_z must be >= 0, got {}", self.dipole_z)));
        }
        if !(self.bias.is_finite() && self.bias >= 0.0) {
            return Err(Error::Domain(format!("bias must be >= 0, got {}", self.bias)));
        }
        Ok(())
    }

    /// Stark coupling `2 E_z |mu_z| / hbar` in angular-frequency units.
    pub fn stark_coupling(&self) -> f64 {
        2.0 * self.bias * self.dipole_z / self.hbar
    }

    /// Dimensionless mixing parameter `beta = tan(2 theta)`.
    pub fn beta(&self) -> f64 {
        self.stark_coupling() / self.delta34
    }

    pub fn theta(&self) -> f64 {
        0.5 * self.beta().atan()
    }

    /// Bias field that realises a given mixing parameter with this pair.
    pub fn bias_for_beta(&self, beta: f64) -> f64 {
        beta * self.hbar * self.delta34 / (2.0 * self.dipole_z)
    }
}

/// Mixing angle `theta = atan(beta) / 2`, in `[0, pi/4)`.
pub fn mixing_angle_from_beta(beta: f64) -> Result<f64> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Domain(format!(
            "mixing parameter must be finite and >= 0, got {beta}"
        )));
    }
    Ok(0.5 * beta.atan())
}

/// Inverse of [`mixing_angle_from_beta`] on `[0, pi/4)`.
pub fn beta_from_mixing_angle(theta: f64) -> f64 {
    (2.0 * theta).tan()
}

/// Dressed splitting `sqrt(delta34^2 + (2 E_z |mu_z| / hbar)^2)`.
pub fn dressed_splitting(cfg: &StarkConfig) -> f64 {
    cfg.delta34.hypot(cfg.stark_coupling())
}

/// Slope of the dressed splitting with respect to the bias field at
/// mixing angle `theta0`.
pub fn splitting_slope(cfg: &StarkConfig, theta0: f64) -> f64 {
    2.0 * cfg.dipole_z / cfg.hbar * (2.0 * theta0).sin()
}

/// Dissipation rates in units of `gamma21`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationRates {
    pub gamma21: f64,
    pub gamma32: f64,
    pub gamma42: f64,
    pub deph3: f64,
    pub deph4: f64,
}

impl Default for DissipationRates {
    fn default() -> Self {
        Self {
            gamma21: 1.0,
            gamma32: 0.05,
            gamma42: 0.05,
            deph3: 0.01,
            deph4: 0.01,
        }
    }
}

impl DissipationRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("gamma21", self.gamma21),
            ("gamma32", self.gamma32),
            ("gamma42", self.gamma42),
            ("deph3", self.deph3),
            ("deph4", self.deph4),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.gamma21 <= 0.0 {
            return Err(Error::Domain("gamma21 must be > 0".into()));
        }
        Ok(())
    }

    /// All rates zero. Used for coherent-evolution checks; fails [`Self::validate`].
    pub fn zero() -> Self {
        Self {
            gamma21: 0.0,
            gamma32: 0.0,
            gamma42: 0.0,
            deph3: 0.0,
            deph4: 0.0,
        }
    }
}

/// Everything that defines one simulation of the driven four-level system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub omega_p_rabi: f64,
    pub omega_c_rabi: f64,
    /// Underlying signal Rabi scale, before Stark reduction.
    pub omega_s_rabi: f64,
    pub delta_p: f64,
    pub delta_c: f64,
    pub delta_s: f64,
    /// Received-signal carrier frequency.
    pub omega_s_drive: f64,
    pub theta: f64,
    pub rates: DissipationRates,
}

impl OperatingPoint {
    /// Nominal design point at the balanced mixing angle.
    pub fn nominal() -> Self {
        Self {
            omega_p_rabi: 0.2,
            omega_c_rabi: 1.0,
            omega_s_rabi: 0.12,
            delta_p: 0.0,
            delta_c: 0.0,
            delta_s: 0.0,
            omega_s_drive: 10.0,
            theta: 0.56,
            rates: DissipationRates::default(),
        }
    }

    /// Strong-drive, detuned point used for truncation stress tests.
    pub fn stress() -> Self {
        Self {
            omega_c_rabi: 1.6,
            omega_s_rabi: 0.25,
            delta_p: 0.10,
            delta_c: -0.10,
            theta: 0.60,
            omega_s_drive: 1.0,
            ..Self::nominal()
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_signal(mut self, omega_s_rabi: f64) -> Self {
        self.omega_s_rabi = omega_s_rabi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rabi = [
            ("omega_p_rabi", self.omega_p_rabi),
            ("omega_c_rabi", self.omega_c_rabi),
            ("omega_s_rabi", self.omega_s_rabi),
        ];
        for (name, v) in rabi {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("delta_p", self.delta_p),
            ("delta_c", self.delta_c),
            ("delta_s", self.delta_s),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.omega_s_drive.is_finite() && self.omega_s_drive > 0.0) {
            return Err(Error::Domain(format!(
                "omega_s_drive must be > 0, got {}",
                self.omega_s_drive
            )));
        }
        if !(0.0..=FRAC_PI_4).contains(&self.theta) {
            return Err(Error::Domain(format!(
                "theta must lie in [0, pi/4], got {}",
                self.theta
            )));
        }
        self.rates.validate()
    }

    pub fn couplings(&self) -> EffectiveCouplings {
        effective_couplings(self.omega_c_rabi, self.omega_s_rabi, self.theta)
    }

    /// Drive period `2 pi / omega_s_drive`.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_s_drive
    }
}

/// Couplings in the Stark basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCouplings {
    /// `|2> <-> |3^(S)>`
    pub omega_23: f64,
    /// Bias-enabled leg `|2> <-> |4^(S)>`.
    pub omega_24: f64,
    /// Signal-driven `|3^(S)> <-> |4^(S)>`.
    pub omega_34: f64,
}

pub fn effective_couplings(omega_c: f64, omega_s: f64, theta: f64) -> EffectiveCouplings {
    EffectiveCouplings {
        omega_23: omega_c * theta.cos(),
        omega_24: omega_c * theta.sin(),
        omega_34: omega_s * (2.0 * theta).cos(),
    }
}

/// Fourier blocks of `H(t) = H0 + H+ e^{i(w t + phi)} + H- e^{-i(w t + phi)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetBlocks {
    pub h0: Op4,
    pub hplus: Op4,
    pub hminus: Op4,
}

impl FloquetBlocks {
    /// Hamiltonian at time `t` and signal phase `phi_s`.
    pub fn hamiltonian(&self, omega_s_drive: f64, t: f64, phi_s: f64) -> Op4 {
        let phase = Complex64::from_polar(1.0, omega_s_drive * t + phi_s);
        self.h0 + self.hplus * phase + self.hminus * phase.conj()
    }

    /// Blocks with the signal phase folded into the periodic terms.
    pub fn with_phase(&self, phi_s: f64) -> Self {
        let phase = Complex64::from_polar(1.0, phi_s);
        Self {
            h0: self.h0,
            hplus: self.hplus * phase,
            hminus: self.hminus * phase.conj(),
        }
    }
}

pub fn build_floquet_blocks(op: &OperatingPoint) -> FloquetBlocks {
    let c = op.couplings();
    let re = |x: f64| Complex64::new(x, 0.0);

    let mut h0 = Op4::zeros();
    h0[(1, 1)] = re(-op.delta_p);
    h0[(2, 2)] = re(-(op.delta_p + op.delta_c));
    h0[(3, 3)] = re(-(op.delta_p + op.delta_c - op.delta_s));
    for (i, j, v) in [(0, 1, op.omega_p_rabi), (1, 2, c.omega_23), (2, 3, c.omega_34)] {
        h0[(i, j)] = re(v);
        h0[(j, i)] = re(v);
    }

    let mut hplus = Op4::zeros();
    hplus[(1, 3)] = re(c.omega_24);
    let hminus = hplus.adjoint();

    FloquetBlocks { h0, hplus, hminus }
}
