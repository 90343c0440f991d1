//! Flat TOML experiment configuration.
//!
//! Every key is optional; omitted keys take the defaults below. Unknown keys
//! are rejected.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starkloop::design::default_theta_grid;
use starkloop::estimation::{default_response_grid, default_snr_grid};
use starkloop::model::{DissipationRates, OperatingPoint, StarkConfig};
use starkloop::nonuniform::{DetuningMode, Quadrature, DEFAULT_NODE_COUNT};
use starkloop::pss::{DEFAULT_N_MAX, DEFAULT_N_REF};
use starkloop::timedomain::IntegrationWindow;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    PhaseLaw,
    ResponseMap,
    ThetaSweep,
    RmseUniform,
    RmseNonuniform,
    GainCurve,
    Validate,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::PhaseLaw,
        Experiment::ResponseMap,
        Experiment::ThetaSweep,
        Experiment::RmseUniform,
        Experiment::RmseNonuniform,
        Experiment::GainCurve,
        Experiment::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PhaseLaw => "phase_law",
            Experiment::ResponseMap => "response_map",
            Experiment::ThetaSweep => "theta_sweep",
            Experiment::RmseUniform => "rmse_uniform",
            Experiment::RmseNonuniform => "rmse_nonuniform",
            Experiment::GainCurve => "gain_curve",
            Experiment::Validate => "validate",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Nominal,
    Stress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningKind {
    Fixed,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    GaussHermite,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `|1><1|`.
    Ground,
    /// Fixed point of the one-period propagator.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,

    pub point: Preset,
    pub omega_p_rabi: Option<f64>,
    pub omega_c_rabi: Option<f64>,
    pub omega_s_rabi: Option<f64>,
    pub delta_p: Option<f64>,
    pub delta_c: Option<f64>,
    pub delta_s: Option<f64>,
    pub omega_s_drive: Option<f64>,
    pub theta: Option<f64>,
    pub gamma21: Option<f64>,
    pub gamma32: Option<f64>,
    pub gamma42: Option<f64>,
    pub deph3: Option<f64>,
    pub deph4: Option<f64>,

    pub n_max: usize,
    pub n_ref: usize,

    pub phi_points: usize,
    pub omega_grid: Vec<f64>,
    pub design_level: f64,
    pub theta_grid: Vec<f64>,
    pub snr_grid: Vec<f64>,
    pub trials: usize,

    pub w_phase: f64,
    pub w_amp: f64,
    pub sigma: f64,

    pub rel_spreads: Vec<f64>,
    pub gain_spreads: Vec<f64>,
    pub detuning: DetuningKind,
    pub delta34: f64,
    pub dipole_z: f64,
    pub hbar: f64,
    pub quadrature: QuadratureKind,
    pub node_count: usize,
    pub half_width: f64,

    pub burn_in_periods: usize,
    pub eval_periods: usize,
    pub samples_per_period: usize,
    pub initial_state: InitialState,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let window = IntegrationWindow::default();
        Self {
            experiment: None,
            out_dir: None,
            seed: 0,
            point: Preset::Nominal,
            omega_p_rabi: None,
            omega_c_rabi: None,
            omega_s_rabi: None,
            delta_p: None,
            delta_c: None,
            delta_s: None,
            omega_s_drive: None,
            theta: None,
            gamma21: None,
            gamma32: None,
            gamma42: None,
            deph3: None,
            deph4: None,
            n_max: DEFAULT_N_MAX,
            n_ref: DEFAULT_N_REF,
            phi_points: 64,
            omega_grid: default_response_grid(),
            design_level: 0.12,
            theta_grid: default_theta_grid(),
            snr_grid: default_snr_grid(),
            trials: 30_000,
            w_phase: 0.5,
            w_amp: 0.5,
            sigma: 1e-3,
            rel_spreads: vec![0.01, 0.02, 0.05],
            gain_spreads: (0..=20).map(|k| k as f64 * 0.0025).collect(),
            detuning: DetuningKind::Fixed,
            delta34: 8.0,
            dipole_z: 1.0,
            hbar: 1.0,
            quadrature: QuadratureKind::GaussHermite,
            node_count: DEFAULT_NODE_COUNT,
            half_width: 6.0,
            burn_in_periods: window.burn_in_periods,
            eval_periods: window.eval_periods,
            samples_per_period: window.samples_per_period,
            initial_state: InitialState::Ground,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_grid(field: &str, g: &[f64], min_len: usize) -> Result<(), CliError> {
    if g.len() < min_len {
        return Err(config_err(field, format!("needs at least {min_len} values, got {}", g.len())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(config_err(field, "values must be finite"));
    }
    if g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config_err(field, "values must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn operating_point(&self) -> OperatingPoint {
        let mut op = match self.point {
            Preset::Nominal => OperatingPoint::nominal(),
            Preset::Stress => OperatingPoint::stress(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut op.omega_p_rabi, self.omega_p_rabi);
        set(&mut op.omega_c_rabi, self.omega_c_rabi);
        set(&mut op.omega_s_rabi, self.omega_s_rabi);
        set(&mut op.delta_p, self.delta_p);
        set(&mut op.delta_c, self.delta_c);
        set(&mut op.delta_s, self.delta_s);
        set(&mut op.omega_s_drive, self.omega_s_drive);
        set(&mut op.theta, self.theta);
        set(&mut op.rates.gamma21, self.gamma21);
        set(&mut op.rates.gamma32, self.gamma32);
        set(&mut op.rates.gamma42, self.gamma42);
        set(&mut op.rates.deph3, self.deph3);
        set(&mut op.rates.deph4, self.deph4);
        op
    }

    pub fn rates(&self) -> DissipationRates {
        self.operating_point().rates
    }

    pub fn window(&self) -> IntegrationWindow {
        IntegrationWindow {
            burn_in_periods: self.burn_in_periods,
            eval_periods: self.eval_periods,
            samples_per_period: self.samples_per_period,
        }
    }

    pub fn phi_grid(&self) -> Vec<f64> {
        (0..self.phi_points)
            .map(|k| TAU * k as f64 / self.phi_points as f64)
            .collect()
    }

    pub fn detuning_mode(&self) -> DetuningMode {
        match self.detuning {
            DetuningKind::Fixed => DetuningMode::Fixed,
            DetuningKind::Local => DetuningMode::Local(StarkConfig {
                delta34: self.delta34,
                dipole_z: self.dipole_z,
                bias: 0.0,
                hbar: self.hbar,
            }),
        }
    }

    pub fn quadrature_rule(&self) -> Quadrature {
        match self.quadrature {
            QuadratureKind::GaussHermite => Quadrature::GaussHermite,
            QuadratureKind::Uniform => Quadrature::Uniform {
                half_width: self.half_width,
            },
        }
    }

    /// Checks everything an experiment may use; errors name the key.
    pub fn validate(&self) -> Result<(), CliError> {
        self.operating_point()
            .validate()
            .map_err(|e| config_err("operating point", e))?;
        if self.n_max == 0 {
            return Err(config_err("n_max", "must be >= 1"));
        }
        if self.n_ref <= self.n_max {
            return Err(config_err("n_ref", "must exceed n_max"));
        }
        if self.phi_points == 0 {
            return Err(config_err("phi_points", "must be positive"));
        }
        check_grid("omega_grid", &self.omega_grid, 8)?;
        if self.omega_grid[0] < 0.0 {
            return Err(config_err("omega_grid", "values must be >= 0"));
        }
        if !(self.design_level > 0.0 && self.design_level.is_finite()) {
            return Err(config_err("design_level", "must be positive"));
        }
        check_grid("theta_grid", &self.theta_grid, 16)?;
        if self.theta_grid[0] < 0.0 || *self.theta_grid.last().unwrap() > std::f64::consts::FRAC_PI_4 {
            return Err(config_err("theta_grid", "values must lie in [0, pi/4]"));
        }
        check_grid("snr_grid", &self.snr_grid, 1)?;
        if self.snr_grid[0] <= 0.0 {
            return Err(config_err("snr_grid", "values must be positive"));
        }
        if self.trials < 1000 {
            return Err(config_err("trials", "must be >= 1000"));
        }
        if !(self.w_phase >= 0.0 && self.w_amp >= 0.0 && self.w_phase + self.w_amp > 0.0) {
            return Err(config_err("w_phase/w_amp", "must be >= 0 and not both zero"));
        }
        if !(self.sigma > 0.0) {
            return Err(config_err("sigma", "must be positive"));
        }
        check_grid("rel_spreads", &self.rel_spreads, 1)?;
        check_grid("gain_spreads", &self.gain_spreads, 1)?;
        if self.rel_spreads[0] < 0.0 || self.gain_spreads[0] < 0.0 {
            return Err(config_err("rel_spreads/gain_spreads", "values must be >= 0"));
        }
        if self.detuning == DetuningKind::Local && !(self.delta34 > 0.0 && self.dipole_z > 0.0 && self.hbar > 0.0) {
            return Err(config_err("delta34/dipole_z/hbar", "must be positive for local detuning"));
        }
        if self.node_count < 3 {
            return Err(config_err("node_count", "must be >= 3"));
        }
        if !(self.half_width > 0.0) {
            return Err(config_err("half_width", "must be positive"));
        }
        self.window().validate().map_err(|e| config_err("integration window", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_toml_str("tehta = 0.3\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::from_toml_str("point = \"stress\"\ntheta = 0.3\ngamma32 = 0.2\n").unwrap();
        let op = cfg.operating_point();
        assert_eq!(op.theta, 0.3);
        assert_eq!(op.omega_c_rabi, 1.6);
        assert_eq!(op.rates.gamma32, 0.2);
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::parse(e.name()), Some(e));
        }
        assert_eq!(Experiment::parse("nope"), None);
    }
}
