//! Python bindings: operating points, the periodic-steady-state solver,
//! response maps, design sweeps, Monte-Carlo curves, bias averaging and the
//! experiment runner.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use starkloop::design::{self, ThetaSweep};
use starkloop::estimation::{self, ResponseMap};
use starkloop::model::{self, StarkConfig};
use starkloop::nonuniform::{self, DetuningMode, Quadrature};
use starkloop::pss::{self, PssSolution};
use starkloop::{Error, Op4};
use starkloop_cli::config::{Experiment, ExperimentConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Dimension { .. } | Error::OutOfRange { .. } | Error::Distribution(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(m: &Op4) -> Vec<Vec<Complex64>> {
    (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect()
}

#[pyclass(name = "OperatingPoint", module = "starkloop", skip_from_py_object)]
#[derive(Clone)]
struct PyOperatingPoint {
    inner: model::OperatingPoint,
}

#[pymethods]
impl PyOperatingPoint {
    /// Starts from the nominal point; keyword arguments override fields.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut op = Self {
            inner: model::OperatingPoint::nominal(),
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                op.set(&key, v.extract()?)?;
            }
        }
        op.inner.validate().map_err(py_err)?;
        Ok(op)
    }

    #[staticmethod]
    fn nominal() -> Self {
        Self {
            inner: model::OperatingPoint::nominal(),
        }
    }

    #[staticmethod]
    fn stress() -> Self {
        Self {
            inner: model::OperatingPoint::stress(),
        }
    }

    fn get(&self, name: &str) -> PyResult<f64> {
        let o = &self.inner;
        Ok(match name {
            "omega_p_rabi" => o.omega_p_rabi,
            "omega_c_rabi" => o.omega_c_rabi,
            "omega_s_rabi" => o.omega_s_rabi,
            "delta_p" => o.delta_p,
            "delta_c" => o.delta_c,
            "delta_s" => o.delta_s,
            "omega_s_drive" => o.omega_s_drive,
            "theta" => o.theta,
            "gamma21" => o.rates.gamma21,
            "gamma32" => o.rates.gamma32,
            "gamma42" => o.rates.gamma42,
            "deph3" => o.rates.deph3,
            "deph4" => o.rates.deph4,
            _ => return Err(PyValueError::new_err(format!("unknown field {name}"))),
        })
    }

    fn set(&mut self, name: &str, value: f64) -> PyResult<()> {
        let o = &mut self.inner;
        let slot = match name {
            "omega_p_rabi" => &mut o.omega_p_rabi,
            "omega_c_rabi" => &mut o.omega_c_rabi,
            "omega_s_rabi" => &mut o.omega_s_rabi,
            "delta_p" => &mut o.delta_p,
            "delta_c" => &mut o.delta_c,
            "delta_s" => &mut o.delta_s,
            "omega_s_drive" => &mut o.omega_s_drive,
            "theta" => &mut o.theta,
            "gamma21" => &mut o.rates.gamma21,
            "gamma32" => &mut o.rates.gamma32,
            "gamma42" => &mut o.rates.gamma42,
            "deph3" => &mut o.rates.deph3,
            "deph4" => &mut o.rates.deph4,
            _ => return Err(PyValueError::new_err(format!("unknown field {name}"))),
        };
        *slot = value;
        Ok(())
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn omega_s_rabi(&self) -> f64 {
        self.inner.omega_s_rabi
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    fn with_theta(&self, theta: f64) -> Self {
        Self {
            inner: self.inner.with_theta(theta),
        }
    }

    fn with_signal(&self, omega_s_rabi: f64) -> Self {
        Self {
            inner: self.inner.with_signal(omega_s_rabi),
        }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "PssSolution", module = "starkloop")]
struct PyPssSolution {
    inner: PssSolution,
}

#[pymethods]
impl PyPssSolution {
    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    #[getter]
    fn trace_error(&self) -> f64 {
        self.inner.harmonics.trace_error()
    }

    #[getter]
    fn hermiticity_error(&self) -> f64 {
        self.inner.harmonics.hermiticity_error()
    }

    /// Probe coherence of harmonic `n`.
    fn probe_harmonic(&self, n: i32) -> PyResult<Complex64> {
        self.inner.probe_harmonic(n).map_err(py_err)
    }

    /// Full 4x4 coefficient of harmonic `n` as nested lists.
    fn harmonic(&self, n: i32) -> PyResult<Vec<Vec<Complex64>>> {
        self.inner.harmonics.coeff(n).map(matrix).map_err(py_err)
    }

    /// Coefficients at signal phase `phi_s`.
    fn apply_phase(&self, phi_s: f64) -> Self {
        let mut inner = self.inner.clone();
        inner.harmonics = inner.harmonics.apply_phase(phi_s);
        Self { inner }
    }

    #[pyo3(signature = (t, phi_s = 0.0))]
    fn reconstruct_rho(&self, t: f64, phi_s: f64) -> Vec<Vec<Complex64>> {
        matrix(&self.inner.reconstruct_rho(t, phi_s))
    }
}

#[pyfunction]
#[pyo3(signature = (op, n_max = pss::DEFAULT_N_MAX, phi_s = 0.0))]
fn solve_pss(op: &PyOperatingPoint, n_max: usize, phi_s: f64) -> PyResult<PyPssSolution> {
    pss::solve_pss_at_phase(&op.inner, n_max, phi_s)
        .map(|inner| PyPssSolution { inner })
        .map_err(py_err)
}

/// Relative first-harmonic truncation error for every `N < n_ref`.
#[pyfunction]
#[pyo3(signature = (op, n_ref = pss::DEFAULT_N_REF))]
fn convergence_sequence(op: &PyOperatingPoint, n_ref: usize) -> PyResult<Vec<f64>> {
    pss::convergence_sequence(&op.inner, n_ref).map_err(py_err)
}

#[pyclass(name = "ResponseMap", module = "starkloop")]
struct PyResponseMap {
    inner: ResponseMap,
}

#[pymethods]
impl PyResponseMap {
    #[getter]
    fn omega_grid(&self) -> Vec<f64> {
        self.inner.omega_grid().to_vec()
    }

    #[getter]
    fn magnitudes(&self) -> Vec<f64> {
        self.inner.magnitudes().to_vec()
    }

    #[getter]
    fn branch(&self) -> (usize, usize) {
        self.inner.branch()
    }

    #[getter]
    fn design_level(&self) -> f64 {
        self.inner.design_level()
    }

    fn interpolate(&self, omega: f64) -> PyResult<f64> {
        self.inner.interpolate(omega).map_err(py_err)
    }

    fn log_sensitivity(&self, omega: f64) -> PyResult<f64> {
        estimation::log_sensitivity(&self.inner, omega).map_err(py_err)
    }

    /// Returns `(omega, out_of_range)`.
    fn invert(&self, magnitude: f64) -> PyResult<(f64, bool)> {
        estimation::invert_response(&self.inner, magnitude)
            .map(|i| (i.omega, i.out_of_range))
            .map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (op, omega_grid = None, design_level = 0.12, n_max = pss::DEFAULT_N_MAX))]
fn response_map(
    op: &PyOperatingPoint,
    omega_grid: Option<Vec<f64>>,
    design_level: f64,
    n_max: usize,
) -> PyResult<PyResponseMap> {
    let grid = omega_grid.unwrap_or_else(estimation::default_response_grid);
    estimation::build_response_map(&op.inner, &grid, design_level, n_max)
        .map(|inner| PyResponseMap { inner })
        .map_err(py_err)
}

#[pyfunction]
fn estimate_phase(z_meas: Complex64, z_ref: Complex64, phi0: f64, n: u32) -> PyResult<f64> {
    estimation::estimate_phase(z_meas, z_ref, phi0, n).map_err(py_err)
}

#[pyclass(name = "ThetaSweep", module = "starkloop")]
struct PyThetaSweep {
    inner: ThetaSweep,
}

#[pymethods]
impl PyThetaSweep {
    #[getter]
    fn thetas(&self) -> Vec<f64> {
        self.inner.thetas.clone()
    }

    #[getter]
    fn m_phi(&self) -> Vec<f64> {
        self.inner.m_phi.clone()
    }

    #[getter]
    fn m_amp(&self) -> Vec<f64> {
        self.inner.m_amp.clone()
    }

    #[getter]
    fn s_values(&self) -> Vec<f64> {
        self.inner.s_values.clone()
    }

    fn theta_phase_star(&self) -> PyResult<f64> {
        design::theta_phase_star(&self.inner).map(|o| o.theta).map_err(py_err)
    }

    fn theta_amp_star(&self) -> PyResult<f64> {
        design::theta_amp_star(&self.inner).map(|o| o.theta).map_err(py_err)
    }

    /// Returns `(theta, d_phi, d_amp)`.
    fn theta_balanced(&self) -> PyResult<(f64, f64, f64)> {
        design::theta_balanced(&self.inner)
            .map(|b| (b.theta, b.d_phi, b.d_amp))
            .map_err(py_err)
    }

    #[pyo3(signature = (w_phase = 0.5, w_amp = 0.5, sigma = 1e-3))]
    fn theta_joint_star(&self, w_phase: f64, w_amp: f64, sigma: f64) -> PyResult<f64> {
        let w = design::DesignWeights::new(w_phase, w_amp).map_err(py_err)?;
        design::theta_joint_star(&self.inner, &w, sigma)
            .map(|o| o.theta)
            .map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (op, design_level = 0.12, theta_grid = None, n_max = pss::DEFAULT_N_MAX))]
fn sweep_theta(
    op: &PyOperatingPoint,
    design_level: f64,
    theta_grid: Option<Vec<f64>>,
    n_max: usize,
) -> PyResult<PyThetaSweep> {
    let grid = theta_grid.unwrap_or_else(design::default_theta_grid);
    design::sweep_theta(&op.inner, design_level, &grid, n_max)
        .map(|inner| PyThetaSweep { inner })
        .map_err(py_err)
}

#[pyfunction]
fn perturbative_f(theta: f64) -> f64 {
    design::perturbative_f(theta)
}

/// Homogeneous Monte-Carlo curves as a dict of lists.
#[pyfunction]
#[pyo3(signature = (op, rmap, snr_grid, trials = 30_000, seed = 0, n_max = pss::DEFAULT_N_MAX))]
fn monte_carlo_rmse<'py>(
    py: Python<'py>,
    op: &PyOperatingPoint,
    rmap: &PyResponseMap,
    snr_grid: Vec<f64>,
    trials: usize,
    seed: u64,
    n_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = estimation::McScenario::homogeneous(&op.inner, &rmap.inner, n_max).map_err(py_err)?;
    let c = py
        .detach(|| estimation::monte_carlo_rmse(&sc, &rmap.inner, &snr_grid, trials, seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("snr", c.snr_grid)?;
    d.set_item("rmse_phase", c.rmse_phase)?;
    d.set_item("theory_phase", c.theory_phase)?;
    d.set_item("rmse_amp_rel", c.rmse_amp_rel)?;
    d.set_item("theory_amp_rel", c.theory_amp_rel)?;
    d.set_item("sensitivity", sc.sensitivity)?;
    Ok(d)
}

/// Coherent gain of the bias-averaged first harmonic. `delta34 = None`
/// varies only the mixing angle; a value also shifts the signal detuning.
#[pyfunction]
#[pyo3(signature = (op, rel_spread, design_level = 0.12, node_count = 401, delta34 = None, n_max = pss::DEFAULT_N_MAX))]
fn coherent_gain(
    py: Python<'_>,
    op: &PyOperatingPoint,
    rel_spread: f64,
    design_level: f64,
    node_count: usize,
    delta34: Option<f64>,
    n_max: usize,
) -> PyResult<f64> {
    let base = op.inner;
    let mode = match delta34 {
        None => DetuningMode::Fixed,
        Some(d) => DetuningMode::Local(StarkConfig::new(d, 1.0, 0.0, 1.0).map_err(py_err)?),
    };
    py.detach(|| {
        let beta0 = model::beta_from_mixing_angle(base.theta);
        let dist = nonuniform::discretize_bias_with(beta0, rel_spread, node_count, Quadrature::Uniform {
            half_width: 6.0,
        })?;
        let avg = nonuniform::averaged_first_harmonic(&base, &dist, design_level, &mode, n_max)?;
        let reference = estimation::first_harmonic(&base.with_signal(design_level), n_max)?;
        nonuniform::coherent_gain(avg, reference)
    })
    .map_err(py_err)
}

/// Runs a named experiment from TOML text and returns its manifest as JSON.
/// Tables are written only when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (name, config_toml = "", out_dir = None))]
fn run_experiment(py: Python<'_>, name: &str, config_toml: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<String> {
    let exp = Experiment::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown experiment {name}")))?;
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let bundle = py
        .detach(|| starkloop_cli::experiments::run(exp, &cfg))
        .map_err(|e| match e.exit_code() {
            2 => PyValueError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        })?;
    if let Some(dir) = out_dir {
        bundle.write(&dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    Ok(bundle.manifest().to_string())
}

#[pymodule]
#[pyo3(name = "starkloop")]
fn starkloop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperatingPoint>()?;
    m.add_class::<PyPssSolution>()?;
    m.add_class::<PyResponseMap>()?;
    m.add_class::<PyThetaSweep>()?;
    m.add_function(wrap_pyfunction!(solve_pss, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(response_map, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_phase, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_theta, m)?)?;
    m.add_function(wrap_pyfunction!(perturbative_f, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_gain, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
