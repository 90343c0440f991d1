//! Noise model, phase/amplitude estimators, response maps and the
//! Monte-Carlo RMSE harness.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OperatingPoint;
use crate::pss::solve_pss;

/// Fraction of failed trials above which a harness warning is recorded.
pub const FAILURE_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }

    /// Noise level giving `snr` for a phasor of the given magnitude.
    pub fn for_snr(magnitude: f64, snr: f64, seed: u64) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::Domain(format!("SNR must be positive, got {snr}")));
        }
        Self::new(magnitude / (2.0 * snr).sqrt(), seed)
    }
}

/// `|P|^2 / (2 sigma^2)`.
pub fn snr(magnitude: f64, noise: &NoiseModel) -> f64 {
    magnitude * magnitude / (2.0 * noise.sigma * noise.sigma)
}

/// Generator for one independent stream of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn circular_noise<R: Rng>(rng: &mut R, sigma: f64) -> Complex64 {
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let re = normal.sample(rng);
    let im = normal.sample(rng);
    Complex64::new(re, im)
}

/// Adds circular complex Gaussian noise. Draw `draw` of a given seed is
/// always the same.
pub fn add_noise(z: Complex64, noise: &NoiseModel, draw: u64) -> Complex64 {
    let mut rng = stream_rng(noise.seed, draw);
    z + circular_noise(&mut rng, noise.sigma)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// `phi0 + arg(z_meas / z_ref) / n`. Only defined modulo `2 pi / n`.
pub fn estimate_phase(z_meas: Complex64, z_ref: Complex64, phi0: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Estimator("harmonic index must be at least 1".into()));
    }
    if z_ref.norm() == 0.0 || z_meas.norm() == 0.0 {
        return Err(Error::Estimator("zero phasor".into()));
    }
    let ratio = z_meas * z_ref.conj();
    Ok(phi0 + ratio.arg() / n as f64)
}

/// Sampled `m(Omega_S)` with the monotone branch holding the design level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMap {
    omega_grid: Vec<f64>,
    magnitudes: Vec<f64>,
    branch: (usize, usize),
    design_level: f64,
}

impl ResponseMap {
    /// Validates the samples and detects the branch.
    pub fn from_samples(omega_grid: Vec<f64>, magnitudes: Vec<f64>, design_level: f64) -> Result<Self> {
        if omega_grid.len() != magnitudes.len() {
            return Err(Error::Dimension {
                expected: omega_grid.len(),
                got: magnitudes.len(),
            });
        }
        if omega_grid.len() < 2 {
            return Err(Error::Domain("response map needs at least two samples".into()));
        }
        if omega_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("omega grid must be strictly increasing".into()));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Domain("magnitudes must be finite and nonnegative".into()));
        }
        let branch = detect_branch(&omega_grid, &magnitudes, design_level)?;
        Ok(Self {
            omega_grid,
            magnitudes,
            branch,
            design_level,
        })
    }

    pub fn omega_grid(&self) -> &[f64] {
        &self.omega_grid
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Inclusive index range of the branch.
    pub fn branch(&self) -> (usize, usize) {
        self.branch
    }

    pub fn design_level(&self) -> f64 {
        self.design_level
    }

    pub fn increasing(&self) -> bool {
        let (lo, _) = self.branch;
        self.magnitudes[lo + 1] > self.magnitudes[lo]
    }

    /// `(Omega_lo, Omega_hi)` of the branch.
    pub fn branch_interval(&self) -> (f64, f64) {
        (self.omega_grid[self.branch.0], self.omega_grid[self.branch.1])
    }

    /// `(m_min, m_max)` over the branch.
    pub fn branch_range(&self) -> (f64, f64) {
        let a = self.magnitudes[self.branch.0];
        let b = self.magnitudes[self.branch.1];
        (a.min(b), a.max(b))
    }

    /// Piecewise-linear interpolant on the branch.
    pub fn interpolate(&self, omega: f64) -> Result<f64> {
        let (lo, hi) = self.branch;
        let (a, b) = self.branch_interval();
        if !(omega >= a && omega <= b) {
            return Err(Error::OutOfRange {
                value: omega,
                context: format!("branch [{a}, {b}]"),
            });
        }
        let g = &self.omega_grid[lo..=hi];
        let j = segment(g, omega);
        let (x0, x1) = (g[j], g[j + 1]);
        let (y0, y1) = (self.magnitudes[lo + j], self.magnitudes[lo + j + 1]);
        Ok(y0 + (y1 - y0) * (omega - x0) / (x1 - x0))
    }
}

/// Index `j` with `g[j] <= x <= g[j+1]`, for `x` inside the grid.
fn segment(g: &[f64], x: f64) -> usize {
    let k = g.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(g.len() - 2)
}

fn detect_branch(grid: &[f64], m: &[f64], level: f64) -> Result<(usize, usize)> {
    let n = grid.len();
    if !(level >= grid[0] && level <= grid[n - 1]) {
        return Err(Error::Branch { design_level: level });
    }
    let j = segment(grid, level);
    let sign = |k: usize| (m[k + 1] - m[k]).partial_cmp(&0.0).unwrap();
    let s = sign(j);
    if s == std::cmp::Ordering::Equal {
        return Err(Error::Branch { design_level: level });
    }
    let mut lo = j;
    while lo > 0 && sign(lo - 1) == s {
        lo -= 1;
    }
    let mut hi = j + 1;
    while hi + 1 < n && sign(hi) == s {
        hi += 1;
    }
    Ok((lo, hi))
}

/// `Omega_S = 0.02 ..= 0.30` in steps of 0.005.
pub fn default_response_grid() -> Vec<f64> {
    (4..=60).map(|k| k as f64 / 200.0).collect()
}

/// Eight logarithmic points from 1e1 to 1e4.
pub fn default_snr_grid() -> Vec<f64> {
    (0..8).map(|k| 10f64.powf(1.0 + 3.0 * k as f64 / 7.0)).collect()
}

/// First probe harmonic `P_21^(1)` at one operating point.
pub fn first_harmonic(op: &OperatingPoint, n_max: usize) -> Result<Complex64> {
    solve_pss(op, n_max)?.probe_harmonic(1)
}

/// Solves the steady state at every grid point with all other settings fixed.
pub fn build_response_map(
    op_base: &OperatingPoint,
    omega_grid: &[f64],
    design_level: f64,
    n_max: usize,
) -> Result<ResponseMap> {
    if omega_grid.len() < 8 {
        return Err(Error::Domain(format!(
            "response map needs at least 8 grid points, got {}",
            omega_grid.len()
        )));
    }
    let magnitudes = omega_grid
        .par_iter()
        .map(|&w| first_harmonic(&op_base.with_signal(w), n_max).map(|z| z.norm()))
        .collect::<Result<Vec<f64>>>()?;
    ResponseMap::from_samples(omega_grid.to_vec(), magnitudes, design_level)
}

/// `d ln m / d ln Omega` from central differences of the log-transformed
/// branch samples, interpolated linearly in `Omega`.
pub fn log_sensitivity(map: &ResponseMap, omega_s: f64) -> Result<f64> {
    let (lo, hi) = map.branch;
    let (a, b) = map.branch_interval();
    if !(omega_s > a && omega_s < b) {
        return Err(Error::OutOfRange {
            value: omega_s,
            context: format!("open branch interval ({a}, {b})"),
        });
    }
    let g = &map.omega_grid[lo..=hi];
    let m = &map.magnitudes[lo..=hi];
    if g.iter().chain(m).any(|&v| v <= 0.0) {
        return Err(Error::UndefinedMetric(
            "log sensitivity needs positive Omega and magnitudes on the branch".into(),
        ));
    }
    let lx: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let last = g.len() - 1;
    let slope = |k: usize| {
        let (i, j) = if k == 0 {
            (0, 1)
        } else if k == last {
            (last - 1, last)
        } else {
            (k - 1, k + 1)
        };
        (ly[j] - ly[i]) / (lx[j] - lx[i])
    };
    let j = segment(g, omega_s);
    let (s0, s1) = (slope(j), slope(j + 1));
    Ok(s0 + (s1 - s0) * (omega_s - g[j]) / (g[j + 1] - g[j]))
}

/// Result of inverting the response map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub omega: f64,
    pub out_of_range: bool,
}

/// Bisection on the branch interpolant. Magnitudes outside the branch range
/// clamp to the nearer endpoint and set `out_of_range`.
pub fn invert_response(map: &ResponseMap, m_meas: f64) -> Result<Inversion> {
    if !m_meas.is_finite() {
        return Err(Error::Estimator(format!("non-finite magnitude {m_meas}")));
    }
    let (a, b) = map.branch_interval();
    let inc = map.increasing();
    let (m_lo, m_hi) = map.branch_range();
    if m_meas < m_lo || m_meas > m_hi {
        let low_end = (m_meas < m_lo) == inc;
        return Ok(Inversion {
            omega: if low_end { a } else { b },
            out_of_range: true,
        });
    }
    let (mut x0, mut x1) = (a, b);
    while x1 - x0 > 1e-10 * x1.abs().max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (x0 + x1);
        let v = map.interpolate(mid)?;
        if (v < m_meas) == inc {
            x0 = mid;
        } else {
            x1 = mid;
        }
        if mid == x0 && mid == x1 {
            break;
        }
    }
    Ok(Inversion {
        omega: 0.5 * (x0 + x1),
        out_of_range: false,
    })
}

/// `A = 2 hbar Omega / |mu|`.
pub fn rabi_to_field(omega_s: f64, dipole: f64, hbar: f64) -> Result<f64> {
    if !(dipole > 0.0) {
        return Err(Error::Domain(format!("dipole must be positive, got {dipole}")));
    }
    Ok(2.0 * hbar * omega_s / dipole)
}

/// `Omega = |mu| A / (2 hbar)`.
pub fn field_to_rabi(field: f64, dipole: f64, hbar: f64) -> Result<f64> {
    if !(hbar > 0.0) {
        return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
    }
    Ok(dipole * field / (2.0 * hbar))
}

/// `1 / (n sqrt(2 snr))`.
pub fn rmse_phase_theory(n: u32, snr: f64) -> Result<f64> {
    if n == 0 || !(snr > 0.0) {
        return Err(Error::Domain(format!("need n >= 1 and snr > 0 (n = {n}, snr = {snr})")));
    }
    Ok(1.0 / (n as f64 * (2.0 * snr).sqrt()))
}

/// `1 / (|s| sqrt(2 snr))`.
pub fn rmse_amp_theory(s: f64, snr: f64) -> Result<f64> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::DegenerateSensitivity(format!("s = {s}")));
    }
    if !(snr > 0.0) {
        return Err(Error::Domain(format!("snr must be positive, got {snr}")));
    }
    Ok(1.0 / (s.abs() * (2.0 * snr).sqrt()))
}

/// What the harness observes and how the SNR axis is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    /// Noiseless first harmonic at zero signal phase.
    pub phasor: Complex64,
    /// Calibrated reference for the phase estimator.
    pub reference: Complex64,
    /// Magnitude that sets `sigma` from each grid SNR.
    pub snr_magnitude: f64,
    /// True signal Rabi scale for the amplitude error.
    pub omega_true: f64,
    /// Sensitivity used by the theory curve.
    pub sensitivity: f64,
}

impl McScenario {
    /// Homogeneous scenario at the map's design level.
    pub fn homogeneous(op: &OperatingPoint, map: &ResponseMap, n_max: usize) -> Result<Self> {
        let omega_true = map.design_level();
        let phasor = first_harmonic(&op.with_signal(omega_true), n_max)?;
        Ok(Self {
            phasor,
            reference: phasor,
            snr_magnitude: phasor.norm(),
            omega_true,
            sensitivity: log_sensitivity(map, omega_true)?,
        })
    }

    /// SNR actually seen by the estimator at grid value `snr`.
    pub fn effective_snr(&self, snr: f64) -> f64 {
        let r = self.phasor.norm() / self.snr_magnitude;
        snr * r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseCurve {
    pub snr_grid: Vec<f64>,
    pub rmse_phase: Vec<f64>,
    pub rmse_amp_rel: Vec<f64>,
    pub theory_phase: Vec<f64>,
    pub theory_amp_rel: Vec<f64>,
    pub trials: usize,
    /// Trials with an undefined phase estimate, excluded from the RMSE.
    pub failed: Vec<usize>,
    /// Trials whose magnitude fell outside the branch range and were clamped.
    pub clamped: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy)]
struct Trial {
    phase_sq: f64,
    amp_sq: f64,
    failed: bool,
    clamped: bool,
}

/// Monte-Carlo phase and amplitude RMSE. Trial `i` at SNR index `k` draws from
/// stream `(k << 40) | i` of `seed`, and sums run in trial order, so the
/// result does not depend on the thread schedule.
pub fn monte_carlo_rmse(
    scenario: &McScenario,
    map: &ResponseMap,
    snr_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<RmseCurve> {
    if trials < 1000 {
        return Err(Error::Domain(format!("need at least 1000 trials, got {trials}")));
    }
    if trials as u64 >= 1 << 40 {
        return Err(Error::Domain("too many trials".into()));
    }
    if snr_grid.is_empty() || snr_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Domain("SNR grid must be nonempty and positive".into()));
    }
    if scenario.phasor.norm() == 0.0 || !(scenario.omega_true > 0.0) {
        return Err(Error::Domain("scenario needs a nonzero phasor and positive Omega".into()));
    }
    let mut out = RmseCurve {
        snr_grid: snr_grid.to_vec(),
        rmse_phase: Vec::new(),
        rmse_amp_rel: Vec::new(),
        theory_phase: Vec::new(),
        theory_amp_rel: Vec::new(),
        trials,
        failed: Vec::new(),
        clamped: Vec::new(),
        warnings: Vec::new(),
    };
    for (k, &snr_k) in snr_grid.iter().enumerate() {
        let noise = NoiseModel::for_snr(scenario.snr_magnitude, snr_k, seed)?;
        let results: Vec<Trial> = (0..trials)
            .into_par_iter()
            .map(|i| run_trial(scenario, map, &noise, ((k as u64) << 40) | i as u64))
            .collect::<Result<Vec<_>>>()?;
        let mut sp = 0.0;
        let mut sa = 0.0;
        let mut used = 0usize;
        let mut failed = 0usize;
        let mut clamped = 0usize;
        for t in &results {
            if t.failed {
                failed += 1;
                continue;
            }
            sp += t.phase_sq;
            sa += t.amp_sq;
            used += 1;
            clamped += t.clamped as usize;
        }
        if used == 0 {
            return Err(Error::Estimator(format!("all trials failed at SNR {snr_k}")));
        }
        out.rmse_phase.push((sp / used as f64).sqrt());
        out.rmse_amp_rel.push((sa / used as f64).sqrt());
        let eff = scenario.effective_snr(snr_k);
        out.theory_phase.push(rmse_phase_theory(1, eff)?);
        out.theory_amp_rel.push(rmse_amp_theory(scenario.sensitivity, eff)?);
        let bad = (failed + clamped) as f64 / trials as f64;
        if bad > FAILURE_WARN_FRACTION {
            out.warnings.push(format!(
                "SNR {snr_k:.6e}: {failed} failed and {clamped} clamped of {trials} trials"
            ));
        }
        out.failed.push(failed);
        out.clamped.push(clamped);
    }
    Ok(out)
}

fn run_trial(sc: &McScenario, map: &ResponseMap, noise: &NoiseModel, stream: u64) -> Result<Trial> {
    let mut rng = stream_rng(noise.seed, stream);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let z = sc.phasor * Complex64::from_polar(1.0, phi) + circular_noise(&mut rng, noise.sigma);
    let phase_err = match estimate_phase(z, sc.reference, 0.0, 1) {
        Ok(est) => wrap_phase(est - phi),
        Err(_) => {
            return Ok(Trial {
                phase_sq: 0.0,
                amp_sq: 0.0,
                failed: true,
                clamped: false,
            })
        }
    };
    let inv = invert_response(map, z.norm())?;
    let amp_err = (inv.omega - sc.omega_true) / sc.omega_true;
    Ok(Trial {
        phase_sq: phase_err * phase_err,
        amp_sq: amp_err * amp_err,
        failed: false,
        clamped: inv.out_of_range,
    })
}
