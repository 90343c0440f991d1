//! Quasistatic averaging over a nonuniform static bias.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    first_harmonic, log_sensitivity, monte_carlo_rmse, McScenario, ResponseMap, RmseCurve,
};
use crate::model::{dressed_splitting, mixing_angle_from_beta, OperatingPoint, StarkConfig};

pub const DEFAULT_NODE_COUNT: usize = 21;

/// Gauss–Hermite nodes and weights for a standard normal (probabilists'
/// convention), weights summing to one. Golub–Welsch.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Distribution("node count must be positive".into()));
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against eigen-solver rounding
    for i in 0..n / 2 {
        let k = n - 1 - i;
        let x = 0.5 * (pairs[k].0 - pairs[i].0);
        let w = 0.5 * (pairs[k].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(x, w)| (x, w / total)).unzip())
}

fn uniform_gaussian_rule(n: usize, half_width: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::Distribution(format!("half width must be positive, got {half_width}")));
    }
    let x: Vec<f64> = (0..n)
        .map(|k| half_width * (2.0 * k as f64 / (n - 1) as f64 - 1.0))
        .collect();
    let w: Vec<f64> = x.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok((x, w.into_iter().map(|w| w / total).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDistribution {
    pub beta0: f64,
    pub rel_spread: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BiasDistribution {
    /// Arbitrary weighted nodes; weights are renormalized.
    pub fn from_nodes(beta0: f64, rel_spread: f64, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::Distribution("need matching, nonempty nodes and weights".into()));
        }
        if let Some((i, b)) = nodes.iter().enumerate().find(|(_, b)| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Distribution(format!("node {i} has nonpositive beta {b}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Distribution("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Distribution("weights sum to zero".into()));
        }
        Ok(Self {
            beta0,
            rel_spread,
            nodes,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(b, w)| b * w).sum()
    }
}

/// Quadrature rule for the Gaussian in `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    GaussHermite,
    /// Equispaced nodes on `[-half_width, half_width]` standard deviations
    /// with normalized Gaussian weights. Resolves sharp features in `beta`
    /// that a low-order Gauss–Hermite rule aliases.
    Uniform { half_width: f64 },
}

/// Gaussian in `beta` with mean `beta0` and standard deviation
/// `rel_spread * beta0`, Gauss–Hermite rule.
pub fn discretize_bias(beta0: f64, rel_spread: f64, node_count: usize) -> Result<BiasDistribution> {
    discretize_bias_with(beta0, rel_spread, node_count, Quadrature::GaussHermite)
}

pub fn discretize_bias_with(
    beta0: f64,
    rel_spread: f64,
    node_count: usize,
    rule: Quadrature,
) -> Result<BiasDistribution> {
    if !(beta0 > 0.0 && beta0.is_finite()) {
        return Err(Error::Distribution(format!("beta0 must be positive, got {beta0}")));
    }
    if !(rel_spread >= 0.0 && rel_spread.is_finite()) {
        return Err(Error::Distribution(format!("rel_spread must be >= 0, got {rel_spread}")));
    }
    if rel_spread == 0.0 {
        return BiasDistribution::from_nodes(beta0, 0.0, vec![beta0], vec![1.0]);
    }
    if node_count < 3 {
        return Err(Error::Distribution(format!("need at least 3 nodes, got {node_count}")));
    }
    let (x, w) = match rule {
        Quadrature::GaussHermite => gauss_hermite(node_count)?,
        Quadrature::Uniform { half_width } => uniform_gaussian_rule(node_count, half_width)?,
    };
    let sigma = rel_spread * beta0;
    let nodes: Vec<f64> = x.iter().map(|x| beta0 + sigma * x).collect();
    if let Some((i, b)) = nodes.iter().enumerate().find(|(_, b)| **b <= 0.0) {
        return Err(Error::Distribution(format!(
            "node {i} at beta = {b} is not positive; spread too large for a Gaussian in beta"
        )));
    }
    BiasDistribution::from_nodes(beta0, rel_spread, nodes, w)
}

/// How the signal detuning varies across nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DetuningMode {
    /// Only the mixing angle varies.
    Fixed,
    /// The signal detuning follows the local dressed splitting of the pair.
    Local(StarkConfig),
}

/// Operating point at node `beta`.
pub fn node_operating_point(
    base: &OperatingPoint,
    beta0: f64,
    beta: f64,
    mode: &DetuningMode,
) -> Result<OperatingPoint> {
    let mut op = base.with_theta(mixing_angle_from_beta(beta)?);
    if let DetuningMode::Local(cfg) = mode {
        cfg.validate()?;
        if !(cfg.dipole_z > 0.0) {
            return Err(Error::Domain("local detuning needs a positive dipole".into()));
        }
        let at = |b: f64| {
            dressed_splitting(&StarkConfig {
                bias: cfg.bias_for_beta(b),
                ..*cfg
            })
        };
        op.delta_s -= at(beta) - at(beta0);
    }
    Ok(op)
}

/// `sum_i w_i P_21^(1)(beta_i)` at signal scale `omega_s_rabi`.
pub fn averaged_first_harmonic(
    base: &OperatingPoint,
    dist: &BiasDistribution,
    omega_s_rabi: f64,
    mode: &DetuningMode,
    n_max: usize,
) -> Result<Complex64> {
    let values = dist
        .nodes
        .par_iter()
        .enumerate()
        .map(|(i, &b)| {
            node_operating_point(base, dist.beta0, b, mode)
                .and_then(|op| first_harmonic(&op.with_signal(omega_s_rabi), n_max))
                .map_err(|e| Error::Node {
                    index: i,
                    beta: b,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .iter()
        .zip(&dist.weights)
        .fold(Complex64::new(0.0, 0.0), |acc, (p, w)| acc + p * *w))
}

/// `|avg| / |reference|`.
pub fn coherent_gain(avg: Complex64, reference: Complex64) -> Result<f64> {
    if reference.norm() == 0.0 {
        return Err(Error::UndefinedMetric("coherent gain with zero reference".into()));
    }
    Ok(avg.norm() / reference.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedResponse {
    pub p_bar: Complex64,
    /// Uniform first harmonic at `beta0`.
    pub p_ref: Complex64,
    pub gain: f64,
    pub map_avg: ResponseMap,
    pub s_avg: f64,
}

impl AveragedResponse {
    pub fn snr_eff(&self, snr0: f64) -> f64 {
        self.gain * self.gain * snr0
    }

    pub fn snr_amp_eff(&self, snr0: f64) -> f64 {
        self.s_avg * self.s_avg * self.snr_eff(snr0)
    }
}

/// Averaged map `|sum_i w_i P(Omega; beta_i)|` and its derived quantities.
/// The reference is the uniform response at `beta0` with `base.delta_s`.
pub fn averaged_response_map(
    base: &OperatingPoint,
    dist: &BiasDistribution,
    omega_grid: &[f64],
    design_level: f64,
    mode: &DetuningMode,
    n_max: usize,
) -> Result<AveragedResponse> {
    if omega_grid.len() < 8 {
        return Err(Error::Domain(format!(
            "response map needs at least 8 grid points, got {}",
            omega_grid.len()
        )));
    }
    let mags = omega_grid
        .iter()
        .map(|&w| averaged_first_harmonic(base, dist, w, mode, n_max).map(|z| z.norm()))
        .collect::<Result<Vec<_>>>()?;
    let map_avg = ResponseMap::from_samples(omega_grid.to_vec(), mags, design_level)?;
    let p_bar = averaged_first_harmonic(base, dist, design_level, mode, n_max)?;
    let ref_op = base.with_theta(mixing_angle_from_beta(dist.beta0)?);
    let p_ref = first_harmonic(&ref_op.with_signal(design_level), n_max)?;
    Ok(AveragedResponse {
        p_bar,
        p_ref,
        gain: coherent_gain(p_bar, p_ref)?,
        s_avg: log_sensitivity(&map_avg, design_level)?,
        map_avg,
    })
}

/// Monte-Carlo curves for one distribution, on raw and rescaled axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseCase {
    pub rel_spread: f64,
    pub gain: f64,
    pub s_avg: f64,
    pub curve: RmseCurve,
    /// `G^2 SNR_0`.
    pub snr_phase_axis: Vec<f64>,
    /// `|s_avg|^2 G^2 SNR_0`.
    pub snr_amp_axis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseStudy {
    pub uniform: RmseCurve,
    pub s_uniform: f64,
    pub cases: Vec<CollapseCase>,
}

/// Runs the harness against the uniform map and each averaged response. The
/// SNR axis is always defined by the uniform first harmonic.
#[allow(clippy::too_many_arguments)]
pub fn collapse_study(
    base: &OperatingPoint,
    uniform_map: &ResponseMap,
    dists: &[BiasDistribution],
    omega_grid: &[f64],
    mode: &DetuningMode,
    n_max: usize,
    snr_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CollapseStudy> {
    let level = uniform_map.design_level();
    let uniform_sc = McScenario::homogeneous(base, uniform_map, n_max)?;
    let uniform = monte_carlo_rmse(&uniform_sc, uniform_map, snr_grid, trials, seed)?;
    let mut cases = Vec::with_capacity(dists.len());
    for (k, d) in dists.iter().enumerate() {
        let avg = averaged_response_map(base, d, omega_grid, level, mode, n_max)?;
        let sc = McScenario {
            phasor: avg.p_bar,
            reference: avg.p_bar,
            snr_magnitude: avg.p_ref.norm(),
            omega_true: level,
            sensitivity: avg.s_avg,
        };
        let curve = monte_carlo_rmse(&sc, &avg.map_avg, snr_grid, trials, seed.wrapping_add(k as u64 + 1))?;
        cases.push(CollapseCase {
            rel_spread: d.rel_spread,
            gain: avg.gain,
            s_avg: avg.s_avg,
            snr_phase_axis: snr_grid.iter().map(|&s| avg.snr_eff(s)).collect(),
            snr_amp_axis: snr_grid.iter().map(|&s| avg.snr_amp_eff(s)).collect(),
            curve,
        });
    }
    Ok(CollapseStudy {
        uniform,
        s_uniform: uniform_sc.sensitivity,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::beta_from_mixing_angle;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hermite_moments() {
        for n in [3, 7, 21, 41] {
            let (x, w) = gauss_hermite(n).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
            assert!(m(1).abs() < 1e-12);
            assert!((m(2) - 1.0).abs() < 1e-10);
            assert!((m(4) - 3.0).abs() < 1e-9);
            if n >= 4 {
                assert!((m(6) - 15.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn discretize_examples() {
        let d = discretize_bias(2.0, 0.0, 21).unwrap();
        assert_eq!(d.nodes, vec![2.0]);
        assert_eq!(d.weights, vec![1.0]);
        let d = discretize_bias(2.0, 0.05, 7).unwrap();
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..7 {
            assert!((d.weights[i] - d.weights[6 - i]).abs() < 1e-15);
        }
        let f = |b: f64| 3.0 * b - 1.5;
        let avg: f64 = d.nodes.iter().zip(&d.weights).map(|(b, w)| w * f(*b)).sum();
        assert_relative_eq!(avg, f(2.0), epsilon = 1e-12);
        assert!(matches!(discretize_bias(1.0, 0.5, 21), Err(Error::Distribution(_))));
        assert!(discretize_bias(-1.0, 0.1, 21).is_err());
    }

    #[test]
    fn gain_examples() {
        let z = Complex64::new(0.3, -0.1);
        assert_eq!(coherent_gain(z, z).unwrap(), 1.0);
        assert_eq!(coherent_gain(Complex64::new(0.0, 0.0), z).unwrap(), 0.0);
        assert!(coherent_gain(z, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn single_node_average_is_local_value() {
        let base = OperatingPoint::nominal();
        let beta0 = beta_from_mixing_angle(base.theta);
        let d = discretize_bias(beta0, 0.0, 21).unwrap();
        let avg = averaged_first_harmonic(&base, &d, 0.12, &DetuningMode::Fixed, 3).unwrap();
        let p = first_harmonic(&base.with_theta(mixing_angle_from_beta(beta0).unwrap()), 3).unwrap();
        assert_eq!(avg, p);
    }

    #[test]
    fn local_mode_shifts_detuning() {
        let base = OperatingPoint::nominal();
        let cfg = StarkConfig::new(8.0, 1.0, 1.0, 1.0).unwrap();
        let op = node_operating_point(&base, 2.0, 2.1, &DetuningMode::Local(cfg)).unwrap();
        let expect = -8.0 * ((1.0f64 + 2.1 * 2.1).sqrt() - (1.0f64 + 4.0).sqrt());
        assert_relative_eq!(op.delta_s, expect, epsilon = 1e-12);
        let same = node_operating_point(&base, 2.0, 2.0, &DetuningMode::Local(cfg)).unwrap();
        assert_eq!(same.delta_s, base.delta_s);
    }

    #[test]
    fn fixed_mode_gain_converges_in_node_count() {
        let base = OperatingPoint::nominal();
        let beta0 = beta_from_mixing_angle(base.theta);
        let reference = first_harmonic(&base.with_signal(0.12), 3).unwrap();
        let mut last = 1.0;
        for rs in [0.01, 0.02, 0.05] {
            let g = |n| {
                let d = discretize_bias(beta0, rs, n).unwrap();
                let avg = averaged_first_harmonic(&base, &d, 0.12, &DetuningMode::Fixed, 3).unwrap();
                coherent_gain(avg, reference).unwrap()
            };
            let (g21, g41) = (g(21), g(41));
            assert!((g21 - g41).abs() < 1e-4);
            assert!(g21 < last);
            last = g21;
        }
    }

    #[test]
    fn gain_is_one_at_zero_spread_and_continuous() {
        let base = OperatingPoint::nominal();
        let beta0 = beta_from_mixing_angle(base.theta);
        let reference = first_harmonic(&base.with_signal(0.12), 3).unwrap();
        let mode = DetuningMode::Local(StarkConfig::new(8.0, 1.0, 1.0, 1.0).unwrap());
        let g = |rs: f64| {
            let d = discretize_bias_with(beta0, rs, 101, Quadrature::Uniform { half_width: 6.0 }).unwrap();
            coherent_gain(averaged_first_harmonic(&base, &d, 0.12, &mode, 3).unwrap(), reference).unwrap()
        };
        assert_eq!(g(0.0), 1.0);
        let spreads: Vec<f64> = (1..=10).map(|k| k as f64 * 1e-4).collect();
        let mut prev = 1.0;
        for rs in spreads {
            let v = g(rs);
            assert!((v - prev).abs() < 0.02, "jump at {rs}: {prev} -> {v}");
            prev = v;
        }
    }

    #[test]
    fn average_is_linear_in_distribution() {
        let base = OperatingPoint::nominal();
        let a = BiasDistribution::from_nodes(2.0, 0.0, vec![1.9, 2.1], vec![0.3, 0.7]).unwrap();
        let b = BiasDistribution::from_nodes(2.0, 0.0, vec![1.8, 2.05], vec![0.5, 0.5]).unwrap();
        let lam = 0.35;
        let mix = BiasDistribution::from_nodes(
            2.0,
            0.0,
            [a.nodes.clone(), b.nodes.clone()].concat(),
            a.weights.iter().map(|w| lam * w).chain(b.weights.iter().map(|w| (1.0 - lam) * w)).collect(),
        )
        .unwrap();
        let f = |d: &BiasDistribution| averaged_first_harmonic(&base, d, 0.12, &DetuningMode::Fixed, 3).unwrap();
        let lhs = f(&mix);
        let rhs = f(&a) * lam + f(&b) * (1.0 - lam);
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn zero_spread_map_matches_uniform() {
        let base = OperatingPoint::nominal();
        let beta0 = beta_from_mixing_angle(base.theta);
        let grid: Vec<f64> = (0..12).map(|k| 0.06 + 0.01 * k as f64).collect();
        let d = discretize_bias(beta0, 0.0, 21).unwrap();
        let avg = averaged_response_map(&base, &d, &grid, 0.12, &DetuningMode::Fixed, 3).unwrap();
        let uni = crate::estimation::build_response_map(&base, &grid, 0.12, 3).unwrap();
        for (x, y) in avg.map_avg.magnitudes().iter().zip(uni.magnitudes()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((avg.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_rule_is_symmetric() {
        let d = discretize_bias_with(2.0, 0.05, 11, Quadrature::Uniform { half_width: 6.0 }).unwrap();
        assert!((d.mean() - 2.0).abs() < 1e-14);
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn averaging_preserves_phase_law(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.01f64..1.0), 1..10),
            phi in -3.0f64..3.0,
        ) {
            let total: f64 = coeffs.iter().map(|c| c.2).sum();
            let avg = coeffs.iter().fold(Complex64::new(0.0, 0.0), |a, c| a + Complex64::new(c.0, c.1) * (c.2 / total));
            prop_assume!(avg.norm() > 1e-6);
            let rot = coeffs.iter().fold(Complex64::new(0.0, 0.0), |a, c| {
                a + Complex64::new(c.0, c.1) * Complex64::from_polar(1.0, phi) * (c.2 / total)
            });
            let d = crate::estimation::wrap_phase(rot.arg() - avg.arg() - phi);
            prop_assert!(d.abs() < 1e-12);
        }
    }
}
