//! Truncated harmonic-balance solve for the periodic steady state.
//!
//! The unknowns are `p_n = vec(P^(n))` for `n = -N..=N`, stacked in that
//! order. Block row `n` reads
//!
//! ```text
//! (i n w I - L0) p_n - L+ p_{n-1} - L- p_{n+1} = 0
//! ```
//!
//! and its `(1,1)`-element row is replaced by the trace constraint
//! (`tr P^(0) = 1`, `tr P^(n) = 0` otherwise). The constraint only touches
//! the diagonal block, so the system stays block tridiagonal and is solved
//! by block elimination; a dense LU path is kept for cross-checking.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::liouville::{self, jump_operators, liouvillian_blocks, LiouvillianBlocks};
use crate::model::{build_floquet_blocks, OperatingPoint};
use crate::{MaxNorm, Op4, Super, Vec16};

/// Production truncation order.
pub const DEFAULT_N_MAX: usize = 3;
/// Reference order for truncation-convergence checks.
pub const DEFAULT_N_REF: usize = 8;
/// Max-norm tolerance on the constrained-system residual.
pub const DEFAULT_SOLVE_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Reference-phase Fourier coefficients `P^(-N) ..= P^(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSet {
    n_max: usize,
    coeffs: Vec<Op4>,
}

impl HarmonicSet {
    pub fn new(n_max: usize, coeffs: Vec<Op4>) -> Result<Self> {
        if coeffs.len() != 2 * n_max + 1 {
            return Err(Error::Dimension {
                expected: 2 * n_max + 1,
                got: coeffs.len(),
            });
        }
        Ok(Self { n_max, coeffs })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Coefficients ordered from `-N` to `N`.
    pub fn coeffs(&self) -> &[Op4] {
        &self.coeffs
    }

    pub fn get(&self, n: i32) -> Option<&Op4> {
        if n.unsigned_abs() as usize > self.n_max {
            return None;
        }
        self.coeffs.get((n + self.n_max as i32) as usize)
    }

    pub fn coeff(&self, n: i32) -> Result<&Op4> {
        self.get(n).ok_or(Error::HarmonicRange {
            n,
            n_max: self.n_max,
        })
    }

    /// `rho_21` component of harmonic `n`.
    pub fn probe(&self, n: i32) -> Result<Complex64> {
        Ok(self.coeff(n)?[(1, 0)])
    }

    pub fn indices(&self) -> impl Iterator<Item = i32> {
        let n = self.n_max as i32;
        -n..=n
    }

    /// Coefficients at signal phase `phi_s`: `P^(n) e^{i n phi_s}`.
    pub fn apply_phase(&self, phi_s: f64) -> Self {
        let coeffs = self
            .indices()
            .zip(&self.coeffs)
            .map(|(n, p)| p * Complex64::from_polar(1.0, n as f64 * phi_s))
            .collect();
        Self {
            n_max: self.n_max,
            coeffs,
        }
    }

    /// `rho(t) = sum_n P^(n) e^{i n (w t + phi_s)}`.
    pub fn reconstruct(&self, omega_s_drive: f64, t: f64, phi_s: f64) -> Op4 {
        let arg = omega_s_drive * t + phi_s;
        self.indices()
            .zip(&self.coeffs)
            .fold(Op4::zeros(), |acc, (n, p)| {
                acc + p * Complex64::from_polar(1.0, n as f64 * arg)
            })
    }

    /// `max_n |tr P^(n) - delta_{n0}|`.
    pub fn trace_error(&self) -> f64 {
        self.indices()
            .zip(&self.coeffs)
            .map(|(n, p)| {
                let target = if n == 0 { 1.0 } else { 0.0 };
                (p.trace() - target).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max_n ||P^(-n) - P^(n)^dag||_max`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.n_max as i32;
        (0..=n)
            .map(|k| {
                let plus = self.get(k).unwrap();
                let minus = self.get(-k).unwrap();
                (minus - plus.adjoint()).max_norm()
            })
            .fold(0.0, f64::max)
    }

    /// Max-norm residual of the unconstrained harmonic-balance equations
    /// over the interior harmonics `|n| <= N - 1`.
    pub fn balance_residual(&self, blocks: &LiouvillianBlocks, omega_s_drive: f64) -> f64 {
        let n_max = self.n_max as i32;
        let zero = Op4::zeros();
        let mut worst = 0.0f64;
        for n in (1 - n_max)..n_max {
            let p = liouville::vec(self.get(n).unwrap());
            let below = liouville::vec(self.get(n - 1).unwrap_or(&zero));
            let above = liouville::vec(self.get(n + 1).unwrap_or(&zero));
            let lhs = p * Complex64::new(0.0, n as f64 * omega_s_drive)
                - blocks.l0 * p
                - blocks.lplus * below
                - blocks.lminus * above;
            worst = worst.max(lhs.max_norm());
        }
        worst
    }
}

/// Solved periodic steady state for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PssSolution {
    pub harmonics: HarmonicSet,
    pub op: OperatingPoint,
    pub residual_norm: f64,
    pub solve_tolerance: f64,
    /// Ratio of the largest to smallest pivot magnitude of the LU factor.
    pub condition_estimate: f64,
}

impl PssSolution {
    pub fn probe_harmonic(&self, n: i32) -> Result<Complex64> {
        self.harmonics.probe(n)
    }

    pub fn reconstruct_rho(&self, t: f64, phi_s: f64) -> Op4 {
        self.harmonics.reconstruct(self.op.omega_s_drive, t, phi_s)
    }

    pub fn n_max(&self) -> usize {
        self.harmonics.n_max()
    }
}

/// Solve at the reference phase `phi_s = 0`.
pub fn solve_pss(op: &OperatingPoint, n_max: usize) -> Result<PssSolution> {
    solve_pss_at_phase(op, n_max, 0.0)
}

/// Solve with the signal phase inserted directly into the periodic blocks.
///
/// The returned coefficients are `rho^(n)(phi_s)`, not the reference-phase
/// set; at `phi_s = 0` the two coincide.
pub fn solve_pss_at_phase(op: &OperatingPoint, n_max: usize, phi_s: f64) -> Result<PssSolution> {
    op.validate()?;
    if n_max == 0 {
        return Err(Error::Domain("truncation order must be >= 1".into()));
    }
    let blocks = build_floquet_blocks(op).with_phase(phi_s);
    let lb = liouvillian_blocks(&blocks, &jump_operators(&op.rates));
    let (harmonics, residual_norm, condition_estimate) =
        solve_harmonics(&lb, op.omega_s_drive, n_max)?;
    if residual_norm > DEFAULT_SOLVE_TOLERANCE {
        return Err(Error::Residual {
            residual: residual_norm,
            tolerance: DEFAULT_SOLVE_TOLERANCE,
        });
    }
    Ok(PssSolution {
        harmonics,
        op: *op,
        residual_norm,
        solve_tolerance: DEFAULT_SOLVE_TOLERANCE,
        condition_estimate,
    })
}

fn place(m: &mut DMatrix<Complex64>, row: usize, col: usize, block: &Super) {
    m.view_mut((row, col), (16, 16)).copy_from(block);
}

/// Assemble the constrained block-tridiagonal system and its right-hand side.
pub fn constrained_system(
    blocks: &LiouvillianBlocks,
    omega_s_drive: f64,
    n_max: usize,
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let nb = 2 * n_max + 1;
    let dim = 16 * nb;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let tau = liouville::trace_functional();
    let identity = Super::identity();

    for k in 0..nb {
        let n = k as i64 - n_max as i64;
        let a_n = identity * Complex64::new(0.0, n as f64 * omega_s_drive) - blocks.l0;
        place(&mut m, 16 * k, 16 * k, &a_n);
        if k > 0 {
            place(&mut m, 16 * k, 16 * (k - 1), &(-blocks.lplus));
        }
        if k + 1 < nb {
            place(&mut m, 16 * k, 16 * (k + 1), &(-blocks.lminus));
        }
        // Row 16k is the (1,1) element equation of block k.
        let row = 16 * k;
        m.row_mut(row).fill(ZERO);
        for (j, t) in tau.iter().enumerate() {
            m[(row, 16 * k + j)] = *t;
        }
        rhs[row] = if n == 0 { Complex64::new(1.0, 0.0) } else { ZERO };
    }
    (m, rhs)
}

/// Solve the constrained system for a prepared set of Liouvillian blocks by
/// block-Thomas elimination with a pivoted LU of each Schur complement.
///
/// Returns the harmonic set, the max-norm residual of the constrained
/// system and a pivot-ratio condition estimate.
pub fn solve_harmonics(
    blocks: &LiouvillianBlocks,
    omega_s_drive: f64,
    n_max: usize,
) -> Result<(HarmonicSet, f64, f64)> {
    let nb = 2 * n_max + 1;
    let rows = constrained_blocks(blocks, omega_s_drive, n_max);
    let mut schur = Vec::with_capacity(nb);
    let mut y: Vec<Vec16> = Vec::with_capacity(nb);
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for k in 0..nb {
        let (lower, diag, _, rhs) = &rows[k];
        let (s, yk) = if k == 0 {
            (*diag, *rhs)
        } else {
            let prev: &nalgebra::LU<Complex64, nalgebra::Const<16>, nalgebra::Const<16>> = &schur[k - 1];
            let upper_prev = &rows[k - 1].2;
            let g = prev.solve(upper_prev).ok_or(Error::Singular { condition: f64::INFINITY })?;
            let h = prev.solve(&y[k - 1]).ok_or(Error::Singular { condition: f64::INFINITY })?;
            (diag - lower * g, rhs - lower * h)
        };
        let lu = s.lu();
        for p in lu.u().diagonal().iter().map(|z| z.norm()) {
            pmin = pmin.min(p);
            pmax = pmax.max(p);
        }
        schur.push(lu);
        y.push(yk);
    }
    let condition = if pmin > 0.0 { pmax / pmin } else { f64::INFINITY };
    if !(condition.is_finite() && condition < 1e14) {
        return Err(Error::Singular { condition });
    }
    let mut x = vec![Vec16::zeros(); nb];
    for k in (0..nb).rev() {
        let mut r = y[k];
        if k + 1 < nb {
            r -= rows[k].2 * x[k + 1];
        }
        x[k] = schur[k].solve(&r).ok_or(Error::Singular { condition })?;
    }
    let mut residual = 0.0f64;
    for k in 0..nb {
        let (lower, diag, upper, rhs) = &rows[k];
        let mut r = diag * x[k] - rhs;
        if k > 0 {
            r += lower * x[k - 1];
        }
        if k + 1 < nb {
            r += upper * x[k + 1];
        }
        residual = residual.max(r.max_norm());
    }
    let coeffs = x.iter().map(|v| Op4::from_column_slice(v.as_slice())).collect();
    Ok((HarmonicSet::new(n_max, coeffs)?, residual, condition))
}

/// Constrained block rows `(lower, diag, upper, rhs)` for `n = -N..=N`.
fn constrained_blocks(
    blocks: &LiouvillianBlocks,
    omega_s_drive: f64,
    n_max: usize,
) -> Vec<(Super, Super, Super, Vec16)> {
    let tau = liouville::trace_functional();
    (0..2 * n_max + 1)
        .map(|k| {
            let n = k as i64 - n_max as i64;
            let mut diag = Super::identity() * Complex64::new(0.0, n as f64 * omega_s_drive) - blocks.l0;
            let mut lower = -blocks.lplus;
            let mut upper = -blocks.lminus;
            diag.row_mut(0).copy_from(&tau.transpose());
            lower.row_mut(0).fill(ZERO);
            upper.row_mut(0).fill(ZERO);
            let mut rhs = Vec16::zeros();
            if n == 0 {
                rhs[0] = Complex64::new(1.0, 0.0);
            }
            (lower, diag, upper, rhs)
        })
        .collect()
}

/// Dense LU on the full stacked system; reference path for
/// [`solve_harmonics`].
pub fn solve_harmonics_dense(
    blocks: &LiouvillianBlocks,
    omega_s_drive: f64,
    n_max: usize,
) -> Result<(HarmonicSet, f64, f64)> {
    let (m, rhs) = constrained_system(blocks, omega_s_drive, n_max);
    let lu = m.clone().lu();
    let u = lu.u();
    let pivots = u.diagonal().map(|z| z.norm());
    let (pmin, pmax) = pivots
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let condition = if pmin > 0.0 { pmax / pmin } else { f64::INFINITY };
    if !(condition.is_finite() && condition < 1e14) {
        return Err(Error::Singular { condition });
    }
    let x = lu.solve(&rhs).ok_or(Error::Singular { condition })?;
    let residual = (&m * &x - &rhs).max_norm();

    let coeffs = (0..2 * n_max + 1)
        .map(|k| Op4::from_column_slice(&x.as_slice()[16 * k..16 * (k + 1)]))
        .collect();
    Ok((HarmonicSet::new(n_max, coeffs)?, residual, condition))
}

/// Relative first-harmonic truncation error of order `n` against `n_ref`.
pub fn convergence_error(op: &OperatingPoint, n: usize, n_ref: usize) -> Result<f64> {
    if n == 0 || n >= n_ref {
        return Err(Error::Domain(format!(
            "need 1 <= n < n_ref, got n = {n}, n_ref = {n_ref}"
        )));
    }
    let reference = solve_pss(op, n_ref)?.probe_harmonic(1)?;
    if reference.norm() == 0.0 {
        return Err(Error::UndefinedMetric(
            "reference first harmonic is zero".into(),
        ));
    }
    let trial = solve_pss(op, n)?.probe_harmonic(1)?;
    Ok((trial - reference).norm() / reference.norm())
}

/// `epsilon_N` for every `N` in `1..n_ref`, sharing a single reference solve.
pub fn convergence_sequence(op: &OperatingPoint, n_ref: usize) -> Result<Vec<f64>> {
    let reference = solve_pss(op, n_ref)?.probe_harmonic(1)?;
    if reference.norm() == 0.0 {
        return Err(Error::UndefinedMetric(
            "reference first harmonic is zero".into(),
        ));
    }
    (1..n_ref)
        .map(|n| {
            let trial = solve_pss(op, n)?.probe_harmonic(1)?;
            Ok((trial - reference).norm() / reference.norm())
        })
        .collect()
}

/// Smallest eigenvalue of the Hermitian part of `rho`.
pub fn min_eigenvalue(rho: &Op4) -> f64 {
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Vectorized harmonic `n`, convenient for external linear algebra.
pub fn vec_harmonic(h: &HarmonicSet, n: i32) -> Result<Vec16> {
    Ok(liouville::vec(h.coeff(n)?))
}
