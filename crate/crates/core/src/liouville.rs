//! Column-stacking vectorization and the harmonic Liouvillian blocks.
//!
//! With `vec` stacking columns, `vec(A X B) = (B^T kron A) vec(X)`, so
//! commutators, jump terms and anticommutators all become 16x16 matrices
//! acting on `vec(rho)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DissipationRates, FloquetBlocks};
use crate::{MaxNorm, Op4, Super, Vec16};

/// Column-stacked vector of a 4x4 operator.
pub fn vec(m: &Op4) -> Vec16 {
    // nalgebra storage is column-major, which is exactly column stacking.
    Vec16::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]. Accepts any slice and checks its length.
pub fn unvec(v: &[Complex64]) -> Result<Op4> {
    if v.len() != 16 {
        return Err(Error::Dimension {
            expected: 16,
            got: v.len(),
        });
    }
    Ok(Op4::from_column_slice(v))
}

/// `tau = vec(I_4)`; `tau^T vec(X) = tr X`.
pub fn trace_functional() -> Vec16 {
    vec(&Op4::identity())
}

/// Kronecker product of two 4x4 operators.
pub fn kron(a: &Op4, b: &Op4) -> Super {
    let mut out = Super::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let aij = a[(i, j)];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..4 {
                for l in 0..4 {
                    out[(4 * i + k, 4 * j + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Superoperator of `X -> [H, X]`.
pub fn commutator_super(h: &Op4) -> Super {
    let id = Op4::identity();
    kron(&id, h) - kron(&h.transpose(), &id)
}

/// Superoperator of `X -> {G, X}`.
pub fn anticommutator_super(g: &Op4) -> Super {
    let id = Op4::identity();
    kron(&id, g) + kron(&g.transpose(), &id)
}

/// Jump operators `L_k` with their rate prefactors folded in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpOperatorSet {
    pub ops: Vec<Op4>,
}

impl JumpOperatorSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `D[X] = sum_k L X L^dag - {L^dag L, X} / 2`, evaluated with plain matrix products.
    pub fn apply(&self, x: &Op4) -> Op4 {
        let mut out = Op4::zeros();
        for l in &self.ops {
            let ld = l.adjoint();
            let ldl = ld * l;
            out += l * x * ld - (ldl * x + x * ldl) * Complex64::new(0.5, 0.0);
        }
        out
    }
}

fn transition(to: usize, from: usize, rate: f64) -> Op4 {
    let mut m = Op4::zeros();
    m[(to, from)] = Complex64::new(rate.sqrt(), 0.0);
    m
}

/// Ladder decay channels plus projector dephasing on the two Stark states.
/// Zero-rate channels are omitted.
pub fn jump_operators(rates: &DissipationRates) -> JumpOperatorSet {
    let channels = [
        (0, 1, rates.gamma21),
        (1, 2, rates.gamma32),
        (1, 3, rates.gamma42),
        (2, 2, rates.deph3),
        (3, 3, rates.deph4),
    ];
    let ops = channels
        .into_iter()
        .filter(|&(_, _, g)| g > 0.0)
        .map(|(to, from, g)| transition(to, from, g))
        .collect();
    JumpOperatorSet { ops }
}

pub fn dissipator_super(jumps: &JumpOperatorSet) -> Super {
    let half = Complex64::new(0.5, 0.0);
    jumps.ops.iter().fold(Super::zeros(), |acc, l| {
        let ldl = l.adjoint() * l;
        acc + kron(&l.conjugate(), l) - anticommutator_super(&ldl) * half
    })
}

/// `L0`, `L+`, `L-` acting on vectorized density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianBlocks {
    pub l0: Super,
    pub lplus: Super,
    pub lminus: Super,
}

impl LiouvillianBlocks {
    /// Largest `|tau^T L|` entry over all three blocks.
    pub fn trace_leak(&self) -> f64 {
        let tau = trace_functional().transpose();
        [&self.l0, &self.lplus, &self.lminus]
            .iter()
            .map(|l| (tau * *l).max_norm())
            .fold(0.0, f64::max)
    }
}

pub fn liouvillian_blocks(blocks: &FloquetBlocks, jumps: &JumpOperatorSet) -> LiouvillianBlocks {
    let minus_i = Complex64::new(0.0, -1.0);
    LiouvillianBlocks {
        l0: commutator_super(&blocks.h0) * minus_i + dissipator_super(jumps),
        lplus: commutator_super(&blocks.hplus) * minus_i,
        lminus: commutator_super(&blocks.hminus) * minus_i,
    }
}
