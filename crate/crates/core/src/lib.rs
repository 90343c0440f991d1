//! Periodic-steady-state simulation and estimation toolkit for a
//! bias-mixed four-level Rydberg receiver.
//!
//! The static bias mixes the two upper Rydberg states, closing a
//! phase-sensitive loop that the received RF signal drives periodically.
//! The probe coherence then carries harmonics whose phases follow the
//! signal phase exactly, and whose magnitudes map back to the signal
//! strength.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod estimation;
pub mod liouville;
pub mod model;
pub mod nonuniform;
pub mod pss;
pub mod timedomain;

pub use error::{Error, Result};

use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;

/// 4x4 complex operator on the reduced level space.
pub type Op4 = Matrix4<Complex64>;
/// 16x16 complex superoperator acting on column-stacked operators.
pub type Super = SMatrix<Complex64, 16, 16>;
/// Column-stacked 4x4 operator.
pub type Vec16 = SVector<Complex64, 16>;

/// Largest entry modulus of a complex matrix.
pub trait MaxNorm {
    fn max_norm(&self) -> f64;
}

impl<R, C, S> MaxNorm for nalgebra::Matrix<Complex64, R, C, S>
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S: nalgebra::RawStorage<Complex64, R, C>,
{
    fn max_norm(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
