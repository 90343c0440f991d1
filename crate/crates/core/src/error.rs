use thiserror::Error;

/// Errors raised by the solver, estimators and design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular constrained system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("harmonic index {n} outside truncation order {n_max}")]
    HarmonicRange { n: i32, n_max: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("integration failed at t = {t:.6}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("demodulation window error: {0}")]
    Window(String),

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error("no monotone branch contains the design level {design_level}")]
    Branch { design_level: f64 },

    #[error("value {value} outside valid range: {context}")]
    OutOfRange { value: f64, context: String },

    #[error("degenerate sensitivity: {0}")]
    DegenerateSensitivity(String),

    #[error("no optimum: {0}")]
    NoOptimum(String),

    #[error("bias distribution error: {0}")]
    Distribution(String),

    #[error("node {index} (beta = {beta}): {source}")]
    Node {
        index: usize,
        beta: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
