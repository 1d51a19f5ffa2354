use thiserror::Error;

use crate::operators::FeedbackMode;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atom index {index} out of range for a chain of {n_atoms} atoms")]
    IndexOutOfRange { index: usize, n_atoms: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("generator requires feedback mode {expected}, got {found}")]
    WrongFeedbackMode {
        expected: FeedbackMode,
        found: FeedbackMode,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimer state undefined for rabi = 0 and delta_gamma = 0")]
    DegenerateDimer,

    #[error("no stationary state: smallest singular value {smallest:.3e} above threshold {threshold:.3e}")]
    NoNullVector { smallest: f64, threshold: f64 },

    #[error("stationary candidate not positive: minimum eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("stationary residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("dominant eigenvalue has imaginary part {imag:.3e}")]
    ComplexDominant { imag: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("no fully mixed line: sin(alpha) = 0 at alpha = {alpha}")]
    NoFullyMixedSolution { alpha: f64 },

    #[error("trajectory step too large: dt * max jump rate = {0:.3e} (limit 0.05)")]
    StepTooLarge(f64),

    #[error("conditioned state lost normalization: {0:.3e}")]
    NormLoss(f64),

    #[error("config: {0}")]
    Config(#[from] crate::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
