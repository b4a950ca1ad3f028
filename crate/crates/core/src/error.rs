//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Result`]. Errors fall
//! into three broad families, which the CLI maps onto process exit codes:
//!
//! * configuration problems (bad config file, inconsistent dimensions),
//! * numerical/runtime failures (degenerate geometry, singular solves,
//!   non-finite iterates),
//! * I/O failures while writing reports.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Target position coincides with a reference node, so bearings and
    /// their derivatives are undefined.
    #[error("degenerate geometry: target coincides with the {node}")]
    DegenerateGeometry {
        /// Which node the target collided with ("base station" or "ris").
        node: &'static str,
    },

    /// A dictionary column (or sensing atom) has zero norm, typically from
    /// degenerate probing; correlations against it are undefined.
    #[error("zero-norm atom at subcarrier {subcarrier}, column {column}")]
    ZeroNormAtom {
        /// Subcarrier index of the offending column.
        subcarrier: usize,
        /// Grid/column index of the offending column.
        column: usize,
    },

    /// Phase-slope delay estimation needs at least two subcarriers.
    #[error("delay estimation needs at least 2 subcarriers, got {0}")]
    TooFewSubcarriers(usize),

    /// The noiseless signal is identically zero, so an SNR-relative noise
    /// level cannot be defined.
    #[error("noiseless signal is identically zero; SNR-relative noise is undefined")]
    ZeroSignal,

    /// The 2x2 gain Gram matrix is singular or too ill-conditioned to
    /// invert reliably (near-collinear sensing atoms).
    #[error("gain system is singular or ill-conditioned (condition number {cond:.3e})")]
    SingularGram {
        /// Estimated spectral condition number of the Gram matrix.
        cond: f64,
    },

    /// An iterate or intermediate quantity became non-finite.
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite {
        /// What blew up (e.g. "position update", "cost").
        what: &'static str,
        /// Iteration counter at the time of the failure.
        iteration: usize,
    },

    /// Fisher information requires a strictly positive noise level.
    #[error("noise sigma must be strictly positive, got {0}")]
    NonPositiveNoise(f64),

    /// A structural problem with the experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading configs or writing reports.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
