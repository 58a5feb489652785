use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty operator or state (dimension 0)")]
    EmptyDimension,

    #[error("operator is not Hermitian: max |M - M^dagger| = {asymmetry:e}")]
    NotHermitian { asymmetry: f64 },

    #[error("exponent {magnitude:.3} exceeds the representable range (limit 700)")]
    Range { magnitude: f64 },

    #[error("readout grid (T={readout_t}, N={readout_n}) does not match measurement grid (T={spec_t}, N={spec_n})")]
    GridMismatch {
        readout_t: f64,
        readout_n: usize,
        spec_t: f64,
        spec_n: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("readout sampling needs kappa*dt > 0; use unitary propagation for kappa = 0")]
    ZeroMeasurementStrength,

    #[error("path enumeration needs {count} paths, more than the limit of {limit}")]
    TooManyPaths { count: u128, limit: u64 },

    #[error("master equation integration unstable at step {step} (trace drift {trace_drift:e}, max |rho_ij| {max_entry:e}); retry with at least {suggested_steps} steps")]
    MasterInstability {
        step: usize,
        trace_drift: f64,
        max_entry: f64,
        suggested_steps: usize,
    },

    #[error("Hamiltonian does not commute with the observable: ||[H, A]|| = {norm:e}")]
    NonCommuting { norm: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("{0} must not be empty")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Failures of the numerics proper, as opposed to invalid inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Range { .. } | Error::MasterInstability { .. } | Error::ZeroNorm
        )
    }
}
