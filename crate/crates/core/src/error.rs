use thiserror::Error;

/// Errors raised by the simulator. Variants map onto the failure classes the
/// command-line front end reports (schema problems versus physics problems).
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty basis: no product state satisfies the {0} constraint")]
    EmptyBasis(String),

    #[error("unknown {kind} id {id} (only {available} available)")]
    UnknownId {
        kind: &'static str,
        id: usize,
        available: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("infeasible fine-tuning: {0}")]
    Infeasible(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("time step did not converge: {0}")]
    Convergence(String),

    #[error("gauge sector leakage {leakage:.3e} exceeds threshold {threshold:.1e}")]
    SectorLeakage { leakage: f64, threshold: f64 },

    #[error("pulse area {area} differs from pi by more than {tolerance:e}")]
    PulseArea { area: f64, tolerance: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
