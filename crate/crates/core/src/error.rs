//! Error type shared by every module of the crate.

use crate::gram::NormCertificate;
use thiserror::Error;

/// Errors reported by the estimators, materializers, and layer constructions.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument is malformed (zero size, non-finite data, bad length).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mathematical precondition of the requested operation fails.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Vector or matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A materialization would allocate more dense elements than allowed.
    #[error("memory cap exceeded: {required} dense elements requested, cap is {cap}")]
    MemoryCap { required: u128, cap: u128 },

    /// An iterative certification stopped at its iteration cap with the
    /// relative gap still above the requested tolerance. The partial
    /// certificate is still a valid upper bound.
    #[error("did not converge: relative gap {gap:.3e} at the iteration cap (partial value {})", partial.value)]
    Unconverged { gap: f64, partial: NormCertificate },
}

pub type Result<T> = std::result::Result<T, Error>;
