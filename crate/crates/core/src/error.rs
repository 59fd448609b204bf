//! Shared error type for the laboratory.

/// Errors produced by validation, numerical routines and resource caps.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A spec or argument failed validation.
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    /// Two objects that must agree on dimensions do not.
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    /// An index or horizon fell outside the valid range.
    #[error("{what} {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// A symbol has no entry in the generator table.
    #[error("unknown symbol index {symbol} (table has {table_len} entries)")]
    UnknownSymbol { symbol: u32, table_len: usize },

    /// The Markov kernel is reducible, so the stationary law is not unique.
    #[error("stationary law is not unique: {detail}")]
    NonUniqueStationary { detail: String },

    /// Growth-rate estimates admit no stable grouping at the given threshold.
    #[error("no stable grouping of growth rates: {detail}")]
    UngroupableSpectrum { detail: String },

    /// A subspace containment required by an operation does not hold.
    #[error("containment failure: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotContained { residual: f64, tol: f64 },

    /// A size cap protecting desk-scale runs was exceeded.
    #[error("resource limit: {detail}")]
    ResourceLimit { detail: String },

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {detail}")]
    Precondition { detail: String },

    /// A numerical routine failed to reach its accuracy contract.
    #[error("numerical failure: {detail}")]
    Numerical { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by validators.
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }
}
