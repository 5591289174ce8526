//! Error taxonomy shared across the crate.
//!
//! Variants are grouped the way the CLI maps them to exit codes: configuration
//! and schema problems, model-feasibility violations, and numerical failures.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation
    /// (non-positive loss size, time outside the horizon, negative weight, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A (counterparty, model) pair violates the integrability conditions for
    /// the second-order cross integral ("Assumption 1" in the docs).
    #[error("infeasible model pair: {0}")]
    InfeasiblePair(String),

    /// A (counterparty, model, model) triple violates the integrability
    /// conditions for the third-order cross integral ("Assumption 2").
    #[error("infeasible model triple: {0}")]
    InfeasibleTriple(String),

    /// A perturbed reinsurance control fails the admissibility integrability
    /// requirements (its tail is too heavy against some model).
    #[error("inadmissible control: {0}")]
    Admissibility(String),

    /// A data sample carries no usable information for the requested fit
    /// (no claims, all severities identical, ...).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// An iterative or adaptive numerical routine failed to reach the
    /// requested tolerance; `achieved` records how far it got.
    #[error("numerical failure in {context}: achieved tolerance {achieved:.3e}, requested {requested:.3e}")]
    Numerical {
        context: String,
        achieved: f64,
        requested: f64,
    },

    /// The operation exists but is not defined for the requested combination
    /// (e.g. a moment the model gives no closed form for).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input file; `line` is 1-based where known.
    #[error("schema error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema { line: Option<u64>, message: String },

    /// Bad CLI arguments or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 config/schema/usage/domain,
    /// 3 feasibility/admissibility, 4 numerical/degenerate, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) | Error::Schema { .. } | Error::Config(_) => 2,
            Error::InfeasiblePair(_) | Error::InfeasibleTriple(_) | Error::Admissibility(_) => 3,
            Error::Numerical { .. } | Error::DegenerateSample(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
