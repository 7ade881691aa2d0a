//! Error types shared across the crate.

use thiserror::Error;

/// Invalid scenario configuration (bad field values, file I/O, parse).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config file: {0}")]
    Parse(String),
}

/// A mathematical precondition was violated (e.g. non-positive distance,
/// querying a decode pair that does not exist).
#[derive(Debug, Error)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);

/// Subproblem assembly failed (dimension mismatch between auxiliaries and
/// the RSMA structure, inconsistent layout).
#[derive(Debug, Error)]
#[error("program build error: {0}")]
pub struct BuildError(pub String);

/// Outer algorithm failure modes.
#[derive(Debug, Error)]
pub enum RunError {
    /// The first subproblem was reported infeasible; the initialization
    /// contract (feasible precoders, zero rates) guarantees this can only
    /// happen on solver breakdown or an inconsistent scenario.
    #[error("first subproblem infeasible: initialization contract violated")]
    InitializationInfeasible,
    /// The solver failed before any feasible iterate was produced.
    #[error("solver failed with no feasible iterate: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}
