//! Error type shared by all simulator modules.

use std::fmt;
use std::io;

/// Coarse failure category, used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input: grid dimensions, configuration, CLI usage, precondition violations.
    Usage,
    /// Linear solver or discrete operator failure.
    Solver,
    /// Time-step restriction violated.
    Cfl,
    /// File system / parsing failure.
    Io,
}

impl ErrorCategory {
    /// Process exit code for this category (0 is reserved for success).
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Solver => 3,
            ErrorCategory::Cfl => 4,
            ErrorCategory::Io => 5,
        }
    }
}

#[derive(Debug)]
pub enum SimError {
    /// Invalid argument or configuration value.
    InvalidInput(String),
    /// Mask construction produced an unusable domain.
    DegenerateDomain(String),
    /// Two fields / grids that must match do not.
    GridMismatch(String),
    /// WLR requested before two time levels exist.
    MissingPreviousLevel,
    /// Pressure system has no Dirichlet anchor (or a disconnected one).
    SingularSystem(String),
    /// Total mobility lost positivity; the elliptic operator is no longer SPD.
    MobilityNotPositive { cell: (usize, usize), s: f64, lambda: f64 },
    /// Iterative solve did not reach the requested residual.
    SolverStalled { iterations: usize, relative_residual: f64, tol: f64 },
    /// Explicit step exceeds the advective stability bound.
    CflViolation { dt: f64, limit: f64 },
    /// Front extraction found no level crossing.
    EmptyFront(String),
    /// A requested profile crossing does not exist.
    MissingCrossing(String),
    Io { path: String, source: io::Error },
    Parse { path: String, line: usize, message: String },
}

impl SimError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            SimError::InvalidInput(_)
            | SimError::DegenerateDomain(_)
            | SimError::GridMismatch(_)
            | SimError::MissingPreviousLevel
            | SimError::EmptyFront(_)
            | SimError::MissingCrossing(_) => ErrorCategory::Usage,
            SimError::SingularSystem(_)
            | SimError::MobilityNotPositive { .. }
            | SimError::SolverStalled { .. } => ErrorCategory::Solver,
            SimError::CflViolation { .. } => ErrorCategory::Cfl,
            SimError::Io { .. } | SimError::Parse { .. } => ErrorCategory::Io,
        }
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            SimError::DegenerateDomain(msg) => write!(f, "degenerate domain: {msg}"),
            SimError::GridMismatch(msg) => write!(f, "grid mismatch: {msg}"),
            SimError::MissingPreviousLevel => {
                write!(f, "WLR needs two time levels; advance the state once first")
            }
            SimError::SingularSystem(msg) => write!(f, "singular pressure system: {msg}"),
            SimError::MobilityNotPositive { cell, s, lambda } => write!(
                f,
                "total mobility {lambda:.3e} <= 0 at cell ({}, {}) with S = {s:.6}; \
                 saturation left the model's validity range",
                cell.0, cell.1
            ),
            SimError::SolverStalled { iterations, relative_residual, tol } => write!(
                f,
                "pressure solve stalled after {iterations} iterations: \
                 relative residual {relative_residual:.3e} > tol {tol:.3e}"
            ),
            SimError::CflViolation { dt, limit } => {
                write!(f, "dt = {dt:.6e} violates the advective CFL bound {limit:.6e}")
            }
            SimError::EmptyFront(msg) => write!(f, "empty front: {msg}"),
            SimError::MissingCrossing(msg) => write!(f, "missing crossing: {msg}"),
            SimError::Io { path, source } => write!(f, "I/O error on {path}: {source}"),
            SimError::Parse { path, line, message } => {
                write!(f, "parse error at {path}:{line}: {message}")
            }
        }
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SimError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
