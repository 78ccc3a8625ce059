//! Failure classes and their process exit codes.

use std::fmt;
use std::path::Path;

use rawls_core::eval::EvalError;
use rawls_core::fat::FatError;
use rawls_core::flat::FlatError;
use rawls_core::oracle::OracleError;
use rawls_core::stats::StatsError;
use rawls_core::synth::SynthError;
use rawls_core::CoreError;

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PRECONDITION: u8 = 4;
pub const EXIT_INFEASIBLE: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PARSE,
            message: message.into(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PRECONDITION,
            message: message.into(),
        }
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INFEASIBLE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::precondition(e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::parse(e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ScoreNeedsScalar(_) => Failure::parse(e.to_string()),
            _ => Failure::precondition(e.to_string()),
        }
    }
}

impl From<FatError> for Failure {
    fn from(e: FatError) -> Self {
        match e {
            FatError::NonSeparable { .. } => Failure::infeasible(e.to_string()),
            _ => Failure::precondition(e.to_string()),
        }
    }
}

impl From<FlatError> for Failure {
    fn from(e: FlatError) -> Self {
        match e {
            FlatError::NonSeparable { .. } | FlatError::SolverBudgetExceeded { .. } => {
                Failure::infeasible(e.to_string())
            }
            _ => Failure::precondition(e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NoGroups
            | OracleError::DuplicatePoint(_)
            | OracleError::UnknownPoint(_)
            | OracleError::InvalidSubPop { .. }
            | OracleError::DuplicateMass { .. }
            | OracleError::InvalidMass { .. }
            | OracleError::NotNormalized(_) => Failure::parse(e.to_string()),
            _ => Failure::precondition(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidBbox | EvalError::ZeroResolution => Failure::parse(e.to_string()),
            _ => Failure::precondition(e.to_string()),
        }
    }
}
