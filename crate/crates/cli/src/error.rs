//! CLI failure classes with distinct process exit codes, so callers can
//! script against the binary without parsing stderr.

use std::fmt;

/// Exit code taxonomy:
/// - 0: run completed and sampler diagnostics passed
/// - 1: internal or I/O failure
/// - 2: command-line usage error (reported by the argument parser)
/// - 3: input schema violation (missing columns, malformed config, ...)
/// - 4: outcome label in the data with no mapping to an ordinal level
/// - 5: sampler diagnostics failed the convergence gate
#[derive(Debug)]
pub enum CliError {
    /// The input file or configuration violates the documented schema.
    Schema(String),
    /// An outcome value could not be mapped onto the ordered levels.
    UnmappedOutcome(String),
    /// The posterior sample failed its convergence diagnostics.
    SamplerFailure(String),
    /// Anything else: I/O, serialization, numerical failure.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Schema(_) => 3,
            CliError::UnmappedOutcome(_) => 4,
            CliError::SamplerFailure(_) => 5,
        }
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        CliError::Schema(msg.into())
    }

    pub fn other(msg: impl Into<String>) -> Self {
        CliError::Other(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema violation: {m}"),
            CliError::UnmappedOutcome(m) => write!(f, "unmapped outcome: {m}"),
            CliError::SamplerFailure(m) => write!(f, "sampler failure: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<ordsum::Error> for CliError {
    fn from(e: ordsum::Error) -> Self {
        use ordsum::Error as E;
        match e {
            E::InvalidConfig(_)
            | E::InvalidData(_)
            | E::InvalidDistribution(_)
            | E::InvalidParams(_)
            | E::ScenarioFile(_)
            | E::DimensionMismatch { .. } => CliError::Schema(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
