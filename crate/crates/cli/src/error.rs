use std::fmt;

/// Failure of a command, classified by the process exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or inconsistent configuration (exit status 1).
    Usage(String),
    /// Unreadable, malformed or mismatched input files (exit status 2).
    Data(String),
    /// The conic solver did not reach an optimal solution (exit status 3).
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<kshape_core::Error> for CliError {
    fn from(e: kshape_core::Error) -> Self {
        match e {
            kshape_core::Error::Solver { .. } | kshape_core::Error::Decomposition(_) => CliError::Solver(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
