use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const CHECK_FAILED: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const OPTIMIZER: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("solver: {0}")]
    Solver(#[from] ouu_core::Error),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
    #[error("optimizer stopped without converging: {0}")]
    Optimizer(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Csv(_) => exit::IO,
            CliError::Solver(_) => exit::SOLVER,
            CliError::CheckFailed(_) => exit::CHECK_FAILED,
            CliError::Optimizer(_) => exit::OPTIMIZER,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
