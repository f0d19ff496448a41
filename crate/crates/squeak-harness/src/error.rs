//! Harness error type and the process exit codes it maps to.

/// Exit code for configuration problems (bad flags, unreadable inputs,
/// invalid parameter ranges).
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for verification failures under `--strict`.
pub const EXIT_VERIFY: i32 = 3;

/// Everything that can go wrong while running an experiment.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// User-facing configuration problem; exits with [`EXIT_CONFIG`].
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical or contract error from the library.
    #[error(transparent)]
    Lib(#[from] squeak::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    /// A report file could not be parsed or written.
    #[error("report error: {0}")]
    Report(String),
}

impl HarnessError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            _ => 1,
        }
    }
}
