use thiserror::Error;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{failed} of {total} checks did not pass")]
    VerifyFailed { failed: usize, total: usize },

    #[error(transparent)]
    Core(#[from] saddle_scope::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use saddle_scope::Error as E;
        match self {
            CliError::Usage(_) => EXIT_INVALID,
            CliError::VerifyFailed { .. } => EXIT_VERIFY_FAILED,
            CliError::Core(E::Diverged { .. }) => EXIT_DIVERGED,
            CliError::Core(
                E::Config { .. }
                | E::InvalidParameter { .. }
                | E::DimensionMismatch { .. }
                | E::NoSaddleNoise,
            ) => EXIT_INVALID,
            CliError::Core(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
