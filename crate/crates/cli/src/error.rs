use std::process::ExitCode;

/// Failure classes of a run, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status())
    }

    pub fn status(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Classifies a library error raised while reading inputs.
    pub fn data(e: heatsrc::Error) -> Self {
        CliError::Data(e.to_string())
    }

    /// Classifies a library error raised by a computation.
    pub fn compute(e: heatsrc::Error) -> Self {
        use heatsrc::Error as E;
        match e {
            E::NoConvergence { .. } | E::Singular(_) | E::NonFinite(_) | E::Degenerate(_) => {
                CliError::Solver(e.to_string())
            }
            E::Domain(_) | E::Invalid(_) => CliError::Config(e.to_string()),
            E::Format { .. } => CliError::Data(e.to_string()),
            E::Io(_) | E::Json(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
