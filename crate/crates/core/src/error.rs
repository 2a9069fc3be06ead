use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tuning error: {0}")]
    Tuning(String),

    #[error("eigensolver did not converge after {iterations} basis vectors (worst residual {worst_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        worst_residual: f64,
    },

    #[error("config error{}: key `{key}`: {message}", line_suffix(.line))]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for this error family: input 2, tuning 3, solver 4, io 5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } => 2,
            Error::Tuning(_) => 3,
            Error::NonConvergence { .. } => 4,
            Error::Io(_) | Error::Csv(_) => 5,
        }
    }

    /// Short machine-readable family name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } => "input",
            Error::Tuning(_) => "tuning",
            Error::NonConvergence { .. } => "solver",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;
