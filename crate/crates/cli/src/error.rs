use thiserror::Error;

/// Errors surfaced by the runner, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: String, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Data(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numeric { .. } => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<gva_core::Error> for CliError {
    fn from(e: gva_core::Error) -> Self {
        match e {
            gva_core::Error::Numeric { op, detail } => Self::Numeric { op: op.to_string(), detail },
            gva_core::Error::Data(d) => Self::Data(d),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(format!("json: {e}"))
    }
}
