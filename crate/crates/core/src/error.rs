use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {field}: {msg}")]
    Parameter { field: String, msg: String },
    #[error("range error: {0}")]
    Range(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("truncation error: tail bound {bound:e} exceeds tolerance {tol:e}; increase K_edge")]
    Truncation { bound: f64, tol: f64 },
    #[error("ergodicity error: {0}")]
    Ergodicity(String),
    #[error("divergence error: {0}")]
    Divergence(String),
    #[error("degenerate ratio: {0}")]
    Degenerate(String),
    #[error("distance error: {0}")]
    Distance(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(field: &str, msg: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
