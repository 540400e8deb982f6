use thiserror::Error;

/// Errors produced by the numerical routines and the experiment plumbing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("impedance network is numerically singular (condition number {condition:e})")]
    SingularNetwork { condition: f64 },

    #[error("degenerate match: z_in + z_s is zero")]
    DegenerateMatch,

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("channel matrix {link} is singular")]
    SingularChannel { link: String },

    #[error("degenerate eigenproblem: {0}")]
    DegenerateEigen(String),

    #[error("interference at receiver {receiver} spans the full receive space")]
    RankError { receiver: usize },

    #[error("target current at port {port} is zero; no finite load reaches it")]
    ZeroTargetEntry { port: usize },

    #[error("need at least {needed} sweep points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
