use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be finite and strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("drift of the transformed coordinate is numerically zero (k = {k:e}); this case is not supported")]
    DegenerateK { k: f64 },

    #[error("transform is singular at y = {y}")]
    SingularTransform { y: f64 },

    #[error("no root found for {what}")]
    NoRoot { what: &'static str },

    #[error("no sign change for {what} on ({lo}, {hi})")]
    NoBracket { what: &'static str, lo: f64, hi: f64 },

    #[error("{what} did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("projected relaxation exhausted {sweeps} sweeps at z = {z}")]
    NoConvergenceAtSlice { z: f64, sweeps: usize },

    #[error("computational domain too small: {reason}")]
    DomainTooSmall { reason: String },

    #[error("region {region} is empty")]
    EmptyRegion { region: &'static str },

    #[error("{what} = {value} lies outside the solved range [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid simulation settings: {0}")]
    InvalidSimConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn grid(msg: impl Into<String>) -> Self {
        Error::InvalidGrid(msg.into())
    }

    pub fn sim(msg: impl Into<String>) -> Self {
        Error::InvalidSimConfig(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
