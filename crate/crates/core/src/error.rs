use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("unstable matrix: spectral abscissa {abscissa} is not negative")]
    Instability { abscissa: f64 },
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("empty stability margin: delta {delta} >= rho {rho}")]
    EmptyMargin { delta: f64, rho: f64 },
    #[error("state exploded at t = {time}")]
    Explosion { time: f64 },
    #[error("internal numerical error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;
