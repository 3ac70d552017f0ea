use thiserror::Error;

/// Errors raised by the simulator and its verification harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {z}) lies outside the domain")]
    Domain { x: f64, z: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("numerical blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },

    #[error("step-size guard violated at t = {t}: dt = {dt} exceeds {limit}")]
    Stability { t: f64, dt: f64, limit: f64 },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate direction: Gram value {q} is below tolerance {tol}")]
    DegenerateDirection { q: f64, tol: f64 },

    #[error("descent stalled after {iterations} iterations (best objective {best_objective})")]
    Stall {
        iterations: usize,
        best_objective: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),
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

pub type Result<T> = std::result::Result<T, Error>;
