use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("step count {steps} exceeds the cap {cap}")]
    StepCap { steps: u64, cap: u64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian: {0}")]
    SingularJacobian(String),

    #[error("kernel is disconnected: v_max * delta = {reach:.4} < cell width {cell:.4}")]
    DisconnectedKernel { reach: f64, cell: f64 },

    #[error("conjugate point at t = {time:.6}")]
    ConjugatePoint { time: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
