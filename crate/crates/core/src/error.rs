use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("diffusion matrix not symmetric: a[{i}][{j}] = {aij} but a[{j}][{i}] = {aji} at t = {t}, x = {x:?}")]
    NonSymmetric {
        i: usize,
        j: usize,
        aij: f64,
        aji: f64,
        t: f64,
        x: Vec<f64>,
    },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value from {what} at t = {t}, x = {x:?}")]
    Evaluation { what: String, t: f64, x: Vec<f64> },

    #[error("step size too large: dt * rate = {product} >= 1 (dt = {dt}, rate = {rate})")]
    StepSize { dt: f64, rate: f64, product: f64 },

    #[error("Picard iteration diverges (L = {lipschitz}, dt = {dt}); ratios {ratios:?}")]
    PicardDivergence { lipschitz: f64, dt: f64, ratios: Vec<f64> },

    #[error("Picard iteration did not converge in {iterations} iterations; ratios {ratios:?}")]
    PicardNotConverged { iterations: usize, ratios: Vec<f64> },

    #[error("M-matrix violated at node {node:?} (t = {t}): {detail}")]
    Stability { node: Vec<usize>, t: f64, detail: String },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("nested Monte Carlo cost {cost} exceeds cap {cap}")]
    Budget { cost: u64, cap: u64 },

    #[error("exit fraction {fraction} exceeds the {limit} budget")]
    ExitBudget { fraction: f64, limit: f64 },

    #[error("calibration required: {0}")]
    CalibrationRequired(String),

    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
