use thiserror::Error;

/// Errors raised by the simulation and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate orientation for tilt angles ({theta_x}, {theta_y})")]
    DegenerateOrientation { theta_x: f64, theta_y: f64 },

    #[error("invalid propagation parameters: {0}")]
    InvalidParams(String),

    #[error("co-located elements in {matrix} at ({row}, {col})")]
    CoincidentElements {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("power split entry {index} = {value} is outside [0, 1]")]
    InvalidSplit { index: usize, value: f64 },

    #[error("reflection coefficient {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },

    #[error("power split entry {index} equals 1; the MSE matrix is undefined")]
    SplitSaturated { index: usize },

    #[error("OAM channel diagonal entry {index} is zero")]
    ZeroDiagonal { index: usize },

    #[error("MSE matrix is singular (condition number {condition:e})")]
    SingularMse { condition: f64 },

    #[error("quadratic reformulation needs N_t = N_r, got N_t = {tx}, N_r = {rx}")]
    ShapeMismatch { tx: usize, rx: usize },

    #[error("homogenizing entry is zero")]
    ZeroHomogenizer,

    #[error("harvest requirement {required:e} W exceeds the reachable maximum {max:e} W")]
    Infeasible { required: f64, max: f64 },

    #[error("invalid link budget: {0}")]
    InvalidBudget(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
