use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension {0} is not supported (tensor grids are limited to d <= 3)")]
    DimensionTooLarge(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid axis {axis} for dimension {dim}")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("time {time} is not aligned with the grid step {dt}")]
    MisalignedGrid { time: f64, dt: f64 },

    #[error("Jacobian changed sign at node {node}, step {step}; reduce the time step")]
    JacobianSignChange { node: usize, step: usize },

    #[error("flow map is not monotone at step {step}")]
    NonMonotoneFlow { step: usize },

    #[error("value {value} lies outside the flow range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("inverse flow did not converge for target {0}")]
    InversionFailed(f64),

    #[error("ensemble nodes do not match the initial condition: {0}")]
    NodeMismatch(String),

    #[error("test function lacks partial derivatives of order {0}")]
    MissingPartials(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("support of the test function exceeds the quadrature window")]
    SupportOutsideWindow,

    #[error("supports overlap: {0}")]
    OverlappingSupports(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
