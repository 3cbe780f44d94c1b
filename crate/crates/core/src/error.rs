use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("misdirection intensity {lambda} outside [0, r_beta*sigma_W^2 = {upper}]")]
    LambdaOutOfRange { lambda: f64, upper: f64 },

    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveWeight { name: &'static str, value: f64 },

    #[error("horizon must be strictly positive, got {0}")]
    NonPositiveHorizon(f64),

    #[error("grid needs at least 2 steps, got {0}")]
    InvalidGrid(usize),

    #[error("t = {t} outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    #[error("non-finite state at grid node {node} (component {component})")]
    NonFiniteState { node: usize, component: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("moment system requires the simplified model (v_bar = 0, v_bar_T = 0, f_d = 0)")]
    NotSimplifiedModel,

    #[error("logarithmic penalty requires f_c > 0, found {value} at node {node}")]
    NonPositiveFc { node: usize, value: f64 },

    #[error("degenerate update denominator {value} at node {node}")]
    DegenerateDenominator { node: usize, value: f64 },

    #[error("negative discriminant {value} at node {node}")]
    NegativeDiscriminant { node: usize, value: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
