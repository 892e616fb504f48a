use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid function: {name} is not finite at node {node} (t = {t})")]
    InvalidFunction { name: String, node: usize, t: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown function family `{0}`")]
    UnknownFamily(String),

    #[error("bad parameters for family `{family}`: {reason}")]
    BadParams { family: String, reason: String },

    #[error("elements or paths live on different space configurations")]
    ConfigMismatch,

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("seed {index} is linearly dependent on earlier seeds (residual norm {residual:.3e})")]
    RankDeficient { index: usize, residual: f64 },

    #[error("kernel takes negative value {value} at node {node}; square root undefined")]
    NegativeKernel { node: usize, value: f64 },

    #[error("lambda must be nonzero with nonnegative real part, got {re}{im:+}i")]
    InvalidLambda { re: f64, im: f64 },

    #[error("|q| = {q} must exceed q0 = {q0} (outside the admissible region)")]
    QInsideBand { q: f64, q0: f64 },

    #[error("q0 must be positive, got {0}")]
    NonPositiveQ0(f64),

    #[error("variance increment on [t_{0}, t_{1}] is not positive")]
    NonIncreasingVariance(usize, usize),

    #[error("integrand is not finite at path index {0}")]
    NonFiniteIntegrand(u64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
