use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("zeta must satisfy 0 < zeta_0 < ... < zeta_(r-1) < 1: {0}")]
    NonMonotoneZeta(String),
    #[error("gamma must satisfy 0 < gamma_1 < ... < gamma_r < inf: {0}")]
    NonMonotoneGamma(String),
    #[error("depth mismatch: {0}")]
    DepthMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("N = {n} exceeds the exact-enumeration limit {max}")]
    NTooLarge { n: usize, max: usize },
    #[error("invalid cascade parameter sequence: {0}")]
    InvalidZeta(String),
    #[error("cascade width {0} is below the minimum of 2")]
    WidthTooSmall(usize),
    #[error("covariance profile must be nonnegative and nondecreasing: {0}")]
    NonMonotoneProfile(String),
    #[error("terminal is not integrable against the outermost exponent: {0}")]
    DivergentTerminal(String),
    #[error("quadrature requires a smooth terminal: {0}")]
    UnsupportedTerminal(String),
    #[error("xi values must be distinct and distinct from zeta: {0}")]
    DuplicateXi(f64),
    #[error("xi values must lie in the open interval (0, 1): {0}")]
    XiOutOfRange(f64),
    #[error("q must be nondecreasing: {0}")]
    NonMonotoneQ(String),
    #[error("q must start at 0 and end at 1: {0}")]
    EndpointViolation(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),
    #[error("cannot construct a feasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("inputs were computed for different model parameters")]
    MismatchedParams,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
