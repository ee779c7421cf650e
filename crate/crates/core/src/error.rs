use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integrand is not finite at x = {x} (value {value})")]
    NonFiniteIntegrand { x: f64, value: f64 },
    #[error("quadrature refinement limit reached near [{lo}, {hi}]")]
    MaxDepthExceeded { lo: f64, hi: f64 },
    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("root finder did not converge within {0} iterations")]
    MaxIterations(usize),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("density is not available in factorized form")]
    NotFactorized,
    #[error("singular hyperspherical coordinates (angle {index} = {value})")]
    SingularCoordinates { index: usize, value: f64 },
    #[error("score {value} below its declared lower bound {lower_bound}")]
    ScoreBelowBound { value: f64, lower_bound: f64 },
    #[error("point lies outside the codomain of the bijection")]
    PointOutsideCodomain,
    #[error("point lies outside the support of the background density")]
    OutsideBackgroundSupport,
    #[error("construction requires dimension >= {required}, got {got}")]
    DimensionTooLow { required: usize, got: usize },
    #[error("inlier and outlier points coincide")]
    PointsCoincide,
    #[error("the rotation ball does not fit inside the image of the unit cube")]
    BallOutsideDomain,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}
