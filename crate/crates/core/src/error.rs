use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (max |A + A^T| = {asymmetry:e})")]
    NotSkew { asymmetry: f64 },

    #[error("matrix is not a proper rotation (orthogonality defect {orthogonality:e}, det {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("matrix is not symmetric (max |A - A^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("inertia is not positive definite at t = {t}")]
    NotPositiveDefinite { t: f64 },

    #[error("non-finite value while evaluating {context} at {point:?}")]
    NonFinite { context: &'static str, point: Vec<f64> },

    #[error("point ({x1}, {x2}) lies outside the chart domain of radius {radius}")]
    OutsideChart { x1: f64, x2: f64, radius: f64 },

    #[error("points lie on spheres of different radii ({a} vs {b})")]
    RadiusMismatch { a: f64, b: f64 },

    #[error("axis is not principal at t = {t} (residual {residual:e})")]
    NotPrincipal { t: f64, residual: f64 },

    #[error("reduced space is a point: equilibrium momentum is zero")]
    ZeroMomentum,

    #[error("invalid {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}
