use thiserror::Error;

use crate::lattice::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid neighborhood: {0}")]
    Neighborhood(String),

    #[error("invalid window: {0}")]
    Window(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("vertex {0} lies outside the window and has no boundary value")]
    MissingBoundaryValue(VertexId),

    #[error("vertex {0} is not in the window")]
    VertexNotInWindow(VertexId),

    #[error("vertex {0} is on the window boundary; its neighborhood leaves the window")]
    BoundaryVertex(VertexId),

    #[error("configurations live on different windows")]
    WindowMismatch,

    #[error("configuration has {got} values but the window has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },

    #[error("configuration value at index {0} is not finite")]
    NonFinite(usize),

    #[error("free boundary requested but the model's potentials need a full neighborhood")]
    FreeBoundaryUnsupported,

    #[error("{0} requires a quadratic (Gaussian) model")]
    NotGaussian(&'static str),

    #[error("precision matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("window has no interior vertices")]
    EmptyInterior,

    #[error("no samples to estimate from")]
    EmptyInput,

    #[error("cylinder function uses {needed} coordinates but only {available} are available")]
    CylinderTooWide { needed: usize, available: usize },

    #[error("quadrature supports windows of size 1 or 2, got {0}")]
    QuadratureDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
