use thiserror::Error;

/// Errors raised by the geometry, contour, loss, grid and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),

    #[error("vertex {index} coincides with the reference center")]
    VertexAtCenter { index: usize },

    #[error("polygon is self-intersecting")]
    SelfIntersecting,

    #[error("union of the two polygons is empty")]
    EmptyUnion,

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("min-polygon area {0:e} is below the degeneracy threshold")]
    DegenerateMinPolygon(f64),

    #[error("epoch must be >= 1, got {0}")]
    BadEpoch(i64),

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
