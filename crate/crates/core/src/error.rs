use thiserror::Error;

/// Errors raised while building scene geometry or cameras.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("invalid point {index}: non-finite position")]
    InvalidPoint { index: usize },
    #[error("positions ({positions}) and colors ({colors}) differ in length")]
    LengthMismatch { positions: usize, colors: usize },
    #[error("cloud has {0} points, more than a grid can index")]
    CloudTooLarge(usize),
    #[error("cell size must be finite and positive, got {0}")]
    InvalidCellSize(f64),
    #[error("grid would need {0} cells; increase the cell size")]
    GridTooLarge(u128),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid render parameters: {0}")]
    InvalidParams(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
}

/// Errors raised by the depth filter.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("image {width}x{height} is too small for {levels} pyramid levels")]
    ImageTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("coarse level {coarse:?} does not match fine level {fine:?}")]
    DimensionMismatch {
        coarse: (usize, usize),
        fine: (usize, usize),
    },
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}
