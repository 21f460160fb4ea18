use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("data length {got} does not match geometry voxel count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite voxel value at index {0}")]
    NonFinite(usize),
    #[error("volume geometries differ")]
    GeometryMismatch,
    #[error("label {0} not present in mask")]
    LabelAbsent(u16),
    #[error("crop box does not intersect the volume")]
    EmptyIntersection,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("matrix is not symmetric positive definite (min eigenvalue {0:e})")]
    NotSpd(f64),
    #[error("need at least {needed} distinct samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("voxel {0} is not covered by any window")]
    Uncovered(usize),
    #[error("phantom vessel tree does not enter the kidney")]
    TreeMissesKidney,
}

pub type Result<T> = core::result::Result<T, Error>;
