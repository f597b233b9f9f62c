use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("points {first} and {second} coincide")]
    DuplicatePoints { first: usize, second: usize },

    #[error("need at least {need} points, have {have}")]
    TooFewPoints { have: usize, need: usize },

    #[error("invalid point cloud: {0}")]
    InvalidPointCloud(String),

    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("bad kernel spec: {0}")]
    BadSpec(String),

    #[error("point {0} lies outside the unit cube")]
    OutOfBounds(usize),

    #[error("no occupied voxels")]
    EmptyOccupancy,

    #[error("assignment must be one-hot over {0} averages")]
    BadAssignment(usize),

    #[error("non-finite activation after layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("loss does not depend on any parameter")]
    DisconnectedLoss,

    #[error("non-finite gradient for tensor {0}")]
    NonFiniteGradient(String),

    #[error("label {0} is not covered by the part table")]
    UnknownLabel(u32),

    #[error("missing tensor {0}")]
    MissingTensor(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
