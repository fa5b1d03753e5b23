use std::path::PathBuf;

/// Errors produced anywhere in the mesh classification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: face index {index} out of range for {count} vertices")]
    IndexOutOfRange { line: usize, index: i64, count: usize },

    #[error("line {line}: face has fewer than 3 vertex indices")]
    FaceTooShort { line: usize },

    #[error("line {line}: vertex lines mix colored and uncolored entries")]
    MixedColors { line: usize },

    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    FaceIndex { face: usize, index: usize, count: usize },

    #[error("face {face} is degenerate (repeated vertex index)")]
    DegenerateFace { face: usize },

    #[error("mesh carries no vertex colors")]
    MissingColors,

    #[error("vertex {vertex} out of range for mesh with {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },

    #[error("ring list is empty")]
    EmptyRings,

    #[error("ring {ring} is not present in the adjacency/tensor")]
    RingAbsent { ring: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("unknown architecture {0:?} (expected baseline, a, b, c, d or e)")]
    UnknownArchitecture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature dimension mismatch: network expects {expected} features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },

    #[error("{split} split is empty")]
    EmptySplit { split: String },

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("non-finite loss at step {step} on mesh {mesh}")]
    NonFiniteLoss { step: usize, mesh: String },

    #[error("autodiff: {0}")]
    Tape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (diverging loss, NaN gradients) as
    /// opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
