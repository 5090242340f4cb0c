use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: i64,
        count: usize,
    },

    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("binary format error: {0}")]
    Format(String),

    #[error("level set is empty at level {level}")]
    EmptyLevelSet { level: f64 },

    #[error("level set at {level} touches the grid boundary")]
    LevelSetClipped { level: f64 },

    #[error("mesh has a single connected component")]
    SingleComponent,

    #[error("cage violates its invariants: {0}")]
    InvalidCage(String),

    #[error("cage does not enclose the input at {faces} faces (min winding number {min_winding:.4})")]
    EnclosureUnreachable { faces: usize, min_winding: f64 },

    #[error("mesh vertex {vertex} lies outside the cage (winding number {winding:.4})")]
    VertexOutsideCage { vertex: usize, winding: f64 },

    #[error("cage interior voxelization is empty")]
    EmptyInterior,

    #[error("non-finite coordinate weight from cage triangle {triangle} (query vertex {vertex:?})")]
    NonFiniteWeight {
        triangle: usize,
        vertex: Option<usize>,
    },

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    EigenConvergence { residual: f64 },

    #[error("bone {bone} has no interior voxel")]
    BoneOutsideCage { bone: usize },

    #[error("digest mismatch: {0}")]
    DigestMismatch(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-positive predicted weight at vertex {vertex}, bone {bone}")]
    NonPositivePrediction { vertex: usize, bone: usize },

    #[error("loss became NaN at epoch {epoch}, mesh {mesh}")]
    NanLoss { epoch: usize, mesh: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a precondition or invariant check, as opposed to
    /// I/O and parsing problems.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Parse { .. } | Error::Json(_))
    }
}
