use std::path::PathBuf;

/// Errors produced anywhere in the composition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate faces (repeated vertex index): {0:?}")]
    DegenerateFaces(Vec<usize>),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh has zero extent (all vertices coincide)")]
    ZeroExtent,

    #[error("mesh has zero surface area")]
    ZeroArea,

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("transform is singular (|det| = {det:e})")]
    SingularTransform { det: f64 },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("selection keeps no vertices")]
    EmptySelection,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-uniform world scale (axis ratio {ratio:.3} exceeds {limit})")]
    AnisotropicScale { ratio: f64, limit: f64 },

    #[error("mask length {mask} does not match vertex count {vertices}")]
    MaskLength { mask: usize, vertices: usize },

    #[error("volume is empty")]
    EmptyVolume,

    #[error("occupancy grid is empty")]
    EmptyGrid,

    #[error("every instance has an empty selection: {0:?}")]
    NothingToCompose(Vec<String>),

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("mesh is not watertight ({boundary_edges} edges not shared by exactly two faces)")]
    NotWatertight { boundary_edges: usize },

    #[error("union of occupancies is empty")]
    ZeroUnion,

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("scene error at {path}: {message}")]
    Scene { path: String, message: String },

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("no composition result yet")]
    NoResult,

    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn scene(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scene {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
