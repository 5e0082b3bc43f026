use std::path::PathBuf;

/// Unified error type for the library.
///
/// Variants carry enough context (indices, names, paths) that a caller can
/// report the failure without re-deriving where it happened.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("need at least {needed} points, got {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite force on anchor {anchor}")]
    NonFiniteForce { anchor: usize },

    #[error("non-finite state after substep {step}")]
    NonFiniteState { step: usize },

    #[error("loss diverged at iteration {iteration}")]
    DivergedLoss { iteration: usize },

    #[error("size mismatch for {what}: expected {expected}, got {actual}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("PLY parse error: {0}")]
    PlyParse(String),

    #[error("PLY vertex element is missing required property {name}")]
    MissingPlyProperty { name: &'static str },

    #[error("non-finite value in {what}")]
    NonFiniteInput { what: &'static str },

    #[error("unsupported format version {found} for {what} (supported: {supported})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("topology fingerprint mismatch: checkpoint has {expected}, topology hashes to {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("malformed {what}: {detail}")]
    MalformedFile { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {what}: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    /// Attaches a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(what: &'static str, source: serde_json::Error) -> Self {
        Error::Json { what, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
