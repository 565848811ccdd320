//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("expression direction is degenerate: every row fell below the threshold")]
    DegenerateDirection,

    #[error("unsupported checkpoint version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),

    #[error("missing tensor `{0}` in checkpoint")]
    MissingTensor(String),

    #[error("tensor blob truncated while reading `{0}`")]
    TruncatedTensor(String),

    #[error("latent file has bad magic (expected `WPLT`)")]
    LatentBadMagic,

    #[error("latent file has unsupported version {0}")]
    LatentBadVersion(u32),

    #[error("latent file size mismatch: expected {expected} bytes, got {got}")]
    LatentSizeMismatch { expected: u64, got: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
