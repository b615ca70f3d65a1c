use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GcfError>;

/// Errors produced anywhere in the fusion head, its training loop and file formats.
#[derive(Debug, Error)]
pub enum GcfError {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("data length {got} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A forward/backward stage received inputs inconsistent with the model configuration.
    #[error("stage `{stage}`: {detail}")]
    Stage { stage: &'static str, detail: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("finite difference produced a non-finite value at coordinate {coordinate}")]
    NonFiniteObjective { coordinate: usize },

    #[error("{path}: bad magic at byte offset {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        offset: u64,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("{path}: unsupported format version {found} at byte offset {offset} (expected {expected})")]
    Version {
        path: PathBuf,
        offset: u64,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated record at byte offset {offset}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        offset: u64,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: malformed content at byte offset {offset}: {detail}")]
    Malformed { path: PathBuf, offset: u64, detail: String },

    #[error("checkpoint field `{field}` mismatch: expected {expected}, found {found}")]
    CheckpointMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GcfError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        GcfError::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn stage(stage: &'static str, detail: impl Into<String>) -> Self {
        GcfError::Stage {
            stage,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GcfError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            GcfError::Shape { .. } | GcfError::DataLength { .. } | GcfError::Stage { .. } => "shape",
            GcfError::NonFinite { .. } | GcfError::NonFiniteGradient { .. } | GcfError::NonFiniteObjective { .. } => {
                "non_finite"
            }
            GcfError::Empty(_) => "empty",
            GcfError::InvalidConfig(_) => "config",
            GcfError::LabelOutOfRange { .. } => "label",
            GcfError::BadMagic { .. } => "bad_magic",
            GcfError::Version { .. } => "version",
            GcfError::Truncated { .. } => "truncated",
            GcfError::Malformed { .. } => "malformed",
            GcfError::CheckpointMismatch { .. } => "checkpoint_mismatch",
            GcfError::Io { .. } => "io",
        }
    }
}
