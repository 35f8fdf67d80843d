use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("invalid symmetry: {0}")]
    InvalidSymmetry(String),

    #[error("grid is not closed under the group action: node {node:?} maps outside the grid")]
    NotActionClosed { node: Vec<f64> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("corrupt field file {path}: {reason}")]
    CorruptField { path: PathBuf, reason: String },

    #[error("unsupported field file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unusable fit window: {0}")]
    UnusableWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
