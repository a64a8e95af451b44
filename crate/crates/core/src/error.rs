use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the search, scoring, and reassembly engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("region {width}x{height} is too small to split 3x3")]
    IndivisibleRegion { width: u32, height: u32 },
    #[error("image must be at least 3x3 pixels, got {width}x{height}")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("embedding dimension mismatch: query has {query}, tile has {tile}")]
    DimensionMismatch { query: usize, tile: usize },
    #[error("scoring backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },
    #[error("unknown target label in question: {0:?}")]
    UnknownLabel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty selection")]
    EmptySelection,
    #[error("occupancy grid of {side} cells per axis exceeds the supported limit")]
    MaskTooLarge { side: u64 },
    #[error("scene generation failed: {0}")]
    SceneGeneration(String),
    #[error("invalid path digit {0}, expected 0..=8")]
    InvalidPath(u8),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn backend(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            backend: backend.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndivisibleRegion { .. } => "indivisible_region",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::DegenerateEmbedding(_) => "degenerate_embedding",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Backend { .. } => "scoring_backend",
            Error::UnknownLabel(_) => "unknown_label",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptySelection => "empty_selection",
            Error::MaskTooLarge { .. } => "mask_too_large",
            Error::SceneGeneration(_) => "scene_generation",
            Error::InvalidPath(_) => "invalid_path",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
