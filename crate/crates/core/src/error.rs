//! Error type shared by all modules.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library.
///
/// I/O and decode failures carry the offending path. Validation failures
/// (`InvalidConfig`, `InvalidInput`, `DimensionMismatch`, `EmptyBand`,
/// `EmptyMask`) indicate a contract violation on caller-supplied data and
/// are distinct from I/O so front ends can map them to different exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("unsupported image format for {path}: {detail}")]
    Unsupported { path: PathBuf, detail: String },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("frequency band {band} contains no bins; reduce the band count or use a larger image")]
    EmptyBand { band: usize },

    #[error("white-balance mask selects no pixels")]
    EmptyMask,
}

impl Error {
    /// True for failures reading or decoding input files, as opposed to
    /// validation failures on otherwise readable data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Decode { .. } | Error::Unsupported { .. }
        )
    }
}
