use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the wear-analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("pixel ({row}, {col}) outside {height}x{width} frame")]
    OutOfBounds {
        row: f64,
        col: f64,
        width: u32,
        height: u32,
    },

    #[error("frame {frame_index}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        frame_index: u32,
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("no reference image for frame {0}")]
    MissingReference(u32),

    #[error("duplicate frame index {0}")]
    DuplicateFrame(u32),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("drive {got} is not after drive {last}")]
    DriveOrder { last: u32, got: u32 },

    #[error("drive {0} not present")]
    MissingDrive(u32),

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("unknown quantity `{0}` (expected area, axial or tangential)")]
    UnknownQuantity(String),

    #[error("spindle id mismatch: {0}")]
    IdMismatch(String),

    #[error("cannot place pit {placed} of {wanted} with {separation_mm} mm separation")]
    InfeasiblePlacement {
        placed: usize,
        wanted: usize,
        separation_mm: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: field `{field}`: {reason}")]
    Schema {
        path: PathBuf,
        field: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
