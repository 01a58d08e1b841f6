use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("tile grid leaves pixel ({row}, {col}) uncovered")]
    Coverage { row: usize, col: usize },

    #[error("pixel ({row}, {col}) outside a {width}x{height} raster")]
    Bounds {
        row: i64,
        col: i64,
        width: usize,
        height: usize,
    },

    #[error("height class {z} outside [1, {max}]")]
    ClassRange { z: i64, max: u8 },

    #[error("unknown height class label {0:?}")]
    Label(String),

    #[error("corner square does not intersect section {section_id}")]
    Assignment { section_id: usize },

    #[error("heights are not in ascending order: {0:?}")]
    Order([f64; 3]),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("point ({x}, {y}) lies outside the elevation grid footprint")]
    Footprint { x: f64, y: f64 },

    #[error("no correctly segmented pixels to evaluate")]
    EmptyEval,

    #[error("building placement failed: {0}")]
    Placement(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("invalid raster data: {0}")]
    InvalidRaster(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
