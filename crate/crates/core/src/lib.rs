//! Roof reconstruction from blended segmentation rasters and corner-keypoint
//! rasters: tiling, pixel codecs, section extraction, corner filing, plane
//! estimation, merging, terrain correction, export and evaluation, plus a
//! synthetic oblique-view city generator that produces exact reference
//! inputs.

pub mod baseline;
pub mod codec;
pub mod corners;
pub mod dtm;
pub mod error;
pub mod export;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod plane;
pub mod raster;
pub mod sections;
pub mod synth;

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

pub use codec::{CornerCodec, CornerSquare, DatasetSplit, DecodedSquare};
pub use corners::{assign_squares, CornerAssignment};
pub use dtm::{DsmGrid, DtmGrid, ElevationGrid};
pub use error::{Error, Result};
pub use metrics::{EvalReport, HeightStats};
pub use plane::{Provenance, RoofPlane};
pub use raster::{Georef, Pixel, Raster, Tile, TileGrid};
pub use sections::RoofSection;

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
