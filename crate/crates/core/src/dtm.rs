//! Elevation grids (terrain and surface models), bilinear sampling, and the
//! ASCII grid file format.
//!
//! Cell `(i, j)` has its center at `(origin_x + j * cell_size,
//! origin_y - i * cell_size)`; rows grow southward like raster rows.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    /// Altitude above mean sea level in meters, row-major.
    pub values: Vec<f64>,
}

/// Bare-ground altitude.
pub type DtmGrid = ElevationGrid;
/// Surface altitude including buildings.
pub type DsmGrid = ElevationGrid;

impl ElevationGrid {
    pub fn new(
        width: usize,
        height: usize,
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("elevation grid must be non-empty".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        if values.len() != width * height {
            return Err(Error::Config(format!(
                "elevation grid {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite elevation value {v}")));
        }
        Ok(Self {
            width,
            height,
            origin_x,
            origin_y,
            cell_size,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, origin_x: f64, origin_y: f64, cell_size: f64, z: f64) -> Result<Self> {
        Self::new(width, height, origin_x, origin_y, cell_size, vec![z; width * height])
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    /// World position of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin_x + j as f64 * self.cell_size,
            self.origin_y - i as f64 * self.cell_size,
        )
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    pub fn sample(&self, x: f64, y: f64) -> Result<f64> {
        let fj = (x - self.origin_x) / self.cell_size;
        let fi = (self.origin_y - y) / self.cell_size;
        let eps = 1e-9;
        let max_i = (self.height - 1) as f64;
        let max_j = (self.width - 1) as f64;
        if !(fi >= -eps && fj >= -eps && fi <= max_i + eps && fj <= max_j + eps) {
            return Err(Error::Footprint { x, y });
        }
        let fi = fi.clamp(0.0, max_i);
        let fj = fj.clamp(0.0, max_j);
        let i0 = (fi.floor() as usize).min(self.height.saturating_sub(2));
        let j0 = (fj.floor() as usize).min(self.width.saturating_sub(2));
        let i1 = (i0 + 1).min(self.height - 1);
        let j1 = (j0 + 1).min(self.width - 1);
        let ti = fi - i0 as f64;
        let tj = fj - j0 as f64;
        let top = self.value(i0, j0) * (1.0 - tj) + self.value(i0, j1) * tj;
        let bottom = self.value(i1, j0) * (1.0 - tj) + self.value(i1, j1) * tj;
        Ok(top * (1.0 - ti) + bottom * ti)
    }

    /// Read the ASCII grid format: `width`, `height`, `origin_x`, `origin_y`,
    /// `cell_size` header lines (`key value`), an optional `nodata` line,
    /// then row-major whitespace-separated values.
    pub fn load_ascii(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text).map_err(|m| Error::parse(path, m))
    }

    pub fn parse_ascii(text: &str) -> std::result::Result<Self, String> {
        let raw = parse_grid(text)?;
        if let Some(nd) = raw.nodata {
            if raw.values.contains(&nd) {
                return Err(format!("grid contains nodata value {nd}"));
            }
        }
        Self::new(raw.width, raw.height, raw.origin_x, raw.origin_y, raw.cell_size, raw.values)
            .map_err(|e| e.to_string())
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "width {}", self.width);
        let _ = writeln!(out, "height {}", self.height);
        let _ = writeln!(out, "origin_x {}", self.origin_x);
        let _ = writeln!(out, "origin_y {}", self.origin_y);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "nodata {NODATA}");
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save_ascii(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }
}

struct RawGrid {
    width: usize,
    height: usize,
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    nodata: Option<f64>,
    values: Vec<f64>,
}

fn parse_grid(text: &str) -> std::result::Result<RawGrid, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut header = |key: &str| -> std::result::Result<String, String> {
        let line = lines.next().ok_or_else(|| format!("missing header `{key}`"))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => Ok(v.to_string()),
            _ => Err(format!("expected `{key} <value>`, got {line:?}")),
        }
    };
    let num = |s: String, key: &str| s.parse::<f64>().map_err(|e| format!("{key}: {e}"));
    let width: usize = header("width")?.parse().map_err(|e| format!("width: {e}"))?;
    let height: usize = header("height")?.parse().map_err(|e| format!("height: {e}"))?;
    let origin_x = num(header("origin_x")?, "origin_x")?;
    let origin_y = num(header("origin_y")?, "origin_y")?;
    let cell_size = num(header("cell_size")?, "cell_size")?;
    let mut nodata = None;
    if lines
        .peek()
        .is_some_and(|l| l.split_whitespace().next().is_some_and(|k| k.eq_ignore_ascii_case("nodata")))
    {
        let line = lines.next().expect("peeked");
        let v = line.split_whitespace().nth(1).ok_or("nodata without value")?;
        nodata = Some(v.parse::<f64>().map_err(|e| format!("nodata: {e}"))?);
    }
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|tok| tok.parse::<f64>().map_err(|e| format!("value {tok:?}: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if values.len() != width * height {
        return Err(format!("grid {width}x{height} needs {} values, got {}", width * height, values.len()));
    }
    Ok(RawGrid {
        width,
        height,
        origin_x,
        origin_y,
        cell_size,
        nodata,
        values,
    })
}

/// A per-pixel height raster where NaN marks pixels without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub values: Vec<f64>,
}

impl HeightMap {
    /// Same ASCII layout as [`ElevationGrid`], NaN written as nodata.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "width {}", self.width);
        let _ = writeln!(out, "height {}", self.height);
        let _ = writeln!(out, "origin_x {}", self.origin_x);
        let _ = writeln!(out, "origin_y {}", self.origin_y);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "nodata {NODATA}");
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row
                .iter()
                .map(|v| if v.is_nan() { NODATA.to_string() } else { v.to_string() })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_ascii(text: &str) -> std::result::Result<Self, String> {
        let raw = parse_grid(text)?;
        let nodata = raw.nodata;
        Ok(Self {
            width: raw.width,
            height: raw.height,
            origin_x: raw.origin_x,
            origin_y: raw.origin_y,
            cell_size: raw.cell_size,
            values: raw
                .values
                .into_iter()
                .map(|v| if Some(v) == nodata { f64::NAN } else { v })
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text).map_err(|m| Error::parse(path, m))
    }
}

/// Absolute altitude of a roof point from its height-to-ground.
pub fn apply_dtm(x: f64, y: f64, z_ground: f64, dtm: &DtmGrid) -> Result<f64> {
    Ok(dtm.sample(x, y)? + z_ground)
}

/// Height-to-ground of a point at absolute `altitude`.
pub fn ground_height(x: f64, y: f64, altitude: f64, dtm: &DtmGrid) -> Result<f64> {
    Ok(altitude - dtm.sample(x, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> ElevationGrid {
        // Two columns valued 100 and 102, two rows.
        ElevationGrid::new(2, 2, 0.0, 10.0, 2.0, vec![100.0, 102.0, 100.0, 102.0]).unwrap()
    }

    #[test]
    fn constant_grid() {
        let g = ElevationGrid::constant(4, 4, 0.0, 0.0, 1.0, 120.0).unwrap();
        assert_eq!(apply_dtm(1.3, -2.2, 5.0, &g).unwrap(), 125.0);
    }

    #[test]
    fn cell_center_is_exact() {
        let g = ElevationGrid::new(3, 2, 5.0, 50.0, 1.5, vec![1.25, 2.5, 3.75, 4.0, 5.5, 6.0]).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let (x, y) = g.cell_center(i, j);
                assert_eq!(apply_dtm(x, y, 2.0, &g).unwrap(), g.value(i, j) + 2.0);
            }
        }
    }

    #[test]
    fn midway_between_cells() {
        let g = ramp();
        assert_eq!(apply_dtm(1.0, 10.0, 3.0, &g).unwrap(), 104.0);
        assert_eq!(g.sample(1.0, 9.0).unwrap(), 101.0);
    }

    #[test]
    fn outside_footprint() {
        let g = ramp();
        assert!(matches!(g.sample(-0.5, 10.0), Err(Error::Footprint { .. })));
        assert!(matches!(g.sample(1.0, 10.5), Err(Error::Footprint { .. })));
        assert!(matches!(g.sample(2.1, 9.0), Err(Error::Footprint { .. })));
    }

    #[test]
    fn ascii_round_trip() {
        let g = ElevationGrid::new(3, 2, 1.5, -2.25, 0.38, vec![1.0, 2.5, -3.125, 4.0, 5.0, 6.75]).unwrap();
        let back = ElevationGrid::parse_ascii(&g.to_ascii()).unwrap();
        assert_eq!(back, g);
        let no_nodata = "width 1\nheight 2\norigin_x 0\norigin_y 0\ncell_size 1\n3\n4\n";
        assert_eq!(ElevationGrid::parse_ascii(no_nodata).unwrap().values, vec![3.0, 4.0]);
        assert!(ElevationGrid::parse_ascii("width 2\nheight 1\norigin_x 0\norigin_y 0\ncell_size 1\n1\n").is_err());
        assert!(ElevationGrid::parse_ascii("height 2\n").is_err());
    }

    proptest! {
        #[test]
        fn dtm_inverse(x in 0.0f64..10.0, y in -10.0f64..0.0, z in 0.0f64..30.0) {
            let values: Vec<f64> = (0..36).map(|k| 90.0 + (k as f64 * 0.731).sin() * 7.0).collect();
            let g = ElevationGrid::new(6, 6, 0.0, 0.0, 2.0, values).unwrap();
            let alt = apply_dtm(x, y, z, &g)?;
            prop_assert!((ground_height(x, y, alt, &g)? - z).abs() < 1e-9);
        }
    }

    #[test]
    fn height_map_round_trip_keeps_nan() {
        let m = HeightMap {
            width: 3,
            height: 1,
            origin_x: 1.0,
            origin_y: 2.0,
            cell_size: 0.38,
            values: vec![1.0 / 3.0, f64::NAN, 7.25],
        };
        let back = HeightMap::parse_ascii(&m.to_ascii()).unwrap();
        assert_eq!(back.values[0], 1.0 / 3.0);
        assert!(back.values[1].is_nan());
        assert_eq!(back.values[2], 7.25);
    }
}
