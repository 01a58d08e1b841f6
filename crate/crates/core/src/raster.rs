//! RGB raster container, georeference, and tiling with margin overlap.
//!
//! Pixels are addressed as `(row, col)`. A [`Georef`] places the center of
//! pixel `(0, 0)` at `(origin_x, origin_y)` in world meters; columns grow
//! eastward and rows grow southward.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(row, col)` pixel coordinate.
pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Georef {
    pub origin_x: f64,
    pub origin_y: f64,
    #[serde(rename = "gsd")]
    pub gsd_m_per_px: f64,
}

impl Georef {
    pub fn new(origin_x: f64, origin_y: f64, gsd_m_per_px: f64) -> Result<Self> {
        if !(gsd_m_per_px > 0.0 && gsd_m_per_px.is_finite()) {
            return Err(Error::Config(format!(
                "ground sample distance must be positive, got {gsd_m_per_px}"
            )));
        }
        Ok(Self {
            origin_x,
            origin_y,
            gsd_m_per_px,
        })
    }

    /// World coordinates of a (possibly fractional) pixel position.
    pub fn pixel_to_world(&self, row: f64, col: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.gsd_m_per_px,
            self.origin_y - row * self.gsd_m_per_px,
        )
    }

    /// Fractional `(row, col)` of a world position.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (self.origin_y - y) / self.gsd_m_per_px,
            (x - self.origin_x) / self.gsd_m_per_px,
        )
    }

    /// Georeference of a sub-raster whose pixel `(0, 0)` sits at `(row, col)` here.
    pub fn shifted(&self, row: usize, col: usize) -> Georef {
        let (x, y) = self.pixel_to_world(row as f64, col as f64);
        Georef {
            origin_x: x,
            origin_y: y,
            gsd_m_per_px: self.gsd_m_per_px,
        }
    }

    pub fn sidecar_path(png: &Path) -> PathBuf {
        png.with_extension("georef.json")
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
    georef: Option<Georef>,
}

impl Raster {
    /// All-black raster.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
            georef: None,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidRaster(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            georef: None,
        })
    }

    pub fn with_georef(mut self, georef: Option<Georef>) -> Self {
        self.georef = georef;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn georef(&self) -> Option<&Georef> {
        self.georef.as_ref()
    }

    pub fn set_georef(&mut self, georef: Option<Georef>) {
        self.georef = georef;
    }

    /// Meters per pixel, or 1 when the raster is not georeferenced.
    pub fn gsd(&self) -> f64 {
        self.georef.map_or(1.0, |g| g.gsd_m_per_px)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * 3
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = self.offset(row, col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = self.offset(row, col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel at a flat row-major index.
    #[inline]
    pub fn get_index(&self, index: usize) -> [u8; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Raster> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Bounds {
                row: (row + height) as i64,
                col: (col + width) as i64,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for r in row..row + height {
            let start = self.offset(r, col);
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(Raster {
            width,
            height,
            data,
            georef: self.georef.map(|g| g.shifted(row, col)),
        })
    }

    /// Copy `src` into `self` with its pixel `(0, 0)` at `(row, col)`.
    pub fn paste(&mut self, src: &Raster, row: usize, col: usize) -> Result<()> {
        if row + src.height > self.height || col + src.width > self.width {
            return Err(Error::Bounds {
                row: (row + src.height) as i64,
                col: (col + src.width) as i64,
                width: self.width,
                height: self.height,
            });
        }
        for r in 0..src.height {
            let dst = self.offset(row + r, col);
            let s = src.offset(r, 0);
            self.data[dst..dst + src.width * 3].copy_from_slice(&src.data[s..s + src.width * 3]);
        }
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Raster> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let mut raster = Raster::from_raw(w as usize, h as usize, img.into_raw())?;
        let sidecar = Georef::sidecar_path(path);
        if sidecar.exists() {
            raster.georef = Some(crate::read_json(&sidecar)?);
        }
        Ok(raster)
    }

    /// Writes an 8-bit RGB PNG plus a `.georef.json` sidecar when georeferenced.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(g) = &self.georef {
            crate::write_json(&Georef::sidecar_path(path), g)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub origin_row: usize,
    pub origin_col: usize,
    pub raster: Raster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub overlap: usize,
    pub tiles: Vec<Tile>,
}

/// Tile origins along one axis: stride `s - p`, plus a final origin clamped
/// to `dim - s` when the last stride-aligned tile stops short of the edge.
pub fn tile_origins(dim: usize, s: usize, p: usize) -> Result<Vec<usize>> {
    if s <= 2 * p {
        return Err(Error::InvalidTiling(format!(
            "tile size {s} must exceed twice the overlap {p}"
        )));
    }
    if dim < s {
        return Err(Error::InvalidTiling(format!(
            "dimension {dim} is smaller than tile size {s}"
        )));
    }
    let stride = s - p;
    let mut origins = Vec::new();
    let mut o = 0;
    while o + s <= dim {
        origins.push(o);
        o += stride;
    }
    let last = *origins.last().expect("dim >= s yields one origin");
    if last + s < dim {
        origins.push(dim - s);
    }
    Ok(origins)
}

/// Cut `src` into `s`x`s` tiles, row-major, adjacent tiles sharing `p` pixels.
pub fn split_tiles(src: &Raster, s: usize, p: usize) -> Result<TileGrid> {
    let rows = tile_origins(src.height, s, p)?;
    let cols = tile_origins(src.width, s, p)?;
    let mut tiles = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            tiles.push(Tile {
                origin_row: r,
                origin_col: c,
                raster: src.crop(r, c, s, s)?,
            });
        }
    }
    Ok(TileGrid {
        tile_size: s,
        overlap: p,
        tiles,
    })
}

/// Paste tiles back in order; where tiles overlap, the later tile wins.
pub fn reassemble(grid: &TileGrid, width: usize, height: usize) -> Result<Raster> {
    let mut out = Raster::new(width, height);
    let mut covered = vec![false; width * height];
    for tile in &grid.tiles {
        out.paste(&tile.raster, tile.origin_row, tile.origin_col)?;
        for r in 0..tile.raster.height {
            let start = (tile.origin_row + r) * width + tile.origin_col;
            covered[start..start + tile.raster.width].fill(true);
        }
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::Coverage {
            row: i / width,
            col: i % width,
        });
    }
    if let Some(first) = grid.tiles.first() {
        out.georef = first
            .raster
            .georef
            .map(|g| Georef {
                origin_x: g.origin_x - first.origin_col as f64 * g.gsd_m_per_px,
                origin_y: g.origin_y + first.origin_row as f64 * g.gsd_m_per_px,
                gsd_m_per_px: g.gsd_m_per_px,
            });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise_raster(width: usize, height: usize, seed: u64) -> Raster {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let data = (0..width * height * 3)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 56) as u8
            })
            .collect();
        Raster::from_raw(width, height, data).unwrap()
    }

    #[test]
    fn origins_450_square() {
        assert_eq!(tile_origins(450, 230, 10).unwrap(), vec![0, 220]);
        let grid = split_tiles(&Raster::new(450, 450), 230, 10).unwrap();
        assert_eq!(grid.tiles.len(), 4);
    }

    #[test]
    fn single_tile_when_raster_equals_tile() {
        let r = noise_raster(230, 230, 3);
        let grid = split_tiles(&r, 230, 10).unwrap();
        assert_eq!(grid.tiles.len(), 1);
        assert_eq!((grid.tiles[0].origin_row, grid.tiles[0].origin_col), (0, 0));
        assert_eq!(reassemble(&grid, 230, 230).unwrap(), r);
    }

    #[test]
    fn clamped_final_column() {
        // 220 + 230 = 450 < 460, so a clamped origin 230 is appended.
        let grid = split_tiles(&Raster::new(460, 450), 230, 10).unwrap();
        let cols: Vec<_> = grid.tiles.iter().map(|t| t.origin_col).collect();
        let rows: Vec<_> = grid.tiles.iter().map(|t| t.origin_row).collect();
        assert_eq!(cols, vec![0, 220, 230, 0, 220, 230]);
        assert_eq!(rows, vec![0, 0, 0, 220, 220, 220]);
    }

    #[test]
    fn invalid_tilings() {
        assert!(matches!(
            split_tiles(&Raster::new(100, 300), 230, 10),
            Err(Error::InvalidTiling(_))
        ));
        assert!(matches!(
            split_tiles(&Raster::new(300, 300), 20, 10),
            Err(Error::InvalidTiling(_))
        ));
    }

    #[test]
    fn later_tile_wins_on_overlap() {
        let base = Raster::new(10, 5);
        let mut left = base.crop(0, 0, 5, 6).unwrap();
        let mut right = base.crop(0, 4, 5, 6).unwrap();
        // Column 5 is shared: col 5 of the left tile, col 1 of the right tile.
        left.set(2, 5, [1, 1, 1]);
        right.set(2, 1, [9, 9, 9]);
        let grid = TileGrid {
            tile_size: 6,
            overlap: 2,
            tiles: vec![
                Tile {
                    origin_row: 0,
                    origin_col: 0,
                    raster: left,
                },
                Tile {
                    origin_row: 0,
                    origin_col: 4,
                    raster: right,
                },
            ],
        };
        let out = reassemble(&grid, 10, 5).unwrap();
        assert_eq!(out.get(2, 5), [9, 9, 9]);
    }

    #[test]
    fn coverage_gap_is_reported() {
        let r = Raster::new(10, 10);
        let grid = TileGrid {
            tile_size: 5,
            overlap: 0,
            tiles: vec![Tile {
                origin_row: 0,
                origin_col: 0,
                raster: r.crop(0, 0, 5, 5).unwrap(),
            }],
        };
        assert!(matches!(
            reassemble(&grid, 10, 10),
            Err(Error::Coverage { row: 0, col: 5 })
        ));
    }

    #[test]
    fn georef_survives_round_trip() {
        let g = Georef::new(1000.0, 2000.0, 0.38).unwrap();
        let r = noise_raster(300, 260, 11).with_georef(Some(g));
        let grid = split_tiles(&r, 100, 10).unwrap();
        let t = &grid.tiles[3];
        let (x, y) = t.raster.georef().unwrap().pixel_to_world(0.0, 0.0);
        let expected = g.pixel_to_world(t.origin_row as f64, t.origin_col as f64);
        assert!((x - expected.0).abs() < 1e-9 && (y - expected.1).abs() < 1e-9);
        let back = reassemble(&grid, 300, 260).unwrap();
        let bg = back.georef().unwrap();
        assert!((bg.origin_x - 1000.0).abs() < 1e-9 && (bg.origin_y - 2000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn split_reassemble_identity(
            s in 8usize..40,
            p_frac in 0.0f64..0.49,
            extra_w in 0usize..60,
            extra_h in 0usize..60,
            seed in any::<u64>(),
        ) {
            let p = ((s as f64) * p_frac) as usize;
            prop_assume!(s > 2 * p);
            let (w, h) = (s + extra_w, s + extra_h);
            let r = noise_raster(w, h, seed);
            let grid = split_tiles(&r, s, p)?;
            let mut covered = vec![0u32; w * h];
            for t in &grid.tiles {
                prop_assert_eq!(t.raster.width(), s);
                prop_assert_eq!(t.raster.height(), s);
                for rr in 0..s {
                    for cc in 0..s {
                        covered[(t.origin_row + rr) * w + t.origin_col + cc] += 1;
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c >= 1));
            prop_assert_eq!(reassemble(&grid, w, h)?, r);
            prop_assert_eq!(split_tiles(&noise_raster(w, h, seed), s, p)?, grid);
        }
    }
}
