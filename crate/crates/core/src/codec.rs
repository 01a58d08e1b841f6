//! Inter-stage pixel protocols.
//!
//! Segmentation pixels are blended into a tile as pure blue `{0, 0, code}`
//! where the code (200, 210, 220) names the dataset split of the tile. Roof
//! corners are drawn as `q`x`q` squares whose red channel carries `200 + z`,
//! `z` being the corner height-to-ground in whole meters. Corner squares only
//! touch the red channel, so a square drawn over blue segmentation pixels can
//! still be read back by both decoders.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Pixel, Raster};

pub const CORNER_RED_BASE: u8 = 200;
pub const DEFAULT_CLASS_COUNT: u8 = 19;
pub const DEFAULT_CORNER_SIZE: usize = 15;
/// Largest class count whose red value `200 + z` still fits in a byte.
pub const MAX_CLASS_COUNT: u8 = 255 - CORNER_RED_BASE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSplit {
    Training,
    Validation,
    Testing,
}

impl DatasetSplit {
    pub const ALL: [DatasetSplit; 3] = [
        DatasetSplit::Training,
        DatasetSplit::Validation,
        DatasetSplit::Testing,
    ];

    pub fn blue_code(self) -> u8 {
        match self {
            DatasetSplit::Training => 200,
            DatasetSplit::Validation => 210,
            DatasetSplit::Testing => 220,
        }
    }

    /// Numeric id used in the xyz export.
    pub fn id(self) -> u8 {
        match self {
            DatasetSplit::Training => 0,
            DatasetSplit::Validation => 1,
            DatasetSplit::Testing => 2,
        }
    }

    pub fn from_blue_code(blue: u8) -> Option<Self> {
        match blue {
            200 => Some(DatasetSplit::Training),
            210 => Some(DatasetSplit::Validation),
            220 => Some(DatasetSplit::Testing),
            _ => None,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetSplit::Training => "training",
            DatasetSplit::Validation => "validation",
            DatasetSplit::Testing => "testing",
        }
    }
}

impl std::fmt::Display for DatasetSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Red values that can only come from a corner square overlay.
fn is_corner_red(red: u8) -> bool {
    red > CORNER_RED_BASE
}

/// Split encoded by a pixel, if it is a segmentation pixel.
///
/// Green must be zero and blue one of the three codes; red is either zero or
/// a corner-square value layered on top.
#[inline]
pub fn segmentation_split(rgb: [u8; 3]) -> Option<DatasetSplit> {
    let [r, g, b] = rgb;
    if g != 0 || !(r == 0 || is_corner_red(r)) {
        return None;
    }
    DatasetSplit::from_blue_code(b)
}

/// Nudge natural pixels that would read as segmentation codes (blue - 1).
/// Returns the number of pixels changed.
pub fn prescreen(raster: &mut Raster) -> usize {
    let mut changed = 0;
    for row in 0..raster.height() {
        for col in 0..raster.width() {
            let [r, g, b] = raster.get(row, col);
            if segmentation_split([r, g, b]).is_some() {
                raster.set(row, col, [r, g, b - 1]);
                changed += 1;
            }
        }
    }
    changed
}

/// Clamp natural red values that would read as corner classes down to
/// 200, so only drawn squares decode. Returns the number of pixels changed.
pub fn prescreen_corners(raster: &mut Raster, class_count: u8) -> usize {
    let hi = CORNER_RED_BASE.saturating_add(class_count);
    let mut changed = 0;
    for row in 0..raster.height() {
        for col in 0..raster.width() {
            let [r, g, b] = raster.get(row, col);
            if r > CORNER_RED_BASE && r <= hi {
                raster.set(row, col, [CORNER_RED_BASE, g, b]);
                changed += 1;
            }
        }
    }
    changed
}

fn check_bounds(tile: &Raster, row: i64, col: i64) -> Result<()> {
    if tile.contains(row, col) {
        Ok(())
    } else {
        Err(Error::Bounds {
            row,
            col,
            width: tile.width(),
            height: tile.height(),
        })
    }
}

/// Paint `mask` pixels as `{0, 0, code(split)}`, in place.
pub fn blend_split(tile: &mut Raster, mask: &[Pixel], split: DatasetSplit) -> Result<()> {
    for &(r, c) in mask {
        check_bounds(tile, r as i64, c as i64)?;
    }
    let rgb = [0, 0, split.blue_code()];
    for &(r, c) in mask {
        tile.set(r, c, rgb);
    }
    Ok(())
}

pub fn encode_split_blend(tile: &Raster, mask: &[Pixel], split: DatasetSplit) -> Result<Raster> {
    let mut out = tile.clone();
    blend_split(&mut out, mask, split)?;
    Ok(out)
}

/// Every segmentation pixel of `tile`, row-major, with its split.
pub fn decode_split_blend(tile: &Raster) -> Vec<(Pixel, DatasetSplit)> {
    let mut out = Vec::new();
    for row in 0..tile.height() {
        for col in 0..tile.width() {
            if let Some(split) = segmentation_split(tile.get(row, col)) {
                out.push(((row, col), split));
            }
        }
    }
    out
}

/// A `side`x`side` corner marker centered on `center` with height class `z`.
///
/// The center may fall outside the raster: squares at the border are clipped
/// but keep their nominal center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CornerSquare {
    pub center: (i64, i64),
    pub side: usize,
    pub z: u8,
}

impl CornerSquare {
    pub fn new(center: (i64, i64), side: usize, z: u8) -> Self {
        Self { center, side, z }
    }

    pub fn top_left(&self) -> (i64, i64) {
        let half = ((self.side - 1) / 2) as i64;
        (self.center.0 - half, self.center.1 - half)
    }

    /// Footprint clipped to a `width`x`height` frame, as inclusive
    /// `(row0, col0, row1, col1)`; `None` when nothing is inside.
    pub fn clipped_rect(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let (tr, tc) = self.top_left();
        let side = self.side as i64;
        let r0 = tr.max(0);
        let c0 = tc.max(0);
        let r1 = (tr + side - 1).min(height as i64 - 1);
        let c1 = (tc + side - 1).min(width as i64 - 1);
        if r0 > r1 || c0 > c1 {
            return None;
        }
        Some((r0 as usize, c0 as usize, r1 as usize, c1 as usize))
    }

    /// In-frame footprint pixels, row-major.
    pub fn footprint(&self, width: usize, height: usize) -> Vec<Pixel> {
        match self.clipped_rect(width, height) {
            None => Vec::new(),
            Some((r0, c0, r1, c1)) => (r0..=r1)
                .flat_map(|r| (c0..=c1).map(move |c| (r, c)))
                .collect(),
        }
    }

    pub fn red_value(&self) -> u8 {
        CORNER_RED_BASE + self.z
    }
}

/// A square read back from a raster. `malformed` marks blobs that were not an
/// exact union of `q`x`q` squares; their center is a best fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSquare {
    pub square: CornerSquare,
    pub malformed: bool,
}

/// Corner-square codec parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CornerCodec {
    pub side: usize,
    pub class_count: u8,
}

impl Default for CornerCodec {
    fn default() -> Self {
        Self {
            side: DEFAULT_CORNER_SIZE,
            class_count: DEFAULT_CLASS_COUNT,
        }
    }
}

impl CornerCodec {
    pub fn new(side: usize, class_count: u8) -> Result<Self> {
        if side == 0 {
            return Err(Error::Config("corner square side must be positive".into()));
        }
        if class_count == 0 || class_count > MAX_CLASS_COUNT {
            return Err(Error::Config(format!(
                "class count must be in [1, {MAX_CLASS_COUNT}], got {class_count}"
            )));
        }
        Ok(Self { side, class_count })
    }

    pub fn check_class(&self, z: i64) -> Result<u8> {
        if z < 1 || z > self.class_count as i64 {
            return Err(Error::ClassRange {
                z,
                max: self.class_count,
            });
        }
        Ok(z as u8)
    }

    /// Set red = 200 + z over the clipped square, in place.
    pub fn draw(&self, tile: &mut Raster, sq: &CornerSquare) -> Result<()> {
        self.check_class(sq.z as i64)?;
        let red = sq.red_value();
        if let Some((r0, c0, r1, c1)) = sq.clipped_rect(tile.width(), tile.height()) {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let [_, g, b] = tile.get(r, c);
                    tile.set(r, c, [red, g, b]);
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, tile: &Raster, sq: &CornerSquare) -> Result<Raster> {
        let mut out = tile.clone();
        self.draw(&mut out, sq)?;
        Ok(out)
    }

    /// Recover corner squares from the red channel, sorted by center.
    pub fn decode(&self, tile: &Raster) -> Vec<DecodedSquare> {
        let (w, h) = (tile.width(), tile.height());
        let lo = CORNER_RED_BASE + 1;
        let hi = CORNER_RED_BASE + self.class_count;
        let bytes = tile.as_bytes();
        let mut visited = vec![false; w * h];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            let red = bytes[start * 3];
            if visited[start] || red < lo || red > hi {
                continue;
            }
            visited[start] = true;
            queue.push_back(start);
            let mut blob = Vec::new();
            while let Some(i) = queue.pop_front() {
                let (r, c) = (i / w, i % w);
                blob.push((r, c));
                let mut visit = |j: usize| {
                    if !visited[j] && bytes[j * 3] == red {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                };
                if r > 0 {
                    visit(i - w);
                }
                if r + 1 < h {
                    visit(i + w);
                }
                if c > 0 {
                    visit(i - 1);
                }
                if c + 1 < w {
                    visit(i + 1);
                }
            }
            cover_blob(&blob, red - CORNER_RED_BASE, self.side, w, h, &mut out);
        }
        out.sort_by_key(|d| (d.square.center, d.square.z, d.malformed));
        out
    }
}

/// Decompose one constant-red blob into `q`x`q` windows.
///
/// Windows may hang over the frame border (clipped squares). A window is a
/// candidate when all of its in-frame pixels belong to the blob. Pixels that
/// only one candidate can cover force that candidate; otherwise the candidate
/// covering the most uncovered pixels is taken. Pixels no candidate covers
/// get a best-fit window flagged as malformed.
fn cover_blob(blob: &[Pixel], z: u8, q: usize, width: usize, height: usize, out: &mut Vec<DecodedSquare>) {
    let r0 = blob.iter().map(|p| p.0).min().unwrap();
    let r1 = blob.iter().map(|p| p.0).max().unwrap();
    let c0 = blob.iter().map(|p| p.1).min().unwrap();
    let c1 = blob.iter().map(|p| p.1).max().unwrap();
    let bw = c1 - c0 + 1;
    let bh = r1 - r0 + 1;
    let mut inside = vec![false; bw * bh];
    for &(r, c) in blob {
        inside[(r - r0) * bw + (c - c0)] = true;
    }
    // Prefix sums over the bounding box.
    let mut sums = vec![0u32; (bw + 1) * (bh + 1)];
    for r in 0..bh {
        for c in 0..bw {
            sums[(r + 1) * (bw + 1) + c + 1] = inside[r * bw + c] as u32
                + sums[r * (bw + 1) + c + 1]
                + sums[(r + 1) * (bw + 1) + c]
                - sums[r * (bw + 1) + c];
        }
    }
    let count = |ra: usize, ca: usize, rb: usize, cb: usize| -> u32 {
        // Inclusive local rectangle.
        sums[(rb + 1) * (bw + 1) + cb + 1] + sums[ra * (bw + 1) + ca]
            - sums[ra * (bw + 1) + cb + 1]
            - sums[(rb + 1) * (bw + 1) + ca]
    };

    let qi = q as i64;
    let clip = |t: i64, limit: usize| -> (i64, i64) { (t.max(0), (t + qi - 1).min(limit as i64 - 1)) };

    // Candidate windows as (top, left, local clipped rect).
    let mut candidates: Vec<(i64, i64, (usize, usize, usize, usize))> = Vec::new();
    for tr in (r0 as i64 - qi + 1)..=(r1 as i64) {
        let (ra, rb) = clip(tr, height);
        if ra < r0 as i64 || rb > r1 as i64 || ra > rb {
            continue;
        }
        for tc in (c0 as i64 - qi + 1)..=(c1 as i64) {
            let (ca, cb) = clip(tc, width);
            if ca < c0 as i64 || cb > c1 as i64 || ca > cb {
                continue;
            }
            let rect = (
                ra as usize - r0,
                ca as usize - c0,
                rb as usize - r0,
                cb as usize - c0,
            );
            let area = ((rect.2 - rect.0 + 1) * (rect.3 - rect.1 + 1)) as u32;
            if count(rect.0, rect.1, rect.2, rect.3) == area {
                candidates.push((tr, tc, rect));
            }
        }
    }

    let half = ((q - 1) / 2) as i64;
    let mut uncovered = inside.clone();
    let mut remaining = blob.len();
    let mut used = vec![false; candidates.len()];
    let mut cover_count = vec![0u32; bw * bh];
    let mut last_cover = vec![usize::MAX; bw * bh];

    let mark = |rect: (usize, usize, usize, usize), uncovered: &mut Vec<bool>, remaining: &mut usize| {
        for r in rect.0..=rect.2 {
            for c in rect.1..=rect.3 {
                let i = r * bw + c;
                if uncovered[i] {
                    uncovered[i] = false;
                    *remaining -= 1;
                }
            }
        }
    };
    let gain = |rect: (usize, usize, usize, usize), uncovered: &[bool]| -> usize {
        (rect.0..=rect.2)
            .flat_map(|r| (rect.1..=rect.3).map(move |c| r * bw + c))
            .filter(|&i| uncovered[i])
            .count()
    };

    while remaining > 0 {
        cover_count.fill(0);
        for (k, &(_, _, rect)) in candidates.iter().enumerate() {
            if used[k] {
                continue;
            }
            for r in rect.0..=rect.2 {
                for c in rect.1..=rect.3 {
                    let i = r * bw + c;
                    if uncovered[i] {
                        cover_count[i] += 1;
                        last_cover[i] = k;
                    }
                }
            }
        }
        let forced = (0..bw * bh).find(|&i| uncovered[i] && cover_count[i] == 1);
        let orphan = (0..bw * bh).find(|&i| uncovered[i] && cover_count[i] == 0);
        let pick = match (forced, orphan) {
            (Some(i), _) => Some(last_cover[i]),
            (None, Some(_)) => None,
            (None, None) => {
                let mut best: Option<(usize, usize)> = None;
                for (k, &(_, _, rect)) in candidates.iter().enumerate() {
                    if used[k] {
                        continue;
                    }
                    let g = gain(rect, &uncovered);
                    if g > 0 && best.is_none_or(|(_, bg)| g > bg) {
                        best = Some((k, g));
                    }
                }
                best.map(|(k, _)| k)
            }
        };
        match pick {
            Some(k) => {
                used[k] = true;
                let (tr, tc, rect) = candidates[k];
                mark(rect, &mut uncovered, &mut remaining);
                out.push(DecodedSquare {
                    square: CornerSquare::new((tr + half, tc + half), q, z),
                    malformed: false,
                });
            }
            None => {
                // Best-fit window around the first orphan pixel.
                let i = orphan.expect("no pick implies an orphan pixel");
                let (pr, pc) = ((i / bw + r0) as i64, (i % bw + c0) as i64);
                let mut best: Option<(i64, i64, (usize, usize, usize, usize), usize)> = None;
                for tr in (pr - qi + 1)..=pr {
                    let (ra, rb) = (tr.max(r0 as i64), (tr + qi - 1).min(r1 as i64));
                    for tc in (pc - qi + 1)..=pc {
                        let (ca, cb) = (tc.max(c0 as i64), (tc + qi - 1).min(c1 as i64));
                        let rect = (
                            (ra - r0 as i64) as usize,
                            (ca - c0 as i64) as usize,
                            (rb - r0 as i64) as usize,
                            (cb - c0 as i64) as usize,
                        );
                        let g = gain(rect, &uncovered);
                        if best.is_none_or(|b| g > b.3) {
                            best = Some((tr, tc, rect, g));
                        }
                    }
                }
                let (tr, tc, rect, _) = best.expect("orphan pixel has at least one window");
                mark(rect, &mut uncovered, &mut remaining);
                out.push(DecodedSquare {
                    square: CornerSquare::new((tr + half, tc + half), q, z),
                    malformed: true,
                });
            }
        }
    }
}

pub fn encode_corner_square(tile: &Raster, sq: &CornerSquare) -> Result<Raster> {
    CornerCodec {
        side: sq.side,
        class_count: DEFAULT_CLASS_COUNT,
    }
    .encode(tile, sq)
}

pub fn decode_corner_squares(tile: &Raster, q: usize) -> Vec<DecodedSquare> {
    CornerCodec {
        side: q,
        class_count: DEFAULT_CLASS_COUNT,
    }
    .decode(tile)
}

/// `1 -> "hah"`, `2 -> "hbh"`, ..., `19 -> "hsh"`.
pub fn class_label_of_height(z: u8) -> Result<String> {
    if !(1..=26).contains(&z) {
        return Err(Error::ClassRange {
            z: z as i64,
            max: 26,
        });
    }
    Ok(format!("h{}h", (b'a' + z - 1) as char))
}

pub fn height_of_class_label(label: &str) -> Result<u8> {
    let bytes = label.as_bytes();
    match bytes {
        [b'h', mid @ b'a'..=b'z', b'h'] => Ok(mid - b'a' + 1),
        _ => Err(Error::Label(label.to_string())),
    }
}
