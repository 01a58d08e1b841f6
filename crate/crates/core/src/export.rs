//! Result serialization: xyz point lists, OBJ meshes, COCO annotations, and
//! the train/validation/test shuffle.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{class_label_of_height, CornerSquare, DEFAULT_CLASS_COUNT};
use crate::error::{Error, Result};
use crate::plane::RoofPlane;
use crate::raster::{Georef, Pixel};
use crate::sections::RoofSection;

/// One exported point: world position, height, and split id (0, 1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub id: u8,
}

pub fn format_xyz(records: &[PointRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40);
    for r in records {
        let _ = writeln!(out, "{:.6} {:.6} {:.6} {}", r.x, r.y, r.z, r.id);
    }
    out
}

pub fn write_xyz(records: &[PointRecord], path: &Path) -> Result<()> {
    std::fs::write(path, format_xyz(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_xyz(text: &str) -> std::result::Result<Vec<PointRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [x, y, z, id] = f[..] else {
                return Err(format!("line {}: expected 4 fields, got {}", n + 1, f.len()));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
            let id: u8 = id.parse().map_err(|e| format!("line {}: id: {e}", n + 1))?;
            if id > 2 {
                return Err(format!("line {}: split id {id} outside 0..=2", n + 1));
            }
            Ok(PointRecord {
                x: num(x)?,
                y: num(y)?,
                z: num(z)?,
                id,
            })
        })
        .collect()
}

pub fn read_xyz(path: &Path) -> Result<Vec<PointRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text).map_err(|m| Error::parse(path, m))
}

/// Outer boundary of a pixel set as lattice corners `(i, j)`, where corner
/// `(i, j)` is the top-left corner of pixel `(i, j)`.
///
/// The walk starts at the top-left corner of the first row-major pixel and
/// runs clockwise on screen (rows pointing down), turning right first where
/// two pixels touch only at a corner. Collinear vertices are merged.
pub fn trace_boundary(pixels: &[Pixel]) -> Vec<(i64, i64)> {
    let Some(&start_px) = pixels.iter().min() else {
        return Vec::new();
    };
    let set: HashSet<Pixel> = pixels.iter().copied().collect();
    let has = |r: i64, c: i64| r >= 0 && c >= 0 && set.contains(&(r as usize, c as usize));
    let mut outgoing: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    for &(r, c) in &set {
        let (r, c) = (r as i64, c as i64);
        if !has(r - 1, c) {
            outgoing.entry((r, c)).or_default().push((0, 1));
        }
        if !has(r, c + 1) {
            outgoing.entry((r, c + 1)).or_default().push((1, 0));
        }
        if !has(r + 1, c) {
            outgoing.entry((r + 1, c + 1)).or_default().push((0, -1));
        }
        if !has(r, c - 1) {
            outgoing.entry((r + 1, c)).or_default().push((-1, 0));
        }
    }
    let start = (start_px.0 as i64, start_px.1 as i64);
    let mut vertices = vec![start];
    let mut dir = (0i64, 1i64);
    let mut at = (start.0 + dir.0, start.1 + dir.1);
    take_edge(&mut outgoing, start, dir);
    while at != start {
        vertices.push(at);
        let options = outgoing.get(&at).cloned().unwrap_or_default();
        let right = (dir.1, -dir.0);
        let left = (-dir.1, dir.0);
        let next = [right, dir, left]
            .into_iter()
            .find(|d| options.contains(d))
            .expect("pixel boundaries form closed loops");
        take_edge(&mut outgoing, at, next);
        dir = next;
        at = (at.0 + dir.0, at.1 + dir.1);
    }
    merge_collinear(vertices)
}

fn take_edge(outgoing: &mut HashMap<(i64, i64), Vec<(i64, i64)>>, at: (i64, i64), dir: (i64, i64)) {
    if let Some(v) = outgoing.get_mut(&at) {
        if let Some(k) = v.iter().position(|d| *d == dir) {
            v.swap_remove(k);
        }
    }
}

fn merge_collinear(v: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let n = v.len();
    if n < 3 {
        return v;
    }
    let keep = |k: usize| {
        let p = v[(k + n - 1) % n];
        let q = v[k];
        let r = v[(k + 1) % n];
        (q.0 - p.0) * (r.1 - q.1) - (q.1 - p.1) * (r.0 - q.0) != 0
    };
    (0..n).filter(|&k| keep(k)).map(|k| v[k]).collect()
}

/// Maps fractional pixel positions to world coordinates; without a
/// georeference, x is the column and y the negated row.
fn world_of(georef: Option<&Georef>, row: f64, col: f64) -> (f64, f64) {
    match georef {
        Some(g) => g.pixel_to_world(row, col),
        None => (col, -row),
    }
}

/// Boundary vertices of one section with heights from its plane,
/// counter-clockwise seen from above. Plane coordinates are
/// `(col * gsd, row * gsd)`.
pub fn section_outline(section: &RoofSection, plane: &RoofPlane, georef: Option<&Georef>) -> Vec<[f64; 3]> {
    let gsd = georef.map_or(1.0, |g| g.gsd_m_per_px);
    // Traced clockwise on screen, which is clockwise on a north-up map too.
    trace_boundary(&section.pixels)
        .into_iter()
        .rev()
        .map(|(i, j)| {
            let (row, col) = (i as f64 - 0.5, j as f64 - 0.5);
            let (x, y) = world_of(georef, row, col);
            [x, y, plane.height_at(col * gsd, row * gsd)]
        })
        .collect()
}

/// Point records for sections: boundary vertices by default, every pixel
/// center when `dense`. `lift` maps `(x, y, height)` to the exported `z`.
pub fn section_points(
    sections: &[(RoofSection, RoofPlane)],
    georef: Option<&Georef>,
    dense: bool,
    mut lift: impl FnMut(f64, f64, f64) -> Result<f64>,
) -> Result<Vec<PointRecord>> {
    let gsd = georef.map_or(1.0, |g| g.gsd_m_per_px);
    let mut out = Vec::new();
    for (sec, plane) in sections {
        let id = sec.split.id();
        if dense {
            for &(r, c) in &sec.pixels {
                let (x, y) = world_of(georef, r as f64, c as f64);
                let h = plane.height_at(c as f64 * gsd, r as f64 * gsd);
                out.push(PointRecord { x, y, z: lift(x, y, h)?, id });
            }
        } else {
            for [x, y, h] in section_outline(sec, plane, georef) {
                out.push(PointRecord { x, y, z: lift(x, y, h)?, id });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjSummary {
    pub vertices: usize,
    pub faces: usize,
    /// Sections whose boundary had fewer than 3 vertices.
    pub skipped: usize,
}

/// Wavefront OBJ text: per section a roof polygon lifted onto its plane,
/// counter-clockwise seen from above, and with `extrude_to_ground` one wall
/// quad per boundary edge down to `z = 0`.
pub fn obj_string(
    sections: &[(RoofSection, RoofPlane)],
    georef: Option<&Georef>,
    extrude_to_ground: bool,
) -> (String, ObjSummary) {
    let mut out = String::from("# roof sections\n");
    let mut summary = ObjSummary::default();
    for (sec, plane) in sections {
        let outline = section_outline(sec, plane, georef);
        if outline.len() < 3 {
            summary.skipped += 1;
            continue;
        }
        let _ = writeln!(out, "o section_{}", sec.id);
        let base = summary.vertices + 1;
        for [x, y, z] in &outline {
            let _ = writeln!(out, "v {x:.6} {y:.6} {z:.6}");
        }
        let n = outline.len();
        summary.vertices += n;
        let top: Vec<String> = (0..n).map(|k| (base + k).to_string()).collect();
        let _ = writeln!(out, "f {}", top.join(" "));
        summary.faces += 1;
        if extrude_to_ground {
            let floor = summary.vertices + 1;
            for [x, y, _] in &outline {
                let _ = writeln!(out, "v {x:.6} {y:.6} {:.6}", 0.0);
            }
            summary.vertices += n;
            for k in 0..n {
                let k1 = (k + 1) % n;
                let _ = writeln!(out, "f {} {} {} {}", floor + k, floor + k1, base + k1, base + k);
                summary.faces += 1;
            }
        }
    }
    (out, summary)
}

pub fn write_obj(
    sections: &[(RoofSection, RoofPlane)],
    georef: Option<&Georef>,
    path: &Path,
    extrude_to_ground: bool,
) -> Result<ObjSummary> {
    let (text, summary) = obj_string(sections, georef, extrude_to_ground);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CocoMode {
    Sections,
    Corners,
}

impl std::str::FromStr for CocoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sections" => Ok(CocoMode::Sections),
            "corners" => Ok(CocoMode::Corners),
            other => Err(Error::Config(format!(
                "unknown annotation mode {other:?}, expected `sections` or `corners`"
            ))),
        }
    }
}

/// What one tile contributes to an annotation file.
#[derive(Debug, Clone, PartialEq)]
pub enum TileAnnotations {
    Sections(Vec<Vec<Pixel>>),
    Corners(Vec<CornerSquare>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoTile {
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub annotations: TileAnnotations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

pub fn coco_categories(mode: CocoMode) -> Vec<CocoCategory> {
    match mode {
        CocoMode::Sections => vec![CocoCategory {
            id: 1,
            name: "roof_section".into(),
            supercategory: "roof".into(),
        }],
        CocoMode::Corners => (1..=DEFAULT_CLASS_COUNT)
            .map(|z| CocoCategory {
                id: z as u64,
                name: class_label_of_height(z).expect("default classes have labels"),
                supercategory: "corner".into(),
            })
            .collect(),
    }
}

/// Assemble a COCO dataset. Image ids follow tile order from 1, annotation
/// ids are dense from 1.
pub fn build_coco(tiles: &[CocoTile], mode: CocoMode) -> Result<CocoDataset> {
    let mut images = Vec::with_capacity(tiles.len());
    let mut annotations = Vec::new();
    for (k, tile) in tiles.iter().enumerate() {
        let image_id = k as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: tile.file_name.clone(),
            width: tile.width,
            height: tile.height,
        });
        let mut push = |category_id: u64, polygon: Vec<(i64, i64)>, area: usize, bbox: [usize; 4]| {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id,
                segmentation: vec![polygon
                    .into_iter()
                    .flat_map(|(i, j)| [j as f64, i as f64])
                    .collect()],
                area: area as f64,
                bbox: bbox.map(|v| v as f64),
                iscrowd: 0,
            });
        };
        match (&tile.annotations, mode) {
            (TileAnnotations::Sections(masks), CocoMode::Sections) => {
                for mask in masks.iter().filter(|m| !m.is_empty()) {
                    if let Some(&(r, c)) = mask.iter().find(|&&(r, c)| r >= tile.height || c >= tile.width) {
                        return Err(Error::Bounds {
                            row: r as i64,
                            col: c as i64,
                            width: tile.width,
                            height: tile.height,
                        });
                    }
                    let unique: HashSet<Pixel> = mask.iter().copied().collect();
                    let r0 = mask.iter().map(|p| p.0).min().expect("non-empty");
                    let r1 = mask.iter().map(|p| p.0).max().expect("non-empty");
                    let c0 = mask.iter().map(|p| p.1).min().expect("non-empty");
                    let c1 = mask.iter().map(|p| p.1).max().expect("non-empty");
                    push(1, trace_boundary(mask), unique.len(), [c0, r0, c1 - c0 + 1, r1 - r0 + 1]);
                }
            }
            (TileAnnotations::Corners(squares), CocoMode::Corners) => {
                for sq in squares {
                    if sq.z == 0 || sq.z > DEFAULT_CLASS_COUNT {
                        return Err(Error::ClassRange {
                            z: sq.z as i64,
                            max: DEFAULT_CLASS_COUNT,
                        });
                    }
                    let Some((r0, c0, r1, c1)) = sq.clipped_rect(tile.width, tile.height) else {
                        continue;
                    };
                    let (r0, c0, r1, c1) = (r0 as i64, c0 as i64, r1 as i64 + 1, c1 as i64 + 1);
                    let area = ((r1 - r0) * (c1 - c0)) as usize;
                    push(
                        sq.z as u64,
                        vec![(r0, c0), (r0, c1), (r1, c1), (r1, c0)],
                        area,
                        [c0 as usize, r0 as usize, (c1 - c0) as usize, (r1 - r0) as usize],
                    );
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "tile {} does not carry {mode:?} annotations",
                    tile.file_name
                )))
            }
        }
    }
    Ok(CocoDataset {
        images,
        annotations,
        categories: coco_categories(mode),
    })
}

pub fn write_coco(tiles: &[CocoTile], mode: CocoMode, path: &Path) -> Result<CocoDataset> {
    let ds = build_coco(tiles, mode)?;
    crate::write_json(path, &ds)?;
    Ok(ds)
}

/// Seeded shuffle into 60% training, 20% validation and the remainder testing
/// (sizes `floor(0.6 n)`, `floor(0.2 n)`, rest).
pub fn split_dataset<T: Clone>(ids: &[T], seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    (shuffled, val, test)
}
