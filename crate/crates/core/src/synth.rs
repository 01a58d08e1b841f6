//! Synthetic cities seen by an oblique satellite, with exact reference
//! outputs standing in for the two segmentation networks.
//!
//! Buildings are axis-aligned rectangles on the ground pixel lattice. Roof
//! sections of one building are kept pixel-separated: gable and hip sections
//! leave a one-pixel gap along ridge and hip lines, and each section's slope
//! is chosen so its outermost pixel rows carry exactly the eave and ridge
//! heights. A roof point at height `h` is displaced in the image by the
//! oblique lean of the view, rounded to whole pixels once per height, so
//! projected section outlines stay on the pixel lattice.

use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{CornerSquare, DEFAULT_CLASS_COUNT, DEFAULT_CORNER_SIZE};
use crate::dtm::{DsmGrid, DtmGrid, ElevationGrid};
use crate::error::{Error, Result};
use crate::raster::{Georef, Pixel, Raster};

const MIN_HEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoofKind {
    Flat,
    Shed,
    Gable,
    Hip,
}

impl RoofKind {
    pub const ALL: [RoofKind; 4] = [RoofKind::Flat, RoofKind::Shed, RoofKind::Gable, RoofKind::Hip];
}

/// Satellite view: azimuth and elevation in degrees, ground sample distance
/// in meters per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub gsd: f64,
}

impl Default for ViewGeometry {
    fn default() -> Self {
        Self {
            azimuth_deg: 181.10,
            elevation_deg: 59.30,
            gsd: 0.38,
        }
    }
}

impl ViewGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.elevation_deg > 0.0 && self.elevation_deg <= 90.0) {
            return Err(Error::Config(format!(
                "view elevation must lie in (0, 90] degrees, got {}",
                self.elevation_deg
            )));
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(Error::Config(format!("gsd must be positive, got {}", self.gsd)));
        }
        Ok(())
    }

    /// Image displacement `(d_row, d_col)` in pixels of a point `h` meters
    /// above the ground: `h / tan(elevation)` meters away from the sensor.
    pub fn displacement(&self, h: f64) -> (f64, f64) {
        let lean = h / self.elevation_deg.to_radians().tan() / self.gsd;
        let az = self.azimuth_deg.to_radians();
        (az.cos() * lean, -az.sin() * lean)
    }

    /// [`Self::displacement`] rounded half up to whole pixels.
    pub fn snapped_displacement(&self, h: f64) -> (i64, i64) {
        let (dr, dc) = self.displacement(h);
        ((dr + 0.5).floor() as i64, (dc + 0.5).floor() as i64)
    }
}

/// Solar geometry, used only for rendered shadows. `zenith_deg` is the solar
/// zenith angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunGeometry {
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
}

impl Default for SunGeometry {
    fn default() -> Self {
        Self {
            zenith_deg: 35.0,
            azimuth_deg: 150.0,
        }
    }
}

/// Image position `(row, col)` of world point `(x, y)` at height `h`.
pub fn project_oblique(x: f64, y: f64, h: f64, view: &ViewGeometry, georef: &Georef) -> (f64, f64) {
    let (r, c) = georef.world_to_pixel(x, y);
    let (dr, dc) = view.displacement(h);
    (r + dr, c + dc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainParams {
    pub base_altitude: f64,
    pub amplitude: f64,
    pub wavelength_m: f64,
    pub cell_size: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            base_altitude: 95.0,
            amplitude: 4.0,
            wavelength_m: 400.0,
            cell_size: 10.0,
        }
    }
}

/// Scene generator settings. Sizes are in pixels, heights in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub n_buildings: usize,
    pub view: ViewGeometry,
    pub sun: SunGeometry,
    pub roof_kinds: Vec<RoofKind>,
    pub integer_heights: bool,
    pub eave_range: [f64; 2],
    pub rise_range: [f64; 2],
    /// Short footprint side, pixels.
    pub short_side_range: [usize; 2],
    /// Long side minus short side, pixels.
    pub long_extra_range: [usize; 2],
    pub terrain: TerrainParams,
    pub shadows: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 1000,
            height: 1000,
            origin_x: 600_000.0,
            origin_y: 5_450_000.0,
            n_buildings: 20,
            view: ViewGeometry::default(),
            sun: SunGeometry::default(),
            roof_kinds: RoofKind::ALL.to_vec(),
            integer_heights: true,
            eave_range: [3.0, 9.0],
            rise_range: [1.0, 5.0],
            short_side_range: [36, 70],
            long_extra_range: [0, 50],
            terrain: TerrainParams::default(),
            shadows: true,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        self.view.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad("frame must be non-empty".into());
        }
        if self.roof_kinds.is_empty() && self.n_buildings > 0 {
            return bad("at least one roof kind is required".into());
        }
        let [e0, e1] = self.eave_range;
        let [r0, r1] = self.rise_range;
        let max = DEFAULT_CLASS_COUNT as f64;
        if !(MIN_HEIGHT <= e0 && e0 <= e1 && e1 <= max) {
            return bad(format!("eave range must lie within [1, {max}], got {e0}..{e1}"));
        }
        if !(0.0 <= r0 && r0 <= r1) {
            return bad(format!("invalid rise range {r0}..{r1}"));
        }
        let [s0, s1] = self.short_side_range;
        if !(4 <= s0 && s0 <= s1) {
            return bad(format!("invalid short side range {s0}..{s1}"));
        }
        if self.long_extra_range[0] > self.long_extra_range[1] {
            return bad("invalid long side range".into());
        }
        if !(self.terrain.cell_size > 0.0 && self.terrain.wavelength_m > 0.0) {
            return bad("terrain cell size and wavelength must be positive".into());
        }
        Ok(())
    }

    pub fn georef(&self) -> Result<Georef> {
        Georef::new(self.origin_x, self.origin_y, self.view.gsd)
    }
}

/// One building. The footprint covers ground pixels `row0..=row1`,
/// `col0..=col1`; its roof geometry lives in the scene's section list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: usize,
    pub kind: RoofKind,
    pub row0: i64,
    pub col0: i64,
    pub row1: i64,
    pub col1: i64,
    /// Ridge (or shed slope) runs along columns, slopes face north and south.
    pub ridge_along_cols: bool,
    /// Shed roofs: the high edge is on the lower-index side.
    pub high_side_first: bool,
    pub eave_height: f64,
    pub ridge_height: f64,
    /// `[x_min, y_min, x_max, y_max]`, world meters, pixel-edge aligned.
    pub world_rect: [f64; 4],
}

/// A roof section vertex on the ground lattice with its height. Vertices of
/// different sections that stand for the same physical roof corner share a
/// `corner_id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofVertex {
    pub ground: (i64, i64),
    pub z: f64,
    pub corner_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSection {
    pub building: usize,
    /// Convex polygon in cyclic order.
    pub vertices: Vec<RoofVertex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub seed: u64,
    pub params: SceneParams,
    pub georef: Georef,
    pub buildings: Vec<Building>,
    pub sections: Vec<TruthSection>,
    pub dtm: DtmGrid,
}

impl SceneTruth {
    pub fn width(&self) -> usize {
        self.params.width
    }

    pub fn height(&self) -> usize {
        self.params.height
    }

    pub fn view(&self) -> &ViewGeometry {
        &self.params.view
    }

    /// Image position of a section vertex.
    pub fn image_vertex(&self, v: &RoofVertex) -> (i64, i64) {
        let (dr, dc) = self.params.view.snapped_displacement(v.z);
        (v.ground.0 + dr, v.ground.1 + dc)
    }
}

/// Roof sections of one building. Physical corner ids start at `first_corner`
/// and six are reserved per building (four eave corners, two ridge ends).
pub fn building_sections(b: &Building, first_corner: usize) -> Vec<TruthSection> {
    let (a0, a1, b0, b1) = if b.ridge_along_cols {
        (b.row0, b.row1, b.col0, b.col1)
    } else {
        (b.col0, b.col1, b.row0, b.row1)
    };
    let swap = !b.ridge_along_cols;
    let (e, r) = (b.eave_height, b.ridge_height);
    let [ca, cb, cc, cd, r1, r2] = [0, 1, 2, 3, 4, 5].map(|k| first_corner + k);
    let vx = |a: i64, bb: i64, z: f64, id: usize| RoofVertex {
        ground: if swap { (bb, a) } else { (a, bb) },
        z,
        corner_id: id,
    };
    let section = |vertices: Vec<RoofVertex>| TruthSection {
        building: b.id,
        vertices,
    };
    let h = (a1 - a0) / 2;
    let k = a0 + h;
    match b.kind {
        RoofKind::Flat => vec![section(vec![
            vx(a0, b0, e, ca),
            vx(a0, b1, e, cb),
            vx(a1, b1, e, cc),
            vx(a1, b0, e, cd),
        ])],
        RoofKind::Shed => {
            let (za0, za1) = if b.high_side_first { (r, e) } else { (e, r) };
            vec![section(vec![
                vx(a0, b0, za0, ca),
                vx(a0, b1, za0, cb),
                vx(a1, b1, za1, cc),
                vx(a1, b0, za1, cd),
            ])]
        }
        RoofKind::Gable => vec![
            section(vec![
                vx(a0, b0, e, ca),
                vx(a0, b1, e, cb),
                vx(k - 1, b1, r, r2),
                vx(k - 1, b0, r, r1),
            ]),
            section(vec![
                vx(k + 1, b0, r, r1),
                vx(k + 1, b1, r, r2),
                vx(a1, b1, e, cc),
                vx(a1, b0, e, cd),
            ]),
        ],
        RoofKind::Hip => vec![
            section(vec![
                vx(a0, b0 + 1, e, ca),
                vx(a0, b1 - 1, e, cb),
                vx(k - 1, b1 - h, r, r2),
                vx(k - 1, b0 + h, r, r1),
            ]),
            section(vec![
                vx(a1, b0 + 1, e, cd),
                vx(a1, b1 - 1, e, cc),
                vx(k + 1, b1 - h, r, r2),
                vx(k + 1, b0 + h, r, r1),
            ]),
            section(vec![vx(a0 + 1, b0, e, ca), vx(a1 - 1, b0, e, cd), vx(k, b0 + h - 1, r, r1)]),
            section(vec![vx(a0 + 1, b1, e, cb), vx(a1 - 1, b1, e, cc), vx(k, b1 - h + 1, r, r2)]),
        ],
    }
}

/// Twice the signed area of a polygon.
fn twice_area(v: &[(i64, i64)]) -> i64 {
    let n = v.len();
    (0..n)
        .map(|k| {
            let (p, q) = (v[k], v[(k + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum()
}

/// Lattice points inside or on a convex polygon, row-major, optionally
/// clipped to a frame.
pub fn rasterize_convex(vertices: &[(i64, i64)], frame: Option<(usize, usize)>) -> Vec<Pixel> {
    let orient = twice_area(vertices).signum();
    if orient == 0 || vertices.len() < 3 {
        return Vec::new();
    }
    let mut rmin = vertices.iter().map(|v| v.0).min().unwrap();
    let mut rmax = vertices.iter().map(|v| v.0).max().unwrap();
    let mut cmin = vertices.iter().map(|v| v.1).min().unwrap();
    let mut cmax = vertices.iter().map(|v| v.1).max().unwrap();
    rmin = rmin.max(0);
    cmin = cmin.max(0);
    if let Some((w, h)) = frame {
        rmax = rmax.min(h as i64 - 1);
        cmax = cmax.min(w as i64 - 1);
    }
    let n = vertices.len();
    let mut out = Vec::new();
    for r in rmin..=rmax {
        for c in cmin..=cmax {
            let inside = (0..n).all(|k| {
                let (p, q) = (vertices[k], vertices[(k + 1) % n]);
                let cross = (q.0 - p.0) * (c - p.1) - (q.1 - p.1) * (r - p.0);
                cross * orient >= 0
            });
            if inside {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

/// Convex hull of integer points (strict turns), counter-clockwise in
/// `(row, col)` coordinates.
fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in [false, true] {
        let start = hull.len();
        let seq: Vec<(i64, i64)> = if pass { pts.iter().rev().copied().collect() } else { pts.clone() };
        for p in seq {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

struct Checked {
    /// Inclusive image-space bounding box of the building and its squares.
    bbox: (i64, i64, i64, i64),
}

/// Whether a building renders into separable, decodable outputs: every
/// section keeps its orientation after projection, sections are neither
/// overlapping nor 4-adjacent, and squares of distinct physical corners are
/// at least `q` apart (Chebyshev) so no two of them touch.
fn check_building(scene_view: &ViewGeometry, sections: &[TruthSection], b: &Building, q: usize) -> Option<Checked> {
    let margin = (q / 2 + 2) as i64;
    let mut owner: HashMap<(i64, i64), usize> = HashMap::new();
    let mut squares: Vec<((i64, i64), usize)> = Vec::new();
    let mut bbox = (b.row0, b.col0, b.row1, b.col1);
    for (k, sec) in sections.iter().enumerate() {
        let ground: Vec<(i64, i64)> = sec.vertices.iter().map(|v| v.ground).collect();
        let image: Vec<(i64, i64)> = sec
            .vertices
            .iter()
            .map(|v| {
                let (dr, dc) = scene_view.snapped_displacement(v.z);
                (v.ground.0 + dr, v.ground.1 + dc)
            })
            .collect();
        let ga = twice_area(&ground);
        let ia = twice_area(&image);
        if ga == 0 || ia == 0 || ga.signum() != ia.signum() {
            return None;
        }
        // Offset so rasterization sees non-negative coordinates.
        let off = (1 << 20, 1 << 20);
        let shifted: Vec<(i64, i64)> = image.iter().map(|p| (p.0 + off.0, p.1 + off.1)).collect();
        for (r, c) in rasterize_convex(&shifted, None) {
            let p = (r as i64 - off.0, c as i64 - off.1);
            if owner.insert(p, k).is_some() {
                return None;
            }
        }
        for (p, v) in image.iter().zip(&sec.vertices) {
            squares.push((*p, v.corner_id));
            bbox = (bbox.0.min(p.0), bbox.1.min(p.1), bbox.2.max(p.0), bbox.3.max(p.1));
        }
    }
    for (&(r, c), &k) in &owner {
        for n in [(r + 1, c), (r, c + 1)] {
            if owner.get(&n).is_some_and(|&j| j != k) {
                return None;
            }
        }
    }
    let q = q as i64;
    for (i, &(p, id)) in squares.iter().enumerate() {
        for &(p2, id2) in &squares[i + 1..] {
            if id != id2 && (p.0 - p2.0).abs().max((p.1 - p2.1).abs()) < q {
                return None;
            }
        }
    }
    Some(Checked {
        bbox: (bbox.0 - margin, bbox.1 - margin, bbox.2 + margin, bbox.3 + margin),
    })
}

fn sample_height(rng: &mut ChaCha8Rng, range: [f64; 2], integer: bool) -> f64 {
    if integer {
        let lo = range[0].ceil() as i64;
        let hi = range[1].floor() as i64;
        if lo >= hi {
            lo as f64
        } else {
            rng.random_range(lo..=hi) as f64
        }
    } else if range[0] >= range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

const ATTEMPTS_PER_BUILDING: usize = 200;

/// Place `params.n_buildings` buildings on a jittered grid, one per cell,
/// so their rendered outputs never interact. Deterministic in `seed`.
pub fn generate_scene(seed: u64, params: &SceneParams, corner_size: usize) -> Result<SceneTruth> {
    params.validate()?;
    let georef = params.georef()?;
    let dtm = generate_dtm(params, &georef, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.n_buildings;
    let (w, h) = (params.width as i64, params.height as i64);
    let mut buildings = Vec::with_capacity(n);
    let mut sections = Vec::new();
    if n > 0 {
        let gx = ((n as f64 * w as f64 / h as f64).sqrt().ceil() as i64).max(1);
        let gy = (n as i64 + gx - 1) / gx;
        let (cell_w, cell_h) = (w / gx, h / gy);
        let mut cells: Vec<i64> = (0..gx * gy).collect();
        cells.shuffle(&mut rng);
        cells.truncate(n);
        cells.sort_unstable();
        for (id, cell) in cells.into_iter().enumerate() {
            let (cy, cx) = ((cell / gx) * cell_h, (cell % gx) * cell_w);
            let (b, secs) = place_in_cell(&mut rng, params, id, (cy, cx, cell_h, cell_w), corner_size, &georef)
                .ok_or_else(|| {
                    Error::Placement(format!(
                        "building {id} does not fit a {cell_w}x{cell_h} px cell; lower the density or the size ranges"
                    ))
                })?;
            buildings.push(b);
            sections.extend(secs);
        }
    }
    Ok(SceneTruth {
        seed,
        params: params.clone(),
        georef,
        buildings,
        sections,
        dtm,
    })
}

fn place_in_cell(
    rng: &mut ChaCha8Rng,
    params: &SceneParams,
    id: usize,
    cell: (i64, i64, i64, i64),
    q: usize,
    georef: &Georef,
) -> Option<(Building, Vec<TruthSection>)> {
    let (cy, cx, ch, cw) = cell;
    let max_height = DEFAULT_CLASS_COUNT as f64;
    for _ in 0..ATTEMPTS_PER_BUILDING {
        let kind = *params.roof_kinds.choose(rng).expect("validated non-empty");
        let ridge_along_cols: bool = rng.random();
        let high_side_first: bool = rng.random();
        let [s0, s1] = params.short_side_range;
        let mut short = rng.random_range(s0..=s1) as i64;
        let extra = rng.random_range(params.long_extra_range[0]..=params.long_extra_range[1]) as i64;
        let eave = sample_height(rng, params.eave_range, params.integer_heights);
        let rise = sample_height(rng, params.rise_range, params.integer_heights);
        let x_off: f64 = rng.random();
        let y_off: f64 = rng.random();
        if matches!(kind, RoofKind::Gable | RoofKind::Hip) && short % 2 == 1 {
            short -= 1;
        }
        let mut long = short + extra;
        if kind == RoofKind::Hip {
            long = long.max(short + 2);
        }
        // Extents in lattice steps: across the ridge and along it.
        let (across, along) = (short, long);
        let (rows, cols) = if ridge_along_cols { (across, along) } else { (along, across) };
        let mut ridge = if kind == RoofKind::Flat {
            eave
        } else {
            (eave + rise).min(max_height)
        };
        loop {
            let mut b = Building {
                id,
                kind,
                row0: 0,
                col0: 0,
                row1: rows,
                col1: cols,
                ridge_along_cols,
                high_side_first,
                eave_height: eave,
                ridge_height: ridge,
                world_rect: [0.0; 4],
            };
            let secs = building_sections(&b, 0);
            if let Some(chk) = check_building(&params.view, &secs, &b, q) {
                let (br0, bc0, br1, bc1) = chk.bbox;
                let (lo_r, hi_r) = (cy - br0, cy + ch - 1 - br1);
                let (lo_c, hi_c) = (cx - bc0, cx + cw - 1 - bc1);
                if lo_r <= hi_r && lo_c <= hi_c {
                    let dr = lo_r + ((hi_r - lo_r + 1) as f64 * y_off).floor() as i64;
                    let dc = lo_c + ((hi_c - lo_c + 1) as f64 * x_off).floor() as i64;
                    let dr = dr.min(hi_r);
                    let dc = dc.min(hi_c);
                    b.row0 += dr;
                    b.row1 += dr;
                    b.col0 += dc;
                    b.col1 += dc;
                    let (x0, y0) = georef.pixel_to_world(b.row1 as f64 + 0.5, b.col0 as f64 - 0.5);
                    let (x1, y1) = georef.pixel_to_world(b.row0 as f64 - 0.5, b.col1 as f64 + 0.5);
                    b.world_rect = [x0, y0, x1, y1];
                    let secs = building_sections(&b, id * 6);
                    return Some((b, secs));
                }
                break;
            }
            // Too steep to stay separable: lower the ridge and retry.
            if ridge - eave >= 2.0 {
                ridge -= 1.0;
            } else {
                break;
            }
        }
    }
    None
}

/// Smooth terrain on a coarse grid covering the frame with a one-cell margin.
pub fn generate_dtm(params: &SceneParams, georef: &Georef, seed: u64) -> Result<DtmGrid> {
    let t = &params.terrain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7272_6169_6e00);
    let phase_x: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_y: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt_x: f64 = rng.random_range(-1.0..1.0);
    let tilt_y: f64 = rng.random_range(-1.0..1.0);
    let span_x = (params.width.max(1) - 1) as f64 * georef.gsd_m_per_px;
    let span_y = (params.height.max(1) - 1) as f64 * georef.gsd_m_per_px;
    let width = (span_x / t.cell_size).ceil() as usize + 3;
    let height = (span_y / t.cell_size).ceil() as usize + 3;
    let origin_x = georef.origin_x - t.cell_size;
    let origin_y = georef.origin_y + t.cell_size;
    let k = std::f64::consts::TAU / t.wavelength_m;
    let mut values = Vec::with_capacity(width * height);
    for i in 0..height {
        for j in 0..width {
            let x = j as f64 * t.cell_size - t.cell_size;
            let y = i as f64 * t.cell_size - t.cell_size;
            values.push(
                t.base_altitude
                    + t.amplitude * (k * x + phase_x).sin() * (k * y + phase_y).cos()
                    + 0.002 * (tilt_x * x + tilt_y * y),
            );
        }
    }
    ElevationGrid::new(width, height, origin_x, origin_y, t.cell_size, values)
}

/// Image-space plane `z = p * row + q * col + r` of a rendered section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePlane {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedSection {
    /// Index into the scene's section list.
    pub index: usize,
    pub building: usize,
    /// Visible pixels, row-major.
    pub pixels: Vec<Pixel>,
    pub image_vertices: Vec<(i64, i64)>,
    pub heights: Vec<f64>,
}

/// A reference corner square and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSquare {
    pub square: CornerSquare,
    pub section: usize,
    pub corner_id: usize,
}

/// Exact stand-ins for the two networks' outputs plus per-pixel truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRender {
    pub width: usize,
    pub height: usize,
    pub sections: Vec<RenderedSection>,
    pub squares: Vec<OracleSquare>,
    /// Height-to-ground per pixel, NaN off roofs.
    pub heights: Vec<f64>,
    /// Sections hidden entirely by others.
    pub occluded: Vec<usize>,
}

/// Height at `(row, col)` from barycentric weights of three image vertices.
fn barycentric_height(tri: [((i64, i64), f64); 3], row: f64, col: f64) -> f64 {
    let [(a, za), (b, zb), (c, zc)] = tri;
    let f = |p: (i64, i64)| (p.0 as f64, p.1 as f64);
    let (a, b, c) = (f(a), f(b), f(c));
    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
    let wb = ((row - a.0) * (c.1 - a.1) - (c.0 - a.0) * (col - a.1)) / det;
    let wc = ((b.0 - a.0) * (col - a.1) - (row - a.0) * (b.1 - a.1)) / det;
    let wa = 1.0 - wb - wc;
    wa * za + wb * zb + wc * zc
}

/// Project and rasterize every section, resolve occlusion, and place one
/// corner square per section vertex.
///
/// Higher sections (by mean vertex height) overwrite lower ones; lower
/// pixels left 4-adjacent to a higher section are then cleared so distinct
/// sections never touch. Square heights are rounded and clamped to
/// `[1, class_count]`.
pub fn render_oracle(scene: &SceneTruth, corner_size: usize, class_count: u8) -> OracleRender {
    let (w, h) = (scene.width(), scene.height());
    let images: Vec<Vec<(i64, i64)>> = scene
        .sections
        .iter()
        .map(|s| s.vertices.iter().map(|v| scene.image_vertex(v)).collect())
        .collect();
    let mut order: Vec<usize> = (0..scene.sections.len()).collect();
    let mean_z = |k: usize| {
        let v = &scene.sections[k].vertices;
        v.iter().map(|x| x.z).sum::<f64>() / v.len() as f64
    };
    order.sort_by(|&a, &b| mean_z(a).total_cmp(&mean_z(b)).then(a.cmp(&b)));
    let mut rank = vec![0usize; order.len()];
    for (pos, &k) in order.iter().enumerate() {
        rank[k] = pos;
    }
    // Painter's order: owner holds section index + 1.
    let mut owner = vec![0u32; w * h];
    for &k in &order {
        for (r, c) in rasterize_convex(&images[k], Some((w, h))) {
            owner[r * w + c] = k as u32 + 1;
        }
    }
    let mut cleared = Vec::new();
    for i in 0..w * h {
        let o = owner[i];
        if o == 0 {
            continue;
        }
        let (r, c) = (i / w, i % w);
        let mine = rank[o as usize - 1];
        let mut neighbors = [None; 4];
        if r > 0 {
            neighbors[0] = Some(i - w);
        }
        if r + 1 < h {
            neighbors[1] = Some(i + w);
        }
        if c > 0 {
            neighbors[2] = Some(i - 1);
        }
        if c + 1 < w {
            neighbors[3] = Some(i + 1);
        }
        let shadowed = neighbors.into_iter().flatten().any(|j| {
            let oj = owner[j];
            oj != 0 && oj != o && rank[oj as usize - 1] > mine
        });
        if shadowed {
            cleared.push(i);
        }
    }
    for i in cleared {
        owner[i] = 0;
    }
    let mut pixels: Vec<Vec<Pixel>> = vec![Vec::new(); scene.sections.len()];
    for (i, &o) in owner.iter().enumerate() {
        if o != 0 {
            pixels[o as usize - 1].push((i / w, i % w));
        }
    }
    let mut heights = vec![f64::NAN; w * h];
    let mut sections = Vec::with_capacity(scene.sections.len());
    let mut squares = Vec::new();
    let mut occluded = Vec::new();
    for (k, sec) in scene.sections.iter().enumerate() {
        let verts = &images[k];
        let zs: Vec<f64> = sec.vertices.iter().map(|v| v.z).collect();
        let tri = widest_triple(verts);
        let tri = tri.map(|t| t.map(|i| (verts[i], zs[i])));
        if let Some(tri) = tri {
            for &(r, c) in &pixels[k] {
                heights[r * w + c] = barycentric_height(tri, r as f64, c as f64);
            }
        }
        if pixels[k].is_empty() {
            occluded.push(k);
        } else {
            for (p, v) in verts.iter().zip(&sec.vertices) {
                let z = v.z.round().clamp(1.0, class_count as f64) as u8;
                squares.push(OracleSquare {
                    square: CornerSquare::new(*p, corner_size, z),
                    section: k,
                    corner_id: v.corner_id,
                });
            }
        }
        sections.push(RenderedSection {
            index: k,
            building: sec.building,
            pixels: std::mem::take(&mut pixels[k]),
            image_vertices: verts.clone(),
            heights: zs,
        });
    }
    OracleRender {
        width: w,
        height: h,
        sections,
        squares,
        heights,
        occluded,
    }
}

/// Indices of the maximum-area vertex triple, first in enumeration order.
fn widest_triple(v: &[(i64, i64)]) -> Option<[usize; 3]> {
    let mut best = None;
    let mut best_area = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            for k in j + 1..v.len() {
                let a = twice_area(&[v[i], v[j], v[k]]).abs();
                if a > best_area {
                    best_area = a;
                    best = Some([i, j, k]);
                }
            }
        }
    }
    best
}

/// Degradation applied to the reference outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Probability that a physical corner loses all its squares.
    pub p_drop: f64,
    /// Standard deviation of the center shift, pixels.
    pub jitter_sigma: f64,
    /// Probability that a corner's height class is off by one.
    pub p_class_err: f64,
    /// Probability of eroding each rim pixel and, separately, of growing
    /// each free pixel next to a section.
    pub boundary: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("drop", self.p_drop),
            ("class error", self.p_class_err),
            ("boundary", self.boundary),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::Config(format!("jitter sigma {} must be >= 0", self.jitter_sigma)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == NoiseParams::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyOracle {
    pub masks: Vec<Vec<Pixel>>,
    pub squares: Vec<CornerSquare>,
}

#[derive(Debug, Clone, Copy)]
struct CornerDraw {
    drop: f64,
    shift: (f64, f64),
    class: f64,
    up: bool,
}

/// Degrade the reference outputs, deterministically in `seed`.
///
/// Random draws are made per physical corner, in corner id order, and the
/// same draws are made whatever the probabilities, so runs that differ only
/// in a probability are coupled: a corner dropped at `p` is dropped at every
/// larger `p`. A class error moves `z` one step, downward or upward at
/// random, and toward the inside of `[1, class_count]` at its ends.
pub fn inject_noise(render: &OracleRender, noise: &NoiseParams, class_count: u8, seed: u64) -> Result<NoisyOracle> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_6500);
    let mut draws: BTreeMap<usize, CornerDraw> = BTreeMap::new();
    for sq in &render.squares {
        draws.entry(sq.corner_id).or_insert(CornerDraw {
            drop: 0.0,
            shift: (0.0, 0.0),
            class: 0.0,
            up: false,
        });
    }
    for d in draws.values_mut() {
        d.drop = rng.random();
        d.shift = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        d.class = rng.random();
        d.up = rng.random();
    }
    let mut squares = Vec::with_capacity(render.squares.len());
    for os in &render.squares {
        let d = draws[&os.corner_id];
        if d.drop < noise.p_drop {
            continue;
        }
        let mut sq = os.square;
        let jr = (noise.jitter_sigma * d.shift.0 + 0.5).floor() as i64;
        let jc = (noise.jitter_sigma * d.shift.1 + 0.5).floor() as i64;
        sq.center = (sq.center.0 + jr, sq.center.1 + jc);
        if d.class < noise.p_class_err {
            let z = sq.z as i64;
            let (first, second) = if d.up { (z + 1, z - 1) } else { (z - 1, z + 1) };
            let valid = |v: i64| v >= 1 && v <= class_count as i64;
            if valid(first) {
                sq.z = first as u8;
            } else if valid(second) {
                sq.z = second as u8;
            }
        }
        squares.push(sq);
    }
    let masks = if noise.boundary > 0.0 {
        perturb_boundaries(render, noise.boundary, seed)
    } else {
        render.sections.iter().map(|s| s.pixels.clone()).collect()
    };
    Ok(NoisyOracle { masks, squares })
}

fn perturb_boundaries(render: &OracleRender, p: f64, seed: u64) -> Vec<Vec<Pixel>> {
    let (w, h) = (render.width, render.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626f_756e_6479);
    let mut owner = vec![0u32; w * h];
    for (k, s) in render.sections.iter().enumerate() {
        for &(r, c) in &s.pixels {
            owner[r * w + c] = k as u32 + 1;
        }
    }
    let neighbors = |i: usize| {
        let (r, c) = (i / w, i % w);
        [
            (r > 0).then(|| i - w),
            (r + 1 < h).then(|| i + w),
            (c > 0).then(|| i - 1),
            (c + 1 < w).then(|| i + 1),
        ]
        .into_iter()
        .flatten()
    };
    for (k, s) in render.sections.iter().enumerate() {
        let me = k as u32 + 1;
        let mut size = s.pixels.len();
        for &(r, c) in &s.pixels {
            let i = r * w + c;
            let on_rim = neighbors(i).count() < 4 || neighbors(i).any(|j| owner[j] != me);
            let u: f64 = rng.random();
            if on_rim && size > 1 && u < p / 2.0 {
                owner[i] = 0;
                size -= 1;
            }
        }
        let mut frontier: Vec<usize> = s
            .pixels
            .iter()
            .flat_map(|&(r, c)| neighbors(r * w + c).collect::<Vec<_>>())
            .filter(|&j| owner[j] == 0)
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        for j in frontier {
            let u: f64 = rng.random();
            let touches_me = neighbors(j).any(|n| owner[n] == me);
            let touches_other = neighbors(j).any(|n| owner[n] != 0 && owner[n] != me);
            if u < p / 2.0 && owner[j] == 0 && touches_me && !touches_other {
                owner[j] = me;
            }
        }
    }
    let mut masks = vec![Vec::new(); render.sections.len()];
    for (i, &o) in owner.iter().enumerate() {
        if o != 0 {
            masks[o as usize - 1].push((i / w, i % w));
        }
    }
    masks
}

/// Synthetic RGB view: textured ground, optional shadows, walls and shaded
/// roofs. Red stays at or below 200 and green above zero, so no natural
/// pixel can read as a code.
pub fn render_image(scene: &SceneTruth, render: &OracleRender) -> Raster {
    let (w, h) = (scene.width(), scene.height());
    let mut img = Raster::new(w, h).with_georef(Some(scene.georef));
    let seed = scene.seed;
    let noise = |r: usize, c: usize| -> i32 {
        let mut x = (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (c as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ seed;
        x ^= x >> 29;
        x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 32;
        (x % 17) as i32 - 8
    };
    for r in 0..h {
        for c in 0..w {
            let n = noise(r, c);
            img.set(r, c, [(112 + n) as u8, (124 + n) as u8, (98 + n) as u8]);
        }
    }
    let darken = |img: &mut Raster, px: &[Pixel], f: f64| {
        for &(r, c) in px {
            let [a, b, cc] = img.get(r, c);
            let s = |v: u8| ((v as f64 * f) as u8).max(1);
            img.set(r, c, [s(a), s(b), s(cc)]);
        }
    };
    let view = scene.view();
    for b in &scene.buildings {
        let ground = [(b.row0, b.col0), (b.row0, b.col1), (b.row1, b.col1), (b.row1, b.col0)];
        if scene.params.shadows {
            let len = b.ridge_height * scene.params.sun.zenith_deg.to_radians().tan() / view.gsd;
            let az = scene.params.sun.azimuth_deg.to_radians();
            // Shadows fall away from the sun.
            let sr = (az.cos() * len).round() as i64;
            let sc = (-az.sin() * len).round() as i64;
            let mut pts = ground.to_vec();
            pts.extend(ground.iter().map(|&(r, c)| (r + sr, c + sc)));
            darken(&mut img, &rasterize_convex(&convex_hull(&pts), Some((w, h))), 0.55);
        }
        let (dr, dc) = view.snapped_displacement(b.eave_height);
        let mut pts = ground.to_vec();
        pts.extend(ground.iter().map(|&(r, c)| (r + dr, c + dc)));
        for (r, c) in rasterize_convex(&convex_hull(&pts), Some((w, h))) {
            let n = noise(r, c) / 2;
            img.set(r, c, [(150 + n) as u8, (140 + n) as u8, (128 + n) as u8]);
        }
    }
    for s in &render.sections {
        let verts = &scene.sections[s.index].vertices;
        // Color by the downhill direction of the section.
        let hi: Vec<&RoofVertex> = verts.iter().filter(|v| v.z > verts[0].z.min(v.z)).collect();
        let base = if hi.is_empty() && verts.iter().all(|v| v.z == verts[0].z) {
            [165, 160, 150]
        } else {
            let mean = |f: fn(&RoofVertex) -> i64, sel: &dyn Fn(&RoofVertex) -> bool| {
                let xs: Vec<i64> = verts.iter().filter(|v| sel(v)).map(f).collect();
                xs.iter().sum::<i64>() as f64 / xs.len().max(1) as f64
            };
            let zmax = verts.iter().map(|v| v.z).fold(f64::MIN, f64::max);
            let top = |v: &RoofVertex| v.z == zmax;
            let low = |v: &RoofVertex| v.z != zmax;
            let dr = mean(|v| v.ground.0, &low) - mean(|v| v.ground.0, &top);
            let dc = mean(|v| v.ground.1, &low) - mean(|v| v.ground.1, &top);
            if dr.abs() >= dc.abs() {
                if dr > 0.0 {
                    [190, 104, 78]
                } else {
                    [150, 78, 62]
                }
            } else {
                [172, 92, 70]
            }
        };
        for &(r, c) in &s.pixels {
            let n = noise(r, c) / 3;
            img.set(r, c, base.map(|v: i32| (v + n) as u8));
        }
    }
    img
}

/// Surface model in the image frame: terrain plus, over each building's
/// projected roof outline, that building's mean roof height.
pub fn lod1_dsm(scene: &SceneTruth, render: &OracleRender) -> Result<DsmGrid> {
    let (w, h) = (scene.width(), scene.height());
    let g = &scene.georef;
    let mut building_px: Vec<Vec<usize>> = vec![Vec::new(); scene.buildings.len()];
    let mut verts: Vec<Vec<(i64, i64)>> = vec![Vec::new(); scene.buildings.len()];
    for s in &render.sections {
        verts[s.building].extend(&s.image_vertices);
        building_px[s.building].extend(s.pixels.iter().map(|&(r, c)| r * w + c));
    }
    let mut values = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = g.pixel_to_world(r as f64, c as f64);
            values.push(scene.dtm.sample(x, y)?);
        }
    }
    for (b, px) in building_px.iter().enumerate() {
        if px.is_empty() {
            continue;
        }
        let mean = px.iter().map(|&i| render.heights[i]).sum::<f64>() / px.len() as f64;
        for (r, c) in rasterize_convex(&convex_hull(&verts[b]), Some((w, h))) {
            let (x, y) = g.pixel_to_world(r as f64, c as f64);
            values[r * w + c] = scene.dtm.sample(x, y)? + mean;
        }
    }
    ElevationGrid::new(w, h, g.origin_x, g.origin_y, g.gsd_m_per_px, values)
}

/// Default corner size for scenes built outside a pipeline configuration.
pub const DEFAULT_SQUARE: usize = DEFAULT_CORNER_SIZE;
