//! End-to-end frame reconstruction and the file-based stages behind the
//! command line: synth, tile, reconstruct, evaluate, coco-export, baseline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::baseline_dsm_reconstruct;
use crate::codec::{
    blend_split, prescreen_corners, segmentation_split, CornerCodec, CornerSquare, DatasetSplit, DecodedSquare,
    DEFAULT_CLASS_COUNT, DEFAULT_CORNER_SIZE,
};
use crate::corners::{assign_squares, SquareFiling};
use crate::dtm::{apply_dtm, DtmGrid, ElevationGrid, HeightMap};
use crate::error::{Error, Result};
use crate::export::{
    section_points, split_dataset, write_coco, write_obj, write_xyz, CocoMode, CocoTile, ObjSummary, TileAnnotations,
};
use crate::merge::unify_sections_in_place;
use crate::metrics::{evaluate, CompensatedSum, EvalReport, LabeledHeights};
use crate::plane::{reconstruct_section, Provenance, RoofPlane, SectionCorner, SectionPlane};
use crate::raster::{reassemble, split_tiles, tile_origins, Georef, Raster, Tile, TileGrid};
use crate::sections::{extract_sections, RoofSection};
use crate::synth::{
    generate_scene, inject_noise, lod1_dsm, render_image, render_oracle, NoiseParams, OracleRender, SceneParams,
    SceneTruth,
};
use crate::{read_json, write_json};

/// Fallback height for sections with no corner: mean corner height of the
/// reference training set.
pub const DEFAULT_HEIGHT: f64 = 6.11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tile_size: usize,
    pub overlap: usize,
    pub corner_size: usize,
    pub default_height: f64,
    pub class_count: u8,
    pub seed: u64,
    pub noise: NoiseParams,
    /// Worker threads for per-section reconstruction; 0 uses all cores.
    pub workers: usize,
    /// Export every pixel center instead of section outlines.
    pub dense_points: bool,
    /// Extrude OBJ roof polygons down to the ground.
    pub extrude: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile_size: 230,
            overlap: 10,
            corner_size: DEFAULT_CORNER_SIZE,
            default_height: DEFAULT_HEIGHT,
            class_count: DEFAULT_CLASS_COUNT,
            seed: 0,
            noise: NoiseParams::default(),
            workers: 0,
            dense_points: false,
            extrude: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size <= 2 * self.overlap {
            return Err(Error::InvalidTiling(format!(
                "tile size {} must exceed twice the overlap {}",
                self.tile_size, self.overlap
            )));
        }
        if self.corner_size == 0 || self.corner_size % 2 == 0 {
            return Err(Error::Config(format!(
                "corner square size must be odd so squares have a center pixel, got {}",
                self.corner_size
            )));
        }
        CornerCodec::new(self.corner_size, self.class_count)?;
        if !self.default_height.is_finite() {
            return Err(Error::Config("default height must be finite".into()));
        }
        self.noise.validate()
    }

    pub fn codec(&self) -> CornerCodec {
        CornerCodec {
            side: self.corner_size,
            class_count: self.class_count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sections: usize,
    pub decoded_squares: usize,
    pub malformed_squares: usize,
    pub assigned_squares: usize,
    /// Squares that touch no section.
    pub unmatched_squares: usize,
    /// Segmentation pixels whose split code changed during unification.
    pub unified_pixels: usize,
    /// Sections per plane provenance.
    pub provenance: BTreeMap<String, usize>,
    /// Sections whose filed heights differ from the decoded ones.
    pub filing_altered: usize,
    pub max_filing_delta: f64,
}

/// Everything reconstructed from one frame.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub width: usize,
    pub height: usize,
    pub georef: Option<Georef>,
    pub sections: Vec<RoofSection>,
    pub planes: Vec<SectionPlane>,
    pub squares: Vec<DecodedSquare>,
    pub filing: SquareFiling,
    pub heights: LabeledHeights,
    pub unified: Raster,
    pub diagnostics: Diagnostics,
}

impl Reconstruction {
    pub fn section_planes(&self) -> Vec<(RoofSection, RoofPlane)> {
        self.sections
            .iter()
            .cloned()
            .zip(self.planes.iter().map(|p| p.plane))
            .collect()
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Reconstruct every roof section of a full frame from its blended
/// segmentation raster and corner-square raster.
pub fn reconstruct_frame(blended: &Raster, corners: &Raster, cfg: &PipelineConfig) -> Result<Reconstruction> {
    cfg.validate()?;
    let (w, h) = (blended.width(), blended.height());
    if (corners.width(), corners.height()) != (w, h) {
        return Err(Error::FrameMismatch(format!(
            "blended raster is {w}x{h}, corner raster is {}x{}",
            corners.width(),
            corners.height()
        )));
    }
    let mut unified = blended.clone();
    let unified_pixels = unify_sections_in_place(&mut unified);
    let sections = extract_sections(&unified);
    let squares = cfg.codec().decode(corners);
    let plain: Vec<CornerSquare> = squares.iter().map(|d| d.square).collect();
    let filing = assign_squares(&plain, &sections);
    let mut per_section: Vec<Vec<SectionCorner>> = vec![Vec::new(); sections.len()];
    for a in &filing.assigned {
        per_section[a.section_id].push(SectionCorner {
            pixel: a.rep_pixel,
            z: a.square.z as f64,
        });
    }
    let gsd = blended.gsd();
    let pool = thread_pool(cfg.workers)?;
    let planes: Vec<SectionPlane> = pool.install(|| {
        per_section
            .par_iter()
            .map(|c| reconstruct_section(c, gsd, cfg.default_height))
            .collect()
    });
    let mut heights = LabeledHeights::empty(w, h);
    for (sec, sp) in sections.iter().zip(&planes) {
        for &(r, c) in &sec.pixels {
            let i = r * w + c;
            heights.split[i] = Some(sec.split);
            heights.z[i] = sp.plane.height_at(c as f64 * gsd, r as f64 * gsd);
        }
    }
    let mut diagnostics = Diagnostics {
        sections: sections.len(),
        decoded_squares: squares.len(),
        malformed_squares: squares.iter().filter(|d| d.malformed).count(),
        assigned_squares: filing.assigned.len(),
        unmatched_squares: filing.unassigned.len(),
        unified_pixels,
        ..Diagnostics::default()
    };
    for sp in &planes {
        *diagnostics.provenance.entry(sp.plane.provenance.label().to_string()).or_default() += 1;
        if let Some(f) = sp.filing {
            if f.altered() {
                diagnostics.filing_altered += 1;
            }
            diagnostics.max_filing_delta = diagnostics.max_filing_delta.max(f.max_delta());
        }
    }
    Ok(Reconstruction {
        width: w,
        height: h,
        georef: blended.georef().copied(),
        sections,
        planes,
        squares,
        filing,
        heights,
        unified,
        diagnostics,
    })
}

/// Per-pixel split of the tile that finally owns each pixel after
/// reassembly (the last tile in row-major order covering it), with tiles
/// split 60/20/20 by a seeded shuffle of their indices.
pub fn tile_owner_splits(width: usize, height: usize, s: usize, p: usize, seed: u64) -> Result<Vec<DatasetSplit>> {
    let rows = tile_origins(height, s, p)?;
    let cols = tile_origins(width, s, p)?;
    let ids: Vec<usize> = (0..rows.len() * cols.len()).collect();
    let (train, val, test) = split_dataset(&ids, seed);
    let mut split_of = vec![DatasetSplit::Training; ids.len()];
    for (set, split) in [(val, DatasetSplit::Validation), (test, DatasetSplit::Testing), (train, DatasetSplit::Training)] {
        for id in set {
            split_of[id] = split;
        }
    }
    let last_origin = |origins: &[usize], v: usize| origins.iter().rposition(|&o| o <= v).expect("origin 0 covers");
    let col_owner: Vec<usize> = (0..width).map(|c| last_origin(&cols, c)).collect();
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let tr = last_origin(&rows, r);
        out.extend(col_owner.iter().map(|&tc| split_of[tr * cols.len() + tc]));
    }
    Ok(out)
}

/// Reference outputs of one synthetic frame.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub scene: SceneTruth,
    pub render: OracleRender,
    pub image: Raster,
    /// Exact segmentation, each section painted with one split code.
    pub truth_blended: Raster,
    /// Segmentation as a tiled network would deliver it: noisy masks painted
    /// with the split of the tile that owns each pixel.
    pub blended: Raster,
    pub corners: Raster,
    pub truth: LabeledHeights,
    /// Split of each scene section, `None` when fully hidden.
    pub section_splits: Vec<Option<DatasetSplit>>,
    pub dsm: ElevationGrid,
    pub training_mean_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub buildings: usize,
    pub sections: usize,
    pub occluded_sections: usize,
    pub squares_truth: usize,
    pub squares_emitted: usize,
    pub roof_pixels: usize,
    /// Mean corner height over training-split sections.
    pub training_mean_height: Option<f64>,
}

impl SynthFrame {
    pub fn summary(&self, emitted: usize) -> SynthSummary {
        SynthSummary {
            seed: self.scene.seed,
            buildings: self.scene.buildings.len(),
            sections: self.scene.sections.len(),
            occluded_sections: self.render.occluded.len(),
            squares_truth: self.render.squares.len(),
            squares_emitted: emitted,
            roof_pixels: self.truth.roof_count(),
            training_mean_height: self.training_mean_height,
        }
    }
}

/// Generate a scene and render every reference output.
pub fn synthesize(params: &SceneParams, cfg: &PipelineConfig) -> Result<(SynthFrame, usize)> {
    cfg.validate()?;
    let scene = generate_scene(cfg.seed, params, cfg.corner_size)?;
    let render = render_oracle(&scene, cfg.corner_size, cfg.class_count);
    let image = render_image(&scene, &render);
    let (w, h) = (scene.width(), scene.height());
    let owner = tile_owner_splits(w, h, cfg.tile_size, cfg.overlap, cfg.seed)?;
    let mut base = image.clone();
    prescreen_corners(&mut base, cfg.class_count);

    let mut truth_blended = base.clone();
    let mut truth = LabeledHeights::empty(w, h);
    let mut section_splits = Vec::with_capacity(render.sections.len());
    for s in &render.sections {
        let split = s.pixels.first().map(|&(r, c)| owner[r * w + c]);
        section_splits.push(split);
        if let Some(split) = split {
            blend_split(&mut truth_blended, &s.pixels, split)?;
            for &(r, c) in &s.pixels {
                truth.split[r * w + c] = Some(split);
                truth.z[r * w + c] = render.heights[r * w + c];
            }
        }
    }

    let noisy = inject_noise(&render, &cfg.noise, cfg.class_count, cfg.seed)?;
    let mut blended = base.clone();
    for mask in &noisy.masks {
        for split in DatasetSplit::ALL {
            let px: Vec<_> = mask.iter().copied().filter(|&(r, c)| owner[r * w + c] == split).collect();
            blend_split(&mut blended, &px, split)?;
        }
    }
    let mut corners = base;
    let codec = cfg.codec();
    for sq in &noisy.squares {
        codec.draw(&mut corners, sq)?;
    }

    let mut mean = CompensatedSum::default();
    let mut count = 0usize;
    for (s, split) in render.sections.iter().zip(&section_splits) {
        if *split == Some(DatasetSplit::Training) {
            for z in &s.heights {
                mean.add(*z);
                count += 1;
            }
        }
    }
    let dsm = lod1_dsm(&scene, &render)?;
    let frame = SynthFrame {
        scene,
        render,
        image,
        truth_blended,
        blended,
        corners,
        truth,
        section_splits,
        dsm,
        training_mean_height: (count > 0).then(|| mean.value() / count as f64),
    };
    Ok((frame, noisy.squares.len()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn height_map(heights: &LabeledHeights, georef: Option<&Georef>) -> HeightMap {
    let g = georef.copied().unwrap_or(Georef {
        origin_x: 0.0,
        origin_y: 0.0,
        gsd_m_per_px: 1.0,
    });
    HeightMap {
        width: heights.width,
        height: heights.height,
        origin_x: g.origin_x,
        origin_y: g.origin_y,
        cell_size: g.gsd_m_per_px,
        values: (0..heights.z.len())
            .map(|i| if heights.is_roof(i) { heights.z[i] } else { f64::NAN })
            .collect(),
    }
}

/// Labeled heights from a height map plus the blended raster carrying the
/// split of every roof pixel.
pub fn load_labeled_heights(heights_path: &Path, blended_path: &Path) -> Result<LabeledHeights> {
    let map = HeightMap::load(heights_path)?;
    let blended = Raster::load_png(blended_path)?;
    if (map.width, map.height) != (blended.width(), blended.height()) {
        return Err(Error::FrameMismatch(format!(
            "{} is {}x{}, {} is {}x{}",
            heights_path.display(),
            map.width,
            map.height,
            blended_path.display(),
            blended.width(),
            blended.height()
        )));
    }
    let mut out = LabeledHeights::empty(map.width, map.height);
    for i in 0..map.values.len() {
        if let Some(split) = segmentation_split(blended.get_index(i)) {
            if map.values[i].is_nan() {
                return Err(Error::parse(
                    heights_path,
                    format!("roof pixel ({}, {}) has no height", i / map.width, i % map.width),
                ));
            }
            out.split[i] = Some(split);
            out.z[i] = map.values[i];
        }
    }
    Ok(out)
}

/// Write scene, image, reference rasters, truth heights, DTM and DSM.
pub fn run_synth(params: &SceneParams, cfg: &PipelineConfig, out_dir: &Path) -> Result<SynthSummary> {
    let (frame, emitted) = synthesize(params, cfg)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("scene.json"), &frame.scene)?;
    frame.image.save_png(&out_dir.join("image.png"))?;
    frame.truth_blended.save_png(&out_dir.join("truth_blended.png"))?;
    frame.blended.save_png(&out_dir.join("blended.png"))?;
    frame.corners.save_png(&out_dir.join("corners.png"))?;
    height_map(&frame.truth, Some(&frame.scene.georef)).save(&out_dir.join("truth_heights.asc"))?;
    frame.scene.dtm.save_ascii(&out_dir.join("dtm.asc"))?;
    frame.dsm.save_ascii(&out_dir.join("dsm.asc"))?;
    let summary = frame.summary(emitted);
    write_json(&out_dir.join("synth_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub file: String,
    pub origin_row: usize,
    pub origin_col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub overlap: usize,
    pub georef: Option<Georef>,
    pub tiles: Vec<TileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Cut a PNG into overlapping tiles plus a manifest.
pub fn run_tile(input: &Path, tile_size: usize, overlap: usize, out_dir: &Path) -> Result<TileManifest> {
    let src = Raster::load_png(input)?;
    let grid = split_tiles(&src, tile_size, overlap)?;
    ensure_dir(out_dir)?;
    let mut tiles = Vec::with_capacity(grid.tiles.len());
    for (k, t) in grid.tiles.iter().enumerate() {
        let file = format!("tile_{k:04}.png");
        t.raster.save_png(&out_dir.join(&file))?;
        tiles.push(TileEntry {
            file,
            origin_row: t.origin_row,
            origin_col: t.origin_col,
        });
    }
    let manifest = TileManifest {
        width: src.width(),
        height: src.height(),
        tile_size,
        overlap,
        georef: src.georef().copied(),
        tiles,
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// A full frame from a PNG or from a tile directory with a manifest.
pub fn load_frame(path: &Path) -> Result<Raster> {
    if !path.is_dir() {
        return Raster::load_png(path);
    }
    let manifest: TileManifest = read_json(&path.join(MANIFEST))?;
    let tiles = manifest
        .tiles
        .iter()
        .map(|e| {
            Ok(Tile {
                origin_row: e.origin_row,
                origin_col: e.origin_col,
                raster: Raster::load_png(&path.join(&e.file))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = TileGrid {
        tile_size: manifest.tile_size,
        overlap: manifest.overlap,
        tiles,
    };
    Ok(reassemble(&grid, manifest.width, manifest.height)?.with_georef(manifest.georef))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRecord {
    pub section_id: usize,
    pub split: DatasetSplit,
    pub pixels: usize,
    pub corners: usize,
    pub plane: RoofPlane,
    pub filing: Option<crate::plane::FilingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOutput {
    pub diagnostics: Diagnostics,
    pub obj: ObjSummary,
    pub points: usize,
}

/// Reconstruct a frame and write heights, planes, point cloud, OBJ and
/// diagnostics. With a DTM the point cloud carries altitudes, otherwise
/// heights to ground.
pub fn run_reconstruct(
    blended: &Path,
    corners: &Path,
    dtm: Option<&Path>,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<ReconstructOutput> {
    let blended = load_frame(blended)?;
    let corners = load_frame(corners)?;
    let dtm: Option<DtmGrid> = dtm.map(ElevationGrid::load_ascii).transpose()?;
    let rec = reconstruct_frame(&blended, &corners, cfg)?;
    ensure_dir(out_dir)?;
    rec.unified.save_png(&out_dir.join("blended_unified.png"))?;
    height_map(&rec.heights, rec.georef.as_ref()).save(&out_dir.join("heights.asc"))?;
    let mut counts = vec![0usize; rec.sections.len()];
    for a in &rec.filing.assigned {
        counts[a.section_id] += 1;
    }
    let records: Vec<PlaneRecord> = rec
        .sections
        .iter()
        .zip(&rec.planes)
        .map(|(s, p)| PlaneRecord {
            section_id: s.id,
            split: s.split,
            pixels: s.len(),
            corners: counts[s.id],
            plane: p.plane,
            filing: p.filing,
        })
        .collect();
    write_json(&out_dir.join("planes.json"), &records)?;
    let pairs = rec.section_planes();
    let georef = rec.georef.as_ref();
    let points = section_points(&pairs, georef, cfg.dense_points, |x, y, h| match (&dtm, georef) {
        (Some(d), Some(_)) => apply_dtm(x, y, h, d),
        _ => Ok(h),
    })?;
    write_xyz(&points, &out_dir.join("sections.xyz"))?;
    let obj = write_obj(&pairs, georef, &out_dir.join("roofs.obj"), cfg.extrude)?;
    write_json(&out_dir.join("diagnostics.json"), &rec.diagnostics)?;
    Ok(ReconstructOutput {
        diagnostics: rec.diagnostics,
        obj,
        points: points.len(),
    })
}

/// Compare a reconstruction directory with a synthetic truth directory.
pub fn run_evaluate(pred_dir: &Path, truth_dir: &Path, out_dir: &Path) -> Result<EvalReport> {
    let pred = load_labeled_heights(&pred_dir.join("heights.asc"), &pred_dir.join("blended_unified.png"))?;
    let truth = load_labeled_heights(&truth_dir.join("truth_heights.asc"), &truth_dir.join("truth_blended.png"))?;
    let report = evaluate(&pred, &truth)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("report.json"), &report)?;
    std::fs::write(out_dir.join("report.txt"), report.to_table()).map_err(|e| Error::io(out_dir, e))?;
    Ok(report)
}

fn tile_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST).exists() {
        let manifest: TileManifest = read_json(&dir.join(MANIFEST))?;
        return Ok(manifest.tiles.iter().map(|t| dir.join(&t.file)).collect());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitListing {
    pub training: Vec<String>,
    pub validation: Vec<String>,
    pub testing: Vec<String>,
}

/// Annotate every tile of a directory in COCO form and write a seeded
/// 60/20/20 listing of tile names.
pub fn run_coco_export(tiles_dir: &Path, mode: CocoMode, cfg: &PipelineConfig, out_dir: &Path) -> Result<SplitListing> {
    let codec = cfg.codec();
    let mut tiles = Vec::new();
    for path in tile_files(tiles_dir)? {
        let raster = Raster::load_png(&path)?;
        let annotations = match mode {
            CocoMode::Sections => {
                TileAnnotations::Sections(extract_sections(&raster).into_iter().map(|s| s.pixels).collect())
            }
            CocoMode::Corners => TileAnnotations::Corners(codec.decode(&raster).into_iter().map(|d| d.square).collect()),
        };
        tiles.push(CocoTile {
            file_name: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            width: raster.width(),
            height: raster.height(),
            annotations,
        });
    }
    ensure_dir(out_dir)?;
    let name = match mode {
        CocoMode::Sections => "coco_sections.json",
        CocoMode::Corners => "coco_corners.json",
    };
    write_coco(&tiles, mode, &out_dir.join(name))?;
    let names: Vec<String> = tiles.iter().map(|t| t.file_name.clone()).collect();
    let (training, validation, testing) = split_dataset(&names, cfg.seed);
    let listing = SplitListing {
        training,
        validation,
        testing,
    };
    write_json(&out_dir.join("split.json"), &listing)?;
    Ok(listing)
}

/// Baseline reconstruction over the sections of a blended raster.
pub fn baseline_heights(blended: &Raster, dsm: &ElevationGrid, dtm: &DtmGrid) -> Result<(LabeledHeights, usize)> {
    let georef = blended
        .georef()
        .copied()
        .ok_or_else(|| Error::Config("the baseline needs a georeferenced raster".into()))?;
    let unified = crate::merge::unify_sections(blended);
    let sections = extract_sections(&unified);
    let (w, h) = (blended.width(), blended.height());
    let gsd = georef.gsd_m_per_px;
    let mut heights = LabeledHeights::empty(w, h);
    let mut fallbacks = 0;
    for sec in &sections {
        let plane = match baseline_dsm_reconstruct(sec, dsm, dtm, &georef) {
            Ok(p) => p,
            Err(Error::Degenerate(_)) => {
                // Too thin to tilt: flat at the mean surface height.
                fallbacks += 1;
                let mut s = CompensatedSum::default();
                for &(r, c) in &sec.pixels {
                    let (x, y) = georef.pixel_to_world(r as f64, c as f64);
                    s.add(dsm.sample(x, y)? - dtm.sample(x, y)?);
                }
                RoofPlane::horizontal(s.value() / sec.len() as f64, Provenance::Baseline)
            }
            Err(e) => return Err(e),
        };
        for &(r, c) in &sec.pixels {
            heights.split[r * w + c] = Some(sec.split);
            heights.z[r * w + c] = plane.height_at(c as f64 * gsd, r as f64 * gsd);
        }
    }
    Ok((heights, fallbacks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline: EvalReport,
    pub pipeline: Option<EvalReport>,
    pub baseline_flat_fallbacks: usize,
}

impl BaselineComparison {
    pub fn to_text(&self) -> String {
        let mut out = format!("DSM plane-fit baseline\n{}\n", self.baseline.to_table());
        if let Some(p) = &self.pipeline {
            out.push_str(&format!("\nCorner-based reconstruction\n{}\n", p.to_table()));
        }
        out
    }
}

/// Run the DSM baseline on a synthetic directory and compare it with a
/// reconstruction directory when one is given.
pub fn run_baseline(synth_dir: &Path, pipeline_dir: Option<&Path>, out_dir: &Path) -> Result<BaselineComparison> {
    let blended = Raster::load_png(&synth_dir.join("blended.png"))?;
    let dsm = ElevationGrid::load_ascii(&synth_dir.join("dsm.asc"))?;
    let dtm = ElevationGrid::load_ascii(&synth_dir.join("dtm.asc"))?;
    let truth = load_labeled_heights(&synth_dir.join("truth_heights.asc"), &synth_dir.join("truth_blended.png"))?;
    let (heights, baseline_flat_fallbacks) = baseline_heights(&blended, &dsm, &dtm)?;
    let baseline = evaluate(&heights, &truth)?;
    let pipeline = pipeline_dir.map(|d| run_evaluate(d, synth_dir, out_dir)).transpose()?;
    ensure_dir(out_dir)?;
    height_map(&heights, blended.georef()).save(&out_dir.join("baseline_heights.asc"))?;
    let cmp = BaselineComparison {
        baseline,
        pipeline,
        baseline_flat_fallbacks,
    };
    write_json(&out_dir.join("baseline_report.json"), &cmp)?;
    std::fs::write(out_dir.join("comparison.txt"), cmp.to_text()).map_err(|e| Error::io(out_dir, e))?;
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn owner_splits_follow_last_tile() {
        let splits = tile_owner_splits(50, 30, 20, 4, 3).unwrap();
        let rows = tile_origins(30, 20, 4).unwrap();
        let cols = tile_origins(50, 20, 4).unwrap();
        let ids: Vec<usize> = (0..rows.len() * cols.len()).collect();
        let (tr, va, _) = split_dataset(&ids, 3);
        // Pixel in the last tile only.
        let last = ids.len() - 1;
        let expect = if tr.contains(&last) {
            DatasetSplit::Training
        } else if va.contains(&last) {
            DatasetSplit::Validation
        } else {
            DatasetSplit::Testing
        };
        assert_eq!(splits[30 * 50 - 1], expect);
    }

    #[test]
    fn config_rejects_even_squares() {
        let cfg = PipelineConfig {
            corner_size: 10,
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = PipelineConfig {
            tile_size: 20,
            overlap: 10,
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidTiling(_))));
    }

    #[test]
    fn noiseless_small_frame_is_exact() {
        let params = SceneParams {
            width: 500,
            height: 400,
            n_buildings: 6,
            ..SceneParams::default()
        };
        let cfg = PipelineConfig {
            seed: 5,
            workers: 1,
            ..PipelineConfig::default()
        };
        let (frame, _) = synthesize(&params, &cfg).unwrap();
        let rec = reconstruct_frame(&frame.blended, &frame.corners, &cfg).unwrap();
        let report = evaluate(&rec.heights, &frame.truth).unwrap();
        assert_eq!(report.overall.iou, 1.0);
        let hs = report.overall.heights.unwrap();
        assert!(hs.mse < 1e-18, "{hs:?}");
        assert_eq!(rec.diagnostics.unmatched_squares, 0);
        assert_eq!(rec.diagnostics.malformed_squares, 0);
    }
}
