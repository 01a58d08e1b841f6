use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rooftop_core::export::CocoMode;
use rooftop_core::pipeline::{
    run_baseline, run_coco_export, run_evaluate, run_reconstruct, run_synth, run_tile, PipelineConfig, DEFAULT_HEIGHT,
};
use rooftop_core::synth::{NoiseParams, RoofKind, SceneParams};

#[derive(Parser)]
#[command(name = "rooftop", version, about = "Roof reconstruction from blended segmentation and corner rasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Tile side length in pixels.
    #[arg(long, default_value_t = 230)]
    tile_size: usize,
    /// Pixels shared by adjacent tiles.
    #[arg(long, default_value_t = 10)]
    overlap: usize,
    /// Corner square side in pixels (odd).
    #[arg(long, default_value_t = 15)]
    corner_size: usize,
    /// Height in meters for sections without any corner.
    #[arg(long, default_value_t = DEFAULT_HEIGHT)]
    default_height: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of dropping a roof corner.
    #[arg(long, default_value_t = 0.0)]
    noise_drop: f64,
    /// Standard deviation of corner position jitter, pixels.
    #[arg(long, default_value_t = 0.0)]
    noise_jitter: f64,
    /// Probability of an off-by-one height class.
    #[arg(long, default_value_t = 0.0)]
    noise_class_err: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            tile_size: self.tile_size,
            overlap: self.overlap,
            corner_size: self.corner_size,
            default_height: self.default_height,
            seed: self.seed,
            noise: NoiseParams {
                p_drop: self.noise_drop,
                jitter_sigma: self.noise_jitter,
                p_class_err: self.noise_class_err,
                boundary: 0.0,
            },
            workers: self.workers,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Roof {
    Flat,
    Shed,
    Gable,
    Hip,
}

impl From<Roof> for RoofKind {
    fn from(r: Roof) -> Self {
        match r {
            Roof::Flat => RoofKind::Flat,
            Roof::Shed => RoofKind::Shed,
            Roof::Gable => RoofKind::Gable,
            Roof::Hip => RoofKind::Hip,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sections,
    Corners,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with reference rasters, truth and terrain.
    Synth {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Scene parameters as JSON; flags below override it.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        buildings: Option<usize>,
        /// Roof kinds to draw from, comma separated.
        #[arg(long, value_delimiter = ',')]
        roofs: Vec<Roof>,
        /// Probability of eroding or growing section boundary pixels.
        #[arg(long, default_value_t = 0.0)]
        noise_boundary: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cut a PNG into overlapping tiles with a manifest.
    Tile {
        input: PathBuf,
        #[arg(long, default_value_t = 230)]
        tile_size: usize,
        #[arg(long, default_value_t = 10)]
        overlap: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rebuild roof planes from a blended raster and a corner raster (PNG or tile directory).
    Reconstruct {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        blended: PathBuf,
        #[arg(long)]
        corners: PathBuf,
        /// Terrain grid; point altitudes include it when given.
        #[arg(long)]
        dtm: Option<PathBuf>,
        /// Export every pixel center rather than section outlines.
        #[arg(long)]
        dense: bool,
        /// Leave roof polygons floating instead of extruding walls.
        #[arg(long)]
        no_extrude: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a reconstruction directory against a synthetic truth directory.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write COCO annotations and a 60/20/20 split for a tile directory.
    CocoExport {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Sections)]
        mode: Mode,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit planes to the surface model and compare with a reconstruction.
    Baseline {
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        reconstruction: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Tile { .. } => "tile",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Evaluate { .. } => "evaluate",
            Command::CocoExport { .. } => "coco-export",
            Command::Baseline { .. } => "baseline",
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            pipeline,
            scene,
            width,
            height,
            buildings,
            roofs,
            noise_boundary,
            out_dir,
        } => {
            let mut params: SceneParams = match scene {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => SceneParams::default(),
            };
            if let Some(w) = width {
                params.width = w;
            }
            if let Some(h) = height {
                params.height = h;
            }
            if let Some(n) = buildings {
                params.n_buildings = n;
            }
            if !roofs.is_empty() {
                params.roof_kinds = roofs.into_iter().map(RoofKind::from).collect();
            }
            let mut cfg = pipeline.config();
            cfg.noise.boundary = noise_boundary;
            print_json(&run_synth(&params, &cfg, &out_dir)?)
        }
        Command::Tile {
            input,
            tile_size,
            overlap,
            out_dir,
        } => {
            let manifest = run_tile(&input, tile_size, overlap, &out_dir)?;
            println!("{} tiles written to {}", manifest.tiles.len(), out_dir.display());
            Ok(())
        }
        Command::Reconstruct {
            pipeline,
            blended,
            corners,
            dtm,
            dense,
            no_extrude,
            out_dir,
        } => {
            let mut cfg = pipeline.config();
            cfg.dense_points = dense;
            cfg.extrude = !no_extrude;
            print_json(&run_reconstruct(&blended, &corners, dtm.as_deref(), &cfg, &out_dir)?)
        }
        Command::Evaluate { pred, truth, out_dir } => {
            print!("{}", run_evaluate(&pred, &truth, &out_dir)?.to_table());
            Ok(())
        }
        Command::CocoExport {
            pipeline,
            tiles,
            mode,
            out_dir,
        } => {
            let mode = match mode {
                Mode::Sections => CocoMode::Sections,
                Mode::Corners => CocoMode::Corners,
            };
            let listing = run_coco_export(&tiles, mode, &pipeline.config(), &out_dir)?;
            println!(
                "{} training, {} validation, {} testing tiles",
                listing.training.len(),
                listing.validation.len(),
                listing.testing.len()
            );
            Ok(())
        }
        Command::Baseline {
            synth,
            reconstruction,
            out_dir,
        } => {
            print!("{}", run_baseline(&synth, reconstruction.as_deref(), &out_dir)?.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
