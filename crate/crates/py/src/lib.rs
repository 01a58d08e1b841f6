use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rooftop_core::codec::DatasetSplit;
use rooftop_core::export::CocoMode;
use rooftop_core::metrics::{self, HeightStats};
use rooftop_core::pipeline::{self, PipelineConfig};
use rooftop_core::plane::{self, SectionCorner};
use rooftop_core::synth::SceneParams;
use rooftop_core::{Error, RoofSection};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Plane `z = a * x + b * y + c` with how it was obtained.
#[pyclass(name = "RoofPlane", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRoofPlane {
    inner: rooftop_core::RoofPlane,
}

#[pymethods]
impl PyRoofPlane {
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        self.inner.provenance.label()
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        self.inner.height_at(x, y)
    }

    fn __repr__(&self) -> String {
        format!(
            "RoofPlane(a={}, b={}, c={}, provenance={:?})",
            self.inner.a,
            self.inner.b,
            self.inner.c,
            self.provenance()
        )
    }
}

/// Collapse three ascending heights onto at most two levels.
#[pyfunction]
fn file_heights(z: [f64; 3]) -> PyResult<[f64; 3]> {
    plane::file_heights(z).map_err(to_py)
}

#[pyfunction]
fn largest_triangle(points: Vec<(f64, f64)>) -> PyResult<[usize; 3]> {
    plane::largest_triangle(&points).map_err(to_py)
}

#[pyfunction]
fn plane_from_points(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3]) -> PyResult<PyRoofPlane> {
    plane::plane_from_points(p1, p2, p3).map(|inner| PyRoofPlane { inner }).map_err(to_py)
}

/// Plane of one section from `(row, col, z)` corners.
#[pyfunction]
#[pyo3(signature = (corners, gsd = 0.38, default_height = pipeline::DEFAULT_HEIGHT))]
fn reconstruct_section(corners: Vec<(usize, usize, f64)>, gsd: f64, default_height: f64) -> PyRoofPlane {
    let corners: Vec<SectionCorner> = corners
        .into_iter()
        .map(|(r, c, z)| SectionCorner { pixel: (r, c), z })
        .collect();
    PyRoofPlane {
        inner: plane::reconstruct_section(&corners, gsd, default_height).plane,
    }
}

#[pyfunction]
fn iou(pred: Vec<(usize, usize)>, truth: Vec<(usize, usize)>) -> f64 {
    metrics::iou(&pred, &truth)
}

/// Height statistics over `(predicted, true)` pairs as a dict-ready tuple:
/// `(mean_accuracy, mean_difference, mse)`.
#[pyfunction]
fn height_error_stats(pairs: Vec<(f64, f64)>) -> PyResult<(Option<f64>, f64, f64)> {
    let HeightStats {
        mean_accuracy,
        mean_difference,
        mse,
        ..
    } = metrics::height_error_stats(&pairs).map_err(to_py)?;
    Ok((mean_accuracy, mean_difference, mse))
}

#[pyfunction]
#[pyo3(signature = (ids, seed = 0))]
fn split_dataset(ids: Vec<String>, seed: u64) -> (Vec<String>, Vec<String>, Vec<String>) {
    rooftop_core::export::split_dataset(&ids, seed)
}

/// Number of 4-connected sections in a blended PNG.
#[pyfunction]
fn count_sections(path: PathBuf) -> PyResult<usize> {
    let raster = rooftop_core::Raster::load_png(&path).map_err(to_py)?;
    let sections: Vec<RoofSection> = rooftop_core::sections::extract_sections(&raster);
    Ok(sections.len())
}

fn config(json_text: Option<&str>) -> PyResult<PipelineConfig> {
    match json_text {
        None => Ok(PipelineConfig::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("config: {e}"))),
    }
}

/// Generate a synthetic scene; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (out_dir, scene_json = None, config_json = None))]
fn run_synth(py: Python<'_>, out_dir: PathBuf, scene_json: Option<&str>, config_json: Option<&str>) -> PyResult<String> {
    let params: SceneParams = match scene_json {
        None => SceneParams::default(),
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("scene: {e}")))?,
    };
    let cfg = config(config_json)?;
    let summary = py.detach(|| pipeline::run_synth(&params, &cfg, &out_dir)).map_err(to_py)?;
    json(&summary)
}

/// Reconstruct from a blended and a corner raster; returns diagnostics JSON.
#[pyfunction]
#[pyo3(signature = (blended, corners, out_dir, dtm = None, config_json = None))]
fn run_reconstruct(
    py: Python<'_>,
    blended: PathBuf,
    corners: PathBuf,
    out_dir: PathBuf,
    dtm: Option<PathBuf>,
    config_json: Option<&str>,
) -> PyResult<String> {
    let cfg = config(config_json)?;
    let out = py
        .detach(|| pipeline::run_reconstruct(&blended, &corners, dtm.as_deref(), &cfg, &out_dir))
        .map_err(to_py)?;
    json(&out)
}

#[pyfunction]
fn run_evaluate(py: Python<'_>, pred_dir: PathBuf, truth_dir: PathBuf, out_dir: PathBuf) -> PyResult<String> {
    let report = py
        .detach(|| pipeline::run_evaluate(&pred_dir, &truth_dir, &out_dir))
        .map_err(to_py)?;
    json(&report)
}

#[pyfunction]
#[pyo3(signature = (tiles_dir, out_dir, mode = "sections", seed = 0))]
fn run_coco_export(tiles_dir: PathBuf, out_dir: PathBuf, mode: &str, seed: u64) -> PyResult<String> {
    let mode: CocoMode = mode.parse().map_err(to_py)?;
    let cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    json(&pipeline::run_coco_export(&tiles_dir, mode, &cfg, &out_dir).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (synth_dir, out_dir, reconstruction_dir = None))]
fn run_baseline(synth_dir: PathBuf, out_dir: PathBuf, reconstruction_dir: Option<PathBuf>) -> PyResult<String> {
    json(&pipeline::run_baseline(&synth_dir, reconstruction_dir.as_deref(), &out_dir).map_err(to_py)?)
}

/// Blue code of a split name (`training`, `validation`, `testing`).
#[pyfunction]
fn split_code(name: &str) -> PyResult<u8> {
    DatasetSplit::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .map(DatasetSplit::blue_code)
        .ok_or_else(|| PyValueError::new_err(format!("unknown split {name:?}")))
}

#[pymodule]
fn rooftop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoofPlane>()?;
    m.add_function(wrap_pyfunction!(file_heights, m)?)?;
    m.add_function(wrap_pyfunction!(largest_triangle, m)?)?;
    m.add_function(wrap_pyfunction!(plane_from_points, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_section, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(height_error_stats, m)?)?;
    m.add_function(wrap_pyfunction!(split_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(count_sections, m)?)?;
    m.add_function(wrap_pyfunction!(split_code, m)?)?;
    m.add_function(wrap_pyfunction!(run_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(run_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_coco_export, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    Ok(())
}
