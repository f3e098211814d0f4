//! Python bindings: the frame-sequence type plus the pipeline stages, both
//! in-memory (`detect`, `track`, `process`) and file-based (`run_pipeline`,
//! matching the CLI artifacts byte for byte).

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use touchmap_core::config::PipelineConfig;
use touchmap_core::error::Error;
use touchmap_core::frame::{self, SequenceFormat};
use touchmap_core::geom::Point;
use touchmap_core::preprocess::{self, Detection, DetectionParams};
use touchmap_core::render;
use touchmap_core::synth::{self, SynthParams};
use touchmap_core::tracking::{self, TrackingParams, Trajectory};
use touchmap_core::workspace::{self, SelectionResult};

fn py_err(err: Error) -> PyErr {
    match err.exit_code() {
        5 => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// A validated pressure recording.
#[pyclass(frozen, name = "FrameSequence")]
struct PyFrameSequence {
    inner: frame::FrameSequence,
}

#[pymethods]
impl PyFrameSequence {
    /// Load a sequence from CSV or JSON (decided by extension).
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let p = Path::new(path);
        let inner = frame::load_sequence(p, SequenceFormat::from_path(p)).map_err(py_err)?;
        Ok(PyFrameSequence { inner })
    }

    /// Deterministic synthetic fixture: stroke, tap, squeeze, or hold.
    #[staticmethod]
    #[pyo3(signature = (kind, seed=0, frames=None, rows=None, cols=None, amplitude=None, velocity=None, duration=None, noise=None))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        kind: &str,
        seed: u64,
        frames: Option<usize>,
        rows: Option<usize>,
        cols: Option<usize>,
        amplitude: Option<f64>,
        velocity: Option<f64>,
        duration: Option<usize>,
        noise: Option<f64>,
    ) -> PyResult<Self> {
        let kind: synth::SynthKind = kind.parse().map_err(py_err)?;
        let mut params = SynthParams::default();
        if let Some(v) = frames {
            params.frames = v;
        }
        if let Some(v) = rows {
            params.rows = v;
        }
        if let Some(v) = cols {
            params.cols = v;
        }
        if let Some(v) = amplitude {
            params.amplitude = v;
        }
        if let Some(v) = velocity {
            params.velocity = v;
        }
        if let Some(v) = duration {
            params.duration = v;
        }
        if let Some(v) = noise {
            params.noise = v;
        }
        Ok(PyFrameSequence {
            inner: synth::synthesize(kind, &params, seed).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let p = Path::new(path);
        frame::save_sequence(&self.inner, p, SequenceFormat::from_path(p)).map_err(py_err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.layout().rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.layout().cols()
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate()
    }

    #[getter]
    fn cell_pitch(&self) -> f64 {
        self.inner.layout().cell_pitch()
    }

    /// (mean, population stdev, count) over all valid cells of all frames.
    fn stats(&self) -> PyResult<(f64, f64, usize)> {
        let s = self.inner.stats().map_err(py_err)?;
        Ok((s.mean, s.stdev, s.count))
    }

    /// Pressure at (frame, row, col); None on masked cells.
    fn value(&self, frame: usize, row: usize, col: usize) -> Option<f64> {
        self.inner.value(frame, row, col)
    }

    fn __repr__(&self) -> String {
        format!(
            "FrameSequence({} frames, {}x{} cells, {} Hz)",
            self.inner.len(),
            self.inner.layout().rows(),
            self.inner.layout().cols(),
            self.inner.sample_rate()
        )
    }
}

fn detection_params(sigma_k: f64, m: f64, blur_sigma: f64, upsample: usize) -> DetectionParams {
    DetectionParams {
        sigma_k,
        m,
        blur_sigma,
        upsample,
    }
}

fn detections_from_py(detections: Vec<(usize, f64, f64, f64, f64)>) -> Vec<Detection> {
    detections
        .into_iter()
        .map(|(t, x, y, value, prob)| Detection {
            t,
            x: Point::new(x, y),
            value,
            prob,
        })
        .collect()
}

fn trajectory_to_dict<'py>(py: Python<'py>, traj: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("id", traj.id)?;
    let points: Vec<(usize, f64, f64, f64, f64)> = traj
        .detections
        .iter()
        .map(|det| (det.t, det.x.x, det.x.y, det.value, det.prob))
        .collect();
    d.set_item("points", points)?;
    Ok(d)
}

fn trajectories_from_py(trajs: &Bound<'_, PyList>) -> PyResult<Vec<Trajectory>> {
    let mut out = Vec::new();
    for item in trajs.iter() {
        let d: Bound<'_, PyDict> = item.extract()?;
        let id: usize = d
            .get_item("id")?
            .ok_or_else(|| PyValueError::new_err("trajectory dict needs an 'id'"))?
            .extract()?;
        let points: Vec<(usize, f64, f64, f64, f64)> = d
            .get_item("points")?
            .ok_or_else(|| PyValueError::new_err("trajectory dict needs 'points'"))?
            .extract()?;
        out.push(Trajectory {
            id,
            detections: detections_from_py(points),
        });
    }
    Ok(out)
}

fn selection_to_dict<'py>(py: Python<'py>, sel: &SelectionResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item(
        "transform",
        (sel.transform.translation.x, sel.transform.translation.y),
    )?;
    d.set_item("total_score", sel.total_score)?;
    d.set_item("chosen", sel.chosen.iter().copied().collect::<Vec<usize>>())?;
    let scores = PyDict::new(py);
    for (id, s) in &sel.scores {
        scores.set_item(id, s)?;
    }
    d.set_item("scores", scores)?;
    let assignments: Vec<(usize, usize, usize, usize)> = sel
        .assignments
        .iter()
        .map(|a| (a.traj_id, a.t, a.row, a.col))
        .collect();
    d.set_item("assignments", assignments)?;
    Ok(d)
}

/// Detections as (t, x_mm, y_mm, value, prob) tuples.
#[pyfunction]
#[pyo3(signature = (seq, sigma_k=1.25, m=0.98, blur_sigma=3.0, upsample=7))]
fn detect(
    seq: &PyFrameSequence,
    sigma_k: f64,
    m: f64,
    blur_sigma: f64,
    upsample: usize,
) -> PyResult<Vec<(usize, f64, f64, f64, f64)>> {
    let params = detection_params(sigma_k, m, blur_sigma, upsample);
    let (_, dets) = preprocess::build_detections(&seq.inner, &params).map_err(py_err)?;
    Ok(dets
        .into_iter()
        .map(|d| (d.t, d.x.x, d.x.y, d.value, d.prob))
        .collect())
}

/// MAP trajectories over a detection list; each result is a dict with `id`
/// and `points`.
#[pyfunction]
#[pyo3(signature = (detections, k_d=50.0, entry_cost=8.0))]
fn track<'py>(
    py: Python<'py>,
    detections: Vec<(usize, f64, f64, f64, f64)>,
    k_d: f64,
    entry_cost: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let params = TrackingParams { k_d, entry_cost };
    let dets = detections_from_py(detections);
    let trajs = tracking::solve_tracking(&dets, &params).map_err(py_err)?;
    trajs.iter().map(|t| trajectory_to_dict(py, t)).collect()
}

/// The full in-memory chain. Returns a dict with `detections`,
/// `trajectories`, `selection`, and `signal`.
#[pyfunction]
#[pyo3(signature = (seq, config_json=None))]
fn process<'py>(
    py: Python<'py>,
    seq: &PyFrameSequence,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = match config_json {
        Some(text) => PipelineConfig::from_json(text, "<config>").map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    config
        .render
        .validate(seq.inner.sample_rate())
        .map_err(py_err)?;

    let (dense, dets) =
        preprocess::build_detections(&seq.inner, &config.detection).map_err(py_err)?;
    let trajs = tracking::solve_tracking(&dets, &config.tracking).map_err(py_err)?;
    let arr = config.workspace.build().map_err(py_err)?;
    let grid = config
        .transform_grid
        .build(dense.extent(), &arr, dense.pitch())
        .map_err(py_err)?;
    let selection = workspace::search_transforms(&trajs, &arr, &grid).map_err(py_err)?;
    let signal =
        render::render(&selection, &trajs, &dense, &arr, &config.render).map_err(py_err)?;

    let out = PyDict::new(py);
    let det_tuples: Vec<(usize, f64, f64, f64, f64)> = dets
        .iter()
        .map(|d| (d.t, d.x.x, d.x.y, d.value, d.prob))
        .collect();
    out.set_item("detections", det_tuples)?;
    let traj_dicts: Vec<Bound<'py, PyDict>> = trajs
        .iter()
        .map(|t| trajectory_to_dict(py, t))
        .collect::<PyResult<_>>()?;
    out.set_item("trajectories", traj_dicts)?;
    out.set_item("selection", selection_to_dict(py, &selection)?)?;
    let sig = PyDict::new(py);
    sig.set_item("rows", signal.rows)?;
    sig.set_item("cols", signal.cols)?;
    sig.set_item("sample_rate", signal.sample_rate)?;
    sig.set_item("channels", signal.channels.clone())?;
    sig.set_item("pressure_range", signal.source_pressure_range)?;
    out.set_item("signal", sig)?;
    Ok(out)
}

/// Workspace restriction alone: place the array, pick the best renderable
/// subset of already-tracked trajectories.
#[pyfunction]
#[pyo3(signature = (seq, trajectories, config_json=None))]
fn map_workspaces<'py>(
    py: Python<'py>,
    seq: &PyFrameSequence,
    trajectories: &Bound<'py, PyList>,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = match config_json {
        Some(text) => PipelineConfig::from_json(text, "<config>").map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    let trajs = trajectories_from_py(trajectories)?;
    let (extent, pixel_pitch) =
        preprocess::dense_geometry(seq.inner.layout(), config.detection.upsample);
    let arr = config.workspace.build().map_err(py_err)?;
    let grid = config
        .transform_grid
        .build(extent, &arr, pixel_pitch)
        .map_err(py_err)?;
    let selection = workspace::search_transforms(&trajs, &arr, &grid).map_err(py_err)?;
    selection_to_dict(py, &selection)
}

/// File-based batch run, identical to `touchmap pipeline`: writes
/// detections.csv, trajectories.csv, selection.json, and signal.csv.
#[pyfunction]
#[pyo3(signature = (input, out_dir, config_json=None, stage_dump=false))]
fn run_pipeline<'py>(
    py: Python<'py>,
    input: &str,
    out_dir: &str,
    config_json: Option<&str>,
    stage_dump: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = match config_json {
        Some(text) => PipelineConfig::from_json(text, "<config>").map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    config.input = Some(input.to_string());
    config.out_dir = out_dir.to_string();
    let summary = touchmap_core::pipeline::run_pipeline(&config, stage_dump).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("frames", summary.frames)?;
    d.set_item("detections", summary.detections)?;
    d.set_item("trajectories", summary.trajectories)?;
    d.set_item("chosen", summary.chosen)?;
    d.set_item("transform", summary.transform_mm)?;
    d.set_item("total_score", summary.total_score)?;
    d.set_item("signal_samples", summary.signal_samples)?;
    let artifacts = PyDict::new(py);
    artifacts.set_item(
        "detections_csv",
        summary.artifacts.detections_csv.display().to_string(),
    )?;
    artifacts.set_item(
        "trajectories_csv",
        summary.artifacts.trajectories_csv.display().to_string(),
    )?;
    artifacts.set_item(
        "selection_json",
        summary.artifacts.selection_json.display().to_string(),
    )?;
    artifacts.set_item(
        "signal_csv",
        summary.artifacts.signal_csv.display().to_string(),
    )?;
    d.set_item("artifacts", artifacts)?;
    Ok(d)
}

/// Standard normal CDF used by the detection-probability map.
#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    preprocess::standard_normal_cdf(x)
}

/// The default configuration as JSON, for editing and feeding back in.
#[pyfunction]
fn default_config_json() -> String {
    PipelineConfig::default().to_json()
}

#[pymodule]
fn touchmap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrameSequence>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(map_workspaces, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_json, m)?)?;
    Ok(())
}
