//! Batch orchestration: one call runs detect, track, map, and render,
//! writing the four stage artifacts and returning a summary.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::{load_sequence, FrameSequence, SequenceFormat};
use crate::preprocess::{build_detections, save_detections_csv};
use crate::render::{render, save_signal_csv};
use crate::tracking::{save_trajectories_csv, solve_tracking};
use crate::workspace::{save_selection_json, search_transforms};

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub detections_csv: PathBuf,
    pub trajectories_csv: PathBuf,
    pub selection_json: PathBuf,
    pub signal_csv: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub frames: usize,
    pub detections: usize,
    pub trajectories: usize,
    pub chosen: usize,
    pub transform_mm: (f64, f64),
    pub total_score: f64,
    pub signal_samples: usize,
    pub artifacts: PipelineArtifacts,
}

impl PipelineSummary {
    /// One line per stage, for the CLI.
    pub fn report(&self) -> String {
        format!(
            "frames: {}\ndetections: {}\ntrajectories: {}\nselected: {} (transform {:+.3}, {:+.3} mm; total score {:.6})\nsignal samples per channel: {}\n",
            self.frames,
            self.detections,
            self.trajectories,
            self.chosen,
            self.transform_mm.0,
            self.transform_mm.1,
            self.total_score,
            self.signal_samples
        )
    }
}

/// Runs the whole chain on `config.input`, writing artifacts into
/// `config.out_dir`. With `stage_dump`, also writes the defaults-resolved
/// config used for the run.
pub fn run_pipeline(config: &PipelineConfig, stage_dump: bool) -> Result<PipelineSummary> {
    config.validate()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input sequence configured".into()))?;
    let input_path = Path::new(input);
    let seq = load_sequence(input_path, SequenceFormat::from_path(input_path))?;
    run_pipeline_on(config, &seq, stage_dump)
}

/// Same as `run_pipeline` for an already-loaded sequence.
pub fn run_pipeline_on(
    config: &PipelineConfig,
    seq: &FrameSequence,
    stage_dump: bool,
) -> Result<PipelineSummary> {
    config.validate()?;
    config.render.validate(seq.sample_rate())?;

    let out_dir = Path::new(&config.out_dir);
    fs::create_dir_all(out_dir).map_err(|source| Error::Write {
        path: out_dir.display().to_string(),
        source,
    })?;

    let (dense, detections) = build_detections(seq, &config.detection)?;
    let artifacts = PipelineArtifacts {
        detections_csv: out_dir.join("detections.csv"),
        trajectories_csv: out_dir.join("trajectories.csv"),
        selection_json: out_dir.join("selection.json"),
        signal_csv: out_dir.join("signal.csv"),
    };
    save_detections_csv(&detections, &artifacts.detections_csv)?;

    let trajectories = solve_tracking(&detections, &config.tracking)?;
    save_trajectories_csv(&trajectories, &artifacts.trajectories_csv)?;

    let arr = config.workspace.build()?;
    let grid = config
        .transform_grid
        .build(dense.extent(), &arr, dense.pitch())?;
    let selection = search_transforms(&trajectories, &arr, &grid)?;
    save_selection_json(&selection, &artifacts.selection_json)?;

    let signal = render(&selection, &trajectories, &dense, &arr, &config.render)?;
    save_signal_csv(&signal, &artifacts.signal_csv)?;

    if stage_dump {
        fs::write(out_dir.join("effective_config.json"), config.to_json()).map_err(|source| {
            Error::Write {
                path: out_dir.join("effective_config.json").display().to_string(),
                source,
            }
        })?;
    }

    Ok(PipelineSummary {
        frames: seq.len(),
        detections: detections.len(),
        trajectories: trajectories.len(),
        chosen: selection.chosen.len(),
        transform_mm: (
            selection.transform.translation.x,
            selection.transform.translation.y,
        ),
        total_score: selection.total_score,
        signal_samples: signal.len(),
        artifacts,
    })
}
