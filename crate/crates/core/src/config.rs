//! Pipeline configuration. Defaults reproduce the published processing
//! chain, so an empty config file runs the reference parameters. Unknown
//! keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::DetectionParams;
use crate::render::RenderParams;
use crate::tracking::TrackingParams;
use crate::workspace::{TransformGrid, WorkspaceArray};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub rows: usize,
    pub cols: usize,
    pub row_pitch_mm: f64,
    pub col_pitch_mm: f64,
    pub radius_mm: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            rows: 2,
            cols: 4,
            row_pitch_mm: 50.0,
            col_pitch_mm: 37.0,
            radius_mm: 18.5,
        }
    }
}

impl WorkspaceConfig {
    pub fn build(&self) -> Result<WorkspaceArray> {
        WorkspaceArray::grid(
            self.rows,
            self.cols,
            self.row_pitch_mm,
            self.col_pitch_mm,
            self.radius_mm,
        )
    }
}

/// Translation search grid. Unset bounds derive from the frame extent so
/// that every placement keeps the array in reach of the sensor; an unset
/// step defaults to the upsampled pixel pitch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub step_mm: Option<f64>,
    pub tx_mm: Option<[f64; 2]>,
    pub ty_mm: Option<[f64; 2]>,
}

impl GridConfig {
    pub fn build(
        &self,
        extent: (f64, f64),
        arr: &WorkspaceArray,
        pixel_pitch: f64,
    ) -> Result<TransformGrid> {
        let step = self.step_mm.unwrap_or(pixel_pitch);
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!(
                "grid step must be positive, got {step}"
            )));
        }
        let full = TransformGrid::covering(extent, arr, step)?;
        let clip = |axis: &[f64], bounds: Option<[f64; 2]>| -> Result<Vec<f64>> {
            match bounds {
                None => Ok(axis.to_vec()),
                Some([lo, hi]) => {
                    if !(hi >= lo) {
                        return Err(Error::Config(format!(
                            "grid bounds [{lo}, {hi}] are inverted"
                        )));
                    }
                    let count = ((hi - lo) / step).floor() as usize + 1;
                    Ok((0..count).map(|k| lo + k as f64 * step).collect())
                }
            }
        };
        Ok(TransformGrid::explicit(
            clip(&full.xs, self.tx_mm)?,
            clip(&full.ys, self.ty_mm)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input sequence path; csv or json by extension.
    pub input: Option<String>,
    pub out_dir: String,
    /// Seed for synthetic fixtures generated through the CLI.
    pub seed: u64,
    pub detection: DetectionParams,
    pub tracking: TrackingParams,
    pub workspace: WorkspaceConfig,
    pub transform_grid: GridConfig,
    pub render: RenderParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            out_dir: "out".into(),
            seed: 0,
            detection: DetectionParams::default(),
            tracking: TrackingParams::default(),
            workspace: WorkspaceConfig::default(),
            transform_grid: GridConfig::default(),
            render: RenderParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Validation that needs no input file; rate-dependent checks run again
    /// once the input header is known.
    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        self.tracking.validate()?;
        self.workspace.build()?;
        // Against the output rate; the input rate is rechecked at load time.
        self.render.validate(f64::INFINITY)?;
        Ok(())
    }

    pub fn from_json(text: &str, path: &str) -> Result<PipelineConfig> {
        let config: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{path}:{}: {e}", e.line())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            Error::Config(format!("cannot read config {}: {source}", path.display()))
        })?;
        PipelineConfig::from_json(&text, &path.display().to_string())
    }

    /// Defaults-resolved form; re-running with this exact file reproduces
    /// the artifacts.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_paper_defaults() {
        let c = PipelineConfig::from_json("{}", "mem").unwrap();
        assert_eq!(c.detection.sigma_k, 1.25);
        assert_eq!(c.detection.m, 0.98);
        assert_eq!(c.detection.blur_sigma, 3.0);
        assert_eq!(c.detection.upsample, 7);
        assert_eq!(c.tracking.k_d, 50.0);
        assert_eq!(c.tracking.entry_cost, 8.0);
        assert_eq!(c.render.cutoff, 4.0);
        assert_eq!(c.render.order, 5);
        assert_eq!(c.render.spike_fraction, 0.125);
        assert_eq!(c.workspace.rows, 2);
        assert_eq!(c.workspace.cols, 4);
        assert_eq!(c.workspace.col_pitch_mm, 37.0);
        assert_eq!(c.workspace.row_pitch_mm, 50.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json(r#"{"detektion": {}}"#, "mem").is_err());
        assert!(PipelineConfig::from_json(r#"{"detection": {"sgima_k": 1.0}}"#, "mem").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        assert!(PipelineConfig::from_json(r#"{"detection": {"m": 1.5}}"#, "mem").is_err());
        assert!(PipelineConfig::from_json(r#"{"tracking": {"k_d": -3.0}}"#, "mem").is_err());
        assert!(
            PipelineConfig::from_json(r#"{"render": {"cutoff": 12.0}}"#, "mem").is_err(),
            "cutoff beyond the output Nyquist must fail upfront"
        );
    }

    #[test]
    fn json_round_trip_is_stable() {
        let c = PipelineConfig::default();
        let json = c.to_json();
        let reparsed = PipelineConfig::from_json(&json, "mem").unwrap();
        assert_eq!(reparsed, c);
        assert_eq!(reparsed.to_json(), json);
    }

    #[test]
    fn grid_config_bounds_clip() {
        let arr = WorkspaceArray::standard();
        let gc = GridConfig {
            step_mm: Some(10.0),
            tx_mm: Some([0.0, 30.0]),
            ty_mm: Some([5.0, 5.0]),
        };
        let grid = gc.build((300.0, 200.0), &arr, 3.62).unwrap();
        assert_eq!(grid.xs, vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(grid.ys, vec![5.0]);
    }
}
