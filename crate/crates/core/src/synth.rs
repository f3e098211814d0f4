//! Seeded synthetic touch fixtures: stroke, tap, squeeze, hold.
//!
//! Fixtures are Gaussian pressure bumps evaluated at cell centers plus a
//! small uniform noise floor. The noise matters: a perfectly flat background
//! is one giant local-maxima plateau, which floods the tracker with tied
//! detections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, SensorLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Bump translating at constant velocity along the column axis.
    Stroke,
    /// Brief stationary bump.
    Tap,
    /// Two simultaneous bumps on opposite columns.
    Squeeze,
    /// Sustained stationary bump.
    Hold,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SynthKind> {
        match s {
            "stroke" => Ok(SynthKind::Stroke),
            "tap" => Ok(SynthKind::Tap),
            "squeeze" => Ok(SynthKind::Squeeze),
            "hold" => Ok(SynthKind::Hold),
            other => Err(Error::Config(format!(
                "unknown fixture kind '{other}' (use stroke, tap, squeeze, hold)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub sample_rate: f64,
    pub cell_pitch: f64,
    /// Peak pressure, psi.
    pub amplitude: f64,
    /// Bump width in cells.
    pub sigma_cells: f64,
    /// Uniform noise floor amplitude, psi.
    pub noise: f64,
    /// Bump center at t = 0, in cell coordinates (fractional allowed; kept
    /// off half-cell symmetry lines so the apex never ties).
    pub start_row: f64,
    pub start_col: f64,
    /// Stroke speed, cells per frame.
    pub velocity: f64,
    /// Active frames for tap (hold and the others run the full length).
    pub duration: usize,
    /// Column separation of the squeeze bump pair, cells.
    pub separation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rows: 8,
            cols: 12,
            frames: 40,
            sample_rate: 20.0,
            cell_pitch: 25.4,
            amplitude: 2.0,
            sigma_cells: 0.8,
            noise: 0.01,
            start_row: 2.3,
            start_col: 1.5,
            // 0.13 cells/frame keeps a 40-frame stroke inside the 2x4
            // array's 148 mm coverage; anything longer can never satisfy
            // the one-workspace-per-timestep constraint in full.
            velocity: 0.13,
            duration: 2,
            separation: 3.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.frames == 0 {
            return Err(Error::Config("fixture needs rows, cols, frames > 0".into()));
        }
        if !(self.amplitude > 0.0) || !(self.sigma_cells > 0.0) {
            return Err(Error::Config(
                "fixture amplitude and sigma must be positive".into(),
            ));
        }
        if self.noise < 0.0 {
            return Err(Error::Config(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if !(self.sample_rate > 0.0) || !(self.cell_pitch > 0.0) {
            return Err(Error::Config(
                "sample rate and pitch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic fixture generation: the same kind, params, and seed always
/// produce identical sequences.
pub fn synthesize(kind: SynthKind, params: &SynthParams, seed: u64) -> Result<FrameSequence> {
    params.validate()?;
    let layout = SensorLayout::grid(params.rows, params.cols, params.cell_pitch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // (row, col) bump centers active in a given frame, in cell coordinates.
    let centers = |t: usize| -> Vec<(f64, f64)> {
        match kind {
            SynthKind::Stroke => vec![(
                params.start_row,
                params.start_col + params.velocity * t as f64,
            )],
            SynthKind::Tap => {
                if t < params.duration {
                    vec![(params.start_row, params.start_col)]
                } else {
                    vec![]
                }
            }
            SynthKind::Hold => vec![(params.start_row, params.start_col)],
            SynthKind::Squeeze => {
                let mid = (params.cols as f64 - 1.0) / 2.0;
                vec![
                    (params.start_row, mid - params.separation / 2.0),
                    (params.start_row, mid + params.separation / 2.0),
                ]
            }
        }
    };

    let two_sigma_sq = 2.0 * params.sigma_cells * params.sigma_cells;
    let mut frames = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        let active = centers(t);
        let mut values = Vec::with_capacity(params.rows * params.cols);
        for r in 0..params.rows {
            for c in 0..params.cols {
                let mut v = 0.0;
                for &(br, bc) in &active {
                    let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                    v += params.amplitude * (-d2 / two_sigma_sq).exp();
                }
                if params.noise > 0.0 {
                    v += rng.random_range(0.0..params.noise);
                }
                values.push(v);
            }
        }
        frames.push(Frame::new(t, values));
    }
    FrameSequence::new(layout, frames, params.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::sequence_to_csv;

    #[test]
    fn stroke_apex_advances_one_cell_per_frame() {
        let params = SynthParams {
            velocity: 1.0,
            frames: 10,
            start_col: 1.0,
            noise: 0.0,
            ..Default::default()
        };
        let seq = synthesize(SynthKind::Stroke, &params, 0).unwrap();
        for t in 0..10 {
            let mut best = (0usize, 0usize, f64::NEG_INFINITY);
            for r in 0..8 {
                for c in 0..12 {
                    let v = seq.value(t, r, c).unwrap();
                    if v > best.2 {
                        best = (r, c, v);
                    }
                }
            }
            assert_eq!(
                best.1,
                (1 + t).min(11),
                "frame {t} apex at column {}",
                best.1
            );
            assert_eq!(best.0, 2);
        }
    }

    #[test]
    fn same_seed_identical_files() {
        let params = SynthParams::default();
        let a = synthesize(SynthKind::Stroke, &params, 42).unwrap();
        let b = synthesize(SynthKind::Stroke, &params, 42).unwrap();
        assert_eq!(sequence_to_csv(&a), sequence_to_csv(&b));
        let c = synthesize(SynthKind::Stroke, &params, 43).unwrap();
        assert_ne!(sequence_to_csv(&a), sequence_to_csv(&c));
    }

    #[test]
    fn tap_active_exactly_duration_frames() {
        let params = SynthParams {
            duration: 2,
            frames: 6,
            noise: 0.0,
            ..Default::default()
        };
        let seq = synthesize(SynthKind::Tap, &params, 0).unwrap();
        for t in 0..6 {
            let any_nonzero = seq.frames()[t].values.iter().any(|&v| v > 1e-9);
            assert_eq!(any_nonzero, t < 2, "frame {t}");
        }
    }

    #[test]
    fn squeeze_has_two_separated_bumps() {
        let params = SynthParams {
            noise: 0.0,
            ..Default::default()
        };
        let seq = synthesize(SynthKind::Squeeze, &params, 0).unwrap();
        // Mirrored about the grid center: columns 4 and 7 for 12 columns,
        // separation 3.
        let left = seq.value(0, 2, 4).unwrap();
        let right = seq.value(0, 2, 7).unwrap();
        assert!(left > 1.0 && right > 1.0);
        // The inter-bump valley dips below the peaks.
        let mid = seq.value(0, 2, 5).unwrap().min(seq.value(0, 2, 6).unwrap());
        assert!(mid < left * 0.6, "valley {mid} vs peak {left}");
    }

    #[test]
    fn hold_is_sustained() {
        let params = SynthParams {
            frames: 15,
            noise: 0.0,
            ..Default::default()
        };
        let seq = synthesize(SynthKind::Hold, &params, 0).unwrap();
        for t in 0..15 {
            assert!(seq.frames()[t].values.iter().any(|&v| v > 1.0));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let params = SynthParams {
            frames: 0,
            ..Default::default()
        };
        assert!(synthesize(SynthKind::Tap, &params, 0).is_err());
    }
}
