//! Actuator command synthesis: trajectory intensity assignment with row-wise
//! neighbor fill, spike-triplet removal, lowpass filtering, and scaling onto
//! the unit command interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::preprocess::DenseSequence;
use crate::tracking::Trajectory;
use crate::workspace::{SelectionResult, WorkspaceArray};

/// Full-scale sensor range in psi.
pub const SENSOR_RANGE_PSI: (f64, f64) = (0.0, 2.96);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Lowpass cutoff, Hz.
    pub cutoff: f64,
    /// Butterworth order.
    pub order: usize,
    /// Spike threshold as a fraction of the channel's own range.
    pub spike_fraction: f64,
    /// Output sample rate, Hz; linear resampling applies when it differs
    /// from the sensor rate.
    pub output_rate: f64,
    /// psi interval mapped onto [0, 1]; `None` normalizes per recording.
    pub scale_psi: Option<[f64; 2]>,
    /// Reserved: forward-backward filtering is not implemented, only causal.
    pub zero_phase: bool,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            cutoff: 4.0,
            order: 5,
            spike_fraction: 0.125,
            output_rate: 20.0,
            scale_psi: Some([SENSOR_RANGE_PSI.0, SENSOR_RANGE_PSI.1]),
            zero_phase: false,
        }
    }
}

impl RenderParams {
    pub fn validate(&self, input_rate: f64) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Config(format!(
                "filter order must be >= 1, got {}",
                self.order
            )));
        }
        if !(self.spike_fraction > 0.0 && self.spike_fraction < 1.0) {
            return Err(Error::Config(format!(
                "spike_fraction must be in (0, 1), got {}",
                self.spike_fraction
            )));
        }
        if !(self.output_rate > 0.0) || !self.output_rate.is_finite() {
            return Err(Error::Config(format!(
                "output_rate must be positive, got {}",
                self.output_rate
            )));
        }
        if !(self.cutoff > 0.0 && self.cutoff < input_rate / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {} Hz must lie in (0, {}) for {input_rate} Hz input",
                self.cutoff,
                input_rate / 2.0
            )));
        }
        if self.cutoff >= self.output_rate / 2.0 {
            return Err(Error::Config(format!(
                "cutoff {} Hz would alias at output rate {} Hz",
                self.cutoff, self.output_rate
            )));
        }
        if let Some([lo, hi]) = self.scale_psi {
            if !(hi > lo) {
                return Err(Error::Config(format!(
                    "degenerate scale range [{lo}, {hi}]"
                )));
            }
        }
        if self.zero_phase {
            return Err(Error::Config(
                "zero_phase filtering is reserved and not implemented; use false".into(),
            ));
        }
        Ok(())
    }
}

/// Per-actuator commanded intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorSignal {
    pub rows: usize,
    pub cols: usize,
    pub sample_rate: f64,
    /// Row-major: channel (r, c) at index r * cols + c; equal lengths.
    pub channels: Vec<Vec<f64>>,
    pub source_pressure_range: (f64, f64),
}

impl ActuatorSignal {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, row: usize, col: usize) -> Option<&[f64]> {
        if row < self.rows && col < self.cols {
            self.channels
                .get(row * self.cols + col)
                .map(|c| c.as_slice())
        } else {
            None
        }
    }
}

/// Raw per-actuator psi series. At each frame, an actuator assigned a
/// trajectory point renders that point's value; each row-wise neighbor of a
/// rendering actuator that is not itself rendering shows the maximum blurred
/// intensity inside its own transformed workspace; everything else is zero.
pub fn assemble(
    selection: &SelectionResult,
    trajs: &[Trajectory],
    dense: &DenseSequence,
    arr: &WorkspaceArray,
) -> Result<Vec<Vec<f64>>> {
    let n_frames = dense.len();
    let n_channels = arr.rows() * arr.cols();
    let mut channels = vec![vec![0.0; n_frames]; n_channels];

    let traj_by_id = |id: usize| trajs.iter().find(|t| t.id == id);

    // (t, channel) -> trajectory value.
    let mut rendering: Vec<Vec<Option<f64>>> = vec![vec![None; n_channels]; n_frames];
    for a in &selection.assignments {
        let traj = traj_by_id(a.traj_id).ok_or_else(|| {
            Error::InvalidInput(format!(
                "assignment references unknown trajectory {}",
                a.traj_id
            ))
        })?;
        let det = traj.at(a.t).ok_or_else(|| {
            Error::InvalidInput(format!(
                "assignment references trajectory {} at t = {}, outside its span",
                a.traj_id, a.t
            ))
        })?;
        if a.t >= n_frames {
            return Err(Error::InvalidInput(format!(
                "assignment at t = {} beyond the {n_frames}-frame sequence",
                a.t
            )));
        }
        let ch = a.row * arr.cols() + a.col;
        if a.row >= arr.rows() || a.col >= arr.cols() {
            return Err(Error::InvalidInput(format!(
                "assignment targets workspace ({}, {}) outside the array",
                a.row, a.col
            )));
        }
        rendering[a.t][ch] = Some(det.value);
    }

    for t in 0..n_frames {
        for ch in 0..n_channels {
            if let Some(v) = rendering[t][ch] {
                channels[ch][t] = v;
            }
        }
        // Neighbor fill after direct assignments: left/right within the row.
        for ch in 0..n_channels {
            if rendering[t][ch].is_none() {
                continue;
            }
            let (r, c) = (ch / arr.cols(), ch % arr.cols());
            for nc in [c.wrapping_sub(1), c + 1] {
                if nc >= arr.cols() {
                    continue;
                }
                let nch = r * arr.cols() + nc;
                if rendering[t][nch].is_some() {
                    continue;
                }
                let ws = arr.get(r, nc).expect("index in range");
                let center = selection.transform.apply(&ws.center);
                channels[nch][t] = dense
                    .max_in_circle(t, center, ws.radius)
                    .unwrap_or(0.0)
                    .max(channels[nch][t]);
            }
        }
    }
    Ok(channels)
}

/// Removes isolated spike triplets in a single left-to-right pass: an
/// interior point that rises from its left neighbor and drops to its right
/// neighbor by at least `fraction` of the series range (computed on the
/// input) is replaced by the mean of those neighbors. Comparisons always use
/// the original input values.
pub fn despike(series: &[f64], fraction: f64) -> Result<Vec<f64>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "spike fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut out = series.to_vec();
    if series.len() < 3 {
        return Ok(out);
    }
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = fraction * (max - min);
    for i in 1..series.len() - 1 {
        if series[i] - series[i - 1] >= threshold && series[i] - series[i + 1] >= threshold {
            out[i] = (series[i - 1] + series[i + 1]) / 2.0;
        }
    }
    Ok(out)
}

/// Linear map [min, max] -> [0, 1], clamped.
pub fn scale_output(series: &[f64], pressure_range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = pressure_range;
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "degenerate pressure range [{lo}, {hi}]"
        )));
    }
    Ok(series
        .iter()
        .map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect())
}

fn resample_linear(series: &[f64], from_rate: f64, to_rate: f64) -> Vec<f64> {
    if series.is_empty() || (from_rate - to_rate).abs() < 1e-12 {
        return series.to_vec();
    }
    let duration = (series.len() - 1) as f64 / from_rate;
    let out_len = (duration * to_rate).floor() as usize + 1;
    (0..out_len)
        .map(|k| {
            let pos = (k as f64 / to_rate) * from_rate;
            let i0 = (pos.floor() as usize).min(series.len() - 1);
            let i1 = (i0 + 1).min(series.len() - 1);
            let frac = pos - i0 as f64;
            series[i0] * (1.0 - frac) + series[i1] * frac
        })
        .collect()
}

/// Full chain per channel: assemble, despike against the channel's own
/// range, Butterworth lowpass, scale to [0, 1], then optional resampling.
pub fn render(
    selection: &SelectionResult,
    trajs: &[Trajectory],
    dense: &DenseSequence,
    arr: &WorkspaceArray,
    params: &RenderParams,
) -> Result<ActuatorSignal> {
    let rate = dense.sample_rate();
    params.validate(rate)?;
    let raw = assemble(selection, trajs, dense, arr)?;

    let range = match params.scale_psi {
        Some([lo, hi]) => (lo, hi),
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for ch in &raw {
                for &v in ch {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !(hi > lo) {
                // A silent recording normalizes against the sensor range.
                SENSOR_RANGE_PSI
            } else {
                (lo, hi)
            }
        }
    };

    let sections = filter::design_lowpass(rate, params.cutoff, params.order)?;
    let channels: Result<Vec<Vec<f64>>> = raw
        .par_iter()
        .map(|series| {
            let cleaned = despike(series, params.spike_fraction)?;
            let filtered = filter::filter_forward(&sections, &cleaned);
            let scaled = scale_output(&filtered, range)?;
            Ok(resample_linear(&scaled, rate, params.output_rate))
        })
        .collect();

    Ok(ActuatorSignal {
        rows: arr.rows(),
        cols: arr.cols(),
        sample_rate: params.output_rate,
        channels: channels?,
        source_pressure_range: range,
    })
}

// ---------------------------------------------------------------------------
// Signal CSV
// ---------------------------------------------------------------------------

/// Header `# rows=R cols=C rate=<hz> range=<min>,<max>`, a column-name line,
/// then one row per sample with the channel values at 9 significant digits.
pub fn signal_to_csv(sig: &ActuatorSignal) -> String {
    let mut out = format!(
        "# rows={} cols={} rate={} range={},{}\n",
        sig.rows,
        sig.cols,
        sig.sample_rate,
        sig.source_pressure_range.0,
        sig.source_pressure_range.1
    );
    out.push('t');
    for r in 0..sig.rows {
        for c in 0..sig.cols {
            out.push_str(&format!(",ch_{r}_{c}"));
        }
    }
    out.push('\n');
    for t in 0..sig.len() {
        out.push_str(&t.to_string());
        for ch in &sig.channels {
            out.push_str(&format!(",{:.8e}", ch[t]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_signal_csv(text: &str, path: &str) -> Result<ActuatorSignal> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(0, "empty signal file".into()))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| err(1, "missing '# rows=... cols=...' header".into()))?;
    let mut rows = 0usize;
    let mut cols = 0usize;
    let mut rate = 0.0f64;
    let mut range = (0.0f64, 0.0f64);
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(1, format!("bad header field '{field}'")))?;
        match key {
            "rows" => {
                rows = value
                    .parse()
                    .map_err(|_| err(1, format!("bad rows '{value}'")))?
            }
            "cols" => {
                cols = value
                    .parse()
                    .map_err(|_| err(1, format!("bad cols '{value}'")))?
            }
            "rate" => {
                rate = value
                    .parse()
                    .map_err(|_| err(1, format!("bad rate '{value}'")))?
            }
            "range" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| err(1, format!("bad range '{value}'")))?;
                range = (
                    lo.parse()
                        .map_err(|_| err(1, format!("bad range min '{lo}'")))?,
                    hi.parse()
                        .map_err(|_| err(1, format!("bad range max '{hi}'")))?,
                );
            }
            _ => return Err(err(1, format!("unknown header key '{key}'"))),
        }
    }
    if rows == 0 || cols == 0 {
        return Err(err(1, "header must declare rows and cols".into()));
    }
    let mut channels = vec![Vec::new(); rows * cols];
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != rows * cols + 1 {
            return Err(err(
                lineno,
                format!("expected {} fields, got {}", rows * cols + 1, fields.len()),
            ));
        }
        for (ch, field) in fields[1..].iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad value '{field}'")))?;
            channels[ch].push(v);
        }
    }
    Ok(ActuatorSignal {
        rows,
        cols,
        sample_rate: rate,
        channels,
        source_pressure_range: range,
    })
}

pub fn save_signal_csv(sig: &ActuatorSignal, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, signal_to_csv(sig)).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_signal_csv(path: &std::path::Path) -> Result<ActuatorSignal> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_signal_csv(&text, &path.display().to_string())
}
