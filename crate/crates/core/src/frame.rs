//! Pressure-frame sequences over non-rectangular sensor layouts.
//!
//! A layout is a list of rectangular segments placed side by side (the two
//! physical sleeves differ, so layouts are declared in the file header rather
//! than inferred). Masked cells are entirely absent from frame data; they are
//! never zero-filled, which would otherwise create phantom detections at the
//! sleeve boundary.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

pub const DEFAULT_CELL_PITCH_MM: f64 = 25.4;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 20.0;

/// One rectangular patch of sensor cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Sensor geometry: segments placed left to right, top-aligned, on a common
/// bounding rectangle. Cell (r, c) has its center at
/// ((c + 0.5) * pitch, (r + 0.5) * pitch) in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    segments: Vec<Segment>,
    cell_pitch: f64,
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    /// Row-major list of valid cells; frame values follow this order.
    valid: Vec<(usize, usize)>,
    /// (r, c) -> slot in `valid`.
    slots: Vec<Option<usize>>,
}

impl SensorLayout {
    pub fn new(segments: Vec<Segment>, cell_pitch: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("layout has no segments".into()));
        }
        if !(cell_pitch > 0.0) || !cell_pitch.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cell pitch must be positive, got {cell_pitch}"
            )));
        }
        for seg in &segments {
            if seg.rows == 0 || seg.cols == 0 {
                return Err(Error::InvalidInput(format!(
                    "segment {} has empty dimension {}x{}",
                    seg.name, seg.rows, seg.cols
                )));
            }
        }
        let rows = segments.iter().map(|s| s.rows).max().unwrap();
        let cols = segments.iter().map(|s| s.cols).sum();
        let mut mask = vec![false; rows * cols];
        let mut col0 = 0;
        for seg in &segments {
            for r in 0..seg.rows {
                for c in 0..seg.cols {
                    mask[r * cols + col0 + c] = true;
                }
            }
            col0 += seg.cols;
        }
        let mut valid = Vec::new();
        let mut slots = vec![None; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                if mask[r * cols + c] {
                    slots[r * cols + c] = Some(valid.len());
                    valid.push((r, c));
                }
            }
        }
        debug_assert_eq!(
            valid.len(),
            segments.iter().map(|s| s.rows * s.cols).sum::<usize>()
        );
        Ok(SensorLayout {
            segments,
            cell_pitch,
            rows,
            cols,
            mask,
            valid,
            slots,
        })
    }

    /// Single full rectangle, the shape used by synthetic fixtures.
    pub fn grid(rows: usize, cols: usize, cell_pitch: f64) -> Result<Self> {
        SensorLayout::new(
            vec![Segment {
                name: "grid".into(),
                rows,
                cols,
            }],
            cell_pitch,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn cell_pitch(&self) -> f64 {
        self.cell_pitch
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.mask[row * self.cols + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.len()
    }

    /// Valid cells in row-major order; frame values are stored in this order.
    pub fn valid_cells(&self) -> &[(usize, usize)] {
        &self.valid
    }

    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.slots[row * self.cols + col]
        } else {
            None
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            (col as f64 + 0.5) * self.cell_pitch,
            (row as f64 + 0.5) * self.cell_pitch,
        )
    }
}

/// One time step of pressure readings, in psi, one value per valid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time_index: usize,
    pub values: Vec<f64>,
}

impl Frame {
    pub fn new(time_index: usize, values: Vec<f64>) -> Self {
        Frame { time_index, values }
    }
}

/// A validated, immutable recording: layout, ordered frames, sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    layout: SensorLayout,
    frames: Vec<Frame>,
    sample_rate: f64,
}

/// A single invariant violation found in sequence data.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonConsecutiveTime {
        position: usize,
        found: usize,
    },
    BadSampleRate {
        rate: f64,
    },
    WrongCellCount {
        time_index: usize,
        expected: usize,
        found: usize,
    },
    NonFiniteValue {
        time_index: usize,
        row: usize,
        col: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonConsecutiveTime { position, found } => {
                write!(
                    f,
                    "non-consecutive time index {found} at position {position}"
                )
            }
            Violation::BadSampleRate { rate } => write!(f, "sample rate {rate} not positive"),
            Violation::WrongCellCount {
                time_index,
                expected,
                found,
            } => write!(
                f,
                "frame {time_index} has {found} values, layout declares {expected}"
            ),
            Violation::NonFiniteValue {
                time_index,
                row,
                col,
            } => {
                write!(
                    f,
                    "non-finite value in frame {time_index} at cell ({row}, {col})"
                )
            }
        }
    }
}

impl FrameSequence {
    pub fn new(layout: SensorLayout, frames: Vec<Frame>, sample_rate: f64) -> Result<Self> {
        let seq = FrameSequence {
            layout,
            frames,
            sample_rate,
        };
        match seq.validate().into_iter().next() {
            None => Ok(seq),
            Some(v) => Err(match v {
                Violation::NonFiniteValue { .. } => Error::NonFinite(v.to_string()),
                _ => Error::InvalidInput(v.to_string()),
            }),
        }
    }

    /// Builds without checking. Lets callers assemble deliberately broken
    /// data to feed `validate`.
    pub fn from_parts_unchecked(
        layout: SensorLayout,
        frames: Vec<Frame>,
        sample_rate: f64,
    ) -> Self {
        FrameSequence {
            layout,
            frames,
            sample_rate,
        }
    }

    /// Every invariant violation in this sequence, empty when it is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            out.push(Violation::BadSampleRate {
                rate: self.sample_rate,
            });
        }
        for (position, frame) in self.frames.iter().enumerate() {
            if frame.time_index != position {
                out.push(Violation::NonConsecutiveTime {
                    position,
                    found: frame.time_index,
                });
            }
            if frame.values.len() != self.layout.valid_count() {
                out.push(Violation::WrongCellCount {
                    time_index: frame.time_index,
                    expected: self.layout.valid_count(),
                    found: frame.values.len(),
                });
                continue;
            }
            for (slot, v) in frame.values.iter().enumerate() {
                if !v.is_finite() {
                    let (row, col) = self.layout.valid_cells()[slot];
                    out.push(Violation::NonFiniteValue {
                        time_index: frame.time_index,
                        row,
                        col,
                    });
                }
            }
        }
        out
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn value(&self, frame: usize, row: usize, col: usize) -> Option<f64> {
        let slot = self.layout.slot(row, col)?;
        self.frames.get(frame).map(|f| f.values[slot])
    }

    /// Mean and population standard deviation over every valid-cell value in
    /// every frame.
    pub fn stats(&self) -> Result<SequenceStats> {
        let values = self.frames.iter().flat_map(|f| f.values.iter().copied());
        SequenceStats::from_values(values)
    }
}

/// Global first and second moments of a value population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub mean: f64,
    pub stdev: f64,
    pub count: usize,
}

impl SequenceStats {
    /// Welford's streaming moments; population (not sample) variance, since
    /// the pixel values are the full population being thresholded.
    pub fn from_values(values: impl Iterator<Item = f64>) -> Result<SequenceStats> {
        let mut count = 0usize;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for v in values {
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
        if count == 0 {
            return Err(Error::Degenerate("empty value population".into()));
        }
        Ok(SequenceStats {
            mean,
            stdev: (m2 / count as f64).max(0.0).sqrt(),
            count,
        })
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFormat {
    Csv,
    Json,
}

impl SequenceFormat {
    pub fn from_path(path: &Path) -> SequenceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => SequenceFormat::Json,
            _ => SequenceFormat::Csv,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutJson {
    segments: Vec<Segment>,
    pitch_mm: f64,
    rate_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameJson {
    t: usize,
    cells: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SequenceJson {
    layout: LayoutJson,
    frames: Vec<FrameJson>,
}

pub fn load_sequence(path: &Path, format: SequenceFormat) -> Result<FrameSequence> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        SequenceFormat::Csv => parse_sequence_csv(&text, &path.display().to_string()),
        SequenceFormat::Json => parse_sequence_json(&text, &path.display().to_string()),
    }
}

pub fn save_sequence(seq: &FrameSequence, path: &Path, format: SequenceFormat) -> Result<()> {
    let text = match format {
        SequenceFormat::Csv => sequence_to_csv(seq),
        SequenceFormat::Json => sequence_to_json(seq),
    };
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Canonical CSV: `#layout <name> <rows> <cols>` per segment, `#pitch <mm>`,
/// `#rate <hz>`, then one `t,row,col,psi` row per frame and valid cell, frames
/// in time order and cells row-major.
pub fn sequence_to_csv(seq: &FrameSequence) -> String {
    let mut out = String::new();
    for seg in seq.layout().segments() {
        out.push_str(&format!("#layout {} {} {}\n", seg.name, seg.rows, seg.cols));
    }
    out.push_str(&format!("#pitch {}\n", seq.layout().cell_pitch()));
    out.push_str(&format!("#rate {}\n", seq.sample_rate()));
    for frame in seq.frames() {
        for (slot, &(r, c)) in seq.layout().valid_cells().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                frame.time_index, r, c, frame.values[slot]
            ));
        }
    }
    out
}

pub fn sequence_to_json(seq: &FrameSequence) -> String {
    let doc = SequenceJson {
        layout: LayoutJson {
            segments: seq.layout().segments().to_vec(),
            pitch_mm: seq.layout().cell_pitch(),
            rate_hz: seq.sample_rate(),
        },
        frames: seq
            .frames()
            .iter()
            .map(|f| FrameJson {
                t: f.time_index,
                cells: seq
                    .layout()
                    .valid_cells()
                    .iter()
                    .zip(&f.values)
                    .map(|(&(r, c), &v)| (r, c, v))
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("sequence serializes");
    text.push('\n');
    text
}

pub fn parse_sequence_json(text: &str, path: &str) -> Result<FrameSequence> {
    let doc: SequenceJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let layout = SensorLayout::new(doc.layout.segments, doc.layout.pitch_mm)?;
    let mut frames = Vec::with_capacity(doc.frames.len());
    for fj in doc.frames {
        let mut values = vec![f64::NAN; layout.valid_count()];
        let mut seen = vec![false; layout.valid_count()];
        for (r, c, v) in fj.cells {
            let slot = layout.slot(r, c).ok_or_else(|| {
                Error::LayoutMismatch(format!(
                    "frame {} has a value on masked cell ({r}, {c})",
                    fj.t
                ))
            })?;
            if seen[slot] {
                return Err(Error::InvalidInput(format!(
                    "frame {} lists cell ({r}, {c}) twice",
                    fj.t
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("frame {} cell ({r}, {c})", fj.t)));
            }
            seen[slot] = true;
            values[slot] = v;
        }
        if let Some(slot) = seen.iter().position(|s| !s) {
            let (r, c) = layout.valid_cells()[slot];
            return Err(Error::Parse {
                path: path.into(),
                line: 0,
                msg: format!("frame {} is missing cell ({r}, {c})", fj.t),
            });
        }
        frames.push(Frame::new(fj.t, values));
    }
    FrameSequence::new(layout, frames, doc.layout.rate_hz)
}

pub fn parse_sequence_csv(text: &str, path: &str) -> Result<FrameSequence> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };

    let mut segments = Vec::new();
    let mut pitch = DEFAULT_CELL_PITCH_MM;
    let mut rate = DEFAULT_SAMPLE_RATE_HZ;
    let mut records: Vec<(usize, usize, usize, f64, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            match fields.first().copied() {
                Some("layout") => {
                    if fields.len() != 4 {
                        return Err(err(
                            lineno,
                            "expected '#layout <name> <rows> <cols>'".into(),
                        ));
                    }
                    let rows = fields[2]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad row count '{}'", fields[2])))?;
                    let cols = fields[3]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad col count '{}'", fields[3])))?;
                    segments.push(Segment {
                        name: fields[1].to_string(),
                        rows,
                        cols,
                    });
                }
                Some("pitch") => {
                    if fields.len() != 2 {
                        return Err(err(lineno, "expected '#pitch <mm>'".into()));
                    }
                    pitch = fields[1]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad pitch '{}'", fields[1])))?;
                }
                Some("rate") => {
                    if fields.len() != 2 {
                        return Err(err(lineno, "expected '#rate <hz>'".into()));
                    }
                    rate = fields[1]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad rate '{}'", fields[1])))?;
                }
                _ => return Err(err(lineno, format!("unknown header line '{line}'"))),
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(
                lineno,
                format!("expected 't,row,col,psi', got '{line}'"),
            ));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad time index '{}'", fields[0])))?;
        let row: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad row '{}'", fields[1])))?;
        let col: usize = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad col '{}'", fields[2])))?;
        let psi: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad pressure '{}'", fields[3])))?;
        records.push((t, row, col, psi, lineno));
    }

    if segments.is_empty() {
        return Err(err(0, "missing '#layout' header".into()));
    }
    let layout = SensorLayout::new(segments, pitch)?;

    let frame_count = records.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut frames: Vec<Frame> = (0..frame_count)
        .map(|t| Frame::new(t, vec![f64::NAN; layout.valid_count()]))
        .collect();
    let mut seen = vec![vec![false; layout.valid_count()]; frame_count];
    for (t, row, col, psi, lineno) in records {
        let slot = layout.slot(row, col).ok_or_else(|| {
            Error::LayoutMismatch(format!(
                "{path}:{lineno}: value on masked cell ({row}, {col})"
            ))
        })?;
        if seen[t][slot] {
            return Err(err(
                lineno,
                format!("duplicate cell ({row}, {col}) in frame {t}"),
            ));
        }
        if !psi.is_finite() {
            return Err(Error::NonFinite(format!(
                "{path}:{lineno}: frame {t} cell ({row}, {col})"
            )));
        }
        seen[t][slot] = true;
        frames[t].values[slot] = psi;
    }
    for (t, frame_seen) in seen.iter().enumerate() {
        if let Some(slot) = frame_seen.iter().position(|s| !s) {
            let (r, c) = layout.valid_cells()[slot];
            return Err(err(0, format!("frame {t} is missing cell ({r}, {c})")));
        }
    }

    FrameSequence::new(layout, frames, rate)
}
