//! Detection front end: spatial upsampling, mask-aware Gaussian blur, local
//! maxima, and the pressure-to-probability map.
//!
//! The x7 upsample is spatial only; the temporal rate stays at the sensor's
//! 20 Hz. Sequence statistics feeding the probability map are taken over the
//! preprocessed (upsampled and blurred) pixels, since those are the values
//! the tracker sees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameSequence, SequenceStats};
use crate::geom::Point;

/// Knobs for the detection front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    /// z-score offset: a value this many standard deviations above the mean
    /// gets probability m/2.
    pub sigma_k: f64,
    /// Probability cap, strictly below one so log-odds stay finite.
    pub m: f64,
    /// Blur standard deviation in upsampled pixels.
    pub blur_sigma: f64,
    /// Spatial upsampling factor.
    pub upsample: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            sigma_k: 1.25,
            m: 0.98,
            blur_sigma: 3.0,
            upsample: 7,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(Error::Config(format!(
                "probability cap m must be in (0, 1), got {}",
                self.m
            )));
        }
        if !(self.blur_sigma > 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::Config(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if self.upsample < 1 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        if !self.sigma_k.is_finite() {
            return Err(Error::Config(format!(
                "sigma_k must be finite, got {}",
                self.sigma_k
            )));
        }
        Ok(())
    }
}

/// Metric extent (width, height) and pixel pitch of the upsampled grid for
/// a layout, without computing the grid itself.
pub fn dense_geometry(layout: &crate::frame::SensorLayout, factor: usize) -> ((f64, f64), f64) {
    let extent = (
        layout.cols() as f64 * layout.cell_pitch(),
        layout.rows() as f64 * layout.cell_pitch(),
    );
    (extent, layout.cell_pitch() / factor as f64)
}

/// Upsampled, pixel-gridded view of a frame sequence. Pixel (row, col) has
/// its center at ((col + 0.5) * pitch, (row + 0.5) * pitch) in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSequence {
    width: usize,
    height: usize,
    pitch: f64,
    sample_rate: f64,
    mask: Vec<bool>,
    frames: Vec<Vec<f64>>,
}

impl DenseSequence {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Millimeters per upsampled pixel.
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.mask[row * self.width + col]
    }

    pub fn value(&self, frame: usize, row: usize, col: usize) -> Option<f64> {
        if self.is_valid(row, col) {
            self.frames.get(frame).map(|f| f[row * self.width + col])
        } else {
            None
        }
    }

    pub fn frame_raw(&self, frame: usize) -> &[f64] {
        &self.frames[frame]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            (col as f64 + 0.5) * self.pitch,
            (row as f64 + 0.5) * self.pitch,
        )
    }

    /// Metric extent of the pixel grid (width, height) in millimeters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.pitch,
            self.height as f64 * self.pitch,
        )
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Moments over every valid pixel of every frame.
    pub fn stats(&self) -> Result<SequenceStats> {
        let mask = &self.mask;
        SequenceStats::from_values(self.frames.iter().flat_map(|f| {
            f.iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
        }))
    }

    /// Largest valid-pixel value inside a circle, if any valid pixel center
    /// falls within it (boundary inclusive).
    pub fn max_in_circle(&self, frame: usize, center: Point, radius: f64) -> Option<f64> {
        let vals = self.frames.get(frame)?;
        let mut best: Option<f64> = None;
        let r_sq = radius * radius;
        // Limit the scan to the circle's bounding box.
        let col_lo = (((center.x - radius) / self.pitch - 0.5).floor().max(0.0)) as usize;
        let col_hi = ((((center.x + radius) / self.pitch - 0.5).ceil()) as isize)
            .clamp(0, self.width as isize - 1) as usize;
        let row_lo = (((center.y - radius) / self.pitch - 0.5).floor().max(0.0)) as usize;
        let row_hi = ((((center.y + radius) / self.pitch - 0.5).ceil()) as isize)
            .clamp(0, self.height as isize - 1) as usize;
        for row in row_lo..=row_hi.min(self.height.saturating_sub(1)) {
            for col in col_lo..=col_hi {
                if !self.mask[row * self.width + col] {
                    continue;
                }
                if self.pixel_center(row, col).distance_sq(&center) <= r_sq {
                    let v = vals[row * self.width + col];
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        best
    }
}

/// Bilinear sample of one frame at fractional cell coordinates (gx along
/// columns, gy along rows; cell centers sit at integers). Coordinates beyond
/// the outer cell centers clamp to the nearest cell. Returns `None` when any
/// contributing cell is masked.
pub fn bilinear_sample(seq: &FrameSequence, frame: usize, gx: f64, gy: f64) -> Option<f64> {
    let layout = seq.layout();
    let cols = layout.cols() as isize;
    let rows = layout.rows() as isize;
    let c0 = gx.floor() as isize;
    let r0 = gy.floor() as isize;
    let fx = gx - gx.floor();
    let fy = gy - gy.floor();
    let cl = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;
    // (cell, weight) pairs; clamped duplicates just accumulate weight.
    let cells = [
        (cl(r0, rows), cl(c0, cols), (1.0 - fx) * (1.0 - fy)),
        (cl(r0, rows), cl(c0 + 1, cols), fx * (1.0 - fy)),
        (cl(r0 + 1, rows), cl(c0, cols), (1.0 - fx) * fy),
        (cl(r0 + 1, rows), cl(c0 + 1, cols), fx * fy),
    ];
    let mut acc = 0.0;
    for &(r, c, w) in &cells {
        if w > 0.0 {
            acc += w * seq.value(frame, r, c)?;
        }
    }
    Some(acc)
}

/// Bilinear spatial upsampling onto a `factor`-times-denser pixel grid.
/// An output pixel is valid iff every cell it interpolates from is valid.
pub fn upsample(seq: &FrameSequence, factor: usize) -> Result<DenseSequence> {
    if factor < 1 {
        return Err(Error::InvalidInput(format!(
            "upsample factor must be >= 1, got {factor}"
        )));
    }
    let layout = seq.layout();
    let width = layout.cols() * factor;
    let height = layout.rows() * factor;
    let pitch = layout.cell_pitch() / factor as f64;

    // Pixel (i, j) center maps to cell coordinates ((j + 0.5)/factor - 0.5,
    // (i + 0.5)/factor - 0.5); computed in cell units so factor 1 is exact.
    let gxs: Vec<f64> = (0..width)
        .map(|j| (j as f64 + 0.5) / factor as f64 - 0.5)
        .collect();
    let gys: Vec<f64> = (0..height)
        .map(|i| (i as f64 + 0.5) / factor as f64 - 0.5)
        .collect();

    let mut mask = vec![false; width * height];
    let probe_mask = |i: usize, j: usize| -> bool {
        // Validity does not depend on the frame; probe via frame 0 pattern.
        let cols = layout.cols() as isize;
        let rows = layout.rows() as isize;
        let gx = gxs[j];
        let gy = gys[i];
        let c0 = gx.floor() as isize;
        let r0 = gy.floor() as isize;
        let fx = gx - gx.floor();
        let fy = gy - gy.floor();
        let cl = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;
        let cells = [
            (cl(r0, rows), cl(c0, cols), (1.0 - fx) * (1.0 - fy)),
            (cl(r0, rows), cl(c0 + 1, cols), fx * (1.0 - fy)),
            (cl(r0 + 1, rows), cl(c0, cols), (1.0 - fx) * fy),
            (cl(r0 + 1, rows), cl(c0 + 1, cols), fx * fy),
        ];
        cells
            .iter()
            .all(|&(r, c, w)| w <= 0.0 || layout.is_valid(r, c))
    };
    for i in 0..height {
        for j in 0..width {
            mask[i * width + j] = probe_mask(i, j);
        }
    }

    let frames: Vec<Vec<f64>> = (0..seq.len())
        .into_par_iter()
        .map(|t| {
            let mut out = vec![0.0; width * height];
            for i in 0..height {
                for j in 0..width {
                    if mask[i * width + j] {
                        out[i * width + j] = bilinear_sample(seq, t, gxs[j], gys[i])
                            .expect("masked pixels already excluded");
                    }
                }
            }
            out
        })
        .collect();

    Ok(DenseSequence {
        width,
        height,
        pitch,
        sample_rate: seq.sample_rate(),
        mask,
        frames,
    })
}

/// Mask-aware Gaussian blur: the truncated kernel (square window of radius
/// ceil(3 sigma)) is renormalized over the valid pixels under it, so constant
/// regions pass through unchanged and masked pixels contribute nothing.
pub fn gaussian_blur(dense: &DenseSequence, sigma: f64) -> Result<DenseSequence> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let w1d: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let width = dense.width as isize;
    let height = dense.height as isize;
    let mask = &dense.mask;

    let frames: Vec<Vec<f64>> = dense
        .frames
        .par_iter()
        .map(|vals| {
            let mut out = vec![0.0; vals.len()];
            for i in 0..height {
                for j in 0..width {
                    let p = (i * width + j) as usize;
                    if !mask[p] {
                        continue;
                    }
                    let mut num = 0.0;
                    let mut den = 0.0;
                    let r_lo = (-radius).max(-i);
                    let r_hi = radius.min(height - 1 - i);
                    for di in r_lo..=r_hi {
                        let wy = w1d[(di + radius) as usize];
                        let base = ((i + di) * width) as usize;
                        let c_lo = (-radius).max(-j);
                        let c_hi = radius.min(width - 1 - j);
                        for dj in c_lo..=c_hi {
                            let q = base + (j + dj) as usize;
                            if mask[q] {
                                let w = wy * w1d[(dj + radius) as usize];
                                num += w * vals[q];
                                den += w;
                            }
                        }
                    }
                    out[p] = num / den; // den > 0: the pixel itself is valid
                }
            }
            out
        })
        .collect();

    Ok(DenseSequence {
        width: dense.width,
        height: dense.height,
        pitch: dense.pitch,
        sample_rate: dense.sample_rate,
        mask: dense.mask.clone(),
        frames,
    })
}

// ---------------------------------------------------------------------------
// Standard normal CDF
// ---------------------------------------------------------------------------

// Rational approximations for erf/erfc after W. J. Cody (SPECFUN), accurate
// to a few ulps; the downstream log-odds amplify CDF error, so the cheap
// series approximations are not enough here.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERFC_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERFC_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERFC_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERFC_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const ONE_OVER_SQRT_PI: f64 = 5.6418958354775628695e-1;

fn erf_small(x: f64) -> f64 {
    let z = x * x;
    let mut num = ERF_A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + ERF_A[i]) * z;
        den = (den + ERF_B[i]) * z;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

fn erfc_scaled_tail(y: f64) -> f64 {
    // erfc for y > 0.46875, split at y = 4 as in SPECFUN.
    let result = if y <= 4.0 {
        let mut num = ERFC_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * y;
            den = (den + ERFC_D[i]) * y;
        }
        (num + ERFC_C[7]) / (den + ERFC_D[7])
    } else {
        let z = 1.0 / (y * y);
        let mut num = ERFC_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * z;
            den = (den + ERFC_Q[i]) * z;
        }
        let r = z * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        (ONE_OVER_SQRT_PI - r) / y
    };
    // exp(-y^2) via the split y^2 = ysq^2 + del for accuracy at large y.
    let ysq = (y * 16.0).floor() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * result
}

pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let tail = erfc_scaled_tail(y);
    if x < 0.0 {
        2.0 - tail
    } else {
        tail
    }
}

/// Standard normal CDF, absolute error well below 1e-12 over the full range.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(g) = Phi(z - sigma_k) * m with z the sequence-wide z-score of `value`.
/// Clamped into (0, m) so log-odds downstream never hit infinities.
pub fn detection_probability(
    value: f64,
    stats: &SequenceStats,
    params: &DetectionParams,
) -> Result<f64> {
    if !(stats.stdev > 0.0) {
        return Err(Error::Degenerate(format!(
            "zero pressure variance (mean {}); nothing to detect",
            stats.mean
        )));
    }
    let z = (value - stats.mean) / stats.stdev;
    let p = standard_normal_cdf(z - params.sigma_k) * params.m;
    Ok(p.clamp(f64::MIN_POSITIVE, params.m * (1.0 - 1e-15)))
}

// ---------------------------------------------------------------------------
// Local maxima and detections
// ---------------------------------------------------------------------------

/// A local-maximum pixel before probability assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub t: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// One candidate contact point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub t: usize,
    pub x: Point,
    pub value: f64,
    pub prob: f64,
}

/// Every valid pixel whose value is >= all valid 8-neighborhood pixels.
/// Ties are retained: a plateau yields one peak per pixel, and the tracker's
/// one-pixel-per-trajectory-per-frame rule deals with the duplicates.
pub fn find_local_maxima(dense: &DenseSequence) -> Vec<Peak> {
    let width = dense.width as isize;
    let height = dense.height as isize;
    let mut per_frame: Vec<Vec<Peak>> = (0..dense.len())
        .into_par_iter()
        .map(|t| {
            let vals = &dense.frames[t];
            let mut peaks = Vec::new();
            for i in 0..height {
                'pixel: for j in 0..width {
                    let p = (i * width + j) as usize;
                    if !dense.mask[p] {
                        continue;
                    }
                    let v = vals[p];
                    for di in -1..=1_isize {
                        for dj in -1..=1_isize {
                            if di == 0 && dj == 0 {
                                continue;
                            }
                            let (ni, nj) = (i + di, j + dj);
                            if ni < 0 || nj < 0 || ni >= height || nj >= width {
                                continue;
                            }
                            let q = (ni * width + nj) as usize;
                            if dense.mask[q] && vals[q] > v {
                                continue 'pixel;
                            }
                        }
                    }
                    peaks.push(Peak {
                        t,
                        row: i as usize,
                        col: j as usize,
                        value: v,
                    });
                }
            }
            peaks
        })
        .collect();
    per_frame.drain(..).flatten().collect()
}

/// Full front end: upsample, blur, sequence statistics, local maxima,
/// probability assignment. Detection locations are pixel centers in mm.
pub fn build_detections(
    seq: &FrameSequence,
    params: &DetectionParams,
) -> Result<(DenseSequence, Vec<Detection>)> {
    params.validate().map_err(|e| match e {
        Error::Config(msg) => Error::InvalidInput(msg),
        other => other,
    })?;
    if seq.is_empty() || seq.layout().valid_count() == 0 {
        return Err(Error::Degenerate(
            "sequence has no frames or no valid cells".into(),
        ));
    }
    let dense = upsample(seq, params.upsample)?;
    let dense = gaussian_blur(&dense, params.blur_sigma)?;
    let stats = dense.stats()?;
    let peaks = find_local_maxima(&dense);
    let mut detections = Vec::with_capacity(peaks.len());
    for peak in peaks {
        detections.push(Detection {
            t: peak.t,
            x: dense.pixel_center(peak.row, peak.col),
            value: peak.value,
            prob: detection_probability(peak.value, &stats, params)?,
        });
    }
    Ok((dense, detections))
}

// ---------------------------------------------------------------------------
// Detections CSV
// ---------------------------------------------------------------------------

pub fn detections_to_csv(dets: &[Detection]) -> String {
    let mut out = String::from("t,x_mm,y_mm,value,prob\n");
    for d in dets {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            d.t, d.x.x, d.x.y, d.value, d.prob
        ));
    }
    out
}

pub fn parse_detections_csv(text: &str, path: &str) -> Result<Vec<Detection>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut dets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (lineno == 1 && line == "t,x_mm,y_mm,value,prob") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(lineno, format!("expected 5 fields, got {}", f.len())));
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad {what} '{s}'")))
        };
        let prob = parse_f64(f[4], "prob")?;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(err(lineno, format!("probability {prob} outside (0, 1)")));
        }
        dets.push(Detection {
            t: f[0]
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad time index '{}'", f[0])))?,
            x: Point::new(parse_f64(f[1], "x")?, parse_f64(f[2], "y")?),
            value: parse_f64(f[3], "value")?,
            prob,
        });
    }
    Ok(dets)
}

pub fn save_detections_csv(dets: &[Detection], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, detections_to_csv(dets)).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_detections_csv(path: &std::path::Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_detections_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Frame, SensorLayout};

    fn seq_from(rows: usize, cols: usize, frames: Vec<Vec<f64>>) -> FrameSequence {
        let layout = SensorLayout::grid(rows, cols, 25.4).unwrap();
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(t, v)| Frame::new(t, v))
            .collect();
        FrameSequence::new(layout, frames, 20.0).unwrap()
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let seq = seq_from(2, 3, vec![vec![2.0; 6]]);
        let dense = upsample(&seq, 7).unwrap();
        assert_eq!(dense.width(), 21);
        assert_eq!(dense.height(), 14);
        for i in 0..dense.height() {
            for j in 0..dense.width() {
                let v = dense.value(0, i, j).unwrap();
                assert!((v - 2.0).abs() < 1e-12, "pixel ({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let seq = seq_from(2, 2, vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let dense = upsample(&seq, 1).unwrap();
        assert_eq!(dense.value(0, 0, 0), Some(1.0));
        assert_eq!(dense.value(0, 0, 1), Some(2.0));
        assert_eq!(dense.value(0, 1, 0), Some(3.0));
        assert_eq!(dense.value(0, 1, 1), Some(4.0));
        assert!((dense.pitch() - 25.4).abs() < 1e-12);
    }

    #[test]
    fn bilinear_midpoint_between_cells_is_average() {
        // The x7 pixel grid has no pixel exactly midway between two cell
        // centers (they sit 7 pixels apart), so the midpoint is checked via
        // the sampling function itself.
        let seq = seq_from(1, 2, vec![vec![0.0, 1.0]]);
        let v = bilinear_sample(&seq, 0, 0.5, 0.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "midway sample = {v}");
    }

    #[test]
    fn upsample_matches_closed_form_everywhere() {
        let seq = seq_from(
            3,
            4,
            vec![(0..12).map(|k| (k as f64) * 0.37 + 0.1).collect()],
        );
        let dense = upsample(&seq, 7).unwrap();
        for i in 0..dense.height() {
            for j in 0..dense.width() {
                let gx = (j as f64 + 0.5) / 7.0 - 0.5;
                let gy = (i as f64 + 0.5) / 7.0 - 0.5;
                let expected = bilinear_sample(&seq, 0, gx, gy).unwrap();
                let got = dense.value(0, i, j).unwrap();
                assert!(
                    (got - expected).abs() < 1e-12,
                    "pixel ({i},{j}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn upsample_masks_pixels_touching_masked_cells() {
        let layout = SensorLayout::new(
            vec![
                crate::frame::Segment {
                    name: "a".into(),
                    rows: 2,
                    cols: 1,
                },
                crate::frame::Segment {
                    name: "b".into(),
                    rows: 1,
                    cols: 1,
                },
            ],
            25.4,
        )
        .unwrap();
        let seq =
            FrameSequence::new(layout, vec![Frame::new(0, vec![1.0, 1.0, 1.0])], 20.0).unwrap();
        let dense = upsample(&seq, 7).unwrap();
        // Pixels interpolating between row-1 columns 0 and 1 need the masked
        // cell (1, 1) and must be invalid.
        assert!(!dense.is_valid(10, 9));
        // Row 0 spans both columns validly.
        assert!(dense.is_valid(3, 9));
    }

    #[test]
    fn blur_preserves_constants_exactly_enough() {
        let seq = seq_from(2, 3, vec![vec![1.7; 6]]);
        let dense = upsample(&seq, 4).unwrap();
        let blurred = gaussian_blur(&dense, 3.0).unwrap();
        for i in 0..blurred.height() {
            for j in 0..blurred.width() {
                let v = blurred.value(0, i, j).unwrap();
                assert!((v - 1.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_interior_impulse_equals_normalized_kernel() {
        // 40x40 full mask, impulse well clear of every border.
        let layout = SensorLayout::grid(40, 40, 25.4).unwrap();
        let mut vals = vec![0.0; 1600];
        vals[20 * 40 + 20] = 1.0;
        let seq = FrameSequence::new(layout, vec![Frame::new(0, vals)], 20.0).unwrap();
        let dense = upsample(&seq, 1).unwrap();
        let blurred = gaussian_blur(&dense, 3.0).unwrap();

        let radius = 9i32;
        let w = |d: i32| (-(d * d) as f64 / 18.0).exp();
        let norm: f64 = (-radius..=radius)
            .flat_map(|a| (-radius..=radius).map(move |b| w(a) * w(b)))
            .sum();
        for di in -radius..=radius {
            for dj in -radius..=radius {
                let got = blurred
                    .value(0, (20 + di) as usize, (20 + dj) as usize)
                    .unwrap();
                let expected = w(di) * w(dj) / norm;
                assert!(
                    (got - expected).abs() < 1e-12,
                    "offset ({di},{dj}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn blur_boundary_impulse_conserves_weighted_mass() {
        // Renormalization divides each output by the kernel weight seen over
        // valid pixels; undoing that division must recover unit mass.
        let layout = SensorLayout::grid(14, 14, 25.4).unwrap();
        let mut vals = vec![0.0; 196];
        vals[14 + 1] = 1.0; // pixel (1, 1), adjacent to two borders
        let seq = FrameSequence::new(layout, vec![Frame::new(0, vals)], 20.0).unwrap();
        let dense = upsample(&seq, 1).unwrap();
        let blurred = gaussian_blur(&dense, 3.0).unwrap();

        let radius = 9i32;
        let w = |d: i32| (-(d * d) as f64 / 18.0).exp();
        let norm: f64 = (-radius..=radius)
            .flat_map(|a| (-radius..=radius).map(move |b| w(a) * w(b)))
            .sum();
        let weight_at = |i: i32, j: i32| -> f64 {
            // Independent oracle: kernel weight over valid support at (i, j).
            let mut acc = 0.0;
            for di in -radius..=radius {
                for dj in -radius..=radius {
                    let (ni, nj) = (i + di, j + dj);
                    if (0..14).contains(&ni) && (0..14).contains(&nj) {
                        acc += w(di) * w(dj) / norm;
                    }
                }
            }
            acc
        };
        let mut mass = 0.0;
        for i in 0..14 {
            for j in 0..14 {
                mass += blurred.value(0, i as usize, j as usize).unwrap() * weight_at(i, j);
            }
        }
        // The impulse sums to its own valid-support kernel weight; dividing
        // by that independently computed factor recovers unit mass.
        let expected = weight_at(1, 1);
        assert!(expected < 1.0, "boundary pixel must lose kernel support");
        assert!(
            (mass / expected - 1.0).abs() < 1e-9,
            "weight-compensated mass = {}",
            mass / expected
        );
    }

    #[test]
    fn normal_cdf_fixed_points() {
        assert_eq!(standard_normal_cdf(0.0), 0.5);
        assert!((standard_normal_cdf(-1.25) - 0.10564977366685525).abs() < 1e-14);
        assert!((standard_normal_cdf(1.25) - 0.8943502263331448).abs() < 1e-14);
    }

    #[test]
    fn detection_probability_paper_constants() {
        let stats = SequenceStats {
            mean: 1.0,
            stdev: 0.5,
            count: 100,
        };
        let params = DetectionParams::default();
        // value at mean + 1.25 sigma: Phi(0) * 0.98 = 0.49
        let p = detection_probability(1.0 + 1.25 * 0.5, &stats, &params).unwrap();
        assert!((p - 0.49).abs() < 1e-12);
        // value at the mean: Phi(-1.25) * 0.98
        let p = detection_probability(1.0, &stats, &params).unwrap();
        assert!((p - 0.10353677819351815).abs() < 1e-12);
        // far right tail approaches but never reaches m
        let p = detection_probability(1e9, &stats, &params).unwrap();
        assert!(p < 0.98 && (p - 0.98).abs() < 1e-12);
        // far left tail stays strictly positive
        let p = detection_probability(-1e9, &stats, &params).unwrap();
        assert!(p > 0.0);
    }

    #[test]
    fn detection_probability_rejects_zero_stdev() {
        let stats = SequenceStats {
            mean: 1.0,
            stdev: 0.0,
            count: 10,
        };
        let res = detection_probability(1.0, &stats, &DetectionParams::default());
        assert!(matches!(res, Err(Error::Degenerate(_))));
    }

    #[test]
    fn maxima_center_peak() {
        let seq = seq_from(
            3,
            3,
            vec![vec![1.0, 1.0, 1.0, 1.0, 5.0, 1.0, 1.0, 1.0, 1.0]],
        );
        let dense = upsample(&seq, 1).unwrap();
        let peaks = find_local_maxima(&dense);
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].row, peaks[0].col), (1, 1));
    }

    #[test]
    fn maxima_uniform_frame_is_all_ties() {
        let seq = seq_from(2, 2, vec![vec![3.0; 4]]);
        let dense = upsample(&seq, 1).unwrap();
        assert_eq!(find_local_maxima(&dense).len(), 4);
    }

    #[test]
    fn maxima_two_separated_peaks() {
        let mut vals = vec![0.0; 25];
        vals[6] = 2.0; // (1, 1)
        vals[18] = 3.0; // (3, 3)
        let seq = seq_from(5, 5, vec![vals.clone()]);
        let dense = upsample(&seq, 1).unwrap();
        let peaks = find_local_maxima(&dense);
        // Exhaustive oracle: scan every pixel's 8-neighborhood directly.
        let mut expected = Vec::new();
        for i in 0..5usize {
            for j in 0..5usize {
                let v = vals[i * 5 + j];
                let mut is_max = true;
                for di in -1..=1_i32 {
                    for dj in -1..=1_i32 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as i32 + di, j as i32 + dj);
                        if (0..5).contains(&ni)
                            && (0..5).contains(&nj)
                            && vals[(ni * 5 + nj) as usize] > v
                        {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    expected.push((i, j));
                }
            }
        }
        let got: Vec<(usize, usize)> = peaks.iter().map(|p| (p.row, p.col)).collect();
        assert_eq!(got, expected);
        assert!(got.contains(&(1, 1)) && got.contains(&(3, 3)));
    }

    #[test]
    fn maxima_invariant_under_constant_shift() {
        let vals: Vec<f64> = (0..16).map(|k| ((k * 37 % 11) as f64) * 0.3).collect();
        let shifted: Vec<f64> = vals.iter().map(|v| v + 42.0).collect();
        let a = find_local_maxima(&upsample(&seq_from(4, 4, vec![vals]), 1).unwrap());
        let b = find_local_maxima(&upsample(&seq_from(4, 4, vec![shifted]), 1).unwrap());
        let pos = |ps: &[Peak]| ps.iter().map(|p| (p.t, p.row, p.col)).collect::<Vec<_>>();
        assert_eq!(pos(&a), pos(&b));
    }

    #[test]
    fn build_detections_all_zero_is_degenerate() {
        let seq = seq_from(2, 2, vec![vec![0.0; 4], vec![0.0; 4]]);
        let res = build_detections(&seq, &DetectionParams::default());
        assert!(matches!(res, Err(Error::Degenerate(_))));
    }

    #[test]
    fn build_detections_tracks_stationary_bump() {
        // Gaussian bump fixed at cell (2.0, 3.0) over 10 frames plus a tiny
        // deterministic ramp to break background plateaus.
        let rows = 5;
        let cols = 7;
        let mut frames = Vec::new();
        for t in 0..10 {
            let mut vals = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    let d2 = (r as f64 - 2.0).powi(2) + (c as f64 - 3.0).powi(2);
                    let ramp = (r * cols + c) as f64 * 1e-6 + t as f64 * 1e-9;
                    vals.push(2.0 * (-d2 / 1.28).exp() + ramp);
                }
            }
            frames.push(vals);
        }
        let seq = seq_from(rows, cols, frames);
        let (dense, dets) = build_detections(&seq, &DetectionParams::default()).unwrap();
        let apex = Point::new((3.0 + 0.5) * 25.4, (2.0 + 0.5) * 25.4);
        for t in 0..10 {
            let frame_dets: Vec<&Detection> = dets.iter().filter(|d| d.t == t).collect();
            assert!(!frame_dets.is_empty(), "no detection in frame {t}");
            let best = frame_dets
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .unwrap();
            assert!(
                best.x.distance(&apex) < dense.pitch() * 1.5,
                "frame {t}: apex detection at {:?}",
                best.x
            );
        }
        let per_frame_limit = dense.valid_count();
        for t in 0..10 {
            assert!(dets.iter().filter(|d| d.t == t).count() <= per_frame_limit);
        }
    }

    #[test]
    fn build_detections_is_deterministic() {
        let seq = seq_from(
            3,
            3,
            vec![
                (0..9).map(|k| ((k * 7 % 5) as f64) * 0.21).collect(),
                (0..9).map(|k| ((k * 3 % 4) as f64) * 0.17).collect(),
            ],
        );
        let (_, a) = build_detections(&seq, &DetectionParams::default()).unwrap();
        let (_, b) = build_detections(&seq, &DetectionParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn detections_csv_round_trip() {
        let dets = vec![
            Detection {
                t: 0,
                x: Point::new(1.25, 3.5),
                value: 0.7,
                prob: 0.45,
            },
            Detection {
                t: 1,
                x: Point::new(2.0, 3.625),
                value: 0.9,
                prob: 0.6100000000000001,
            },
        ];
        let csv = detections_to_csv(&dets);
        let parsed = parse_detections_csv(&csv, "mem").unwrap();
        assert_eq!(parsed, dets);
        assert_eq!(detections_to_csv(&parsed), csv);
    }
}
