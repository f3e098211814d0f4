//! Static SVG views of the stage artifacts: frame heatmaps, detection dots,
//! trajectory polylines, workspace circles, and actuator bar traces.
//! Layout and float formatting are fixed so output bytes are reproducible.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{parse_sequence_csv, parse_sequence_json, FrameSequence};
use crate::preprocess::{parse_detections_csv, Detection};
use crate::render::{parse_signal_csv, ActuatorSignal};
use crate::tracking::{parse_trajectories_csv, Trajectory, TRAJECTORY_CSV_HEADER};
use crate::workspace::{parse_selection_json, SelectionResult};

const PALETTE: [&str; 8] = [
    "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#7f8c8d", "#f39c12",
];

pub enum Artifact {
    Frames(FrameSequence),
    Detections(Vec<Detection>),
    Trajectories(Vec<Trajectory>),
    Selection(SelectionResult),
    Signal(ActuatorSignal),
}

/// Sniffs the artifact kind from its first line.
pub fn load_artifact(path: &Path) -> Result<Artifact> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.display().to_string();
    let first = text.lines().next().unwrap_or("").trim();
    if first.starts_with('{') {
        if text.contains("\"assignments\"") {
            return Ok(Artifact::Selection(parse_selection_json(&text, &name)?));
        }
        return Ok(Artifact::Frames(parse_sequence_json(&text, &name)?));
    }
    if first.starts_with("#layout") {
        return Ok(Artifact::Frames(parse_sequence_csv(&text, &name)?));
    }
    if first.starts_with("# rows=") {
        return Ok(Artifact::Signal(parse_signal_csv(&text, &name)?));
    }
    if first == TRAJECTORY_CSV_HEADER {
        return Ok(Artifact::Trajectories(parse_trajectories_csv(
            &text, &name,
        )?));
    }
    if first == "t,x_mm,y_mm,value,prob" {
        return Ok(Artifact::Detections(parse_detections_csv(&text, &name)?));
    }
    Err(Error::Parse {
        path: name,
        line: 1,
        msg: "unrecognized artifact header".into(),
    })
}

pub fn render_svg(artifact: &Artifact) -> String {
    match artifact {
        Artifact::Frames(seq) => frames_svg(seq),
        Artifact::Detections(dets) => detections_svg(dets),
        Artifact::Trajectories(trajs) => trajectories_svg(trajs),
        Artifact::Selection(sel) => selection_svg(sel),
        Artifact::Signal(sig) => signal_svg(sig),
    }
}

pub fn save_svg(artifact: &Artifact, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(artifact)).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width:.1}" height="{height:.1}" fill="white"/>"#
    );
}

fn heat_color(norm: f64) -> String {
    // White to dark red.
    let n = norm.clamp(0.0, 1.0);
    let r = 255.0 - 60.0 * n;
    let gb = 255.0 * (1.0 - n);
    format!(
        "rgb({},{},{})",
        r.round() as u8,
        gb.round() as u8,
        gb.round() as u8
    )
}

/// Up to six evenly spaced frames as cell heatmaps, intensity normalized on
/// the sequence's own value range.
fn frames_svg(seq: &FrameSequence) -> String {
    let layout = seq.layout();
    let cell = 14.0;
    let gap = 10.0;
    let n_show = seq.len().clamp(1, 6);
    let indices: Vec<usize> = if seq.len() <= n_show {
        (0..seq.len()).collect()
    } else {
        (0..n_show)
            .map(|k| k * (seq.len() - 1) / (n_show - 1))
            .collect()
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for f in seq.frames() {
        for &v in &f.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };

    let tile_w = layout.cols() as f64 * cell;
    let tile_h = layout.rows() as f64 * cell;
    let width = gap + indices.len() as f64 * (tile_w + gap);
    let height = tile_h + 2.0 * gap + 14.0;
    let mut out = String::new();
    svg_open(&mut out, width, height);
    for (k, &t) in indices.iter().enumerate() {
        let x0 = gap + k as f64 * (tile_w + gap);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="monospace">t={t}</text>"#,
            x0,
            gap + tile_h + 12.0
        );
        for (slot, &(r, c)) in layout.valid_cells().iter().enumerate() {
            let v = seq.frames()[t].values[slot];
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}" stroke="#ccc" stroke-width="0.5"/>"##,
                x0 + c as f64 * cell,
                gap + r as f64 * cell,
                heat_color((v - lo) / span)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Millimeter-space extent covering a point cloud, with margin.
fn mm_extent(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut any = false;
    for (x, y) in points {
        any = true;
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    if !any {
        return (0.0, 0.0, 100.0, 100.0);
    }
    (min_x - 30.0, min_y - 30.0, max_x + 30.0, max_y + 30.0)
}

fn detections_svg(dets: &[Detection]) -> String {
    let (x0, y0, x1, y1) = mm_extent(dets.iter().map(|d| (d.x.x, d.x.y)));
    let (vmin, vmax) = dets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d.value), hi.max(d.value))
        });
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut out = String::new();
    svg_open(&mut out, x1 - x0, y1 - y0);
    for d in dets {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{}"/>"#,
            d.x.x - x0,
            d.x.y - y0,
            heat_color((d.value - vmin) / span)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grid plus one polyline per trajectory id.
fn trajectories_svg(trajs: &[Trajectory]) -> String {
    let (x0, y0, x1, y1) = mm_extent(
        trajs
            .iter()
            .flat_map(|t| t.detections.iter().map(|d| (d.x.x, d.x.y))),
    );
    let mut out = String::new();
    svg_open(&mut out, x1 - x0, y1 - y0);
    // Light reference grid every 25.4 mm.
    let mut gx = 0.0;
    while gx < x1 - x0 {
        let _ = writeln!(
            out,
            r##"<line x1="{gx:.1}" y1="0" x2="{gx:.1}" y2="{:.1}" stroke="#eee"/>"##,
            y1 - y0
        );
        gx += 25.4;
    }
    let mut gy = 0.0;
    while gy < y1 - y0 {
        let _ = writeln!(
            out,
            r##"<line x1="0" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#eee"/>"##,
            x1 - x0
        );
        gy += 25.4;
    }
    for traj in trajs {
        let points: Vec<String> = traj
            .detections
            .iter()
            .map(|d| format!("{:.2},{:.2}", d.x.x - x0, d.x.y - y0))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            points.join(" "),
            PALETTE[traj.id % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// The 2x4 circles at their transformed centers; chosen trajectories' homes
/// are stroked in their trajectory color.
fn selection_svg(sel: &SelectionResult) -> String {
    let arr = crate::workspace::WorkspaceArray::standard();
    let centers: Vec<(usize, usize, f64, f64)> = arr
        .workspaces()
        .iter()
        .map(|w| {
            let c = sel.transform.apply(&w.center);
            (w.index.0, w.index.1, c.x, c.y)
        })
        .collect();
    let (x0, y0, x1, y1) = mm_extent(centers.iter().map(|&(_, _, x, y)| (x, y)));
    let mut out = String::new();
    svg_open(&mut out, x1 - x0, y1 - y0);
    for &(r, c, x, y) in &centers {
        let assigned = sel
            .assignments
            .iter()
            .find(|a| a.row == r && a.col == c)
            .map(|a| a.traj_id);
        let stroke = assigned
            .map(|id| PALETTE[id % PALETTE.len()])
            .unwrap_or("#888");
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="18.5" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            x - x0,
            y - y0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One trace per channel, stacked by grid position.
fn signal_svg(sig: &ActuatorSignal) -> String {
    let lane_h = 40.0;
    let lane_gap = 8.0;
    let px_per_sample = (600.0 / sig.len().max(1) as f64).min(4.0);
    let width = 60.0 + sig.len() as f64 * px_per_sample;
    let height = (lane_h + lane_gap) * (sig.rows * sig.cols) as f64 + lane_gap;
    let mut out = String::new();
    svg_open(&mut out, width, height);
    for r in 0..sig.rows {
        for c in 0..sig.cols {
            let lane = r * sig.cols + c;
            let top = lane_gap + lane as f64 * (lane_h + lane_gap);
            let base = top + lane_h;
            let _ = writeln!(
                out,
                r#"<text x="4" y="{:.1}" font-size="10" font-family="monospace">ch {r},{c}</text>"#,
                top + lane_h / 2.0
            );
            let _ = writeln!(
                out,
                r##"<line x1="60" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="#ddd"/>"##,
                width
            );
            let channel = sig.channel(r, c).unwrap_or(&[]);
            if channel.is_empty() {
                continue;
            }
            let points: Vec<String> = channel
                .iter()
                .enumerate()
                .map(|(t, &v)| {
                    format!(
                        "{:.2},{:.2}",
                        60.0 + t as f64 * px_per_sample,
                        base - v.clamp(0.0, 1.0) * lane_h
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                points.join(" "),
                PALETTE[lane % PALETTE.len()]
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
