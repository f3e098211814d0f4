//! Actuator workspace restriction: placing the actuator array over the
//! sensor plane, checking which trajectory subsets are simultaneously
//! renderable (at most one trajectory per workspace per timestep), scoring,
//! and exact constrained selection.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::tracking::Trajectory;

/// Reach of one actuator's center: a circle in the sensor plane (the
/// physical cylinders project to circles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    /// (row, col) position in the actuator grid.
    pub index: (usize, usize),
    pub center: Point,
    pub radius: f64,
}

/// The actuator array: a rows x cols grid of circular workspaces. Untransformed,
/// workspace (r, c) is centered at (c * col_pitch, r * row_pitch).
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceArray {
    workspaces: Vec<Workspace>,
    rows: usize,
    cols: usize,
    row_pitch: f64,
    col_pitch: f64,
}

impl WorkspaceArray {
    /// The 2x4 voice-coil sleeve: 37 mm between columns within a row, 50 mm
    /// between rows, radius half the column pitch so circles never overlap.
    pub fn standard() -> WorkspaceArray {
        WorkspaceArray::grid(2, 4, 50.0, 37.0, 18.5).expect("standard geometry is valid")
    }

    pub fn grid(
        rows: usize,
        cols: usize,
        row_pitch: f64,
        col_pitch: f64,
        radius: f64,
    ) -> Result<WorkspaceArray> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("actuator grid must be non-empty".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!(
                "workspace radius must be positive, got {radius}"
            )));
        }
        if !(row_pitch > 0.0) || !(col_pitch > 0.0) {
            return Err(Error::Config("actuator pitches must be positive".into()));
        }
        let mut workspaces = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                workspaces.push(Workspace {
                    index: (r, c),
                    center: Point::new(c as f64 * col_pitch, r as f64 * row_pitch),
                    radius,
                });
            }
        }
        Ok(WorkspaceArray {
            workspaces,
            rows,
            cols,
            row_pitch,
            col_pitch,
        })
    }

    pub fn workspaces(&self) -> &[Workspace] {
        &self.workspaces
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_pitch(&self) -> f64 {
        self.row_pitch
    }

    pub fn col_pitch(&self) -> f64 {
        self.col_pitch
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&Workspace> {
        if row < self.rows && col < self.cols {
            self.workspaces.get(row * self.cols + col)
        } else {
            None
        }
    }

    /// True when some pair of circles shares interior points.
    pub fn has_overlap(&self) -> bool {
        for (i, a) in self.workspaces.iter().enumerate() {
            for b in &self.workspaces[i + 1..] {
                if a.center.distance(&b.center) < a.radius + b.radius {
                    return true;
                }
            }
        }
        false
    }

    /// Bounding box of the untransformed array including radii:
    /// (min, max) corners.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in &self.workspaces {
            min.x = min.x.min(w.center.x - w.radius);
            min.y = min.y.min(w.center.y - w.radius);
            max.x = max.x.max(w.center.x + w.radius);
            max.y = max.y.max(w.center.y + w.radius);
        }
        (min, max)
    }
}

/// Placement of the array over the sensor plane. Scaling and rotation are
/// reserved; only translation is searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub translation: Point,
}

impl Transform {
    pub fn identity() -> Transform {
        Transform {
            translation: Point::ZERO,
        }
    }

    pub fn translate(x: f64, y: f64) -> Transform {
        Transform {
            translation: Point::new(x, y),
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        p.add(&self.translation)
    }
}

/// Which workspace(s) contain a point under a transform, boundary inclusive.
#[derive(Debug, Clone, PartialEq)]
pub enum Containment {
    Outside,
    Inside(usize),
    /// Only possible with overlapping geometry; feeds the general Hall check.
    Multiple(Vec<usize>),
}

/// All containing workspace indices, ascending.
pub fn containing(point: &Point, arr: &WorkspaceArray, m: &Transform) -> Vec<usize> {
    arr.workspaces()
        .iter()
        .enumerate()
        .filter(|(_, w)| point.distance_sq(&m.apply(&w.center)) <= w.radius * w.radius)
        .map(|(i, _)| i)
        .collect()
}

pub fn locate(point: &Point, arr: &WorkspaceArray, m: &Transform) -> Containment {
    let hits = containing(point, arr, m);
    match hits.len() {
        0 => Containment::Outside,
        1 => Containment::Inside(hits[0]),
        _ => Containment::Multiple(hits),
    }
}

/// True iff the bipartite graph from trajectories to containing workspaces
/// admits a matching saturating every trajectory (by Hall's theorem, iff
/// every subset of trajectories sees at least as many workspaces).
pub fn feasible(active: &[(usize, Point)], arr: &WorkspaceArray, m: &Transform) -> bool {
    let neighbors: Vec<Vec<usize>> = active.iter().map(|(_, p)| containing(p, arr, m)).collect();
    saturating_matching(&neighbors, arr.workspaces().len()).is_some()
}

/// Augmenting-path bipartite matching on the trajectory side; returns the
/// workspace matched to each trajectory when all of them can be saturated.
fn saturating_matching(neighbors: &[Vec<usize>], n_ws: usize) -> Option<Vec<usize>> {
    let mut ws_owner: Vec<Option<usize>> = vec![None; n_ws];

    fn try_assign(
        i: usize,
        neighbors: &[Vec<usize>],
        ws_owner: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &w in &neighbors[i] {
            if visited[w] {
                continue;
            }
            visited[w] = true;
            let free = match ws_owner[w] {
                None => true,
                Some(j) => try_assign(j, neighbors, ws_owner, visited),
            };
            if free {
                ws_owner[w] = Some(i);
                return true;
            }
        }
        false
    }

    for i in 0..neighbors.len() {
        let mut visited = vec![false; n_ws];
        if !try_assign(i, neighbors, &mut ws_owner, &mut visited) {
            return None;
        }
    }
    let mut assignment = vec![usize::MAX; neighbors.len()];
    for (w, owner) in ws_owner.iter().enumerate() {
        if let Some(i) = owner {
            assignment[*i] = w;
        }
    }
    Some(assignment)
}

/// A set of trajectories that cannot all be rendered, witnessed first at
/// `time`. Every superset is implied, so only minimal sets are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictSet {
    pub ids: BTreeSet<usize>,
    pub time: usize,
}

/// Minimal infeasible trajectory sets across all timesteps, deduplicated.
///
/// For geometry where each point sits in at most one workspace this is the
/// singleton (point outside every workspace) and pair (two trajectories in
/// one workspace) enumeration; for overlapping geometry minimal
/// Hall-violating subsets are found by subset search over the trajectories
/// active at that timestep.
pub fn minimal_conflicts(
    trajs: &[Trajectory],
    arr: &WorkspaceArray,
    m: &Transform,
) -> Vec<ConflictSet> {
    let mut t_min = usize::MAX;
    let mut t_max = 0;
    for traj in trajs {
        if traj.detections.is_empty() {
            continue;
        }
        t_min = t_min.min(traj.start());
        t_max = t_max.max(traj.end());
    }
    let mut seen: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
    let mut out: Vec<ConflictSet> = Vec::new();
    if t_min == usize::MAX {
        return out;
    }

    for tau in t_min..=t_max {
        let active: Vec<(usize, Vec<usize>)> = trajs
            .iter()
            .filter_map(|traj| traj.at(tau).map(|d| (traj.id, containing(&d.x, arr, m))))
            .collect();
        if active.is_empty() {
            continue;
        }

        let mut local: Vec<BTreeSet<usize>> = Vec::new();
        if active.iter().all(|(_, ws)| ws.len() <= 1) {
            for (id, ws) in &active {
                if ws.is_empty() {
                    local.push(BTreeSet::from([*id]));
                }
            }
            for (i, (id_a, ws_a)) in active.iter().enumerate() {
                if ws_a.is_empty() {
                    continue;
                }
                for (id_b, ws_b) in &active[i + 1..] {
                    if ws_a == ws_b {
                        local.push(BTreeSet::from([*id_a, *id_b]));
                    }
                }
            }
        } else {
            // Overlapping geometry: scan subsets by size and keep the
            // Hall-violating ones with no violating proper subset.
            let n = active.len();
            assert!(
                n <= 24,
                "overlapping-workspace conflict search supports at most 24 \
                 simultaneous trajectories, got {n}"
            );
            let mut violators: Vec<u64> = Vec::new();
            let mut masks: Vec<u64> = (1..1u64 << n).collect();
            masks.sort_by_key(|m| m.count_ones());
            for mask in masks {
                if violators.iter().any(|v| v & mask == *v) {
                    continue; // a subset already violates
                }
                let mut union: BTreeSet<usize> = BTreeSet::new();
                let mut size = 0;
                for (i, (_, ws)) in active.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        size += 1;
                        union.extend(ws.iter().copied());
                    }
                }
                if union.len() < size {
                    violators.push(mask);
                    local.push(
                        active
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, (id, _))| *id)
                            .collect(),
                    );
                }
            }
        }

        for ids in local {
            if seen.insert(ids.clone()) {
                out.push(ConflictSet { ids, time: tau });
            }
        }
    }

    // Drop sets implied by a smaller recorded set (possible across timesteps).
    let keep: Vec<bool> = out
        .iter()
        .map(|c| {
            !out.iter()
                .any(|other| other.ids.len() < c.ids.len() && other.ids.is_subset(&c.ids))
        })
        .collect();
    out.into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

/// Quadratic center-preference weight 1.02 (1.04 - 0.04 d^2 / r^2); maximal
/// 1.0608 at the center, 1.02 on the boundary.
pub fn weight_d(point: &Point, ws: &Workspace) -> Result<f64> {
    let d_sq = point.distance_sq(&ws.center);
    let r_sq = ws.radius * ws.radius;
    if d_sq > r_sq {
        return Err(Error::InvalidInput(format!(
            "point lies {:.3} mm from center, outside radius {}",
            d_sq.sqrt(),
            ws.radius
        )));
    }
    Ok(1.02 * (1.04 - 0.04 * d_sq / r_sq))
}

/// Trajectory quality under a placement: sum of log(P/(1-P) * D) over the
/// points inside workspaces. Points outside all workspaces contribute
/// nothing; such trajectories are excluded by singleton conflicts anyway, so
/// this only affects reporting.
pub fn score(traj: &Trajectory, arr: &WorkspaceArray, m: &Transform) -> f64 {
    let mut total = 0.0;
    for d in &traj.detections {
        let hits = containing(&d.x, arr, m);
        let best_d = hits
            .iter()
            .filter_map(|&w| {
                let ws = &arr.workspaces()[w];
                let moved = Workspace {
                    center: m.apply(&ws.center),
                    ..*ws
                };
                weight_d(&d.x, &moved).ok()
            })
            .max_by(|a, b| a.total_cmp(b));
        if let Some(dw) = best_d {
            total += (d.prob / (1.0 - d.prob) * dw).ln();
        }
    }
    total
}

/// Exact maximum-total-score subset containing no complete conflict set.
/// Branch and bound over inclusion in ascending-id order with the optimistic
/// bound current + (positive scores still undecided); equal-score optima
/// resolve to the lexicographically smallest id set.
pub fn select_subset(
    scores: &BTreeMap<usize, f64>,
    conflicts: &[ConflictSet],
) -> (BTreeSet<usize>, f64) {
    let ids: Vec<usize> = scores.keys().copied().collect();
    let vals: Vec<f64> = ids.iter().map(|id| scores[id]).collect();
    let n = ids.len();

    // Suffix sums of positive scores for the bound.
    let mut positive_suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        positive_suffix[k] = positive_suffix[k + 1] + vals[k].max(0.0);
    }

    // Conflicts as index sets, bucketed by their largest member so a
    // violation is detected exactly when its last element is included.
    let index_of: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut by_last: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
    for c in conflicts {
        let members: Option<Vec<usize>> =
            c.ids.iter().map(|id| index_of.get(id).copied()).collect();
        if let Some(mut members) = members {
            members.sort_unstable();
            if let Some(&last) = members.last() {
                by_last[last].push(members);
            }
        }
        // Conflicts naming unknown ids can never be completed; drop them.
    }

    struct Search<'a> {
        vals: &'a [f64],
        positive_suffix: &'a [f64],
        by_last: &'a [Vec<Vec<usize>>],
        chosen: Vec<bool>,
        best_total: f64,
        best_set: Vec<usize>,
    }

    impl Search<'_> {
        fn run(&mut self, k: usize, total: f64, picked: &mut Vec<usize>) {
            if total + self.positive_suffix[k] < self.best_total {
                return; // <, not <=: equal-bound branches may win the tie-break
            }
            if k == self.vals.len() {
                if total > self.best_total
                    || (total == self.best_total && picked.as_slice() < self.best_set.as_slice())
                {
                    self.best_total = total;
                    self.best_set = picked.clone();
                }
                return;
            }
            // Include k unless that completes a conflict.
            let violates = self.by_last[k]
                .iter()
                .any(|c| c[..c.len() - 1].iter().all(|&i| self.chosen[i]));
            if !violates {
                self.chosen[k] = true;
                picked.push(k);
                self.run(k + 1, total + self.vals[k], picked);
                picked.pop();
                self.chosen[k] = false;
            }
            self.run(k + 1, total, picked);
        }
    }

    let mut search = Search {
        vals: &vals,
        positive_suffix: &positive_suffix,
        by_last: &by_last,
        chosen: vec![false; n],
        best_total: f64::NEG_INFINITY,
        best_set: Vec::new(),
    };
    let mut picked = Vec::new();
    search.run(0, 0.0, &mut picked);

    (
        search.best_set.iter().map(|&k| ids[k]).collect(),
        if search.best_total.is_finite() {
            search.best_total
        } else {
            0.0
        },
    )
}

/// Where each chosen trajectory renders at each of its timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub traj_id: usize,
    pub t: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub transform: Transform,
    pub chosen: BTreeSet<usize>,
    pub total_score: f64,
    /// All trajectory scores under this transform, chosen or not.
    pub scores: BTreeMap<usize, f64>,
    /// Sorted by (traj_id, t); at most one trajectory per workspace per t.
    pub assignments: Vec<Assignment>,
}

/// Constrained selection at a fixed transform: score, build minimal
/// conflicts, pick the exact best subset, and realize per-timestep
/// assignments via bipartite matching.
pub fn select(
    trajs: &[Trajectory],
    arr: &WorkspaceArray,
    m: &Transform,
) -> Result<SelectionResult> {
    let scores: BTreeMap<usize, f64> = trajs.iter().map(|t| (t.id, score(t, arr, m))).collect();
    if scores.len() != trajs.len() {
        return Err(Error::InvalidInput("duplicate trajectory ids".into()));
    }
    let conflicts = minimal_conflicts(trajs, arr, m);
    let (chosen, total_score) = select_subset(&scores, &conflicts);

    let mut assignments = Vec::new();
    if !chosen.is_empty() {
        let t_min = trajs
            .iter()
            .filter(|t| chosen.contains(&t.id))
            .map(|t| t.start())
            .min()
            .unwrap();
        let t_max = trajs
            .iter()
            .filter(|t| chosen.contains(&t.id))
            .map(|t| t.end())
            .max()
            .unwrap();
        for tau in t_min..=t_max {
            let active: Vec<(usize, Vec<usize>)> = trajs
                .iter()
                .filter(|t| chosen.contains(&t.id))
                .filter_map(|t| t.at(tau).map(|d| (t.id, containing(&d.x, arr, m))))
                .collect();
            if active.is_empty() {
                continue;
            }
            let neighbors: Vec<Vec<usize>> = active.iter().map(|(_, ws)| ws.clone()).collect();
            let matched =
                saturating_matching(&neighbors, arr.workspaces().len()).ok_or_else(|| {
                    Error::Internal(format!(
                        "chosen set admits no workspace matching at t = {tau}"
                    ))
                })?;
            for ((id, _), w) in active.iter().zip(matched) {
                let ws = &arr.workspaces()[w];
                assignments.push(Assignment {
                    traj_id: *id,
                    t: tau,
                    row: ws.index.0,
                    col: ws.index.1,
                });
            }
        }
    }
    assignments.sort_by_key(|a| (a.traj_id, a.t));

    Ok(SelectionResult {
        transform: *m,
        chosen,
        total_score,
        scores,
        assignments,
    })
}

/// The translations to try, scanned row-major (ys outer, xs inner).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl TransformGrid {
    pub fn single(t: Transform) -> TransformGrid {
        TransformGrid {
            xs: vec![t.translation.x],
            ys: vec![t.translation.y],
        }
    }

    /// Every translation at `step` spacing for which the array's bounding
    /// box still intersects the frame extent (so at least one workspace can
    /// reach valid pixels). Values sit at (n + 1/2) * step, the pixel-center
    /// phase: with the default step this lets workspace centers land exactly
    /// on detection pixels, which matters because touching circles only
    /// cover a straight path gap-free at exact row alignment.
    pub fn covering(extent: (f64, f64), arr: &WorkspaceArray, step: f64) -> Result<TransformGrid> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!(
                "grid step must be positive, got {step}"
            )));
        }
        let (bb_min, bb_max) = arr.bounding_box();
        let range = |lo: f64, hi: f64| -> Vec<f64> {
            let n_lo = (lo / step - 0.5).ceil() as i64;
            let n_hi = (hi / step - 0.5).floor() as i64;
            if n_lo > n_hi {
                return vec![(lo + hi) / 2.0];
            }
            (n_lo..=n_hi).map(|n| (n as f64 + 0.5) * step).collect()
        };
        Ok(TransformGrid {
            xs: range(-bb_max.x, extent.0 - bb_min.x),
            ys: range(-bb_max.y, extent.1 - bb_min.y),
        })
    }

    pub fn explicit(xs: Vec<f64>, ys: Vec<f64>) -> TransformGrid {
        TransformGrid { xs, ys }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, scan_index: usize) -> Transform {
        let iy = scan_index / self.xs.len();
        let ix = scan_index % self.xs.len();
        Transform::translate(self.xs[ix], self.ys[iy])
    }
}

/// Outer optimization: evaluates `select` at every grid translation and
/// keeps the best total score. Exact ties resolve to the first transform in
/// row-major scan order, independent of evaluation order.
pub fn search_transforms(
    trajs: &[Trajectory],
    arr: &WorkspaceArray,
    grid: &TransformGrid,
) -> Result<SelectionResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty transform grid".into()));
    }
    let results: Result<Vec<(usize, SelectionResult)>> = (0..grid.len())
        .into_par_iter()
        .map(|scan| select(trajs, arr, &grid.at(scan)).map(|r| (scan, r)))
        .collect();
    let best = results?
        .into_iter()
        .reduce(|a, b| {
            if b.1.total_score > a.1.total_score
                || (b.1.total_score == a.1.total_score && b.0 < a.0)
            {
                b
            } else {
                a
            }
        })
        .expect("grid is nonempty");
    Ok(best.1)
}

// ---------------------------------------------------------------------------
// Selection JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SelectionJson {
    transform: TransformJson,
    total_score: f64,
    chosen: Vec<usize>,
    scores: Vec<ScoreJson>,
    assignments: Vec<Assignment>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformJson {
    tx_mm: f64,
    ty_mm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreJson {
    traj_id: usize,
    score: f64,
}

pub fn selection_to_json(sel: &SelectionResult) -> String {
    let doc = SelectionJson {
        transform: TransformJson {
            tx_mm: sel.transform.translation.x,
            ty_mm: sel.transform.translation.y,
        },
        total_score: sel.total_score,
        chosen: sel.chosen.iter().copied().collect(),
        scores: sel
            .scores
            .iter()
            .map(|(&traj_id, &score)| ScoreJson { traj_id, score })
            .collect(),
        assignments: sel.assignments.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("selection serializes");
    text.push('\n');
    text
}

pub fn parse_selection_json(text: &str, path: &str) -> Result<SelectionResult> {
    let doc: SelectionJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(SelectionResult {
        transform: Transform::translate(doc.transform.tx_mm, doc.transform.ty_mm),
        chosen: doc.chosen.into_iter().collect(),
        total_score: doc.total_score,
        scores: doc
            .scores
            .into_iter()
            .map(|s| (s.traj_id, s.score))
            .collect(),
        assignments: doc.assignments,
    })
}

pub fn save_selection_json(sel: &SelectionResult, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, selection_to_json(sel)).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_selection_json(path: &std::path::Path) -> Result<SelectionResult> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_selection_json(&text, &path.display().to_string())
}
