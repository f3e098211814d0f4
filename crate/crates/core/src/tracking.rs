//! Data association across frames as a MAP estimate, solved exactly as
//! min-cost network flow.
//!
//! Each detection i becomes a split node pair u_i -> v_i with arc cost
//! log((1 - P_i)/P_i) and capacity one (trajectories may not share a
//! detection). Links between consecutive frames cost -log P_link, and entry
//! and exit arcs cost `entry_cost` each. Augmenting while the shortest
//! source-sink path is negative maximizes the posterior over both the
//! assignment and the trajectory count.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::preprocess::Detection;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingParams {
    /// Maximum link distance between consecutive detections, millimeters.
    pub k_d: f64,
    /// -log of the entry (= exit) probability; 8 means P_entr = e^-8.
    pub entry_cost: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            k_d: 50.0,
            entry_cost: 8.0,
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_d > 0.0) || !self.k_d.is_finite() {
            return Err(Error::Config(format!(
                "k_d must be positive, got {}",
                self.k_d
            )));
        }
        if !(self.entry_cost >= 0.0) || !self.entry_cost.is_finite() {
            return Err(Error::Config(format!(
                "entry_cost must be nonnegative, got {}",
                self.entry_cost
            )));
        }
        Ok(())
    }
}

/// Linear falloff transition probability: 1 - d/k_d within k_d, else 0.
pub fn p_link(a: &Detection, b: &Detection, params: &TrackingParams) -> Result<f64> {
    if b.t != a.t + 1 {
        return Err(Error::InvalidInput(format!(
            "link requires consecutive frames, got t = {} -> {}",
            a.t, b.t
        )));
    }
    let d = a.x.distance(&b.x);
    Ok(if d <= params.k_d {
        1.0 - d / params.k_d
    } else {
        0.0
    })
}

/// A time-contiguous chain of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub detections: Vec<Detection>,
}

impl Trajectory {
    pub fn start(&self) -> usize {
        self.detections.first().map(|d| d.t).unwrap_or(0)
    }

    pub fn end(&self) -> usize {
        self.detections.last().map(|d| d.t).unwrap_or(0)
    }

    pub fn at(&self, t: usize) -> Option<&Detection> {
        if self.detections.is_empty() || t < self.start() || t > self.end() {
            return None;
        }
        self.detections.get(t - self.start())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// u_i -> v_i, capacity one; indexes into the sorted detection order.
    Detection(usize),
    /// v_i -> u_j between consecutive frames.
    Link { from: usize, to: usize },
    /// source -> u_i.
    Entry(usize),
    /// v_i -> sink.
    Exit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArc {
    pub from_node: usize,
    pub to_node: usize,
    pub cost: f64,
    pub kind: ArcKind,
}

/// The min-cost flow network for a detection set. Node ids: 0 source,
/// 1 sink, then (u_i, v_i) = (2 + 2i, 3 + 2i) in sorted detection order.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub arcs: Vec<FlowArc>,
    pub node_count: usize,
    /// Sorted position -> index into the original detection slice.
    order: Vec<usize>,
}

impl FlowGraph {
    pub const SOURCE: usize = 0;
    pub const SINK: usize = 1;

    pub fn u_node(i: usize) -> usize {
        2 + 2 * i
    }

    pub fn v_node(i: usize) -> usize {
        3 + 2 * i
    }

    pub fn detection_order(&self) -> &[usize] {
        &self.order
    }
}

/// Builds the flow network. Detections are sorted by (t, x, y) first so arc
/// order, and therefore tie-breaking among equally optimal solutions, is
/// reproducible.
pub fn build_graph(dets: &[Detection], params: &TrackingParams) -> Result<FlowGraph> {
    params.validate()?;
    for d in dets {
        if !(d.prob > 0.0 && d.prob < 1.0) {
            return Err(Error::InvalidInput(format!(
                "detection probability must lie strictly in (0, 1), got {}",
                d.prob
            )));
        }
        if !d.x.is_finite() || !d.value.is_finite() {
            return Err(Error::NonFinite("detection coordinates/value".into()));
        }
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[a]
            .t
            .cmp(&dets[b].t)
            .then(dets[a].x.x.total_cmp(&dets[b].x.x))
            .then(dets[a].x.y.total_cmp(&dets[b].x.y))
    });

    let n = dets.len();
    let mut arcs = Vec::with_capacity(4 * n);
    for (i, &oi) in order.iter().enumerate() {
        let p = dets[oi].prob;
        arcs.push(FlowArc {
            from_node: FlowGraph::SOURCE,
            to_node: FlowGraph::u_node(i),
            cost: params.entry_cost,
            kind: ArcKind::Entry(i),
        });
        arcs.push(FlowArc {
            from_node: FlowGraph::u_node(i),
            to_node: FlowGraph::v_node(i),
            cost: ((1.0 - p) / p).ln(),
            kind: ArcKind::Detection(i),
        });
        arcs.push(FlowArc {
            from_node: FlowGraph::v_node(i),
            to_node: FlowGraph::SINK,
            cost: params.entry_cost,
            kind: ArcKind::Exit(i),
        });
    }
    // Link arcs between consecutive frames; a zero transition probability
    // would cost infinity, so those pairs simply get no arc.
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&dets[order[i]], &dets[order[j]]);
            if b.t != a.t + 1 {
                continue;
            }
            let pl = p_link(a, b, params)?;
            if pl > 0.0 {
                arcs.push(FlowArc {
                    from_node: FlowGraph::v_node(i),
                    to_node: FlowGraph::u_node(j),
                    cost: -pl.ln(),
                    kind: ArcKind::Link { from: i, to: j },
                });
            }
        }
    }
    Ok(FlowGraph {
        arcs,
        node_count: 2 + 2 * n,
        order,
    })
}

/// Solver output: the trajectory set plus the flow-level bookkeeping used by
/// the optimality checks.
#[derive(Debug, Clone)]
pub struct TrackingSolution {
    pub trajectories: Vec<Trajectory>,
    /// Total cost of the final flow.
    pub flow_cost: f64,
    /// True (unreduced) cost of each accepted augmenting path; each is
    /// strictly negative and the sequence is nondecreasing.
    pub augmentation_costs: Vec<f64>,
}

struct Residual {
    to: Vec<usize>,
    cost: Vec<f64>,
    cap: Vec<u8>,
    adj: Vec<Vec<u32>>,
}

impl Residual {
    fn new(node_count: usize) -> Self {
        Residual {
            to: Vec::new(),
            cost: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); node_count],
        }
    }

    /// Adds forward arc with capacity one plus its zero-capacity reverse.
    /// Returns the forward arc id; the reverse is id ^ 1.
    fn push(&mut self, from: usize, to: usize, cost: f64) -> u32 {
        let id = self.to.len() as u32;
        self.to.push(to);
        self.cost.push(cost);
        self.cap.push(1);
        self.adj[from].push(id);
        self.to.push(from);
        self.cost.push(-cost);
        self.cap.push(0);
        self.adj[to].push(id + 1);
        id
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest distance,
        // ties broken by node id for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

pub fn solve_tracking(dets: &[Detection], params: &TrackingParams) -> Result<Vec<Trajectory>> {
    Ok(solve_tracking_solution(dets, params)?.trajectories)
}

pub fn solve_tracking_solution(
    dets: &[Detection],
    params: &TrackingParams,
) -> Result<TrackingSolution> {
    let graph = build_graph(dets, params)?;
    let n = graph.order.len();
    let mut res = Residual::new(graph.node_count);

    let mut entry_arc = vec![0u32; n];
    let mut det_arc = vec![0u32; n];
    let mut link_arcs: Vec<Vec<(u32, usize)>> = vec![Vec::new(); n];
    for arc in &graph.arcs {
        let id = res.push(arc.from_node, arc.to_node, arc.cost);
        match arc.kind {
            ArcKind::Entry(i) => entry_arc[i] = id,
            ArcKind::Detection(i) => det_arc[i] = id,
            ArcKind::Link { from, to } => link_arcs[from].push((id, to)),
            ArcKind::Exit(_) => {}
        }
    }

    // Initial potentials: the flowless network is a DAG (every arc moves
    // forward in time), so one relaxation sweep in topological order handles
    // the negative detection arcs exactly. Node numbering already follows
    // that order: source, u_0, v_0, ..., sink would not—sink is node 1—so
    // sweep source first, then the pairs, then pick up the sink.
    let mut pot = vec![f64::INFINITY; graph.node_count];
    pot[FlowGraph::SOURCE] = 0.0;
    let topo: Vec<usize> = std::iter::once(FlowGraph::SOURCE)
        .chain((0..n).flat_map(|i| [FlowGraph::u_node(i), FlowGraph::v_node(i)]))
        .chain(std::iter::once(FlowGraph::SINK))
        .collect();
    for &u in &topo {
        if pot[u].is_infinite() {
            continue;
        }
        for &e in &res.adj[u] {
            let e = e as usize;
            if res.cap[e] > 0 {
                let v = res.to[e];
                let cand = pot[u] + res.cost[e];
                if cand < pot[v] {
                    pot[v] = cand;
                }
            }
        }
    }

    let mut augmentation_costs = Vec::new();
    let mut dist = vec![f64::INFINITY; graph.node_count];
    let mut parent: Vec<Option<u32>> = vec![None; graph.node_count];

    loop {
        // Reduced-cost Dijkstra from the source.
        dist.fill(f64::INFINITY);
        parent.fill(None);
        dist[FlowGraph::SOURCE] = 0.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push(HeapEntry {
            dist: 0.0,
            node: FlowGraph::SOURCE,
        });
        while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for &e in &res.adj[u] {
                let e = e as usize;
                if res.cap[e] == 0 {
                    continue;
                }
                let v = res.to[e];
                let reduced = res.cost[e] + pot[u] - pot[v];
                debug_assert!(reduced > -1e-9, "negative reduced cost {reduced}");
                let cand = du + reduced.max(0.0);
                if cand < dist[v] {
                    dist[v] = cand;
                    parent[v] = Some(e as u32);
                    heap.push(HeapEntry {
                        dist: cand,
                        node: v,
                    });
                }
            }
        }

        if dist[FlowGraph::SINK].is_infinite() {
            break;
        }
        let path_cost = dist[FlowGraph::SINK] + pot[FlowGraph::SINK] - pot[FlowGraph::SOURCE];
        if path_cost >= 0.0 {
            break;
        }
        augmentation_costs.push(path_cost);

        // Augment one unit along the parent chain.
        let mut v = FlowGraph::SINK;
        while v != FlowGraph::SOURCE {
            let e = parent[v].expect("path reaches source") as usize;
            res.cap[e] -= 1;
            res.cap[e ^ 1] += 1;
            v = res.to[e ^ 1];
        }

        // Potential update capped at the sink distance keeps reduced costs
        // nonnegative for unreached nodes.
        let d_sink = dist[FlowGraph::SINK];
        for v in 0..graph.node_count {
            pot[v] += dist[v].min(d_sink);
        }
    }

    // Decode unit flows into chains.
    let mut trajectories = Vec::new();
    let mut flow_cost = 0.0;
    for e in (0..res.to.len()).step_by(2) {
        if res.cap[e] == 0 {
            flow_cost += res.cost[e];
        }
    }
    for (i, &entry) in entry_arc.iter().enumerate() {
        if res.cap[entry as usize] != 0 {
            continue;
        }
        let mut chain = Vec::new();
        let mut cur = i;
        loop {
            debug_assert_eq!(res.cap[det_arc[cur] as usize], 0);
            chain.push(dets[graph.order[cur]]);
            match link_arcs[cur]
                .iter()
                .find(|&&(id, _)| res.cap[id as usize] == 0)
            {
                Some(&(_, next)) => cur = next,
                None => break,
            }
        }
        trajectories.push(Trajectory {
            id: trajectories.len(),
            detections: chain,
        });
    }

    #[cfg(debug_assertions)]
    for traj in &trajectories {
        for pair in traj.detections.windows(2) {
            debug_assert_eq!(pair[1].t, pair[0].t + 1);
            debug_assert!(pair[0].x.distance(&pair[1].x) <= params.k_d);
        }
    }

    Ok(TrackingSolution {
        trajectories,
        flow_cost,
        augmentation_costs,
    })
}

/// The MAP functional: sum of log P(g | J) over all detections plus, per
/// trajectory, -2 entry_cost and the log transition probabilities. Used as
/// the oracle-comparison objective.
pub fn map_log_posterior(
    dets: &[Detection],
    trajs: &[Trajectory],
    params: &TrackingParams,
) -> Result<f64> {
    let mut index: HashMap<(usize, u64, u64), Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        index
            .entry((d.t, d.x.x.to_bits(), d.x.y.to_bits()))
            .or_default()
            .push(i);
    }
    let mut selected = vec![false; dets.len()];
    let mut chain_terms = 0.0;
    for traj in trajs {
        if traj.detections.is_empty() {
            return Err(Error::InvalidInput("empty trajectory".into()));
        }
        for d in &traj.detections {
            let slot = index
                .get_mut(&(d.t, d.x.x.to_bits(), d.x.y.to_bits()))
                .and_then(|v| v.pop())
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "trajectory {} uses a detection not (or no longer) available at t = {}",
                        traj.id, d.t
                    ))
                })?;
            selected[slot] = true;
        }
        chain_terms -= 2.0 * params.entry_cost;
        for pair in traj.detections.windows(2) {
            if pair[1].t != pair[0].t + 1 {
                return Err(Error::InvalidInput(format!(
                    "trajectory {} skips from t = {} to {}",
                    traj.id, pair[0].t, pair[1].t
                )));
            }
            let d = pair[0].x.distance(&pair[1].x);
            if d > params.k_d {
                return Err(Error::InvalidInput(format!(
                    "trajectory {} links {d:.3} mm apart, beyond k_d = {}",
                    traj.id, params.k_d
                )));
            }
            chain_terms += p_link(&pair[0], &pair[1], params)?.ln();
        }
    }
    let mut point_terms = 0.0;
    for (i, d) in dets.iter().enumerate() {
        point_terms += if selected[i] {
            d.prob.ln()
        } else {
            (1.0 - d.prob).ln()
        };
    }
    Ok(point_terms + chain_terms)
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

pub const TRAJECTORY_CSV_HEADER: &str = "traj_id,t,x_mm,y_mm,value,prob";

pub fn trajectories_to_csv(trajs: &[Trajectory]) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for traj in trajs {
        for d in &traj.detections {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                traj.id, d.t, d.x.x, d.x.y, d.value, d.prob
            ));
        }
    }
    out
}

pub fn parse_trajectories_csv(text: &str, path: &str) -> Result<Vec<Trajectory>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut by_id: Vec<(usize, Vec<Detection>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (lineno == 1 && line == TRAJECTORY_CSV_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(lineno, format!("expected 6 fields, got {}", f.len())));
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad {what} '{s}'")))
        };
        let id: usize = f[0]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad trajectory id '{}'", f[0])))?;
        let prob = parse_f64(f[5], "prob")?;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(err(lineno, format!("probability {prob} outside (0, 1)")));
        }
        let det = Detection {
            t: f[1]
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad time index '{}'", f[1])))?,
            x: Point::new(parse_f64(f[2], "x")?, parse_f64(f[3], "y")?),
            value: parse_f64(f[4], "value")?,
            prob,
        };
        match by_id.iter_mut().find(|(i, _)| *i == id) {
            Some((_, dets)) => dets.push(det),
            None => by_id.push((id, vec![det])),
        }
    }
    let mut trajs = Vec::new();
    for (id, dets) in by_id {
        for pair in dets.windows(2) {
            if pair[1].t != pair[0].t + 1 {
                return Err(Error::InvalidInput(format!(
                    "trajectory {id} has non-consecutive times {} -> {}",
                    pair[0].t, pair[1].t
                )));
            }
        }
        trajs.push(Trajectory {
            id,
            detections: dets,
        });
    }
    Ok(trajs)
}

pub fn save_trajectories_csv(trajs: &[Trajectory], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, trajectories_to_csv(trajs)).map_err(|source| Error::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_trajectories_csv(path: &std::path::Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_trajectories_csv(&text, &path.display().to_string())
}
