//! Independent oracles shared by the integration and acceptance suites.
//! Everything here recomputes expected values from first principles, never
//! through the implementation path it checks.
//!
//! Each test binary compiles its own copy and uses a subset.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use touchmap_core::geom::Point;
use touchmap_core::preprocess::Detection;
use touchmap_core::tracking::TrackingParams;
use touchmap_core::workspace::ConflictSet;

// ---------------------------------------------------------------------------
// Normal CDF by quadrature
// ---------------------------------------------------------------------------

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 4] = [
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL_WEIGHTS: [f64; 4] = [
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

fn gauss_legendre_panel(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..4 {
        acc += GL_WEIGHTS[k] * (f(mid + half * GL_NODES[k]) + f(mid - half * GL_NODES[k]));
    }
    acc * half
}

/// Standard normal CDF via composite Gauss-Legendre integration of the
/// density; far more accurate than the 1e-12 comparisons need.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let y = x.abs().min(40.0);
    let panels = 64;
    let mut integral = 0.0;
    for k in 0..panels {
        let a = y * k as f64 / panels as f64;
        let b = y * (k + 1) as f64 / panels as f64;
        integral += gauss_legendre_panel(density, a, b);
    }
    if x >= 0.0 {
        0.5 + integral
    } else {
        0.5 - integral
    }
}

// ---------------------------------------------------------------------------
// Exhaustive MAP tracking oracle
// ---------------------------------------------------------------------------

/// Maximum of the MAP log-posterior over every disjoint trajectory set, by
/// enumerating all time-contiguous chains and exactly packing them.
pub fn best_posterior_by_enumeration(dets: &[Detection], params: &TrackingParams) -> f64 {
    let n = dets.len();
    assert!(n <= 20, "enumeration oracle is for small instances");
    let baseline: f64 = dets.iter().map(|d| (1.0 - d.prob).ln()).sum();

    // Selecting a chain swaps log(1-p) for log(p) on its members and adds
    // entry/exit and link terms.
    let mut chains: Vec<(u32, f64)> = Vec::new();
    let link = |a: usize, b: usize| -> Option<f64> {
        if dets[b].t != dets[a].t + 1 {
            return None;
        }
        let d = dets[a].x.distance(&dets[b].x);
        (d < params.k_d).then(|| (1.0 - d / params.k_d).ln())
    };
    let gain_of = |i: usize| dets[i].prob.ln() - (1.0 - dets[i].prob).ln();

    fn extend(
        last: usize,
        mask: u32,
        gain: f64,
        dets: &[Detection],
        link: &dyn Fn(usize, usize) -> Option<f64>,
        gain_of: &dyn Fn(usize) -> f64,
        chains: &mut Vec<(u32, f64)>,
        entry_cost: f64,
    ) {
        chains.push((mask, gain - 2.0 * entry_cost));
        for next in 0..dets.len() {
            if mask & (1 << next) != 0 {
                continue;
            }
            if let Some(link_gain) = link(last, next) {
                extend(
                    next,
                    mask | (1 << next),
                    gain + gain_of(next) + link_gain,
                    dets,
                    link,
                    gain_of,
                    chains,
                    entry_cost,
                );
            }
        }
    }

    for start in 0..n {
        extend(
            start,
            1 << start,
            gain_of(start),
            dets,
            &link,
            &gain_of,
            &mut chains,
            params.entry_cost,
        );
    }

    // Best disjoint packing by memoized search over used-detection masks.
    fn best_packing(used: u32, chains: &[(u32, f64)], memo: &mut HashMap<u32, f64>) -> f64 {
        if let Some(&v) = memo.get(&used) {
            return v;
        }
        let mut best = 0.0f64;
        for &(mask, gain) in chains {
            if mask & used == 0 {
                best = best.max(gain + best_packing(used | mask, chains, memo));
            }
        }
        memo.insert(used, best);
        best
    }

    baseline + best_packing(0, &chains, &mut HashMap::new())
}

// ---------------------------------------------------------------------------
// Hall feasibility by subset enumeration
// ---------------------------------------------------------------------------

/// Hall's condition checked directly: every subset of trajectories must see
/// at least as many workspaces as it has members.
pub fn hall_feasible_by_enumeration(neighbor_sets: &[Vec<usize>]) -> bool {
    let n = neighbor_sets.len();
    assert!(n <= 20);
    for mask in 1u32..(1 << n) {
        let mut union = BTreeSet::new();
        let mut size = 0;
        for (i, ws) in neighbor_sets.iter().enumerate() {
            if mask & (1 << i) != 0 {
                size += 1;
                union.extend(ws.iter().copied());
            }
        }
        if union.len() < size {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Constrained selection by subset enumeration
// ---------------------------------------------------------------------------

/// Maximum total score over every subset that contains no complete conflict
/// set.
pub fn best_selection_by_enumeration(
    scores: &BTreeMap<usize, f64>,
    conflicts: &[ConflictSet],
) -> f64 {
    let ids: Vec<usize> = scores.keys().copied().collect();
    let n = ids.len();
    assert!(n <= 20);
    let index_of: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let conflict_masks: Vec<u32> = conflicts
        .iter()
        .filter_map(|c| {
            c.ids
                .iter()
                .map(|id| index_of.get(id).map(|&k| 1u32 << k))
                .try_fold(0u32, |m, bit| bit.map(|b| m | b))
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for subset in 0u32..(1 << n) {
        if conflict_masks.iter().any(|&c| c != 0 && c & subset == c) {
            continue;
        }
        let total: f64 = (0..n)
            .filter(|k| subset & (1 << k) != 0)
            .map(|k| scores[&ids[k]])
            .sum();
        best = best.max(total);
    }
    best
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

pub fn random_detections(
    rng: &mut impl rand::Rng,
    max_detections: usize,
    max_frames: usize,
) -> Vec<Detection> {
    let n = rng.random_range(1..=max_detections);
    (0..n)
        .map(|_| Detection {
            t: rng.random_range(0..max_frames),
            x: Point::new(rng.random_range(0.0..120.0), rng.random_range(0.0..90.0)),
            value: rng.random_range(0.0..3.0),
            prob: rng.random_range(0.021..0.979),
        })
        .collect()
}
