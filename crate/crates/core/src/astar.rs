//! A* / Dijkstra over the 8-connected grid of admissible vertices.
//!
//! Edge costs are Euclidean center-to-center distances (1 or sqrt(2) grid
//! units, scaled by the resolution). Expansion order is deterministic:
//! ties break on f-cost, then h-cost, then lowest vertex index, so the same
//! query always returns the same path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::{Cell, ClassId, GoalRegion, GridGeometry, SemanticClassTable};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Vertex admissibility under per-cell labels with clearance inflation: a
/// vertex is admissible iff for every cell labeled with a non-free class `k`
/// its center keeps at least `d_k` plus one grid resolution. The extra
/// resolution covers the object filling its whole cell.
pub fn clearance_admissible(
    geometry: &GridGeometry,
    labels: &[ClassId],
    classes: &SemanticClassTable,
) -> Vec<bool> {
    debug_assert_eq!(labels.len(), geometry.cell_count());
    let mut admissible = vec![true; geometry.cell_count()];
    let res = geometry.resolution_m;
    for (j, &label) in labels.iter().enumerate() {
        if label.is_free() {
            continue;
        }
        let clearance = classes.safety_distance(label) + res;
        let reach = (clearance / res).ceil() as i64;
        let center = geometry.cell_at(j);
        let center_p = geometry.center(center);
        let (cr, cc) = (center.row as i64, center.col as i64);
        for r in (cr - reach).max(0)..=(cr + reach).min(geometry.height as i64 - 1) {
            for c in (cc - reach).max(0)..=(cc + reach).min(geometry.width as i64 - 1) {
                let v = Cell::new(r as u32, c as u32);
                if geometry.center(v).distance(center_p) < clearance {
                    admissible[geometry.index(v)] = false;
                }
            }
        }
    }
    admissible
}

/// Heap entry ordered as a min-heap on (f, h, index).
#[derive(Debug, Clone, Copy)]
struct Node {
    f: f64,
    h: f64,
    index: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest key.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Search result: vertex path (start included) and its total cost in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundPath {
    pub cells: Vec<Cell>,
    pub cost_m: f64,
}

fn reconstruct(geometry: &GridGeometry, parents: &[usize], goal: usize, start: usize) -> Vec<Cell> {
    let mut cells = vec![geometry.cell_at(goal)];
    let mut cur = goal;
    while cur != start {
        cur = parents[cur];
        cells.push(geometry.cell_at(cur));
    }
    cells.reverse();
    cells
}

/// Generic best-first search over admissible vertices.
///
/// `is_goal` tests popped vertices; `heuristic` must be admissible and
/// consistent for optimality (pass zero for Dijkstra).
fn search(
    geometry: &GridGeometry,
    admissible: &[bool],
    start: Cell,
    is_goal: impl Fn(usize) -> bool,
    heuristic: impl Fn(usize) -> f64,
) -> Option<FoundPath> {
    debug_assert_eq!(admissible.len(), geometry.cell_count());
    let start_idx = geometry.index(start);
    if !geometry.contains(start) || !admissible[start_idx] {
        return None;
    }

    let n = geometry.cell_count();
    let mut g = vec![f64::INFINITY; n];
    let mut parents = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    g[start_idx] = 0.0;
    open.push(Node { f: heuristic(start_idx), h: heuristic(start_idx), index: start_idx });

    while let Some(node) = open.pop() {
        let idx = node.index;
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if is_goal(idx) {
            return Some(FoundPath {
                cells: reconstruct(geometry, &parents, idx, start_idx),
                cost_m: g[idx],
            });
        }
        let cell = geometry.cell_at(idx);
        for nb in geometry.neighbors8(cell) {
            let nb_idx = geometry.index(nb);
            if closed[nb_idx] || !admissible[nb_idx] {
                continue;
            }
            let step = if nb.row != cell.row && nb.col != cell.col { SQRT_2 } else { 1.0 };
            let tentative = g[idx] + step * geometry.resolution_m;
            if tentative < g[nb_idx] {
                g[nb_idx] = tentative;
                parents[nb_idx] = idx;
                let h = heuristic(nb_idx);
                open.push(Node { f: tentative + h, h, index: nb_idx });
            }
        }
    }
    None
}

/// Shortest admissible path from `start` to any cell of the goal region.
pub fn astar_to_region(
    geometry: &GridGeometry,
    admissible: &[bool],
    start: Cell,
    goal: &GoalRegion,
) -> Option<FoundPath> {
    let goal_center = geometry.center(goal.center());
    let radius = goal.radius_m;
    search(
        geometry,
        admissible,
        start,
        |idx| goal.contains(geometry, geometry.cell_at(idx)),
        |idx| (geometry.center(geometry.cell_at(idx)).distance(goal_center) - radius).max(0.0),
    )
}

/// Shortest admissible path from `start` to any marked target vertex
/// (Dijkstra; nearest target by path cost, ties by lowest vertex index).
pub fn dijkstra_to_targets(
    geometry: &GridGeometry,
    admissible: &[bool],
    start: Cell,
    targets: &[bool],
) -> Option<FoundPath> {
    debug_assert_eq!(targets.len(), geometry.cell_count());
    search(geometry, admissible, start, |idx| targets[idx], |_| 0.0)
}
