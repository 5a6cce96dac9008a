//! Online mission loop: sense, fuse, conformalize, plan, execute one step.
//!
//! Each iteration builds per-cell prediction sets from the current belief
//! (conformal, cumulative-prefix, or argmax depending on the framework),
//! assigns every observed cell its most conservative label from the set, and
//! runs A* over the clearance-admissible graph. When no path to the goal
//! exists the planner switches to exploration: it walks toward the nearest
//! admissible vertex next to an observed cell with a non-singleton set (or a
//! frontier vertex when all sets are singletons), shrinking uncertainty until
//! exploitation becomes feasible. Only the first step of any plan is executed
//! before replanning.
//!
//! Missions terminate at the goal, at the step bound, or `stuck` when neither
//! planner can move (for instance when fresh evidence places the robot inside
//! a worst-case clearance radius); stuck missions count as failures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astar::{astar_to_region, clearance_admissible, dijkstra_to_targets};
use crate::conformal::{PredictionSetMap, SetRule};
use crate::domain::{Cell, ClassId, GridGeometry, Scenario, SemanticClassTable};
use crate::mapper::{BeliefMap, Mapper, MapperConfig, MapperError};
use crate::seeding::{self, tags};
use crate::sensor::{Sensor, SensorConfig, SensorError};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("invalid mission setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
}

/// Planning framework under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    /// Conformalized prediction sets with worst-case labels.
    Ours,
    /// Uncertainty-informed baseline: cumulative-probability prefix sets.
    Ui,
    /// Uncertainty-agnostic baseline: most-likely labels.
    Ua,
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Framework::Ours => "ours",
            Framework::Ui => "ui",
            Framework::Ua => "ua",
        })
    }
}

impl std::str::FromStr for Framework {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ours" => Ok(Framework::Ours),
            "ui" => Ok(Framework::Ui),
            "ua" => Ok(Framework::Ua),
            other => Err(format!("unknown framework '{other}' (expected ours, ui or ua)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Exploit,
    Explore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Goal,
    Timeout,
    Stuck,
}

/// Per-iteration planner parameters. `h_max` defaults to
/// `20 * (width + height)` steps, generous enough that timeouts indicate
/// genuine livelock rather than long detours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub h_max: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { h_max: None }
    }
}

impl PlannerConfig {
    pub fn effective_h_max(&self, geometry: &GridGeometry) -> usize {
        self.h_max.unwrap_or(20 * (geometry.width + geometry.height) as usize)
    }
}

/// The executed transition of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAction {
    pub mode: StepMode,
    pub next: Cell,
}

/// One sensing step: where the robot stood, whether every observed cell's
/// prediction set contained its true label, the set-size histogram, and the
/// executed move (absent exactly when the mission got stuck here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub at: Cell,
    pub covered: bool,
    pub set_sizes: Vec<u32>,
    pub action: Option<StepAction>,
}

/// Everything needed to score and replay a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTrace {
    pub scenario_seed: u64,
    pub framework: Framework,
    pub alpha: Option<f64>,
    pub quantile: Option<f64>,
    pub mission_seed: u64,
    pub start: Cell,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub final_state: Cell,
}

impl MissionTrace {
    /// The executed state sequence `x_{0:H}`.
    pub fn path_states(&self) -> Vec<Cell> {
        let mut states = vec![self.start];
        for step in &self.steps {
            if let Some(action) = step.action {
                states.push(action.next);
            }
        }
        states
    }

    pub fn executed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.action.is_some()).count()
    }

    pub fn explore_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.action, Some(StepAction { mode: StepMode::Explore, .. })))
            .count()
    }

    /// Conjunction of per-step coverage bits.
    pub fn all_steps_covered(&self) -> bool {
        self.steps.iter().all(|s| s.covered)
    }
}

/// Most conservative label of a prediction-set bitmask: the member class with
/// the largest safety distance, ties to the lowest class id.
pub fn worst_label_of_mask(mask: u32, classes: &SemanticClassTable) -> ClassId {
    debug_assert!(mask != 0);
    let mut best = ClassId::FREE;
    let mut best_d = -1.0;
    for c in 0..classes.len() {
        if mask & (1 << c) != 0 {
            let d = classes.safety_distance(ClassId(c as u8));
            if d > best_d {
                best_d = d;
                best = ClassId(c as u8);
            }
        }
    }
    best
}

/// Per-cell worst-case labels for a whole set map; cells outside the observed
/// set are free.
pub fn assign_worst_case_labels(
    sets: &PredictionSetMap,
    classes: &SemanticClassTable,
) -> Vec<ClassId> {
    (0..sets.len_cells())
        .map(|j| if sets.is_observed(j) { worst_label_of_mask(sets.mask(j), classes) } else { ClassId::FREE })
        .collect()
}

/// Exploitation: shortest path to the goal region over the admissible graph
/// induced by the labels, or `None` when no such path exists (including the
/// case of an inadmissible start vertex, which the caller surfaces as stuck).
pub fn plan_exploit(
    x: Cell,
    goal: &crate::domain::GoalRegion,
    labels: &[ClassId],
    geometry: &GridGeometry,
    classes: &SemanticClassTable,
) -> Option<Vec<Cell>> {
    let admissible = clearance_admissible(geometry, labels, classes);
    astar_to_region(geometry, &admissible, x, goal).map(|p| p.cells)
}

fn explore_with_admissible(
    x: Cell,
    sets: &PredictionSetMap,
    geometry: &GridGeometry,
    admissible: &[bool],
) -> Option<Vec<Cell>> {
    let cells = geometry.cell_count();
    let x_idx = geometry.index(x);

    // Primary targets: admissible vertices adjacent to an observed cell with
    // a non-singleton prediction set.
    let mut targets = vec![false; cells];
    let mut any = false;
    for j in 0..cells {
        if sets.is_observed(j) && sets.size(j) > 1 {
            let cell = geometry.cell_at(j);
            for v in std::iter::once(cell).chain(geometry.neighbors8(cell)) {
                let vi = geometry.index(v);
                if admissible[vi] && vi != x_idx {
                    targets[vi] = true;
                    any = true;
                }
            }
        }
    }
    if any {
        if let Some(path) = dijkstra_to_targets(geometry, admissible, x, &targets) {
            return Some(path.cells);
        }
    }

    // Fallback: nearest admissible frontier vertex (adjacent to a cell that
    // has never been observed).
    let mut frontier = vec![false; cells];
    let mut any_frontier = false;
    for j in 0..cells {
        if !admissible[j] || j == x_idx {
            continue;
        }
        let cell = geometry.cell_at(j);
        if geometry.neighbors8(cell).any(|n| !sets.is_observed(geometry.index(n))) {
            frontier[j] = true;
            any_frontier = true;
        }
    }
    if any_frontier {
        if let Some(path) = dijkstra_to_targets(geometry, admissible, x, &frontier) {
            return Some(path.cells);
        }
    }
    None
}

/// Exploration: path to the nearest admissible vertex adjacent to an observed
/// cell with a non-singleton set, falling back to the nearest frontier
/// vertex; `None` means the robot is stuck.
pub fn plan_explore(
    x: Cell,
    sets: &PredictionSetMap,
    labels: &[ClassId],
    geometry: &GridGeometry,
    classes: &SemanticClassTable,
) -> Option<Vec<Cell>> {
    let admissible = clearance_admissible(geometry, labels, classes);
    explore_with_admissible(x, sets, geometry, &admissible)
}

/// Direct clearance check of one state against assigned labels: at least
/// `d_k + resolution` from every cell labeled with a non-free class. This is
/// the post-hoc verifier used by trace replay; it deliberately recomputes
/// distances instead of reusing the planner's admissibility map.
pub fn verify_clearance(
    state: Cell,
    labels: &[ClassId],
    geometry: &GridGeometry,
    classes: &SemanticClassTable,
) -> bool {
    let p = geometry.center(state);
    for (j, label) in labels.iter().enumerate() {
        if label.is_free() {
            continue;
        }
        let clearance = classes.safety_distance(*label) + geometry.resolution_m;
        if p.distance(geometry.center(geometry.cell_at(j))) < clearance {
            return false;
        }
    }
    true
}

/// Observer hook for replay verification and debugging: called once per
/// sensing step with the labels and sets the planner acted on.
pub struct StepView<'a> {
    pub index: usize,
    pub labels: &'a [ClassId],
    pub sets: &'a PredictionSetMap,
    pub record: &'a StepRecord,
}

/// Run one mission and record its trace. Deterministic in all arguments: the
/// per-step sensor noise streams derive from the scenario seed alone, so all
/// frameworks and alphas see identical noise on the same scenario.
pub fn run_mission(
    scenario: &Scenario,
    framework: Framework,
    alpha: Option<f64>,
    quantile: Option<f64>,
    sensor_config: &SensorConfig,
    mapper_config: &MapperConfig,
    planner_config: &PlannerConfig,
) -> Result<MissionTrace, MissionError> {
    run_mission_observed(
        scenario,
        framework,
        alpha,
        quantile,
        sensor_config,
        mapper_config,
        planner_config,
        |_| {},
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_mission_observed(
    scenario: &Scenario,
    framework: Framework,
    alpha: Option<f64>,
    quantile: Option<f64>,
    sensor_config: &SensorConfig,
    mapper_config: &MapperConfig,
    planner_config: &PlannerConfig,
    mut observer: impl FnMut(StepView<'_>),
) -> Result<MissionTrace, MissionError> {
    let classes = &scenario.task.classes;
    let rule = match framework {
        Framework::Ours => {
            let q = quantile.ok_or_else(|| {
                MissionError::InvalidSetup("conformal planning needs a quantile".into())
            })?;
            if !(0.0..=1.0).contains(&q) {
                return Err(MissionError::InvalidSetup(format!("quantile {q} outside [0, 1]")));
            }
            SetRule::Conformal { quantile: q }
        }
        Framework::Ui => {
            let a = alpha.ok_or_else(|| {
                MissionError::InvalidSetup("the ui baseline needs an alpha".into())
            })?;
            if !(0.0 < a && a < 1.0) {
                return Err(MissionError::InvalidSetup(format!("alpha {a} outside (0, 1)")));
            }
            SetRule::UiPrefix { alpha: a }
        }
        Framework::Ua => SetRule::UaArgmax,
    };
    if mapper_config.assumed_confusion.classes() != classes.len() {
        return Err(MissionError::InvalidSetup(format!(
            "mapper models {} classes, the scenario has {}",
            mapper_config.assumed_confusion.classes(),
            classes.len()
        )));
    }
    scenario
        .validate()
        .map_err(|e| MissionError::InvalidSetup(format!("invalid scenario: {e}")))?;

    let geometry = scenario.world.geometry.clone();
    let cells = geometry.cell_count();
    let k = classes.len();
    let truth = scenario.world.truth();

    let sensor = Sensor::new(sensor_config.clone(), classes)?;
    let mut mapper = Mapper::new(mapper_config.clone())?;
    let mut belief = BeliefMap::new(geometry.clone(), mapper_config)?;
    let mut sets = PredictionSetMap::new_unobserved(cells, k);
    let mut labels = vec![ClassId::FREE; cells];
    let mut covered = vec![true; cells];
    let mut uncovered_count = 0usize;
    let mut touched: Vec<u32> = Vec::new();

    let mission_seed = seeding::mix2(scenario.seed, tags::MISSION_NOISE);
    let h_max = planner_config.effective_h_max(&geometry);
    let mut x = scenario.start;
    let mut heading = 0.0_f64;
    let mut steps: Vec<StepRecord> = Vec::new();

    let termination = loop {
        if scenario.task.goal.contains(&geometry, x) {
            break Termination::Goal;
        }
        if steps.len() >= h_max {
            break Termination::Timeout;
        }
        let t = steps.len();
        let mut rng = seeding::stream3(mission_seed, tags::STEP, t as u64);
        let measurement = sensor.sense(&scenario.world, x, heading, &mut rng);
        mapper.update(&mut belief, &measurement, &mut touched)?;

        for &cell in &touched {
            let j = cell as usize;
            let mask = rule.mask_for(belief.pmf_of(j));
            sets.update_cell(j, mask);
            labels[j] = worst_label_of_mask(mask, classes);
            let now_covered = mask & (1 << truth[j].index()) != 0;
            if covered[j] != now_covered {
                uncovered_count = if now_covered {
                    uncovered_count - 1
                } else {
                    uncovered_count + 1
                };
                covered[j] = now_covered;
            }
        }

        let admissible = clearance_admissible(&geometry, &labels, classes);
        let planned = astar_to_region(&geometry, &admissible, x, &scenario.task.goal)
            .map(|p| (StepMode::Exploit, p.cells))
            .or_else(|| {
                explore_with_admissible(x, &sets, &geometry, &admissible)
                    .map(|p| (StepMode::Explore, p))
            });

        let action = planned.as_ref().map(|(mode, path)| {
            debug_assert!(path.len() >= 2, "plans always move off the current state");
            StepAction { mode: *mode, next: path[1] }
        });
        let record = StepRecord {
            at: x,
            covered: uncovered_count == 0,
            set_sizes: sets.size_histogram(),
            action,
        };
        observer(StepView { index: t, labels: &labels, sets: &sets, record: &record });
        steps.push(record);

        match action {
            None => break Termination::Stuck,
            Some(StepAction { next, .. }) => {
                let from = geometry.center(x);
                let to = geometry.center(next);
                heading = (to.y - from.y).atan2(to.x - from.x);
                x = next;
            }
        }
    };

    Ok(MissionTrace {
        scenario_seed: scenario.seed,
        framework,
        alpha,
        quantile,
        mission_seed,
        start: scenario.start,
        steps,
        termination,
        final_state: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GoalRegion, GridGeometry, GroundTruthWorld, Point, SemanticClass, Task};
    use crate::sensor::ConfusionMatrix;

    fn table() -> SemanticClassTable {
        SemanticClassTable::new(vec![
            SemanticClass { id: ClassId(0), name: "free".into(), safety_distance_m: 0.0 },
            SemanticClass { id: ClassId(1), name: "person".into(), safety_distance_m: 4.0 },
            SemanticClass { id: ClassId(2), name: "car".into(), safety_distance_m: 1.0 },
            SemanticClass { id: ClassId(3), name: "truck".into(), safety_distance_m: 2.0 },
            SemanticClass { id: ClassId(4), name: "tree".into(), safety_distance_m: 0.5 },
        ])
        .unwrap()
    }

    fn geom(w: u32, h: u32) -> GridGeometry {
        GridGeometry::new(w, h, 1.0, Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn worst_label_picks_largest_distance() {
        let t = table();
        // {tree, person}
        assert_eq!(worst_label_of_mask((1 << 4) | (1 << 1), &t), ClassId(1));
        // {free}
        assert_eq!(worst_label_of_mask(1, &t), ClassId(0));
        // full set -> person has the global max distance
        assert_eq!(worst_label_of_mask(0b11111, &t), ClassId(1));
    }

    #[test]
    fn exploit_straight_path_on_free_labels() {
        let g = geom(8, 8);
        let labels = vec![ClassId::FREE; g.cell_count()];
        let goal = GoalRegion { row: 0, col: 5, radius_m: 0.0 };
        let p = plan_exploit(Cell::new(0, 0), &goal, &labels, &g, &table()).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], Cell::new(0, 0));
        assert_eq!(*p.last().unwrap(), Cell::new(0, 5));
    }

    #[test]
    fn person_wall_with_wide_clearance_disconnects() {
        let g = geom(20, 11);
        let mut labels = vec![ClassId::FREE; g.cell_count()];
        for r in 0..11 {
            labels[g.index(Cell::new(r, 10))] = ClassId(1); // person wall, 5 m clearance
        }
        let goal = GoalRegion { row: 5, col: 18, radius_m: 0.0 };
        assert!(plan_exploit(Cell::new(5, 1), &goal, &labels, &g, &table()).is_none());
    }

    /// Independent oracle: direct distance-checked admissibility plus a
    /// naive O(V^2) uniform-cost search.
    fn oracle_shortest(
        g: &GridGeometry,
        labels: &[ClassId],
        classes: &SemanticClassTable,
        start: Cell,
        goal: Cell,
    ) -> Option<f64> {
        let n = g.cell_count();
        let ok = |cell: Cell| -> bool {
            let p = g.center(cell);
            labels.iter().enumerate().all(|(j, l)| {
                l.is_free()
                    || p.distance(g.center(g.cell_at(j)))
                        >= classes.safety_distance(*l) + g.resolution_m
            })
        };
        if !ok(start) {
            return None;
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[g.index(start)] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                return None;
            }
            if g.cell_at(u) == goal {
                return Some(dist[u]);
            }
            done[u] = true;
            let cu = g.cell_at(u);
            for nb in g.neighbors8(cu) {
                if !ok(nb) {
                    continue;
                }
                let w = if nb.row != cu.row && nb.col != cu.col {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let v = g.index(nb);
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
    }

    #[test]
    fn exploit_matches_independent_oracle() {
        let g = geom(12, 12);
        let t = table();
        let mut labels = vec![ClassId::FREE; g.cell_count()];
        labels[g.index(Cell::new(6, 6))] = ClassId(3); // truck: 3 m clearance
        let start = Cell::new(1, 1);
        let goal = Cell::new(10, 10);
        let p = plan_exploit(start, &GoalRegion { row: 10, col: 10, radius_m: 0.0 }, &labels, &g, &t)
            .unwrap();
        let cost: f64 = p
            .windows(2)
            .map(|w| g.center(w[0]).distance(g.center(w[1])))
            .sum();
        let oracle = oracle_shortest(&g, &labels, &t, start, goal).unwrap();
        assert!((cost - oracle).abs() < 1e-9, "planner {cost} vs oracle {oracle}");
        for state in &p {
            assert!(verify_clearance(*state, &labels, &g, &t));
        }
    }

    #[test]
    fn explore_targets_nearest_nonsingleton() {
        let g = geom(15, 9);
        let t = table();
        let labels = vec![ClassId::FREE; g.cell_count()];
        let mut sets = PredictionSetMap::new_unobserved(g.cell_count(), 5);
        for j in 0..g.cell_count() {
            sets.update_cell(j, 1); // observed, singleton free
        }
        // One ambiguous cell 4 m east of the robot: {free, tree}.
        let ambiguous = Cell::new(4, 8);
        sets.update_cell(g.index(ambiguous), 0b10001);
        let p = plan_explore(Cell::new(4, 4), &sets, &labels, &g, &t).unwrap();
        let target = *p.last().unwrap();
        assert!(target.chebyshev(ambiguous) <= 1);
        assert!(p.len() >= 2);
    }

    #[test]
    fn explore_none_when_fully_observed_and_singleton() {
        let g = geom(9, 9);
        let t = table();
        let labels = vec![ClassId::FREE; g.cell_count()];
        let mut sets = PredictionSetMap::new_unobserved(g.cell_count(), 5);
        for j in 0..g.cell_count() {
            sets.update_cell(j, 1);
        }
        assert!(plan_explore(Cell::new(4, 4), &sets, &labels, &g, &t).is_none());
    }

    fn noiseless_scenario(w: u32, h: u32) -> Scenario {
        let g = geom(w, h);
        let truth = vec![ClassId::FREE; g.cell_count()];
        Scenario {
            seed: 5,
            start: Cell::new(h / 2, 1),
            world: GroundTruthWorld::new(g, truth).unwrap(),
            task: Task { goal: GoalRegion { row: h / 2, col: w - 2, radius_m: 0.0 }, classes: table() },
        }
    }

    fn identity_configs() -> (SensorConfig, MapperConfig) {
        let sensor = SensorConfig {
            range_m: 10.0,
            ray_count: 360,
            true_confusion: ConfusionMatrix::identity(5),
            free_miss_rate: 0.0,
            severity_scale: 0.0,
            fov_deg: None,
        };
        let mut mapper = MapperConfig::uniform_prior(ConfusionMatrix::identity(5));
        mapper.pmf_floor = 1e-300;
        (sensor, mapper)
    }

    #[test]
    fn noiseless_unobstructed_mission_is_direct() {
        let scenario = noiseless_scenario(24, 9);
        let (sensor, mapper) = identity_configs();
        let trace = run_mission(
            &scenario,
            Framework::Ours,
            Some(0.1),
            Some(0.0),
            &sensor,
            &mapper,
            &PlannerConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Goal);
        assert_eq!(trace.explore_steps(), 0);
        assert_eq!(trace.executed_steps(), 21); // straight line, 21 moves
        assert!(trace.all_steps_covered());
        // Identity noise: every set is the true singleton.
        for s in &trace.steps {
            let observed: u32 = s.set_sizes.iter().sum();
            assert_eq!(s.set_sizes[0], observed, "non-singleton set in noiseless run");
        }
    }

    #[test]
    fn mission_is_deterministic() {
        let scenario = noiseless_scenario(20, 9);
        let (sensor, mapper) = identity_configs();
        let args = (Framework::Ours, Some(0.1), Some(0.0));
        let a = run_mission(&scenario, args.0, args.1, args.2, &sensor, &mapper, &PlannerConfig::default())
            .unwrap();
        let b = run_mission(&scenario, args.0, args.1, args.2, &sensor, &mapper, &PlannerConfig::default())
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturated_quantile_sticks_immediately() {
        // quantile 1: every observed cell gets the full set, the robot's own
        // cell is labeled person, and no admissible vertex remains reachable.
        let scenario = noiseless_scenario(20, 9);
        let (sensor, mapper) = identity_configs();
        let trace = run_mission(
            &scenario,
            Framework::Ours,
            Some(0.1),
            Some(1.0),
            &sensor,
            &mapper,
            &PlannerConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Stuck);
        assert_eq!(trace.executed_steps(), 0);
        assert!(trace.all_steps_covered()); // full sets always cover
    }

    #[test]
    fn step_bound_terminates_missions() {
        let scenario = noiseless_scenario(24, 9);
        let (sensor, mapper) = identity_configs();
        let trace = run_mission(
            &scenario,
            Framework::Ours,
            Some(0.1),
            Some(0.0),
            &sensor,
            &mapper,
            &PlannerConfig { h_max: Some(3) },
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Timeout);
        assert_eq!(trace.executed_steps(), 3);
    }

    #[test]
    fn consecutive_states_are_eight_neighbors() {
        let scenario = noiseless_scenario(24, 9);
        let (sensor, mapper) = identity_configs();
        let trace = run_mission(
            &scenario,
            Framework::Ua,
            None,
            None,
            &sensor,
            &mapper,
            &PlannerConfig::default(),
        )
        .unwrap();
        let states = trace.path_states();
        for w in states.windows(2) {
            assert_eq!(w[0].chebyshev(w[1]), 1);
        }
        assert_eq!(trace.termination, Termination::Goal);
    }
}
