//! Scenario distribution: samples i.i.d. mission scenarios from a
//! configurable world family.
//!
//! The default family mirrors a 70 x 25 m yard with three parallel rows of
//! three trees at fixed positions, one car and one truck at uniform random
//! position and orientation, and one person biased toward the trees (the
//! occlusion stress case). Start and goal are sampled uniformly over cells
//! that are admissible under the ground-truth clearances, with a minimum
//! start-goal separation, and every scenario is rejection-sampled until a
//! ground-truth-feasible start-to-goal path exists.
//!
//! Placement keeps any high-clearance object far enough from lower-clearance
//! occluders that a robot hugging the occluder's clearance circle cannot be
//! forced into the hidden object's safety radius while it is still occluded;
//! without this margin some worlds are unwinnable by construction for any
//! planner that only reasons about observed cells.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astar::{astar_to_region, clearance_admissible};
use crate::domain::{
    Cell, ClassId, DomainError, GoalRegion, GridGeometry, GroundTruthWorld, Scenario,
    SemanticClassTable, Task,
};
use crate::seeding::{self, tags};

#[derive(Debug, Error)]
pub enum WorldGenError {
    #[error("invalid distribution config: {0}")]
    InvalidConfig(String),
    #[error("seed {seed}: retry budget ({attempts}) exhausted; last failure: {constraint}")]
    RetriesExhausted { seed: u64, attempts: u32, constraint: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Out-of-distribution toggles: randomized tree layout and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    pub randomize_tree_layout: bool,
    pub tree_count_range: (u32, u32),
}

/// Placement rule for a movable object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Placement {
    /// Uniform over positions and orientations.
    Uniform,
    /// With probability `bias`, restrict to cells within `radius_cells`
    /// (Chebyshev) of a tree; otherwise uniform.
    NearTrees { bias: f64, radius_cells: u32 },
}

/// One movable object family: `count` objects of `footprint_len` x 1 cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_id: ClassId,
    pub count: u32,
    pub footprint_len: u32,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub geometry: GridGeometry,
    pub classes: SemanticClassTable,
    pub tree_class: ClassId,
    pub tree_cells: Vec<Cell>,
    pub objects: Vec<ObjectSpec>,
    pub min_start_goal_separation_m: f64,
    pub goal_radius_m: f64,
    pub retry_budget: u32,
    pub ood: OodConfig,
}

impl DistributionConfig {
    /// The default desk-scale family: 70 x 25 m at 1 m resolution, five
    /// classes, nine fixed trees, one car, one truck, one person near trees.
    pub fn default_desk() -> Self {
        use crate::domain::{Point, SemanticClass};
        let geometry = GridGeometry::new(70, 25, 1.0, Point::new(0.0, 0.0)).unwrap();
        let classes = SemanticClassTable::new(vec![
            SemanticClass { id: ClassId(0), name: "free".into(), safety_distance_m: 0.0 },
            SemanticClass { id: ClassId(1), name: "person".into(), safety_distance_m: 4.0 },
            SemanticClass { id: ClassId(2), name: "car".into(), safety_distance_m: 1.0 },
            SemanticClass { id: ClassId(3), name: "truck".into(), safety_distance_m: 2.0 },
            SemanticClass { id: ClassId(4), name: "tree".into(), safety_distance_m: 0.5 },
        ])
        .unwrap();
        let mut tree_cells = Vec::new();
        for col in [25u32, 35, 45] {
            for row in [6u32, 12, 18] {
                tree_cells.push(Cell::new(row, col));
            }
        }
        DistributionConfig {
            geometry,
            classes,
            tree_class: ClassId(4),
            tree_cells,
            objects: vec![
                ObjectSpec {
                    class_id: ClassId(2),
                    count: 1,
                    footprint_len: 2,
                    placement: Placement::Uniform,
                },
                ObjectSpec {
                    class_id: ClassId(3),
                    count: 1,
                    footprint_len: 3,
                    placement: Placement::Uniform,
                },
                ObjectSpec {
                    class_id: ClassId(1),
                    count: 1,
                    footprint_len: 1,
                    placement: Placement::NearTrees { bias: 0.7, radius_cells: 4 },
                },
            ],
            min_start_goal_separation_m: 30.0,
            goal_radius_m: 1.0,
            retry_budget: 1000,
            ood: OodConfig { randomize_tree_layout: false, tree_count_range: (6, 12) },
        }
    }

    pub fn validate(&self) -> Result<(), WorldGenError> {
        let bad = |msg: String| Err(WorldGenError::InvalidConfig(msg));
        if !self.classes.contains(self.tree_class) || self.tree_class.is_free() {
            return bad(format!("tree class id {} invalid", self.tree_class.0));
        }
        for c in &self.tree_cells {
            if !self.geometry.contains(*c) {
                return bad(format!("tree cell ({}, {}) out of bounds", c.row, c.col));
            }
        }
        for o in &self.objects {
            if !self.classes.contains(o.class_id) || o.class_id.is_free() {
                return bad(format!("object class id {} invalid", o.class_id.0));
            }
            if o.footprint_len == 0 {
                return bad("object footprint must be at least one cell".into());
            }
            if let Placement::NearTrees { bias, radius_cells } = o.placement {
                if !(0.0..=1.0).contains(&bias) {
                    return bad(format!("near-tree bias {bias} outside [0, 1]"));
                }
                if radius_cells == 0 {
                    return bad("near-tree radius must be positive".into());
                }
            }
        }
        if self.min_start_goal_separation_m < 0.0 || self.goal_radius_m < 0.0 {
            return bad("separations and radii must be non-negative".into());
        }
        if self.retry_budget == 0 {
            return bad("retry budget must be positive".into());
        }
        let (lo, hi) = self.ood.tree_count_range;
        if lo > hi || hi as usize > self.geometry.cell_count() / 4 {
            return bad(format!("tree count range ({lo}, {hi}) invalid"));
        }
        Ok(())
    }
}

/// Minimum center distance between cells of classes `a` and `b` so that
/// neither object can sit hidden inside the other's safety radius while a
/// robot rides the occluder's clearance circle.
fn required_separation(classes: &SemanticClassTable, a: ClassId, b: ClassId, res: f64) -> f64 {
    const PAD: f64 = 0.5;
    let da = classes.safety_distance(a);
    let db = classes.safety_distance(b);
    let gap = (da - (db + res)).max(db - (da + res)).max(0.0);
    if gap > 0.0 {
        gap + PAD
    } else {
        0.0
    }
}

struct Builder<'a> {
    config: &'a DistributionConfig,
    truth: Vec<ClassId>,
    occupied: Vec<(usize, ClassId)>,
}

impl<'a> Builder<'a> {
    fn new(config: &'a DistributionConfig) -> Self {
        Self {
            config,
            truth: vec![ClassId::FREE; config.geometry.cell_count()],
            occupied: Vec::new(),
        }
    }

    fn can_place(&self, cells: &[Cell], class: ClassId) -> bool {
        let geom = &self.config.geometry;
        for c in cells {
            if !geom.contains(*c) || !self.truth[geom.index(*c)].is_free() {
                return false;
            }
            let p = geom.center(*c);
            for (j, k) in &self.occupied {
                let sep = required_separation(&self.config.classes, class, *k, geom.resolution_m);
                if sep > 0.0 && p.distance(geom.center(geom.cell_at(*j))) < sep {
                    return false;
                }
            }
        }
        true
    }

    fn place(&mut self, cells: &[Cell], class: ClassId) {
        let geom = &self.config.geometry;
        for c in cells {
            let j = geom.index(*c);
            self.truth[j] = class;
            self.occupied.push((j, class));
        }
    }

    fn footprint(&self, anchor: Cell, len: u32, horizontal: bool) -> Vec<Cell> {
        (0..len)
            .map(|i| {
                if horizontal {
                    Cell::new(anchor.row, anchor.col.saturating_add(i))
                } else {
                    Cell::new(anchor.row.saturating_add(i), anchor.col)
                }
            })
            .collect()
    }

    fn random_cell(&self, rng: &mut ChaCha8Rng) -> Cell {
        let geom = &self.config.geometry;
        Cell::new(rng.gen_range(0..geom.height), rng.gen_range(0..geom.width))
    }

    /// Cells within `radius` (Chebyshev) of any tree that could host the
    /// object under the separation rules.
    fn near_tree_candidates(&self, class: ClassId, radius: u32) -> Vec<Cell> {
        let geom = &self.config.geometry;
        let mut out = Vec::new();
        for j in 0..geom.cell_count() {
            let cell = geom.cell_at(j);
            if !self.truth[j].is_free() {
                continue;
            }
            let near = self
                .occupied
                .iter()
                .filter(|(_, k)| *k == self.config.tree_class)
                .any(|(t, _)| geom.cell_at(*t).chebyshev(cell) <= radius);
            if near && self.can_place(&[cell], class) {
                out.push(cell);
            }
        }
        out
    }
}

/// Deterministic function of `(config, seed)`: places objects by rejection
/// sampling, then start and goal, and verifies ground-truth feasibility.
pub fn sample_scenario(
    config: &DistributionConfig,
    seed: u64,
) -> Result<Scenario, WorldGenError> {
    config.validate()?;
    let geom = &config.geometry;
    let mut rng = seeding::stream2(seed, tags::WORLDGEN);
    let mut last_failure = String::from("no attempt made");

    'attempt: for _ in 0..config.retry_budget {
        let mut b = Builder::new(config);

        // Trees: fixed layout in-distribution, randomized under OOD.
        if config.ood.randomize_tree_layout {
            let (lo, hi) = config.ood.tree_count_range;
            let count = rng.gen_range(lo..=hi);
            let mut placed = 0;
            let mut tries = 0;
            while placed < count {
                tries += 1;
                if tries > 200 {
                    last_failure = "could not place randomized trees".into();
                    continue 'attempt;
                }
                let cell = b.random_cell(&mut rng);
                if b.can_place(&[cell], config.tree_class) {
                    b.place(&[cell], config.tree_class);
                    placed += 1;
                }
            }
        } else {
            for cell in &config.tree_cells {
                if !b.can_place(&[*cell], config.tree_class) {
                    last_failure = format!("fixed tree at ({}, {}) unplaceable", cell.row, cell.col);
                    continue 'attempt;
                }
                b.place(&[*cell], config.tree_class);
            }
        }

        // Movable objects.
        for spec in &config.objects {
            for _ in 0..spec.count {
                let mut placed = false;
                for _ in 0..200 {
                    let (anchor, horizontal) = match &spec.placement {
                        Placement::Uniform => (b.random_cell(&mut rng), rng.gen::<bool>()),
                        Placement::NearTrees { bias, radius_cells } => {
                            if rng.gen::<f64>() < *bias {
                                let candidates =
                                    b.near_tree_candidates(spec.class_id, *radius_cells);
                                if candidates.is_empty() {
                                    (b.random_cell(&mut rng), rng.gen::<bool>())
                                } else {
                                    (candidates[rng.gen_range(0..candidates.len())], rng.gen())
                                }
                            } else {
                                (b.random_cell(&mut rng), rng.gen::<bool>())
                            }
                        }
                    };
                    let cells = b.footprint(anchor, spec.footprint_len, horizontal);
                    if b.can_place(&cells, spec.class_id) {
                        b.place(&cells, spec.class_id);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    last_failure = format!(
                        "could not place object of class {}",
                        config.classes.name(spec.class_id)
                    );
                    continue 'attempt;
                }
            }
        }

        // Start and goal over ground-truth-admissible cells.
        let admissible = clearance_admissible(geom, &b.truth, &config.classes);
        let candidates: Vec<usize> = (0..geom.cell_count()).filter(|&j| admissible[j]).collect();
        if candidates.is_empty() {
            last_failure = "no admissible start candidates".into();
            continue 'attempt;
        }
        let start = geom.cell_at(candidates[rng.gen_range(0..candidates.len())]);

        let start_p = geom.center(start);
        let goal_candidates: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&j| {
                let cell = geom.cell_at(j);
                if geom.center(cell).distance(start_p) < config.min_start_goal_separation_m {
                    return false;
                }
                let region = GoalRegion { row: cell.row, col: cell.col, radius_m: config.goal_radius_m };
                let all_safe = region.cells(geom).all(|gc| {
                    let gj = geom.index(gc);
                    b.truth[gj].is_free() && {
                        // Eq. 1 safety of each goal cell against the truth.
                        let p = geom.center(gc);
                        b.occupied.iter().all(|(oj, k)| {
                            p.distance(geom.center(geom.cell_at(*oj)))
                                >= config.classes.safety_distance(*k)
                        })
                    }
                });
                all_safe
            })
            .collect();
        if goal_candidates.is_empty() {
            last_failure = "no goal candidate far enough from start".into();
            continue 'attempt;
        }
        let goal_cell = geom.cell_at(goal_candidates[rng.gen_range(0..goal_candidates.len())]);
        let goal = GoalRegion { row: goal_cell.row, col: goal_cell.col, radius_m: config.goal_radius_m };

        if astar_to_region(geom, &admissible, start, &goal).is_none() {
            last_failure = "start and goal in different admissible components".into();
            continue 'attempt;
        }

        let world = GroundTruthWorld::new(geom.clone(), b.truth)?;
        let scenario = Scenario {
            seed,
            start,
            world,
            task: Task { goal, classes: config.classes.clone() },
        };
        scenario.validate()?;
        return Ok(scenario);
    }

    Err(WorldGenError::RetriesExhausted {
        seed,
        attempts: config.retry_budget,
        constraint: last_failure,
    })
}

/// Scenarios for seeds `base_seed .. base_seed + n`; a batch is a prefix of
/// any longer batch with the same base seed.
pub fn sample_batch(
    config: &DistributionConfig,
    base_seed: u64,
    n: usize,
) -> Result<Vec<Scenario>, WorldGenError> {
    assert!(n >= 1);
    (0..n as u64).map(|i| sample_scenario(config, base_seed.wrapping_add(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scenario() {
        let cfg = DistributionConfig::default_desk();
        let a = sample_scenario(&cfg, 12345).unwrap();
        let b = sample_scenario(&cfg, 12345).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = DistributionConfig::default_desk();
        let a = sample_scenario(&cfg, 1).unwrap();
        let b = sample_scenario(&cfg, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_objects_gives_all_free_world() {
        let mut cfg = DistributionConfig::default_desk();
        cfg.objects.clear();
        cfg.tree_cells.clear();
        let s = sample_scenario(&cfg, 9).unwrap();
        assert!(s.world.truth().iter().all(|k| k.is_free()));
    }

    #[test]
    fn thousand_seeds_all_valid() {
        // Distribution-level guarantee: every sampled scenario passes the
        // domain invariant checker.
        let cfg = DistributionConfig::default_desk();
        for seed in 0..1000u64 {
            let s = sample_scenario(&cfg, seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            s.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(s.seed, seed);
        }
    }

    #[test]
    fn batch_is_prefix_of_longer_batch() {
        let cfg = DistributionConfig::default_desk();
        let short = sample_batch(&cfg, 100, 5).unwrap();
        let long = sample_batch(&cfg, 100, 10).unwrap();
        assert_eq!(short[..], long[..5]);
        assert_eq!(short[0], sample_scenario(&cfg, 100).unwrap());
    }

    #[test]
    fn fifty_scenarios_distinct() {
        let cfg = DistributionConfig::default_desk();
        let batch = sample_batch(&cfg, 7, 50).unwrap();
        assert_eq!(batch.len(), 50);
        for i in 0..batch.len() {
            for j in (i + 1)..batch.len() {
                assert_ne!(batch[i], batch[j]);
            }
        }
    }

    #[test]
    fn ood_randomizes_trees_and_stays_valid() {
        let mut cfg = DistributionConfig::default_desk();
        cfg.ood.randomize_tree_layout = true;
        let tree = cfg.tree_class;
        let mut counts = std::collections::HashSet::new();
        for seed in 0..40u64 {
            let s = sample_scenario(&cfg, seed).unwrap();
            s.validate().unwrap();
            let n = s.world.truth().iter().filter(|k| **k == tree).count();
            assert!((6..=12).contains(&n));
            counts.insert(n);
        }
        assert!(counts.len() > 1, "tree count should vary");
    }

    #[test]
    fn person_keeps_occlusion_trap_distance() {
        // The person must stay far enough from lower-clearance objects that
        // no admissible robot position has it hidden inside its own safety
        // radius.
        let cfg = DistributionConfig::default_desk();
        for seed in 0..200u64 {
            let s = sample_scenario(&cfg, seed).unwrap();
            let geom = &s.world.geometry;
            for (pj, pk) in s.world.occupied_cells() {
                if pk != ClassId(1) {
                    continue;
                }
                let p = geom.center(geom.cell_at(pj));
                for (oj, ok) in s.world.occupied_cells() {
                    if oj == pj {
                        continue;
                    }
                    let sep = required_separation(&cfg.classes, pk, ok, geom.resolution_m);
                    if sep > 0.0 {
                        assert!(
                            p.distance(geom.center(geom.cell_at(oj))) >= sep,
                            "seed {seed}: person too close to class {}",
                            ok.0
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn overdense_config_reports_constraint() {
        let mut cfg = DistributionConfig::default_desk();
        // A person count that cannot satisfy the pairwise separations.
        cfg.objects[2].count = 60;
        cfg.retry_budget = 5;
        match sample_scenario(&cfg, 3) {
            Err(WorldGenError::RetriesExhausted { seed, constraint, .. }) => {
                assert_eq!(seed, 3);
                assert!(!constraint.is_empty());
            }
            other => panic!("expected retry exhaustion, got {other:?}"),
        }
    }
}
