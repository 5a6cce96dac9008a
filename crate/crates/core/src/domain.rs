//! Core value types shared by every other module: grid geometry, semantic
//! classes, scenarios, tasks, and the ground-truth safety predicate.
//!
//! Robot states are discretized to cell centers; distances are Euclidean
//! between cell centers, and an object occupies exactly its grid cell. All
//! types are immutable values after construction and safe to share read-only
//! across parallel workers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Most masks and histograms assume class sets fit in a `u32` bitmask.
pub const MAX_CLASSES: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("cell index {index} out of range (grid has {cells} cells)")]
    IndexOutOfRange { index: usize, cells: usize },
    #[error("invalid class table: {0}")]
    InvalidClassTable(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Identifier of a semantic class. Class 0 is always free space.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub const FREE: ClassId = ClassId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_free(self) -> bool {
        self.0 == 0
    }
}

/// One semantic class with its safety distance (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticClass {
    pub id: ClassId,
    pub name: String,
    #[serde(rename = "d_m")]
    pub safety_distance_m: f64,
}

/// Ordered table of semantic classes. Ids are contiguous `0..=K`, class 0 is
/// free space with safety distance 0, every other class has a positive
/// safety distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SemanticClass>", into = "Vec<SemanticClass>")]
pub struct SemanticClassTable {
    classes: Vec<SemanticClass>,
}

impl SemanticClassTable {
    pub fn new(classes: Vec<SemanticClass>) -> Result<Self, DomainError> {
        if classes.is_empty() || classes.len() > MAX_CLASSES {
            return Err(DomainError::InvalidClassTable(format!(
                "need between 1 and {MAX_CLASSES} classes, got {}",
                classes.len()
            )));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id.index() != i {
                return Err(DomainError::InvalidClassTable(format!(
                    "class ids must be contiguous from 0; position {i} has id {}",
                    c.id.0
                )));
            }
            if !c.safety_distance_m.is_finite() || c.safety_distance_m < 0.0 {
                return Err(DomainError::InvalidClassTable(format!(
                    "class {} has invalid safety distance {}",
                    c.name, c.safety_distance_m
                )));
            }
            if i == 0 && c.safety_distance_m != 0.0 {
                return Err(DomainError::InvalidClassTable(
                    "free class (id 0) must have safety distance 0".into(),
                ));
            }
            if i > 0 && c.safety_distance_m == 0.0 {
                return Err(DomainError::InvalidClassTable(format!(
                    "non-free class {} must have a positive safety distance",
                    c.name
                )));
            }
        }
        Ok(Self { classes })
    }

    /// Total number of classes, free space included (`K + 1`).
    #[inline]
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, id: ClassId) -> bool {
        id.index() < self.classes.len()
    }

    #[inline]
    pub fn safety_distance(&self, id: ClassId) -> f64 {
        self.classes[id.index()].safety_distance_m
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.classes[id.index()].name
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn max_safety_distance(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.safety_distance_m)
            .fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SemanticClass> {
        self.classes.iter()
    }

    /// Class ids in table order.
    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.classes.len()).map(|i| ClassId(i as u8))
    }
}

impl TryFrom<Vec<SemanticClass>> for SemanticClassTable {
    type Error = DomainError;
    fn try_from(v: Vec<SemanticClass>) -> Result<Self, DomainError> {
        Self::new(v)
    }
}

impl From<SemanticClassTable> for Vec<SemanticClass> {
    fn from(t: SemanticClassTable) -> Self {
        t.classes
    }
}

/// World position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Grid position (row-major). Robot states are cells, interpreted at the
/// cell center in meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    /// Chebyshev distance in cells; 1 for the 8 neighbors.
    pub fn chebyshev(self, other: Cell) -> u32 {
        let dr = (self.row as i64 - other.row as i64).unsigned_abs();
        let dc = (self.col as i64 - other.col as i64).unsigned_abs();
        dr.max(dc) as u32
    }
}

/// Regular 2D grid. The origin is the world position of the center of cell
/// (0, 0); cell (row, col) has center `origin + (col, row) * resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: u32,
    pub height: u32,
    pub resolution_m: f64,
    pub origin: Point,
}

impl GridGeometry {
    pub fn new(width: u32, height: u32, resolution_m: f64, origin: Point) -> Result<Self, DomainError> {
        if width == 0 || height == 0 {
            return Err(DomainError::InvalidGeometry("grid must be non-empty".into()));
        }
        if !resolution_m.is_finite() || resolution_m <= 0.0 {
            return Err(DomainError::InvalidGeometry(format!(
                "resolution must be positive, got {resolution_m}"
            )));
        }
        Ok(Self { width, height, resolution_m, origin })
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row as usize * self.width as usize + cell.col as usize
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index / w) as u32, (index % w) as u32)
    }

    #[inline]
    pub fn center(&self, cell: Cell) -> Point {
        Point::new(
            self.origin.x + cell.col as f64 * self.resolution_m,
            self.origin.y + cell.row as f64 * self.resolution_m,
        )
    }

    /// Center of the cell with row-major index `j`; errors on out-of-range
    /// indices.
    pub fn cell_center(&self, index: usize) -> Result<Point, DomainError> {
        if index >= self.cell_count() {
            return Err(DomainError::IndexOutOfRange { index, cells: self.cell_count() });
        }
        Ok(self.center(self.cell_at(index)))
    }

    /// Inverse of `cell_center` on cell centers: nearest cell index for a
    /// world position, or `None` when it falls outside the grid.
    pub fn index_of_position(&self, p: Point) -> Option<usize> {
        let col = ((p.x - self.origin.x) / self.resolution_m).round();
        let row = ((p.y - self.origin.y) / self.resolution_m).round();
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let cell = Cell::new(row as u32, col as u32);
        self.contains(cell).then(|| self.index(cell))
    }

    /// The 8-connected neighbors of `cell` that lie inside the grid.
    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 8] = [
            (-1, -1), (-1, 0), (-1, 1),
            (0, -1), (0, 1),
            (1, -1), (1, 0), (1, 1),
        ];
        OFFSETS.iter().filter_map(move |&(dr, dc)| {
            let r = cell.row as i64 + dr;
            let c = cell.col as i64 + dc;
            if r < 0 || c < 0 {
                return None;
            }
            let n = Cell::new(r as u32, c as u32);
            self.contains(n).then_some(n)
        })
    }
}

/// The hidden environment: per-cell true class over a grid. Fixed over time
/// and unknown to the robot; only the sensor simulator and the evaluation
/// harness may look at it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthWorld {
    pub geometry: GridGeometry,
    truth: Vec<ClassId>,
}

impl GroundTruthWorld {
    pub fn new(geometry: GridGeometry, truth: Vec<ClassId>) -> Result<Self, DomainError> {
        if truth.len() != geometry.cell_count() {
            return Err(DomainError::InvalidScenario(format!(
                "truth has {} entries for a {} cell grid",
                truth.len(),
                geometry.cell_count()
            )));
        }
        Ok(Self { geometry, truth })
    }

    #[inline]
    pub fn class_at(&self, index: usize) -> ClassId {
        self.truth[index]
    }

    #[inline]
    pub fn truth(&self) -> &[ClassId] {
        &self.truth
    }

    /// Indices of non-free cells.
    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, ClassId)> + '_ {
        self.truth
            .iter()
            .enumerate()
            .filter(|(_, k)| !k.is_free())
            .map(|(j, k)| (j, *k))
    }
}

/// Goal region: all cells whose center lies within `radius_m` of the center
/// cell's center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub row: u32,
    pub col: u32,
    pub radius_m: f64,
}

impl GoalRegion {
    pub fn center(&self) -> Cell {
        Cell::new(self.row, self.col)
    }

    pub fn contains(&self, geometry: &GridGeometry, cell: Cell) -> bool {
        geometry.center(cell).distance(geometry.center(self.center())) <= self.radius_m
    }

    pub fn cells<'a>(&'a self, geometry: &'a GridGeometry) -> impl Iterator<Item = Cell> + 'a {
        let reach = (self.radius_m / geometry.resolution_m).ceil() as i64;
        let (cr, cc) = (self.row as i64, self.col as i64);
        ((cr - reach).max(0)..=(cr + reach).min(geometry.height as i64 - 1)).flat_map(move |r| {
            ((cc - reach).max(0)..=(cc + reach).min(geometry.width as i64 - 1)).filter_map(
                move |c| {
                    let cell = Cell::new(r as u32, c as u32);
                    self.contains(geometry, cell).then_some(cell)
                },
            )
        })
    }
}

/// A semantic reach-avoid task: reach the goal region while maintaining each
/// class's safety distance from all of its cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub goal: GoalRegion,
    pub classes: SemanticClassTable,
}

/// One mission scenario: the sample drawn from the scenario distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub start: Cell,
    pub world: GroundTruthWorld,
    pub task: Task,
}

impl Scenario {
    /// Checks the structural invariants: start and goal in bounds, goal
    /// region non-empty and free, and neither start nor goal cells already in
    /// violation of the safety constraints against the ground truth.
    pub fn validate(&self) -> Result<(), DomainError> {
        let geom = &self.world.geometry;
        if !geom.contains(self.start) {
            return Err(DomainError::InvalidScenario("start out of bounds".into()));
        }
        if !geom.contains(self.task.goal.center()) {
            return Err(DomainError::InvalidScenario("goal center out of bounds".into()));
        }
        for k in self.world.truth() {
            if !self.task.classes.contains(*k) {
                return Err(DomainError::InvalidScenario(format!(
                    "truth contains unknown class id {}",
                    k.0
                )));
            }
        }
        if !state_is_safe(self.start, &self.world, &self.task.classes) {
            return Err(DomainError::InvalidScenario(
                "start violates safety constraints against ground truth".into(),
            ));
        }
        let mut goal_cells = 0usize;
        for cell in self.task.goal.cells(geom) {
            goal_cells += 1;
            if !self.world.class_at(geom.index(cell)).is_free() {
                return Err(DomainError::InvalidScenario(format!(
                    "goal cell ({}, {}) is not free space",
                    cell.row, cell.col
                )));
            }
            if !state_is_safe(cell, &self.world, &self.task.classes) {
                return Err(DomainError::InvalidScenario(format!(
                    "goal cell ({}, {}) violates safety constraints",
                    cell.row, cell.col
                )));
            }
        }
        if goal_cells == 0 {
            return Err(DomainError::InvalidScenario("goal region is empty".into()));
        }
        Ok(())
    }
}

/// Safety clause of the task for a single state: the state's center keeps at
/// least `d_k` from every cell of every non-free class `k`.
pub fn state_is_safe(state: Cell, world: &GroundTruthWorld, classes: &SemanticClassTable) -> bool {
    let geom = &world.geometry;
    let p = geom.center(state);
    for (j, k) in world.occupied_cells() {
        let d = classes.safety_distance(k);
        if p.distance(geom.center(geom.cell_at(j))) < d {
            return false;
        }
    }
    true
}

/// Ground-truth oracle for task completion: the final state is in the goal
/// region and every state keeps the class-dependent safety distances. Used
/// only by the evaluation harness, never by the planner.
pub fn path_satisfies_task(path: &[Cell], world: &GroundTruthWorld, task: &Task) -> bool {
    let Some(last) = path.last() else {
        return false;
    };
    if !task.goal.contains(&world.geometry, *last) {
        return false;
    }
    path.iter().all(|&s| state_is_safe(s, world, &task.classes))
}

/// Versioned on-disk scenario schema (`schema_version: 1`). Field layout is
/// stable; round-trips are byte-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub seed: u64,
    pub geometry: GridGeometry,
    pub truth: Vec<ClassId>,
    pub classes: Vec<SemanticClass>,
    pub start: Cell,
    pub goal: GoalRegion,
}

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            schema_version: SCENARIO_SCHEMA_VERSION,
            seed: s.seed,
            geometry: s.world.geometry.clone(),
            truth: s.world.truth().to_vec(),
            classes: s.task.classes.clone().into(),
            start: s.start,
            goal: s.task.goal,
        }
    }
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = DomainError;

    fn try_from(f: ScenarioFile) -> Result<Self, DomainError> {
        if f.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(DomainError::InvalidScenario(format!(
                "unsupported scenario schema version {}",
                f.schema_version
            )));
        }
        let classes = SemanticClassTable::new(f.classes)?;
        let world = GroundTruthWorld::new(f.geometry, f.truth)?;
        let scenario = Scenario {
            seed: f.seed,
            start: f.start,
            world,
            task: Task { goal: f.goal, classes },
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DomainError> {
        let file: ScenarioFile = serde_json::from_str(s)
            .map_err(|e| DomainError::InvalidScenario(format!("malformed scenario JSON: {e}")))?;
        Scenario::try_from(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table() -> SemanticClassTable {
        SemanticClassTable::new(vec![
            SemanticClass { id: ClassId(0), name: "free".into(), safety_distance_m: 0.0 },
            SemanticClass { id: ClassId(1), name: "person".into(), safety_distance_m: 4.0 },
            SemanticClass { id: ClassId(2), name: "car".into(), safety_distance_m: 1.0 },
            SemanticClass { id: ClassId(3), name: "truck".into(), safety_distance_m: 2.0 },
            SemanticClass { id: ClassId(4), name: "tree".into(), safety_distance_m: 0.5 },
        ])
        .unwrap()
    }

    fn empty_world(width: u32, height: u32) -> GroundTruthWorld {
        let geom = GridGeometry::new(width, height, 1.0, Point::new(0.0, 0.0)).unwrap();
        let truth = vec![ClassId::FREE; geom.cell_count()];
        GroundTruthWorld::new(geom, truth).unwrap()
    }

    #[test]
    fn cell_center_origin_cell() {
        let geom = GridGeometry::new(10, 10, 1.0, Point::new(0.0, 0.0)).unwrap();
        assert_eq!(geom.cell_center(0).unwrap(), Point::new(0.0, 0.0));
    }

    #[test]
    fn cell_center_row_major() {
        let geom = GridGeometry::new(10, 10, 1.0, Point::new(0.0, 0.0)).unwrap();
        // index 11 = row 1, col 1
        assert_eq!(geom.cell_center(11).unwrap(), Point::new(1.0, 1.0));
    }

    #[test]
    fn cell_center_scaled_offset_origin() {
        let geom = GridGeometry::new(10, 10, 0.5, Point::new(-5.0, -5.0)).unwrap();
        let p = geom.cell_center(3).unwrap();
        assert_eq!(p, Point::new(-3.5, -5.0));
        // round trip: position -> index
        assert_eq!(geom.index_of_position(p), Some(3));
    }

    #[test]
    fn cell_center_out_of_range() {
        let geom = GridGeometry::new(4, 3, 1.0, Point::new(0.0, 0.0)).unwrap();
        assert_eq!(
            geom.cell_center(12),
            Err(DomainError::IndexOutOfRange { index: 12, cells: 12 })
        );
    }

    #[test]
    fn class_table_rejects_bad_free_class() {
        let r = SemanticClassTable::new(vec![SemanticClass {
            id: ClassId(0),
            name: "free".into(),
            safety_distance_m: 1.0,
        }]);
        assert!(r.is_err());
    }

    #[test]
    fn class_table_rejects_noncontiguous_ids() {
        let r = SemanticClassTable::new(vec![
            SemanticClass { id: ClassId(0), name: "free".into(), safety_distance_m: 0.0 },
            SemanticClass { id: ClassId(2), name: "car".into(), safety_distance_m: 1.0 },
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn single_state_path_in_goal_empty_world() {
        let world = empty_world(10, 10);
        let task = Task { goal: GoalRegion { row: 2, col: 2, radius_m: 0.0 }, classes: table() };
        assert!(path_satisfies_task(&[Cell::new(2, 2)], &world, &task));
    }

    #[test]
    fn path_ending_outside_goal_fails() {
        let world = empty_world(10, 10);
        let task = Task { goal: GoalRegion { row: 2, col: 2, radius_m: 0.0 }, classes: table() };
        assert!(!path_satisfies_task(&[Cell::new(0, 0), Cell::new(0, 1)], &world, &task));
    }

    #[test]
    fn empty_path_fails() {
        let world = empty_world(4, 4);
        let task = Task { goal: GoalRegion { row: 0, col: 0, radius_m: 0.0 }, classes: table() };
        assert!(!path_satisfies_task(&[], &world, &task));
    }

    #[test]
    fn truck_clearance_two_meters() {
        // Truck at (5, 5); goal column far right. A pass 3 m from the truck
        // is fine, 1.5 m is not (d_truck = 2 m).
        let geom = GridGeometry::new(12, 12, 1.0, Point::new(0.0, 0.0)).unwrap();
        let mut truth = vec![ClassId::FREE; geom.cell_count()];
        truth[geom.index(Cell::new(5, 5))] = ClassId(3);
        let world = GroundTruthWorld::new(geom, truth).unwrap();
        let task = Task { goal: GoalRegion { row: 8, col: 10, radius_m: 0.0 }, classes: table() };

        let far: Vec<Cell> = (0..=10).map(|c| Cell::new(8, c)).collect(); // 3 m below the truck row
        assert!(path_satisfies_task(&far, &world, &task));

        let mut near: Vec<Cell> = (0..=10).map(|c| Cell::new(6, c)).collect(); // 1 m below
        near.push(Cell::new(7, 10));
        near.push(Cell::new(8, 10));
        assert!(!path_satisfies_task(&near, &world, &task));
    }

    #[test]
    fn safety_monotone_in_distances() {
        // Growing a safety distance can only turn a safe path unsafe.
        let geom = GridGeometry::new(12, 12, 1.0, Point::new(0.0, 0.0)).unwrap();
        let mut truth = vec![ClassId::FREE; geom.cell_count()];
        truth[geom.index(Cell::new(5, 5))] = ClassId(3);
        let world = GroundTruthWorld::new(geom, truth).unwrap();
        let path: Vec<Cell> = (0..=10).map(|c| Cell::new(8, c)).collect();

        let mut grown: Vec<SemanticClass> = table().into();
        grown[3].safety_distance_m = 10.0;
        let task_small = Task { goal: GoalRegion { row: 8, col: 10, radius_m: 0.0 }, classes: table() };
        let task_big = Task {
            goal: GoalRegion { row: 8, col: 10, radius_m: 0.0 },
            classes: SemanticClassTable::new(grown).unwrap(),
        };
        assert!(path_satisfies_task(&path, &world, &task_small));
        assert!(!path_satisfies_task(&path, &world, &task_big));
    }

    #[test]
    fn scenario_json_round_trip_is_byte_exact() {
        let world = empty_world(6, 4);
        let scenario = Scenario {
            seed: 99,
            start: Cell::new(1, 1),
            world,
            task: Task { goal: GoalRegion { row: 2, col: 4, radius_m: 1.0 }, classes: table() },
        };
        let json = scenario.to_json();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(back, scenario);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn scenario_validation_rejects_unsafe_start() {
        let geom = GridGeometry::new(8, 8, 1.0, Point::new(0.0, 0.0)).unwrap();
        let mut truth = vec![ClassId::FREE; geom.cell_count()];
        truth[geom.index(Cell::new(4, 4))] = ClassId(1); // person, d = 4 m
        let world = GroundTruthWorld::new(geom, truth).unwrap();
        let scenario = Scenario {
            seed: 0,
            start: Cell::new(4, 2), // 2 m from the person
            world,
            task: Task { goal: GoalRegion { row: 0, col: 0, radius_m: 0.0 }, classes: table() },
        };
        assert!(matches!(scenario.validate(), Err(DomainError::InvalidScenario(_))));
    }
}
