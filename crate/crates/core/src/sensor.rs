//! Omnidirectional labeled range sensor simulator.
//!
//! Rays are cast from the robot's cell center against the ground-truth grid
//! with an Amanatides-Woo traversal. The first non-free cell along a ray
//! blocks it; if that cell's center lies within the sensor range it produces
//! a hit record whose label is sampled from the *true* confusion matrix (a
//! model the mapper never sees). Free cells crossed within range produce
//! free-space evidence. Geometry is exact: only labels are noisy.
//!
//! A cell counts as "in range" when its center is within `range_m` of the
//! sensor. An occupied cell crossed by a ray within range always yields a hit
//! record, even when the sampled label is wrong (including a wrong `free`
//! label), which is exactly the error mode conformal calibration has to
//! absorb downstream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Cell, ClassId, GroundTruthWorld, Point, SemanticClassTable};

#[derive(Debug, Error, PartialEq)]
pub enum SensorError {
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
}

/// Row-stochastic (K+1) x (K+1) matrix; entry [k][y] is the probability that
/// a hit on a cell of true class k reports label y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfusionMatrixFile", into = "ConfusionMatrixFile")]
pub struct ConfusionMatrix {
    k: usize,
    rows: Vec<f64>,
}

/// On-disk form: class count plus row-major entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfusionMatrixFile {
    classes: usize,
    rows: Vec<f64>,
}

impl ConfusionMatrix {
    const ROW_SUM_TOL: f64 = 1e-9;

    pub fn new(k: usize, rows: Vec<f64>) -> Result<Self, SensorError> {
        if k == 0 || rows.len() != k * k {
            return Err(SensorError::InvalidConfusion(format!(
                "expected {k}x{k} entries, got {}",
                rows.len()
            )));
        }
        for r in 0..k {
            let row = &rows[r * k..(r + 1) * k];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(SensorError::InvalidConfusion(format!("row {r} has negative entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(SensorError::InvalidConfusion(format!(
                    "row {r} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { k, rows })
    }

    pub fn identity(k: usize) -> Self {
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            rows[i * k + i] = 1.0;
        }
        Self { k, rows }
    }

    /// Diagonal `diag`, remaining mass spread uniformly over the other labels.
    pub fn uniform_offdiag(k: usize, diag: f64) -> Result<Self, SensorError> {
        if k < 2 || !(0.0..=1.0).contains(&diag) {
            return Err(SensorError::InvalidConfusion(format!(
                "uniform_offdiag needs k >= 2 and diag in [0,1], got k={k} diag={diag}"
            )));
        }
        let off = (1.0 - diag) / (k as f64 - 1.0);
        let mut rows = vec![off; k * k];
        for i in 0..k {
            rows[i * k + i] = diag;
        }
        Self::new(k, rows)
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, true_class: ClassId) -> &[f64] {
        let i = true_class.index();
        &self.rows[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, true_class: ClassId, label: ClassId) -> f64 {
        self.rows[true_class.index() * self.k + label.index()]
    }

    /// Linear interpolation toward the uniform matrix: 0 keeps the matrix
    /// unchanged, 1 is uniform label noise.
    pub fn toward_uniform(&self, severity: f64) -> ConfusionMatrix {
        let u = 1.0 / self.k as f64;
        let rows = self.rows.iter().map(|p| (1.0 - severity) * p + severity * u).collect();
        ConfusionMatrix { k: self.k, rows }
    }
}

impl TryFrom<ConfusionMatrixFile> for ConfusionMatrix {
    type Error = SensorError;
    fn try_from(f: ConfusionMatrixFile) -> Result<Self, SensorError> {
        Self::new(f.classes, f.rows)
    }
}

impl From<ConfusionMatrix> for ConfusionMatrixFile {
    fn from(m: ConfusionMatrix) -> Self {
        ConfusionMatrixFile { classes: m.k, rows: m.rows }
    }
}

/// Sensor parameters. `severity_scale` interpolates the true confusion
/// toward uniform noise (the out-of-distribution knob); `fov_deg` restricts
/// the bearings to a sector around the robot heading and is a stress
/// configuration with no coverage claim attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub range_m: f64,
    pub ray_count: u32,
    pub true_confusion: ConfusionMatrix,
    pub free_miss_rate: f64,
    pub severity_scale: f64,
    pub fov_deg: Option<f64>,
}

impl SensorConfig {
    pub fn validate(&self, classes: &SemanticClassTable) -> Result<(), SensorError> {
        if !self.range_m.is_finite() || self.range_m <= 0.0 {
            return Err(SensorError::InvalidConfig(format!("range {} must be positive", self.range_m)));
        }
        if self.ray_count == 0 {
            return Err(SensorError::InvalidConfig("ray_count must be positive".into()));
        }
        if self.true_confusion.classes() != classes.len() {
            return Err(SensorError::InvalidConfig(format!(
                "confusion matrix is {}x{0} but the class table has {} classes",
                self.true_confusion.classes(),
                classes.len()
            )));
        }
        if !(0.0..1.0).contains(&self.free_miss_rate) {
            return Err(SensorError::InvalidConfig(format!(
                "free_miss_rate {} must be in [0, 1)",
                self.free_miss_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.severity_scale) {
            return Err(SensorError::InvalidConfig(format!(
                "severity_scale {} must be in [0, 1]",
                self.severity_scale
            )));
        }
        if let Some(fov) = self.fov_deg {
            if !(0.0 < fov && fov <= 360.0) {
                return Err(SensorError::InvalidConfig(format!("fov_deg {fov} must be in (0, 360]")));
            }
        }
        // Assumption: the sensor out-ranges every safety distance, otherwise
        // a violation could occur before the object is observable at all.
        let dmax = classes.max_safety_distance();
        if self.range_m < dmax {
            return Err(SensorError::InvalidConfig(format!(
                "range {} is below the largest safety distance {}",
                self.range_m, dmax
            )));
        }
        Ok(())
    }
}

/// One ray's hit: exact center-to-center range, sampled label, hit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub range_m: f64,
    pub label: ClassId,
    pub cell: u32,
}

#[derive(Debug, Clone)]
struct RayRecord {
    bearing_rad: f64,
    hit: Option<RayHit>,
    free_start: u32,
    free_len: u32,
}

/// A full scan: per ray the optional hit plus the free cells crossed within
/// range strictly before the blocking cell.
#[derive(Debug, Clone, Default)]
pub struct Measurement {
    rays: Vec<RayRecord>,
    free_cells: Vec<u32>,
}

/// Borrowed view of one ray.
#[derive(Debug, Clone, Copy)]
pub struct RayView<'a> {
    pub bearing_rad: f64,
    pub hit: Option<RayHit>,
    pub traversed_free: &'a [u32],
}

impl Measurement {
    pub fn rays(&self) -> impl Iterator<Item = RayView<'_>> {
        self.rays.iter().map(|r| RayView {
            bearing_rad: r.bearing_rad,
            hit: r.hit,
            traversed_free: &self.free_cells
                [r.free_start as usize..(r.free_start + r.free_len) as usize],
        })
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    pub fn hits(&self) -> impl Iterator<Item = RayHit> + '_ {
        self.rays.iter().filter_map(|r| r.hit)
    }

    /// Build a measurement from explicit rays; mostly useful in tests.
    pub fn from_rays(rays: Vec<(f64, Option<RayHit>, Vec<u32>)>) -> Self {
        let mut m = Measurement::default();
        for (bearing_rad, hit, free) in rays {
            let free_start = m.free_cells.len() as u32;
            let free_len = free.len() as u32;
            m.free_cells.extend(free);
            m.rays.push(RayRecord { bearing_rad, hit, free_start, free_len });
        }
        m
    }
}

/// Prepared sensor: validated config plus per-row CDFs of the effective
/// (severity-scaled) confusion matrix.
#[derive(Debug, Clone)]
pub struct Sensor {
    config: SensorConfig,
    label_cdf: Vec<f64>,
    k: usize,
}

impl Sensor {
    pub fn new(config: SensorConfig, classes: &SemanticClassTable) -> Result<Self, SensorError> {
        config.validate(classes)?;
        let effective = config.true_confusion.toward_uniform(config.severity_scale);
        let k = effective.classes();
        let mut label_cdf = Vec::with_capacity(k * k);
        for r in 0..k {
            let mut acc = 0.0;
            for c in 0..k {
                acc += effective.rows[r * k + c];
                label_cdf.push(acc);
            }
        }
        Ok(Self { config, label_cdf, k })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    fn sample_label(&self, true_class: ClassId, rng: &mut ChaCha8Rng) -> ClassId {
        let u: f64 = rng.gen();
        let row = &self.label_cdf[true_class.index() * self.k..(true_class.index() + 1) * self.k];
        for (y, cdf) in row.iter().enumerate() {
            if u < *cdf {
                return ClassId(y as u8);
            }
        }
        ClassId((self.k - 1) as u8)
    }

    /// Cast all rays from the center of `at`. `heading_rad` only matters when
    /// a field-of-view restriction is configured.
    pub fn sense(
        &self,
        world: &GroundTruthWorld,
        at: Cell,
        heading_rad: f64,
        rng: &mut ChaCha8Rng,
    ) -> Measurement {
        let geom = &world.geometry;
        debug_assert!(geom.contains(at));
        let origin = geom.center(at);
        let n = self.config.ray_count as usize;
        let mut meas = Measurement {
            rays: Vec::with_capacity(n),
            free_cells: Vec::with_capacity(n * 8),
        };

        for i in 0..n {
            let bearing = match self.config.fov_deg {
                None => 2.0 * std::f64::consts::PI * i as f64 / n as f64,
                Some(fov) => {
                    let fov_rad = fov.to_radians();
                    heading_rad - fov_rad / 2.0 + fov_rad * (i as f64 + 0.5) / n as f64
                }
            };
            let free_start = meas.free_cells.len() as u32;
            let hit = self.cast_ray(world, origin, bearing, rng, &mut meas.free_cells);
            let free_len = meas.free_cells.len() as u32 - free_start;
            meas.rays.push(RayRecord { bearing_rad: bearing, hit, free_start, free_len });
        }
        meas
    }

    /// Amanatides-Woo traversal from `origin` along `bearing`. Free cells in
    /// range are appended to `free_out`; returns the hit, if any. The first
    /// non-free cell blocks the ray whether or not it is in range.
    fn cast_ray(
        &self,
        world: &GroundTruthWorld,
        origin: Point,
        bearing: f64,
        rng: &mut ChaCha8Rng,
        free_out: &mut Vec<u32>,
    ) -> Option<RayHit> {
        let geom = &world.geometry;
        let res = geom.resolution_m;
        let range = self.config.range_m;
        // A cell entered beyond this ray length cannot have its center in range.
        let entry_limit = range + res * std::f64::consts::SQRT_2;

        let (dir_x, dir_y) = (bearing.cos(), bearing.sin());
        let mut col = ((origin.x - geom.origin.x) / res).round() as i64;
        let mut row = ((origin.y - geom.origin.y) / res).round() as i64;

        let step_col: i64 = if dir_x > 0.0 { 1 } else { -1 };
        let step_row: i64 = if dir_y > 0.0 { 1 } else { -1 };
        // Ray starts at a cell center, so the first boundary is half a cell away.
        let mut t_max_x = if dir_x != 0.0 { 0.5 * res / dir_x.abs() } else { f64::INFINITY };
        let mut t_max_y = if dir_y != 0.0 { 0.5 * res / dir_y.abs() } else { f64::INFINITY };
        let t_delta_x = if dir_x != 0.0 { res / dir_x.abs() } else { f64::INFINITY };
        let t_delta_y = if dir_y != 0.0 { res / dir_y.abs() } else { f64::INFINITY };

        let mut entry = 0.0_f64;
        loop {
            if row < 0 || col < 0 || row >= geom.height as i64 || col >= geom.width as i64 {
                return None;
            }
            if entry > entry_limit {
                return None;
            }
            let cell = Cell::new(row as u32, col as u32);
            let idx = geom.index(cell);
            let truth = world.class_at(idx);
            let center_dist = origin.distance(geom.center(cell));
            let in_range = center_dist <= range;
            if truth.is_free() {
                if in_range {
                    let keep = self.config.free_miss_rate == 0.0
                        || rng.gen::<f64>() >= self.config.free_miss_rate;
                    if keep {
                        free_out.push(idx as u32);
                    }
                }
            } else {
                // Occlusion: the ray stops here regardless of range; the hit
                // is only reported when the cell is in range.
                return in_range.then(|| RayHit {
                    range_m: center_dist,
                    label: self.sample_label(truth, rng),
                    cell: idx as u32,
                });
            }

            if t_max_x <= t_max_y {
                entry = t_max_x;
                t_max_x += t_delta_x;
                col += step_col;
            } else {
                entry = t_max_y;
                t_max_y += t_delta_y;
                row += step_row;
            }
        }
    }
}
