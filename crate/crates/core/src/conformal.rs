//! Conformal calibration of semantic maps.
//!
//! Calibration computes one nonconformity score per calibration scenario: the
//! worst-case mapping error `1 - p_t(m_j = truth_j)` over a finite set of
//! replayed paths, all observed cells and all time steps. The split-conformal
//! quantile of those scores then thresholds per-cell prediction sets on test
//! scenarios: every label whose belief probability is at least `1 - quantile`
//! is in the set, so the sets jointly contain the ground truth with the
//! user-chosen probability.
//!
//! Also here: the dataset-conditional alpha correction through Beta quantiles,
//! and the two baseline set constructors (most-likely label, and cumulative
//! probability prefixes that trust the raw PMFs).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::astar::{astar_to_region, clearance_admissible};
use crate::domain::{Cell, ClassId, GoalRegion, Scenario};
use crate::mapper::{BeliefMap, Mapper, MapperConfig, MapperError};
use crate::seeding;
use crate::sensor::{Sensor, SensorConfig, SensorError};
use crate::stats::{beta_inverse_cdf, StatsError};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("score list is empty")]
    EmptyScores,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("no grid alpha reaches coverage {target}; best achievable is {best:.6}")]
    TargetUnreachable { target: f64, best: f64 },
    #[error("invalid calibration path: {0}")]
    InvalidPath(String),
    #[error("no feasible ground-truth path from start to goal")]
    NoFeasiblePath,
    #[error("only found {found} distinct calibration paths of {want}")]
    NotEnoughDistinctPaths { found: usize, want: usize },
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Marginal coverage averages over calibration draws; the dataset-conditional
/// mode tightens alpha so coverage holds with probability `1 - delta` for the
/// one calibration set at hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationMode {
    Marginal,
    DatasetConditional { delta: f64 },
}

impl CalibrationMode {
    /// The alpha actually fed into the quantile for a requested test alpha.
    pub fn effective_alpha(&self, d: usize, alpha: f64) -> Result<f64, ConformalError> {
        match self {
            CalibrationMode::Marginal => Ok(alpha),
            CalibrationMode::DatasetConditional { delta } => {
                dataset_conditional_alpha(d, *delta, 1.0 - alpha)
            }
        }
    }
}

/// Persisted output of a calibration run. Scores are alpha-independent, so a
/// single artifact serves quantiles for any test alpha via
/// [`CalibrationArtifact::quantile_for_alpha`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub schema_version: u32,
    pub scores: Vec<f64>,
    pub alpha: f64,
    pub alpha_used: f64,
    #[serde(flatten)]
    pub mode: CalibrationMode,
    pub quantile: f64,
    #[serde(rename = "D")]
    pub d: usize,
    pub paths_per_scenario: usize,
    pub config_hash: String,
    pub base_seed: u64,
}

impl CalibrationArtifact {
    /// Recompute `(alpha_used, quantile)` for a different test alpha from the
    /// stored scores, honoring the artifact's calibration mode.
    pub fn quantile_for_alpha(&self, alpha: f64) -> Result<(f64, f64), ConformalError> {
        let alpha_used = self.mode.effective_alpha(self.d, alpha)?;
        Ok((alpha_used, conformal_quantile(&self.scores, alpha_used)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// The `ceil((D+1)(1-alpha))`-th smallest score, or 1 when that rank exceeds
/// D (the saturated regime where every prediction set is the full label set).
pub fn conformal_quantile(scores: &[f64], alpha_used: f64) -> Result<f64, ConformalError> {
    if scores.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    if !(alpha_used > 0.0 && alpha_used < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha_used));
    }
    for s in scores {
        if !(0.0..=1.0).contains(s) {
            return Err(ConformalError::ScoreOutOfRange(*s));
        }
    }
    let d = scores.len();
    // ceil((D+1)(1-a)) = (D+1) - floor((D+1) a); snap near-integer products
    // so grid alphas like 0.1 or v/(D+1) never straddle a rank boundary by
    // one ulp.
    let mut v = (d as f64 + 1.0) * alpha_used;
    if (v - v.round()).abs() < 1e-9 * (d as f64 + 2.0) {
        v = v.round();
    }
    let rank = (d as i64 + 1) - (v.floor() as i64);
    if rank > d as i64 {
        return Ok(1.0);
    }
    let rank = rank.max(1) as usize;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[rank - 1])
}

/// Largest grid alpha `v/(D+1)` whose Beta `delta`-quantile still reaches the
/// target coverage: with `v = floor((D+1) a)`, requires
/// `BetaInv(D+1-v, v; delta) >= target`.
pub fn dataset_conditional_alpha(
    d: usize,
    delta: f64,
    target_coverage: f64,
) -> Result<f64, ConformalError> {
    if d == 0 {
        return Err(ConformalError::EmptyScores);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConformalError::InvalidAlpha(delta));
    }
    if !(target_coverage > 0.0 && target_coverage < 1.0) {
        return Err(ConformalError::InvalidAlpha(1.0 - target_coverage));
    }
    let mut best: Option<usize> = None;
    let mut best_coverage = 0.0;
    for v in 1..=d {
        let q = beta_inverse_cdf((d + 1 - v) as f64, v as f64, delta)?;
        if v == 1 {
            best_coverage = q;
        }
        if q >= target_coverage {
            best = Some(v);
        } else {
            break; // quantile is decreasing in v
        }
    }
    match best {
        Some(v) => Ok(v as f64 / (d as f64 + 1.0)),
        None => Err(ConformalError::TargetUnreachable { target: target_coverage, best: best_coverage }),
    }
}

/// Per-cell prediction sets as class bitmasks. Cells outside the observed set
/// carry the implicit `{free}` singleton.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSetMap {
    k: usize,
    masks: Vec<u32>,
    observed: Vec<bool>,
}

impl PredictionSetMap {
    pub fn new_unobserved(cells: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= 32);
        Self { k, masks: vec![1 << ClassId::FREE.index(); cells], observed: vec![false; cells] }
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn len_cells(&self) -> usize {
        self.masks.len()
    }

    #[inline]
    pub fn mask(&self, cell: usize) -> u32 {
        self.masks[cell]
    }

    #[inline]
    pub fn contains(&self, cell: usize, class: ClassId) -> bool {
        self.masks[cell] & (1 << class.index()) != 0
    }

    #[inline]
    pub fn size(&self, cell: usize) -> u32 {
        self.masks[cell].count_ones()
    }

    #[inline]
    pub fn is_observed(&self, cell: usize) -> bool {
        self.observed[cell]
    }

    pub fn observed_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().enumerate().filter(|(_, o)| **o).map(|(j, _)| j)
    }

    pub fn update_cell(&mut self, cell: usize, mask: u32) {
        self.masks[cell] = mask;
        self.observed[cell] = true;
    }

    /// Histogram of set sizes over observed cells; entry `s - 1` counts the
    /// cells whose set has exactly `s` labels.
    pub fn size_histogram(&self) -> Vec<u32> {
        let mut hist = vec![0u32; self.k];
        for j in self.observed_cells() {
            hist[(self.size(j) - 1) as usize] += 1;
        }
        hist
    }

    /// Classes of one set in id order.
    pub fn classes_in(&self, cell: usize) -> impl Iterator<Item = ClassId> + '_ {
        let mask = self.masks[cell];
        (0..self.k).filter(move |c| mask & (1 << c) != 0).map(|c| ClassId(c as u8))
    }
}

/// How per-cell sets are built from a PMF; one rule per planning framework.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetRule {
    /// Conformal threshold: all labels with mapping error within the
    /// calibrated quantile; falls back to the full label set when empty.
    Conformal { quantile: f64 },
    /// Shortest most-likely prefix whose cumulative mass reaches `1 - alpha`,
    /// trusting the PMF as a true probability.
    UiPrefix { alpha: f64 },
    /// Singleton most-likely label.
    UaArgmax,
}

impl SetRule {
    pub fn mask_for(&self, pmf: &[f64]) -> u32 {
        let k = pmf.len();
        debug_assert!(k <= 32);
        match *self {
            SetRule::Conformal { quantile } => {
                let mut mask = 0u32;
                for (c, p) in pmf.iter().enumerate() {
                    // Same float expression as the nonconformity score, so a
                    // calibration score at the quantile boundary is included.
                    if 1.0 - p <= quantile {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 {
                    mask = full_mask(k);
                }
                mask
            }
            SetRule::UiPrefix { alpha } => {
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| pmf[b].total_cmp(&pmf[a]).then(a.cmp(&b)));
                let mut mask = 0u32;
                let mut cum = 0.0;
                for c in order {
                    mask |= 1 << c;
                    cum += pmf[c];
                    if cum >= 1.0 - alpha {
                        break;
                    }
                }
                mask
            }
            SetRule::UaArgmax => 1 << argmax_class(pmf).index(),
        }
    }
}

#[inline]
pub fn full_mask(k: usize) -> u32 {
    if k == 32 {
        u32::MAX
    } else {
        (1u32 << k) - 1
    }
}

/// Most likely class; ties break to the lowest class id.
pub fn argmax_class(pmf: &[f64]) -> ClassId {
    let mut best = 0usize;
    for (c, p) in pmf.iter().enumerate().skip(1) {
        if *p > pmf[best] {
            best = c;
        }
    }
    ClassId(best as u8)
}

fn sets_from_rule(belief: &BeliefMap, rule: SetRule) -> PredictionSetMap {
    let cells = belief.geometry().cell_count();
    let mut sets = PredictionSetMap::new_unobserved(cells, belief.classes());
    for j in belief.observed_cells() {
        sets.update_cell(j, rule.mask_for(belief.pmf_of(j)));
    }
    sets
}

/// Conformal prediction sets for every observed cell.
pub fn conformalize(belief: &BeliefMap, quantile: f64) -> PredictionSetMap {
    sets_from_rule(belief, SetRule::Conformal { quantile })
}

/// Most-likely label per observed cell (free for unobserved cells).
pub fn ua_labels(belief: &BeliefMap) -> Vec<ClassId> {
    let cells = belief.geometry().cell_count();
    let mut labels = vec![ClassId::FREE; cells];
    for j in belief.observed_cells() {
        labels[j] = argmax_class(belief.pmf_of(j));
    }
    labels
}

/// Singleton most-likely-label sets (the uncertainty-agnostic baseline).
pub fn ua_sets(belief: &BeliefMap) -> PredictionSetMap {
    sets_from_rule(belief, SetRule::UaArgmax)
}

/// Cumulative-probability prefix sets (the uncertainty-informed baseline).
pub fn ui_sets(belief: &BeliefMap, alpha: f64) -> PredictionSetMap {
    sets_from_rule(belief, SetRule::UiPrefix { alpha })
}

/// Worst mapping error over the cells touched by one update, folded into a
/// running maximum.
pub fn worst_error_update(
    belief: &BeliefMap,
    truth: &[ClassId],
    touched: &[u32],
    running_max: f64,
) -> f64 {
    let mut max = running_max;
    for &cell in touched {
        let err = 1.0 - belief.pmf_of(cell as usize)[truth[cell as usize].index()];
        if err > max {
            max = err;
        }
    }
    max
}

/// Replay one path with fresh belief and an independent noise stream; returns
/// the worst-case mapping error along it.
pub(crate) fn path_score(
    scenario: &Scenario,
    path: &[Cell],
    path_index: u64,
    sensor: &Sensor,
    mapper_config: &MapperConfig,
) -> Result<f64, ConformalError> {
    if path.is_empty() {
        return Err(ConformalError::InvalidPath("empty path".into()));
    }
    if path[0] != scenario.start {
        return Err(ConformalError::InvalidPath(format!(
            "path starts at ({}, {}), scenario at ({}, {})",
            path[0].row, path[0].col, scenario.start.row, scenario.start.col
        )));
    }
    let geom = &scenario.world.geometry;
    for cell in path {
        if !geom.contains(*cell) {
            return Err(ConformalError::InvalidPath(format!(
                "path leaves the grid at ({}, {})",
                cell.row, cell.col
            )));
        }
    }

    let noise_seed = seeding::mix3(scenario.seed, seeding::tags::CALIB_NOISE, path_index);
    let mut belief = BeliefMap::new(geom.clone(), mapper_config)?;
    let mut mapper = Mapper::new(mapper_config.clone())?;
    let mut touched = Vec::new();
    let truth = scenario.world.truth();

    let mut worst = 0.0;
    let mut heading = 0.0;
    for (t, &state) in path.iter().enumerate() {
        if t > 0 {
            let prev = geom.center(path[t - 1]);
            let here = geom.center(state);
            if prev != here {
                heading = (here.y - prev.y).atan2(here.x - prev.x);
            }
        }
        let mut rng = seeding::stream3(noise_seed, seeding::tags::STEP, t as u64);
        let meas = sensor.sense(&scenario.world, state, heading, &mut rng);
        mapper.update(&mut belief, &meas, &mut touched)?;
        worst = worst_error_update(&belief, truth, &touched, worst);
    }
    Ok(worst)
}

/// Nonconformity score of one calibration scenario: the maximum mapping
/// error over the supplied paths (each replayed with its own sensor-noise
/// stream derived from the scenario seed), all observed cells and all steps.
pub fn ncs_for_scenario(
    scenario: &Scenario,
    paths: &[Vec<Cell>],
    sensor_config: &SensorConfig,
    mapper_config: &MapperConfig,
) -> Result<f64, ConformalError> {
    if paths.is_empty() {
        return Err(ConformalError::InvalidPath("need at least one path".into()));
    }
    let sensor = Sensor::new(sensor_config.clone(), &scenario.task.classes)?;
    let mut worst = 0.0_f64;
    for (i, path) in paths.iter().enumerate() {
        worst = worst.max(path_score(scenario, path, i as u64, &sensor, mapper_config)?);
    }
    Ok(worst)
}

/// Start-to-goal paths on the ground-truth-admissible graph: the shortest
/// path plus detours through uniformly sampled admissible waypoints,
/// deduplicated. Every returned path is safe against the ground truth.
pub fn generate_calibration_paths(
    scenario: &Scenario,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Cell>>, ConformalError> {
    assert!(count >= 1);
    let geom = &scenario.world.geometry;
    let admissible = clearance_admissible(geom, scenario.world.truth(), &scenario.task.classes);
    let direct = astar_to_region(geom, &admissible, scenario.start, &scenario.task.goal)
        .ok_or(ConformalError::NoFeasiblePath)?;

    let mut paths = vec![direct.cells];
    let mut seen: HashSet<Vec<Cell>> = paths.iter().cloned().collect();
    let candidates: Vec<usize> =
        (0..geom.cell_count()).filter(|&j| admissible[j]).collect();

    let budget = 200 * count;
    let mut attempts = 0;
    while paths.len() < count && attempts < budget {
        attempts += 1;
        let waypoint = geom.cell_at(candidates[rng.gen_range(0..candidates.len())]);
        let wp_region = GoalRegion { row: waypoint.row, col: waypoint.col, radius_m: 0.0 };
        let Some(leg1) = astar_to_region(geom, &admissible, scenario.start, &wp_region) else {
            continue;
        };
        let Some(leg2) = astar_to_region(geom, &admissible, waypoint, &scenario.task.goal) else {
            continue;
        };
        let mut path = leg1.cells;
        path.extend_from_slice(&leg2.cells[1..]);
        if seen.insert(path.clone()) {
            paths.push(path);
        }
    }
    if paths.len() < count {
        return Err(ConformalError::NotEnoughDistinctPaths { found: paths.len(), want: count });
    }
    Ok(paths)
}
