//! Mission scoring and Table-style aggregation.
//!
//! Four per-mission metrics: mapping success (every prediction set contained
//! the true label at every step), mission success (goal reached and the
//! executed path satisfies the ground-truth safety constraints), path length,
//! and the fraction of executed steps spent exploring. Path length and
//! exploration proportion aggregate over successful missions only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{path_satisfies_task, Scenario};
use crate::planner::{Framework, MissionTrace, Termination};
use crate::stats::{wilson_interval, Z_95};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace/scenario mismatch: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub sr_map: bool,
    pub sr_mission: bool,
    pub path_length_m: f64,
    pub exploration_proportion: f64,
    pub termination: Termination,
}

/// Score one trace against its scenario's ground truth.
pub fn score_mission(
    trace: &MissionTrace,
    scenario: &Scenario,
) -> Result<MissionMetrics, MetricsError> {
    if trace.scenario_seed != scenario.seed {
        return Err(MetricsError::Mismatch(format!(
            "trace is for seed {}, scenario is {}",
            trace.scenario_seed, scenario.seed
        )));
    }
    if trace.start != scenario.start {
        return Err(MetricsError::Mismatch("trace start differs from scenario start".into()));
    }
    let geometry = &scenario.world.geometry;
    let states = trace.path_states();
    for s in &states {
        if !geometry.contains(*s) {
            return Err(MetricsError::Mismatch(format!(
                "trace state ({}, {}) outside the scenario grid",
                s.row, s.col
            )));
        }
    }

    let sr_map = trace.all_steps_covered();
    let sr_mission = trace.termination == Termination::Goal
        && path_satisfies_task(&states, &scenario.world, &scenario.task);
    let path_length_m = states
        .windows(2)
        .map(|w| geometry.center(w[0]).distance(geometry.center(w[1])))
        .sum();
    let executed = trace.executed_steps();
    let exploration_proportion = if executed == 0 {
        0.0
    } else {
        trace.explore_steps() as f64 / executed as f64
    };
    Ok(MissionMetrics {
        sr_map,
        sr_mission,
        path_length_m,
        exploration_proportion,
        termination: trace.termination,
    })
}

/// One aggregated report row per (framework, alpha) group. Rates are
/// percentages; length and exploration average over successful missions and
/// are absent when a group has none. The confidence interval is a 95% Wilson
/// interval on the mission success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub framework: Framework,
    pub alpha: Option<f64>,
    pub n: usize,
    pub sr_map_pct: f64,
    pub sr_mission_pct: f64,
    pub path_len_m: Option<f64>,
    pub explore_pct: Option<f64>,
    pub ci_low_pct: f64,
    pub ci_high_pct: f64,
}

/// Group per-mission metrics by (framework, alpha) and aggregate. Rows are
/// ordered by framework (ours, ui, ua) then ascending alpha, so output is
/// deterministic regardless of input order.
pub fn aggregate(results: &[(Framework, Option<f64>, MissionMetrics)]) -> Vec<ReportRow> {
    let mut keys: Vec<(Framework, Option<f64>)> = Vec::new();
    for (fw, alpha, _) in results {
        if !keys.contains(&(*fw, *alpha)) {
            keys.push((*fw, *alpha));
        }
    }
    let fw_rank = |f: Framework| match f {
        Framework::Ours => 0,
        Framework::Ui => 1,
        Framework::Ua => 2,
    };
    keys.sort_by(|a, b| {
        fw_rank(a.0)
            .cmp(&fw_rank(b.0))
            .then_with(|| a.1.unwrap_or(f64::MAX).total_cmp(&b.1.unwrap_or(f64::MAX)))
    });

    keys.into_iter()
        .map(|(fw, alpha)| {
            let group: Vec<&MissionMetrics> = results
                .iter()
                .filter(|(f, a, _)| *f == fw && *a == alpha)
                .map(|(_, _, m)| m)
                .collect();
            let n = group.len();
            let map_ok = group.iter().filter(|m| m.sr_map).count();
            let mission_ok = group.iter().filter(|m| m.sr_mission).count();
            let successes: Vec<&&MissionMetrics> =
                group.iter().filter(|m| m.sr_mission).collect();
            let mean_over_successes = |f: fn(&MissionMetrics) -> f64| {
                if successes.is_empty() {
                    None
                } else {
                    Some(successes.iter().map(|m| f(m)).sum::<f64>() / successes.len() as f64)
                }
            };
            let (ci_low, ci_high) = wilson_interval(mission_ok, n, Z_95);
            ReportRow {
                framework: fw,
                alpha,
                n,
                sr_map_pct: 100.0 * map_ok as f64 / n as f64,
                sr_mission_pct: 100.0 * mission_ok as f64 / n as f64,
                path_len_m: mean_over_successes(|m| m.path_length_m),
                explore_pct: mean_over_successes(|m| 100.0 * m.exploration_proportion),
                ci_low_pct: 100.0 * ci_low,
                ci_high_pct: 100.0 * ci_high,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "framework,alpha,n,sr_map_pct,sr_mission_pct,path_len_m,explore_pct,ci_low,ci_high";

/// Fixed two-decimal CSV rendering; absent cells stay empty, alpha is `na`
/// for alpha-independent frameworks.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let alpha = match r.alpha {
            Some(a) => format!("{a:.2}"),
            None => "na".to_string(),
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{},{},{:.2},{:.2}\n",
            r.framework,
            alpha,
            r.n,
            r.sr_map_pct,
            r.sr_mission_pct,
            opt(r.path_len_m),
            opt(r.explore_pct),
            r.ci_low_pct,
            r.ci_high_pct,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        Cell, ClassId, GoalRegion, GridGeometry, GroundTruthWorld, Point, SemanticClass,
        SemanticClassTable, Task,
    };
    use crate::planner::{StepAction, StepMode, StepRecord};

    fn mini_scenario() -> Scenario {
        let geom = GridGeometry::new(8, 4, 1.0, Point::new(0.0, 0.0)).unwrap();
        let truth = vec![ClassId::FREE; geom.cell_count()];
        let classes = SemanticClassTable::new(vec![
            SemanticClass { id: ClassId(0), name: "free".into(), safety_distance_m: 0.0 },
            SemanticClass { id: ClassId(1), name: "person".into(), safety_distance_m: 4.0 },
        ])
        .unwrap();
        Scenario {
            seed: 1,
            start: Cell::new(1, 1),
            world: GroundTruthWorld::new(geom, truth).unwrap(),
            task: Task { goal: GoalRegion { row: 1, col: 4, radius_m: 0.0 }, classes },
        }
    }

    fn step(at: Cell, covered: bool, mode: StepMode, next: Cell) -> StepRecord {
        StepRecord {
            at,
            covered,
            set_sizes: vec![1, 0],
            action: Some(StepAction { mode, next }),
        }
    }

    fn goal_trace() -> MissionTrace {
        MissionTrace {
            scenario_seed: 1,
            framework: Framework::Ours,
            alpha: Some(0.1),
            quantile: Some(0.2),
            mission_seed: 0,
            start: Cell::new(1, 1),
            steps: vec![
                step(Cell::new(1, 1), true, StepMode::Exploit, Cell::new(1, 2)),
                step(Cell::new(1, 2), true, StepMode::Explore, Cell::new(1, 3)),
                step(Cell::new(1, 3), true, StepMode::Exploit, Cell::new(1, 4)),
            ],
            termination: Termination::Goal,
            final_state: Cell::new(1, 4),
        }
    }

    #[test]
    fn scores_clean_goal_run() {
        let m = score_mission(&goal_trace(), &mini_scenario()).unwrap();
        assert!(m.sr_map);
        assert!(m.sr_mission);
        assert_eq!(m.path_length_m, 3.0);
        assert!((m.exploration_proportion - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_uncovered_step_fails_mapping() {
        let mut trace = goal_trace();
        trace.steps[1].covered = false;
        let m = score_mission(&trace, &mini_scenario()).unwrap();
        assert!(!m.sr_map);
        assert!(m.sr_mission); // outcome independent of the coverage bit
    }

    #[test]
    fn timeout_fails_mission() {
        let mut trace = goal_trace();
        trace.termination = Termination::Timeout;
        let m = score_mission(&trace, &mini_scenario()).unwrap();
        assert!(!m.sr_mission);
    }

    #[test]
    fn mismatched_scenario_rejected() {
        let mut trace = goal_trace();
        trace.scenario_seed = 99;
        assert!(score_mission(&trace, &mini_scenario()).is_err());
    }

    fn metric(sr_map: bool, sr_mission: bool, len: f64, explore: f64) -> MissionMetrics {
        MissionMetrics {
            sr_map,
            sr_mission,
            path_length_m: len,
            exploration_proportion: explore,
            termination: if sr_mission { Termination::Goal } else { Termination::Timeout },
        }
    }

    #[test]
    fn sixty_of_sixtyone_formats_like_the_table() {
        let mut results = Vec::new();
        for i in 0..61 {
            results.push((Framework::Ours, Some(0.05), metric(true, i > 0, 70.0, 0.1)));
        }
        let rows = aggregate(&results);
        assert_eq!(rows.len(), 1);
        let csv = to_csv(&rows);
        assert!(csv.contains(",98.36,"), "csv was: {csv}");
    }

    #[test]
    fn lengths_average_over_successes_only() {
        let results = vec![
            (Framework::Ua, None, metric(false, true, 10.0, 0.0)),
            (Framework::Ua, None, metric(false, true, 20.0, 0.5)),
            (Framework::Ua, None, metric(false, false, 500.0, 1.0)),
        ];
        let rows = aggregate(&results);
        assert_eq!(rows[0].path_len_m, Some(15.0));
        assert_eq!(rows[0].explore_pct, Some(25.0));
    }

    #[test]
    fn zero_success_group_reports_absent_length() {
        let results = vec![(Framework::Ua, None, metric(false, false, 5.0, 0.2))];
        let rows = aggregate(&results);
        assert_eq!(rows[0].path_len_m, None);
        let csv = to_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn aggregation_is_permutation_invariant_and_ordered() {
        let mut results = vec![
            (Framework::Ua, None, metric(true, true, 1.0, 0.0)),
            (Framework::Ours, Some(0.10), metric(true, true, 1.0, 0.0)),
            (Framework::Ui, Some(0.05), metric(true, true, 1.0, 0.0)),
            (Framework::Ours, Some(0.05), metric(true, true, 1.0, 0.0)),
        ];
        let a = aggregate(&results);
        results.reverse();
        let b = aggregate(&results);
        assert_eq!(a, b);
        let order: Vec<(Framework, Option<f64>)> =
            a.iter().map(|r| (r.framework, r.alpha)).collect();
        assert_eq!(
            order,
            vec![
                (Framework::Ours, Some(0.05)),
                (Framework::Ours, Some(0.10)),
                (Framework::Ui, Some(0.05)),
                (Framework::Ua, None),
            ]
        );
    }

    #[test]
    fn wilson_matches_independent_root_finder() {
        // Second route: solve (p - c)^2 = z^2 p (1 - p) / n by bisection on
        // each side of the estimate.
        let (n, s) = (61usize, 55usize);
        let p_hat = s as f64 / n as f64;
        let z = Z_95;
        let f = |p: f64| (p_hat - p).powi(2) - z * z * p * (1.0 - p) / n as f64;
        let bisect = |mut lo: f64, mut hi: f64| -> f64 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == (f(lo) > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let lo = bisect(0.0, p_hat);
        let hi = bisect(1.0, p_hat);
        let (wl, wh) = wilson_interval(s, n, z);
        assert!((wl - lo).abs() < 1e-9, "{wl} vs {lo}");
        assert!((wh - hi.min(1.0)).abs() < 1e-9, "{wh} vs {hi}");
    }
}
