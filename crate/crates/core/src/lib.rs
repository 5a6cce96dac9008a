//! Desk-scale simulator, planner and evaluation harness for semantic
//! reach-avoid missions over conformalized grid maps.
//!
//! A robot must reach a goal region in an unknown world while keeping
//! class-dependent safety distances from semantically labeled objects. The
//! map is built online from noisy labeled range measurements; per-cell label
//! uncertainty is calibrated with split conformal prediction so that the
//! prediction sets jointly contain the ground truth with a user-chosen
//! probability, and the planner stays clear of every set's most conservative
//! label. The harness reproduces the full experimental protocol: calibration,
//! paired test campaigns against uncertainty-informed and
//! uncertainty-agnostic baselines, out-of-distribution variants, and
//! trace-level replay verification.

pub mod astar;
pub mod conformal;
pub mod domain;
pub mod harness;
pub mod mapper;
pub mod metrics;
pub mod planner;
pub mod seeding;
pub mod sensor;
pub mod stats;
pub mod worldgen;
