//! Steering search and the constructive procedures built on it: trajectory
//! retracing, density probes, mutual reachability, and the semicircle
//! timing experiment on the rotation-dilation example.

mod matrix;
mod retrace;
mod semicircle;
mod steer;
pub mod suites;

use serde::{Deserialize, Serialize};

use crate::flow::IntegratorConfig;

pub use matrix::{equivalence_classes, mutual_reach_check, ReachEntry, ReachMatrix};
pub use retrace::{density_probe, reach_via_interior, retrace, InteriorConfig, InteriorFailure, RetraceFailure, Retraced, ViaInterior};
pub use semicircle::{angular_rate, semicircle_min_time, semicircle_word, NearOriginError, SemicircleRecord, SemicircleResult};
pub use steer::{steer_local, SteerFailure, Steered};

/// Search budget for one steering problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerBudget {
    /// Longest word considered.
    pub horizon: f64,
    /// Total number of candidate words across all search iterations.
    pub rollouts: usize,
    pub seed: u64,
    /// Success radius.
    pub eps: f64,
    /// Target duration of one piecewise-constant segment; candidate words
    /// have `max(1, ⌊horizon / segment_dt⌋)` equal segments.
    #[serde(default = "default_segment_dt")]
    pub segment_dt: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

fn default_segment_dt() -> f64 {
    1.0
}

impl SteerBudget {
    pub fn new(horizon: f64, rollouts: usize, seed: u64, eps: f64) -> Self {
        SteerBudget { horizon, rollouts, seed, eps, segment_dt: default_segment_dt(), integrator: IntegratorConfig::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_segment_dt(mut self, segment_dt: f64) -> Self {
        self.segment_dt = segment_dt;
        self
    }

    pub fn segments(&self) -> usize {
        ((self.horizon / self.segment_dt).floor() as usize).max(1)
    }

    /// Snapped duration of one segment.
    pub fn segment_duration(&self) -> f64 {
        self.integrator.steps_for(self.horizon / self.segments() as f64) as f64 * self.integrator.h
    }

    pub fn is_valid(&self) -> bool {
        self.horizon > 0.0 && self.eps > 0.0 && self.segment_dt > 0.0 && self.integrator.check().is_ok()
    }
}
