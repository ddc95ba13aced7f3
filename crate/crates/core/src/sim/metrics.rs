use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean_s: f64,
    pub max_s: f64,
}

impl DurationStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        Self {
            count: samples.len(),
            mean_s: samples.iter().sum::<f64>() / samples.len() as f64,
            max_s: samples.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// End-of-run summary, written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub completed: bool,
    /// Points of every brick sitting in a filled slot.
    pub total_points: f64,
    /// Time of the last placement; equals `sim_time_s` if the wall was not finished.
    pub makespan_s: f64,
    pub sim_time_s: f64,
    pub ticks: u64,
    pub slots_filled: usize,
    pub slots_total: usize,
    /// Completed and failed task durations, by task variant.
    pub task_durations: BTreeMap<String, DurationStats>,
    pub tasks_completed: usize,
    pub tasks_failed: usize,
    pub distance_m: BTreeMap<String, f64>,
    pub fault_counts: BTreeMap<String, u64>,
    /// UAV pairs inside both separation thresholds.
    pub corridor_violations: u64,
    /// Any pair flagged by the separation monitor.
    pub collision_violations: u64,
    /// Placements made while a lower layer of the channel was unfinished.
    pub layer_rule_violations: u64,
    pub invariant_violations: u64,
    pub first_invariant_violation: Option<String>,
    /// Ticks where a UAV descended while its centring error was out of tolerance.
    pub descent_gate_violations: u64,
    /// Smallest vertical gap between two UAVs both in transit and within
    /// the horizontal threshold of each other. `None` if that never happened.
    pub min_transit_vertical_separation_m: Option<f64>,
    /// Avoidance manoeuvres taken (deflections and holds).
    pub avoidance_adjustments: u64,
}
