//! Discrete-time mission engine: configuration, fault injection, separation
//! monitoring, logging and metrics.

mod behavior;
mod engine;
pub mod faults;
pub mod harness;
pub mod log;
pub mod metrics;
pub mod monitor;

pub use engine::{run, Engine, RunOutput};
pub use faults::{FaultInjector, FaultRates};
pub use harness::{servo_convergence, ServoRun};
pub use log::Logs;
pub use metrics::Metrics;
pub use monitor::{collision_monitor, filter_moves, AvoidanceParams, Thresholds, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::CorridorMap;
use crate::control::{PdGains, Tolerances};
use crate::geometry::Vec3;
use crate::perception::{CameraModel, Mount};
use crate::scenario::ScenarioError;
use crate::scheduler::{CostParams, SchedulerError};
use crate::world::WorldError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("bad fault spec {0:?}; expected comma-separated pick=P,place=P,conn=RATE")]
    FaultSpec(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("writing logs: {0}")]
    Io(#[from] std::io::Error),
}

/// Aerial vehicle geometry and phase timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    /// Height above the stack top at which the visual approach starts.
    pub approach_depth_m: f64,
    /// Camera height above the brick top at touchdown.
    pub touchdown_m: f64,
    /// Height of the held brick above its slot when the placement servo starts.
    pub place_clearance_m: f64,
    pub grip_s: f64,
    pub release_s: f64,
    /// Altitude idle UAVs hold, above every corridor.
    pub loiter_m: f64,
    pub edge_sensing_m: f64,
    pub explore_altitude_m: f64,
    pub explore_focal_px: f64,
    pub explore_image_px: f64,
    /// Downward camera used for the pick servo.
    pub pick_camera: CameraModel,
}

impl Default for UavParams {
    fn default() -> Self {
        Self {
            approach_depth_m: 2.0,
            touchdown_m: 0.35,
            place_clearance_m: 0.5,
            grip_s: 0.5,
            release_s: 0.5,
            loiter_m: CorridorMap::default().highest() + 2.0,
            edge_sensing_m: 5.0,
            explore_altitude_m: 10.0,
            explore_focal_px: 320.0,
            explore_image_px: 640.0,
            pick_camera: CameraModel::new(400.0, 640.0, 480.0, Mount::Downward),
        }
    }
}

/// Ground vehicle geometry and arm timing. Positions are in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UgvParams {
    pub camera_offset: Vec3,
    /// Camera-to-brick depth at which the visual approach stops.
    pub standoff_depth_m: f64,
    /// Distance back from a stack where the visual approach starts.
    pub staging_m: f64,
    pub arm_base: Vec3,
    pub arm_reach_m: f64,
    pub stow: Vec3,
    pub reach_s: f64,
    pub grip_s: f64,
    pub stow_s: f64,
    pub release_s: f64,
    pub arm_speed_mps: f64,
    /// Sideways gap between the arm base and the wall line when placing.
    pub place_standoff_m: f64,
}

impl Default for UgvParams {
    fn default() -> Self {
        Self {
            camera_offset: Vec3::new(0.3, 0.0, 0.4),
            standoff_depth_m: 0.9,
            staging_m: 3.0,
            arm_base: Vec3::new(0.6, 0.0, 0.5),
            arm_reach_m: 0.85,
            stow: Vec3::new(0.6, 0.0, 1.3),
            reach_s: 3.0,
            grip_s: 1.0,
            stow_s: 2.0,
            release_s: 1.0,
            arm_speed_mps: 0.5,
            place_standoff_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub seed: u64,
    pub max_sim_time: f64,
    pub gains: PdGains,
    pub tolerances: Tolerances,
    pub costs: CostParams,
    pub corridors: CorridorMap,
    pub faults: FaultRates,
    /// Seconds a disconnected agent waits before its tasks are released.
    pub connectivity_timeout_s: f64,
    pub pick_fault_clear_s: f64,
    pub place_fault_clear_s: f64,
    pub collision_fault_clear_s: f64,
    pub query_retry_s: f64,
    /// Standard deviation of detector pixel noise.
    pub noise_px: f64,
    /// Run the dashboard and scheduler consistency checks every tick.
    pub check_invariants: bool,
    pub uav: UavParams,
    pub ugv: UgvParams,
    pub thresholds: Thresholds,
    pub avoidance: AvoidanceParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            seed: 0,
            max_sim_time: 3600.0,
            gains: PdGains::default(),
            tolerances: Tolerances::default(),
            costs: CostParams::default(),
            corridors: CorridorMap::default(),
            faults: FaultRates::default(),
            connectivity_timeout_s: 10.0,
            pick_fault_clear_s: 1.0,
            place_fault_clear_s: 1.0,
            collision_fault_clear_s: 5.0,
            query_retry_s: 1.0,
            noise_px: 0.0,
            check_invariants: true,
            uav: UavParams::default(),
            ugv: UgvParams::default(),
            thresholds: Thresholds::default(),
            avoidance: AvoidanceParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, message: &str| Err(ConfigError::Invalid { field, message: message.into() });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.max_sim_time >= 0.0) {
            return bad("max_sim_time", "must be non-negative");
        }
        for (field, p) in [("p_pick_fail", self.faults.p_pick_fail), ("p_place_fail", self.faults.p_place_fail)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, "probability must lie in [0, 1]");
            }
        }
        if !(self.faults.conn_loss_per_min >= 0.0 && self.faults.conn_loss_per_min.is_finite()) {
            return bad("conn_loss_per_min", "rate must be non-negative");
        }
        if !(self.noise_px >= 0.0) {
            return bad("noise_px", "must be non-negative");
        }
        if !self.gains.all_non_negative() {
            return bad("gains", "gains must be finite and non-negative");
        }
        if !self.costs.is_valid() {
            return bad("costs", "cost weights must be finite and non-negative");
        }
        if !self.uav.pick_camera.is_valid() {
            return bad("uav.pick_camera", "focal length and image size must be positive");
        }
        if self.uav.loiter_m <= self.corridors.highest() {
            return bad("uav.loiter_m", "must be above every corridor");
        }
        Ok(())
    }
}
