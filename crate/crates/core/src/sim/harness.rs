//! Closed-loop run of the UAV pick servo over a single stack, used to check
//! convergence from a grid of starting offsets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{step_kinematics, AgentKind, AgentState, Twist};
use crate::control::{centering_command, descend_command, desired_area, pixel_errors, yaw_command, ServoState};
use crate::geometry::{rotate_z, Bounds, Pose, Vec3};
use crate::perception::{observe_brick, perturb};
use crate::world::{AgentId, BrickId, BrickInstance, BrickKind, BrickState, SpotId, BRICK_HEIGHT_M};

use super::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoRun {
    pub initial_error_px: f64,
    /// First time both pixel errors were inside the centring tolerance.
    pub converged_at_s: Option<f64>,
    /// Largest pixel error seen after the start.
    pub max_error_px: f64,
    pub final_error_px: f64,
    /// Ticks with a non-zero descent command while off-centre.
    pub gate_violations: usize,
    pub touchdown_at_s: Option<f64>,
    /// Ticks the brick was out of view.
    pub lost_ticks: usize,
}

impl ServoRun {
    /// The error never grew past where it started (or past the tolerance, for a centred start).
    pub fn diverged(&self, tolerance_px: f64) -> bool {
        self.max_error_px > self.initial_error_px.max(tolerance_px) + 1e-9
    }
}

/// Start `offset` metres (horizontally) away from a brick of `kind` with
/// heading `brick_yaw`, `depth` metres above its top, and run centring, yaw
/// alignment and gated descent for `duration_s`.
pub fn servo_convergence(config: &SimConfig, kind: BrickKind, brick_yaw: f64, offset: (f64, f64), depth: f64, duration_s: f64) -> ServoRun {
    let cam = config.uav.pick_camera;
    let gains = config.gains;
    let tol = config.tolerances;
    let brick = BrickInstance {
        id: BrickId(0),
        kind,
        pose: Pose::new(0.0, 0.0, BRICK_HEIGHT_M / 2.0, brick_yaw),
        state: BrickState::InPile(SpotId(0)),
        home: SpotId(0),
    };
    let mut agent = AgentState::new(AgentId(0), AgentKind::Uav, Pose::new(offset.0, offset.1, BRICK_HEIGHT_M + depth, 0.0));
    let bounds = Bounds {
        min: Vec3::new(-10.0, -10.0, 0.0),
        max: Vec3::new(10.0, 10.0, 10.0),
    };
    let mut servo = ServoState::with_desired_area(desired_area(&cam, kind, config.uav.touchdown_m));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let err = |obs: &crate::perception::BrickObservation| {
        let (ex, ey) = pixel_errors(obs, &cam);
        ex.abs().max(ey.abs())
    };

    let first = observe_brick(&cam, &cam.pose_on(&agent.pose), &brick).expect("brick starts in view");
    let mut run = ServoRun {
        initial_error_px: err(&first),
        converged_at_s: None,
        max_error_px: 0.0,
        final_error_px: err(&first),
        gate_violations: 0,
        touchdown_at_s: None,
        lost_ticks: 0,
    };
    let ticks = (duration_s / config.dt).round() as usize;
    for k in 0..ticks {
        let t = k as f64 * config.dt;
        let Some(obs) = observe_brick(&cam, &cam.pose_on(&agent.pose), &brick) else {
            run.lost_ticks += 1;
            agent = step_kinematics(&agent, &Twist::zero(), config.dt, &bounds);
            continue;
        };
        let obs = perturb(&obs, &cam, config.noise_px, &mut rng);
        let e = err(&obs);
        run.max_error_px = run.max_error_px.max(e);
        run.final_error_px = e;
        let centered = e < tol.center_px;
        if centered && run.converged_at_s.is_none() {
            run.converged_at_s = Some(t);
        }
        if run.touchdown_at_s.is_none() && centered && obs.area_px2 >= 0.98 * servo.d_area {
            run.touchdown_at_s = Some(t);
        }
        let (vx, vy) = centering_command(&obs, &cam, &gains, &mut servo);
        let w = yaw_command(&obs, &gains, &mut servo);
        let vz = descend_command(&obs, &cam, &gains, &mut servo, tol.center_px);
        if vz != 0.0 && !centered {
            run.gate_violations += 1;
        }
        let h = rotate_z(&Vec3::new(vx, vy, 0.0), agent.pose.yaw);
        agent = step_kinematics(&agent, &Twist::new(h.x, h.y, vz, w), config.dt, &bounds);
    }
    run
}
