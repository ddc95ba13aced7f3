//! PD servo loops driven by image-plane errors: centring, yaw alignment,
//! area-based descent, UGV approach and final placement.
//!
//! Derivative terms use the one-tick backward difference of the error; the
//! previous errors live in [`ServoState`] and start at zero for every phase.
//! Gains convert pixel errors straight into m/s (or rad/s).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotate_z, wrap_half_pi, Pose, Vec3};
use crate::perception::{BrickObservation, CameraModel, EdgeObservation};
use crate::world::{BrickKind, BrickSlot, BRICK_HEIGHT_M};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("placement edge lost; re-acquire before continuing")]
    EdgeLost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp_cx: f64,
    pub kd_cx: f64,
    pub kp_cy: f64,
    pub kd_cy: f64,
    pub kp_yaw: f64,
    pub kd_yaw: f64,
    pub kp_area: f64,
    pub kd_area: f64,
    pub kp_v: f64,
    pub kp_z: f64,
    pub kd_z: f64,
    pub kp_place: f64,
    pub kd_place: f64,
    pub kp_place_yaw: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp_cx: 0.004,
            kd_cx: 0.008,
            kp_cy: 0.004,
            kd_cy: 0.008,
            kp_yaw: 1.2,
            kd_yaw: 0.4,
            kp_area: 4e-6,
            kd_area: 0.0,
            kp_v: 1e-5,
            kp_z: 0.005,
            kd_z: 0.01,
            kp_place: 1.5,
            kd_place: 0.5,
            kp_place_yaw: 1.2,
        }
    }
}

impl PdGains {
    pub fn zero() -> Self {
        Self {
            kp_cx: 0.0,
            kd_cx: 0.0,
            kp_cy: 0.0,
            kd_cy: 0.0,
            kp_yaw: 0.0,
            kd_yaw: 0.0,
            kp_area: 0.0,
            kd_area: 0.0,
            kp_v: 0.0,
            kp_z: 0.0,
            kd_z: 0.0,
            kp_place: 0.0,
            kd_place: 0.0,
            kp_place_yaw: 0.0,
        }
    }

    pub fn all_non_negative(&self) -> bool {
        [
            self.kp_cx,
            self.kd_cx,
            self.kp_cy,
            self.kd_cy,
            self.kp_yaw,
            self.kd_yaw,
            self.kp_area,
            self.kd_area,
            self.kp_v,
            self.kp_z,
            self.kd_z,
            self.kp_place,
            self.kd_place,
            self.kp_place_yaw,
        ]
        .iter()
        .all(|g| *g >= 0.0 && g.is_finite())
    }
}

/// Acceptance windows for the servo phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub center_px: f64,
    pub yaw_rad: f64,
    pub place_m: f64,
    pub arrival_horizontal_m: f64,
    pub arrival_vertical_m: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            center_px: 2.0,
            yaw_rad: 0.02,
            place_m: 0.02,
            arrival_horizontal_m: 0.2,
            arrival_vertical_m: 0.1,
        }
    }
}

/// Previous-tick errors for each loop, plus the descent area set-point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServoState {
    pub e_cx: f64,
    pub e_cy: f64,
    pub e_yaw: f64,
    pub e_area: f64,
    pub e_ugv_cx: f64,
    pub e_place: Vec3,
    pub d_area: f64,
}

impl ServoState {
    pub fn with_desired_area(d_area: f64) -> Self {
        Self {
            d_area,
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        *self = Self::with_desired_area(self.d_area);
    }
}

/// Area set-point for touching down `touchdown_m` above the brick top.
pub fn desired_area(camera: &CameraModel, kind: BrickKind, touchdown_m: f64) -> f64 {
    camera.area_at_depth(kind.top_area_m2(), touchdown_m)
}

pub fn pixel_errors(obs: &BrickObservation, camera: &CameraModel) -> (f64, f64) {
    let (cx, cy) = camera.center();
    (obs.center_px.0 - cx, obs.center_px.1 - cy)
}

/// Body-frame horizontal velocity that moves the camera over the brick.
pub fn centering_command(obs: &BrickObservation, camera: &CameraModel, gains: &PdGains, state: &mut ServoState) -> (f64, f64) {
    let (e_cx, e_cy) = pixel_errors(obs, camera);
    let vx = gains.kp_cx * e_cx + gains.kd_cx * (e_cx - state.e_cx);
    let vy = gains.kp_cy * e_cy + gains.kd_cy * (e_cy - state.e_cy);
    state.e_cx = e_cx;
    state.e_cy = e_cy;
    (vx, vy)
}

/// Yaw rate turning the airframe onto the brick's major axis.
pub fn yaw_command(obs: &BrickObservation, gains: &PdGains, state: &mut ServoState) -> f64 {
    let e = obs.yaw_rad;
    let w = gains.kp_yaw * e + gains.kd_yaw * (e - state.e_yaw);
    state.e_yaw = e;
    w
}

/// Vertical velocity from the area error. Negative (down) while the brick
/// looks smaller than the set-point; zero whenever the centring error is
/// outside `center_tol_px`.
pub fn descend_command(
    obs: &BrickObservation,
    camera: &CameraModel,
    gains: &PdGains,
    state: &mut ServoState,
    center_tol_px: f64,
) -> f64 {
    let e_area = obs.area_px2 - state.d_area;
    let vz = gains.kp_area * e_area + gains.kd_area * (e_area - state.e_area);
    state.e_area = e_area;
    let (ex, ey) = pixel_errors(obs, camera);
    if ex.abs() > center_tol_px || ey.abs() > center_tol_px {
        0.0
    } else {
        vz
    }
}

/// Forward speed and yaw rate for the ground vehicle closing on a brick seen
/// by its forward camera. Image `u` grows to the right, so a positive pixel
/// error needs a clockwise (negative) yaw rate.
pub fn ugv_approach(
    obs: &BrickObservation,
    camera: &CameraModel,
    gains: &PdGains,
    state: &mut ServoState,
    speed_limit: f64,
) -> (f64, f64) {
    let v = (gains.kp_v * (state.d_area - obs.area_px2)).clamp(0.0, speed_limit);
    let (e_cx, _) = pixel_errors(obs, camera);
    let w = -(gains.kp_z * e_cx + gains.kd_z * (e_cx - state.e_ugv_cx));
    state.e_ugv_cx = e_cx;
    (v, w)
}

/// Where the held brick's centre belongs, given the reference edge. Both in
/// the observer's frame.
pub fn placement_target(edge: &EdgeObservation, kind: BrickKind) -> Pose {
    let half = Vec3::new(kind.length_m() / 2.0, 0.0, BRICK_HEIGHT_M / 2.0);
    Pose {
        position: edge.pose.position + rotate_z(&half, edge.pose.yaw),
        yaw: edge.pose.yaw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceCommand {
    /// Velocity for the held brick, in the observer's frame.
    pub velocity: Vec3,
    pub yaw_rate: f64,
    pub error: Vec3,
    pub yaw_error: f64,
    pub release: bool,
}

/// Servo the held brick onto the pose implied by the latest edge observation.
/// `held` is the brick pose in the same frame as the edge.
pub fn place_alignment(
    edge: Option<&EdgeObservation>,
    slot: &BrickSlot,
    held: &Pose,
    gains: &PdGains,
    state: &mut ServoState,
    tolerances: &Tolerances,
) -> Result<PlaceCommand, ControlError> {
    let edge = edge.ok_or(ControlError::EdgeLost)?;
    let target = placement_target(edge, slot.required_kind);
    let error = target.position - held.position;
    let yaw_error = wrap_half_pi(target.yaw - held.yaw);
    if error.norm() < tolerances.place_m && yaw_error.abs() < tolerances.yaw_rad {
        state.e_place = error;
        return Ok(PlaceCommand {
            velocity: Vec3::zeros(),
            yaw_rate: 0.0,
            error,
            yaw_error,
            release: true,
        });
    }
    let velocity = error * gains.kp_place + (error - state.e_place) * gains.kd_place;
    state.e_place = error;
    Ok(PlaceCommand {
        velocity,
        yaw_rate: gains.kp_place_yaw * yaw_error,
        error,
        yaw_error,
        release: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ChannelId, SlotStatus};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn obs(u: f64, v: f64, yaw: f64, area: f64) -> BrickObservation {
        BrickObservation {
            center_px: (u, v),
            yaw_rad: yaw,
            area_px2: area,
        }
    }

    fn slot(kind: BrickKind) -> BrickSlot {
        BrickSlot {
            channel: ChannelId(0),
            layer: 0,
            index: 0,
            offset_m: 0.0,
            target_pose: Pose::new(0.0, 0.0, 0.0, 0.0),
            required_kind: kind,
            status: SlotStatus::Empty,
        }
    }

    #[test]
    fn centred_gives_zero() {
        let cam = CameraModel::downward();
        let mut s = ServoState::default();
        assert_eq!(centering_command(&obs(320.0, 240.0, 0.0, 1.0), &cam, &PdGains::default(), &mut s), (0.0, 0.0));
    }

    #[test]
    fn proportional_centering_first_tick() {
        let cam = CameraModel::downward();
        let gains = PdGains {
            kp_cx: 0.01,
            kd_cx: 0.0,
            ..PdGains::default()
        };
        let mut s = ServoState::default();
        let (vx, _) = centering_command(&obs(420.0, 240.0, 0.0, 1.0), &cam, &gains, &mut s);
        assert_relative_eq!(vx, 1.0, epsilon = 1e-12);
        assert_eq!(s.e_cx, 100.0);
    }

    #[test]
    fn derivative_only_vanishes_on_constant_error() {
        let cam = CameraModel::downward();
        let gains = PdGains {
            kp_cx: 0.0,
            kd_cx: 0.5,
            kp_cy: 0.0,
            kd_cy: 0.5,
            ..PdGains::default()
        };
        let mut s = ServoState::default();
        centering_command(&obs(400.0, 200.0, 0.0, 1.0), &cam, &gains, &mut s);
        let (vx, vy) = centering_command(&obs(400.0, 200.0, 0.0, 1.0), &cam, &gains, &mut s);
        assert_eq!((vx, vy), (0.0, 0.0));
    }

    #[test]
    fn yaw_loop() {
        let gains = PdGains {
            kp_yaw: 1.0,
            kd_yaw: 0.0,
            ..PdGains::default()
        };
        let mut s = ServoState::default();
        assert_eq!(yaw_command(&obs(0.0, 0.0, 0.0, 1.0), &gains, &mut s), 0.0);
        let mut s = ServoState::default();
        assert_relative_eq!(yaw_command(&obs(0.0, 0.0, 0.5, 1.0), &gains, &mut s), 0.5);
        let mut s = ServoState::default();
        assert_relative_eq!(yaw_command(&obs(0.0, 0.0, -0.5, 1.0), &gains, &mut s), -0.5);
    }

    #[test]
    fn descent_from_area_error() {
        let cam = CameraModel::downward();
        let gains = PdGains {
            kp_area: 1e-3,
            kd_area: 0.0,
            ..PdGains::default()
        };
        let mut s = ServoState::with_desired_area(4000.0);
        assert_eq!(descend_command(&obs(320.0, 240.0, 0.0, 4000.0), &cam, &gains, &mut s, 2.0), 0.0);
        let mut s = ServoState::with_desired_area(4000.0);
        let vz = descend_command(&obs(320.0, 240.0, 0.0, 1000.0), &cam, &gains, &mut s, 2.0);
        assert_relative_eq!(vz, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn descent_holds_when_off_centre() {
        let cam = CameraModel::downward();
        let gains = PdGains {
            kp_area: 1e-3,
            ..PdGains::default()
        };
        let mut s = ServoState::with_desired_area(4000.0);
        assert_eq!(descend_command(&obs(330.0, 240.0, 0.0, 1000.0), &cam, &gains, &mut s, 2.0), 0.0);
    }

    #[test]
    fn ugv_speed_from_area() {
        let cam = CameraModel::forward();
        let gains = PdGains {
            kp_v: 1e-3,
            ..PdGains::default()
        };
        let mut s = ServoState::with_desired_area(8000.0);
        let (v, w) = ugv_approach(&obs(320.0, 240.0, 0.0, 8000.0), &cam, &gains, &mut s, 8.3333);
        assert_eq!((v, w), (0.0, 0.0));
        let mut s = ServoState::with_desired_area(8000.0);
        let (v, _) = ugv_approach(&obs(320.0, 240.0, 0.0, 4000.0), &cam, &gains, &mut s, 8.3333);
        assert_relative_eq!(v, 4.0, epsilon = 1e-12);
        // too close: never reverses
        let mut s = ServoState::with_desired_area(8000.0);
        let (v, _) = ugv_approach(&obs(320.0, 240.0, 0.0, 9000.0), &cam, &gains, &mut s, 8.3333);
        assert_eq!(v, 0.0);
    }

    /// One-step closed loop: turn by the commanded rate and re-project the brick.
    #[test]
    fn ugv_turns_toward_brick_on_the_left() {
        use crate::perception::observe_brick;
        use crate::world::*;
        let cam = CameraModel::forward();
        let brick = BrickInstance {
            id: BrickId(0),
            kind: BrickKind::Green,
            pose: Pose::new(4.0, 1.0, 0.0, 0.0),
            state: BrickState::InPile(SpotId(0)),
            home: SpotId(0),
        };
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0);
        let o = observe_brick(&cam, &pose, &brick).unwrap();
        let e0 = o.center_px.0 - 320.0;
        assert!(e0 < 0.0);
        let mut s = ServoState::with_desired_area(1e5);
        let (_, w) = ugv_approach(&o, &cam, &PdGains::default(), &mut s, 8.3);
        assert!(w > 0.0);
        let turned = Pose::new(0.0, 0.0, 0.0, w * 0.05);
        let e1 = observe_brick(&cam, &turned, &brick).unwrap().center_px.0 - 320.0;
        assert!(e1.abs() < e0.abs());
    }

    fn edge_at(along: f64) -> EdgeObservation {
        EdgeObservation {
            pose: Pose::new(along, 0.0, 0.0, 0.0),
            channel: ChannelId(0),
            layer: 0,
        }
    }

    #[test]
    fn green_after_red_edge() {
        let target = placement_target(&edge_at(0.30), BrickKind::Green);
        assert_relative_eq!(target.position.x, 0.60, epsilon = 1e-12);
        assert_relative_eq!(target.position.z, 0.10, epsilon = 1e-12);
    }

    #[test]
    fn at_target_releases() {
        let edge = edge_at(0.3);
        let target = placement_target(&edge, BrickKind::Green);
        let mut s = ServoState::default();
        let cmd = place_alignment(Some(&edge), &slot(BrickKind::Green), &target, &PdGains::default(), &mut s, &Tolerances::default()).unwrap();
        assert!(cmd.release);
        assert_eq!(cmd.velocity, Vec3::zeros());
        assert_eq!(cmd.yaw_rate, 0.0);
    }

    #[test]
    fn moves_toward_target_otherwise() {
        let edge = edge_at(0.3);
        let held = Pose::new(0.0, 0.5, 0.6, 0.0);
        let mut s = ServoState::default();
        let cmd = place_alignment(Some(&edge), &slot(BrickKind::Green), &held, &PdGains::default(), &mut s, &Tolerances::default()).unwrap();
        assert!(!cmd.release);
        assert!(cmd.velocity.x > 0.0 && cmd.velocity.y < 0.0 && cmd.velocity.z < 0.0);
    }

    #[test]
    fn lost_edge() {
        let mut s = ServoState::default();
        let r = place_alignment(None, &slot(BrickKind::Red), &Pose::new(0.0, 0.0, 0.0, 0.0), &PdGains::default(), &mut s, &Tolerances::default());
        assert_eq!(r, Err(ControlError::EdgeLost));
    }

    proptest! {
        #[test]
        fn pd_is_linear_in_error_history(e0 in -200.0..200.0f64, e1 in -200.0..200.0f64, alpha in -5.0..5.0f64) {
            let cam = CameraModel::downward();
            let g = PdGains::default();
            let run = |scale: f64| {
                let mut s = ServoState::default();
                centering_command(&obs(320.0 + scale * e0, 240.0 + scale * e0, 0.0, 1.0), &cam, &g, &mut s);
                centering_command(&obs(320.0 + scale * e1, 240.0 + scale * e1, 0.0, 1.0), &cam, &g, &mut s)
            };
            let (a, b) = (run(1.0), run(alpha));
            prop_assert!((b.0 - alpha * a.0).abs() < 1e-9 * (1.0 + a.0.abs()));
            prop_assert!((b.1 - alpha * a.1).abs() < 1e-9 * (1.0 + a.1.abs()));
        }

        #[test]
        fn zero_gains_zero_commands(u in 0.0..640.0f64, v in 0.0..480.0f64, yaw in -1.5..1.5f64, area in 1.0..1e5f64) {
            let cam = CameraModel::downward();
            let g = PdGains::zero();
            let o = obs(u, v, yaw, area);
            let mut s = ServoState::with_desired_area(5000.0);
            prop_assert_eq!(centering_command(&o, &cam, &g, &mut s), (0.0, 0.0));
            prop_assert_eq!(yaw_command(&o, &g, &mut s), 0.0);
            prop_assert_eq!(descend_command(&o, &cam, &g, &mut s, 1e9), 0.0);
            let (vv, w) = ugv_approach(&o, &cam, &g, &mut s, 8.0);
            prop_assert_eq!(vv, 0.0);
            prop_assert_eq!(w, 0.0);
        }

        #[test]
        fn yaw_command_is_odd(yaw in -1.5..1.5f64) {
            let g = PdGains::default();
            let mut a = ServoState::default();
            let mut b = ServoState::default();
            prop_assert_eq!(yaw_command(&obs(0.0, 0.0, yaw, 1.0), &g, &mut a), -yaw_command(&obs(0.0, 0.0, -yaw, 1.0), &g, &mut b));
        }
    }
}
