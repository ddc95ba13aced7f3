//! Analytic camera model standing in for the brick, channel and landmark detectors.
//!
//! Image axes follow the camera body frame: for a downward camera `u` grows
//! with the forward offset and `v` with the leftward offset. A forward camera
//! looks along body x with `u` growing to the right and `v` downward.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_half_pi, wrap_pi, horizontal_distance_to_segment, rotate_z, Pose, Vec3};
use crate::world::{BrickId, BrickInstance, ChannelId, Dashboard, Landmark, LandmarkInfo, SlotStatus, BRICK_HEIGHT_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mount {
    Downward,
    Forward,
    /// Downward-looking, shifted sideways on the airframe.
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    pub mount: Mount,
    /// Mount position in the agent body frame.
    pub offset: Vec3,
}

impl CameraModel {
    pub fn new(focal_px: f64, width_px: f64, height_px: f64, mount: Mount) -> Self {
        Self {
            focal_px,
            width_px,
            height_px,
            mount,
            offset: Vec3::zeros(),
        }
    }

    pub fn downward() -> Self {
        Self::new(500.0, 640.0, 480.0, Mount::Downward)
    }

    pub fn forward() -> Self {
        Self::new(500.0, 640.0, 480.0, Mount::Forward)
    }

    pub fn is_valid(&self) -> bool {
        self.focal_px > 0.0 && self.width_px > 0.0 && self.height_px > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width_px / 2.0, self.height_px / 2.0)
    }

    /// World pose of the camera for an agent at `agent`.
    pub fn pose_on(&self, agent: &Pose) -> Pose {
        Pose {
            position: agent.to_world(&self.offset),
            yaw: agent.yaw,
        }
    }

    /// Full field of view across the narrower image side.
    pub fn narrow_fov(&self) -> f64 {
        2.0 * (self.width_px.min(self.height_px) / 2.0 / self.focal_px).atan()
    }

    /// Image area a brick face of `face_m2` covers at depth `depth`.
    pub fn area_at_depth(&self, face_m2: f64, depth: f64) -> f64 {
        face_m2 * self.focal_px * self.focal_px / (depth * depth)
    }

    fn in_image(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width_px).contains(&u) && (0.0..=self.height_px).contains(&v)
    }
}

/// What the brick detector reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrickObservation {
    pub center_px: (f64, f64),
    /// Major axis angle relative to the camera, in (-pi/2, pi/2].
    pub yaw_rad: f64,
    pub area_px2: f64,
}

/// Project a brick through the camera. `None` when it is behind the camera or
/// its centre falls outside the image.
pub fn observe_brick(camera: &CameraModel, camera_pose: &Pose, brick: &BrickInstance) -> Option<BrickObservation> {
    let (cx, cy) = camera.center();
    let f = camera.focal_px;
    let yaw_rad = wrap_half_pi(brick.pose.yaw - camera_pose.yaw);
    match camera.mount {
        Mount::Downward | Mount::Side => {
            let top = brick.pose.z() + BRICK_HEIGHT_M / 2.0;
            let depth = camera_pose.z() - top;
            if depth <= 0.0 {
                return None;
            }
            let rel = camera_pose.to_local(&brick.pose.position);
            let u = cx + f * rel.x / depth;
            let v = cy + f * rel.y / depth;
            if !camera.in_image(u, v) {
                return None;
            }
            Some(BrickObservation {
                center_px: (u, v),
                yaw_rad,
                area_px2: camera.area_at_depth(brick.kind.top_area_m2(), depth),
            })
        }
        Mount::Forward => {
            let rel = camera_pose.to_local(&brick.pose.position);
            let depth = rel.x;
            if depth <= 0.0 {
                return None;
            }
            let u = cx - f * rel.y / depth;
            let v = cy - f * rel.z / depth;
            if !camera.in_image(u, v) {
                return None;
            }
            Some(BrickObservation {
                center_px: (u, v),
                yaw_rad,
                area_px2: camera.area_at_depth(brick.kind.side_area_m2(), depth),
            })
        }
    }
}

/// Recover the brick offset in the camera frame from a downward observation at known depth.
pub fn back_project(camera: &CameraModel, obs: &BrickObservation, depth: f64) -> (f64, f64) {
    let (cx, cy) = camera.center();
    (
        (obs.center_px.0 - cx) * depth / camera.focal_px,
        (obs.center_px.1 - cy) * depth / camera.focal_px,
    )
}

/// Of all visible candidates, the one projected closest to the image centre.
pub fn observe_nearest<'a>(
    camera: &CameraModel,
    camera_pose: &Pose,
    candidates: impl IntoIterator<Item = &'a BrickInstance>,
) -> Option<(BrickId, BrickObservation)> {
    let (cx, cy) = camera.center();
    let mut best: Option<(f64, BrickId, BrickObservation)> = None;
    for brick in candidates {
        if let Some(obs) = observe_brick(camera, camera_pose, brick) {
            let d2 = (obs.center_px.0 - cx).powi(2) + (obs.center_px.1 - cy).powi(2);
            let better = match &best {
                None => true,
                Some((bd, bid, _)) => d2 < *bd || (d2 == *bd && brick.id < *bid),
            };
            if better {
                best = Some((d2, brick.id, obs));
            }
        }
    }
    best.map(|(_, id, obs)| (id, obs))
}

/// Zero-mean Gaussian perturbation of an observation. `sigma_px` also scales
/// the area noise (in px² per px of centre noise) and yaw noise (mrad per px).
pub fn perturb<R: Rng + ?Sized>(obs: &BrickObservation, camera: &CameraModel, sigma_px: f64, rng: &mut R) -> BrickObservation {
    if sigma_px <= 0.0 {
        return *obs;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut n = || normal.sample(rng);
    let u = (obs.center_px.0 + sigma_px * n()).clamp(0.0, camera.width_px);
    let v = (obs.center_px.1 + sigma_px * n()).clamp(0.0, camera.height_px);
    let yaw = wrap_half_pi(obs.yaw_rad + 1e-3 * sigma_px * n());
    let area = (obs.area_px2 + sigma_px * obs.area_px2.sqrt() * n()).max(1.0);
    BrickObservation {
        center_px: (u, v),
        yaw_rad: yaw,
        area_px2: area,
    }
}

/// Pose of the placement reference edge, expressed in the observer's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeObservation {
    /// Edge point at the base of the current layer, and the wall direction.
    pub pose: Pose,
    pub channel: ChannelId,
    pub layer: usize,
}

/// Channel start for an empty layer, else the free end of the last brick laid in it.
pub fn observe_edge(
    sensor_pose: &Pose,
    channel: ChannelId,
    dashboard: &Dashboard,
    sensing_radius_m: f64,
) -> Option<EdgeObservation> {
    let ch = dashboard.channel(channel).ok()?;
    if horizontal_distance_to_segment(&sensor_pose.position, &ch.origin, &ch.end()) > sensing_radius_m {
        return None;
    }
    let layer = dashboard.current_layer(channel)?;
    let last = dashboard
        .channel_slots(channel)
        .filter(|(_, s)| s.layer == layer)
        .filter_map(|(_, s)| match s.status {
            SlotStatus::Filled(b) => Some((s.offset_m, b)),
            _ => None,
        })
        .max_by(|a, b| a.0.total_cmp(&b.0));

    let world = match last {
        None => ch.pose_at(0.0, layer),
        Some((_, brick_id)) => {
            let brick = dashboard.brick(brick_id).ok()?;
            let yaw = ch.heading + wrap_half_pi(brick.pose.yaw - ch.heading);
            let half = Vec3::new(brick.kind.length_m() / 2.0, 0.0, -BRICK_HEIGHT_M / 2.0);
            Pose {
                position: brick.pose.position + rotate_z(&half, yaw),
                yaw,
            }
        }
    };
    Some(EdgeObservation {
        pose: Pose {
            position: sensor_pose.to_local(&world.position),
            yaw: wrap_pi(world.yaw - sensor_pose.yaw),
        },
        channel,
        layer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryEvent {
    pub landmark: Landmark,
    pub position: Vec3,
}

/// Landmarks whose ground position lies inside the downward camera footprint.
pub fn discoveries(camera: &CameraModel, camera_pose: &Pose, landmarks: &[LandmarkInfo]) -> Vec<DiscoveryEvent> {
    landmarks
        .iter()
        .filter_map(|l| {
            let depth = camera_pose.z() - l.position.z;
            if depth <= 0.0 {
                return None;
            }
            let half_w = camera.width_px / 2.0 * depth / camera.focal_px;
            let half_h = camera.height_px / 2.0 * depth / camera.focal_px;
            let rel = camera_pose.to_local(&l.position);
            (rel.x.abs() <= half_w && rel.y.abs() <= half_h).then_some(DiscoveryEvent {
                landmark: l.landmark,
                position: l.position,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brick_at(kind: BrickKind, x: f64, y: f64, top: f64, yaw: f64) -> BrickInstance {
        BrickInstance {
            id: BrickId(0),
            kind,
            pose: Pose::new(x, y, top - BRICK_HEIGHT_M / 2.0, yaw),
            state: BrickState::InPile(SpotId(0)),
            home: SpotId(0),
        }
    }

    /// Independent pinhole: rotate the offset by hand, divide by depth.
    fn hand_projection(cam: (f64, f64, f64, f64), brick: (f64, f64, f64), f: f64, w: f64, h: f64) -> (f64, f64) {
        let (cx, cy, cz, yaw) = cam;
        let (dx, dy) = (brick.0 - cx, brick.1 - cy);
        let lx = dx * yaw.cos() + dy * yaw.sin();
        let ly = -dx * yaw.sin() + dy * yaw.cos();
        let d = cz - brick.2;
        (w / 2.0 + f * lx / d, h / 2.0 + f * ly / d)
    }

    #[test]
    fn centred_red_brick_two_metres_down() {
        let cam = CameraModel::downward();
        let obs = observe_brick(&cam, &Pose::new(3.0, 4.0, 2.0, 0.0), &brick_at(BrickKind::Red, 3.0, 4.0, 0.0, 0.0)).unwrap();
        assert_eq!(obs.center_px, (320.0, 240.0));
        assert_eq!(obs.yaw_rad, 0.0);
        assert_relative_eq!(obs.area_px2, 3750.0, epsilon = 1e-9);
    }

    #[test]
    fn forward_offset_shifts_u() {
        let cam = CameraModel::downward();
        let obs = observe_brick(&cam, &Pose::new(0.0, 0.0, 2.0, 0.0), &brick_at(BrickKind::Red, 0.4, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(obs.center_px.0, 420.0, epsilon = 1e-9);
        let hand = hand_projection((0.0, 0.0, 2.0, 0.0), (0.4, 0.0, 0.0), 500.0, 640.0, 480.0);
        assert_relative_eq!(obs.center_px.0, hand.0, epsilon = 1e-9);
    }

    #[test]
    fn outside_frustum_is_none() {
        let cam = CameraModel::downward();
        assert!(observe_brick(&cam, &Pose::new(0.0, 0.0, 2.0, 0.0), &brick_at(BrickKind::Red, 5.0, 0.0, 0.0, 0.0)).is_none());
        // above the camera
        assert!(observe_brick(&cam, &Pose::new(0.0, 0.0, 2.0, 0.0), &brick_at(BrickKind::Red, 0.0, 0.0, 3.0, 0.0)).is_none());
    }

    #[test]
    fn forward_camera_sees_brick_ahead() {
        let cam = CameraModel::forward();
        let mut b = brick_at(BrickKind::Blue, 4.0, 0.5, 0.2, 0.0);
        b.pose.position.z = 0.0;
        let obs = observe_brick(&cam, &Pose::new(0.0, 0.0, 0.0, 0.0), &b).unwrap();
        // brick to the left lands left of centre
        assert!(obs.center_px.0 < 320.0);
        assert_relative_eq!(obs.area_px2, 0.24 * 250000.0 / 16.0, epsilon = 1e-9);
        assert!(observe_brick(&cam, &Pose::new(0.0, 0.0, 0.0, std::f64::consts::PI), &b).is_none());
    }

    #[test]
    fn nearest_to_centre_wins() {
        let cam = CameraModel::downward();
        let mut a = brick_at(BrickKind::Red, 1.0, 0.0, 0.0, 0.0);
        let mut b = brick_at(BrickKind::Red, 0.1, 0.0, 0.0, 0.0);
        a.id = BrickId(1);
        b.id = BrickId(2);
        let (id, _) = observe_nearest(&cam, &Pose::new(0.0, 0.0, 4.0, 0.0), [&a, &b]).unwrap();
        assert_eq!(id, BrickId(2));
    }

    fn board_with_channel() -> Dashboard {
        let ch = Channel {
            id: ChannelId(0),
            origin: Vec3::new(10.0, 10.0, UAV_PLATFORM_HEIGHT_M),
            heading: 0.0,
            length_m: CHANNEL_LENGTH_M,
            reserved_kind: None,
            blocked_by: None,
            site: Site::UavSite,
        };
        let spots = vec![SpotDef {
            row: 0,
            col: 0,
            pose: Pose::new(0.0, 0.0, 0.0, 0.0),
            owner: PileOwner::UavPile,
            count: 2,
        }];
        Dashboard::new(
            &spots,
            vec![(ch, WallSpec::new(vec![vec![BrickKind::Red, BrickKind::Red]]))],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn empty_channel_edge_is_origin() {
        let d = board_with_channel();
        let sensor = Pose::new(10.0, 10.0, 4.0, 0.0);
        let edge = observe_edge(&sensor, ChannelId(0), &d, 3.0).unwrap();
        let world = sensor.to_world(&edge.pose.position);
        assert_relative_eq!((world - d.channels[0].origin).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_after_red_brick() {
        let mut d = board_with_channel();
        let a = AgentId(0);
        d.target_spot(SpotId(0), a).unwrap();
        let b = d.pick_brick(SpotId(0), a).unwrap();
        d.block_channel(ChannelId(0), a).unwrap();
        d.reserve_slot(SlotId(0), a).unwrap();
        let pose = d.slots[0].target_pose;
        d.place_brick(b, SlotId(0), pose).unwrap();
        let sensor = Pose::new(11.0, 9.0, 3.0, 0.5);
        let edge = observe_edge(&sensor, ChannelId(0), &d, 3.0).unwrap();
        let world = sensor.to_world(&edge.pose.position);
        assert_relative_eq!(world.x, 10.30, epsilon = 1e-12);
        assert_relative_eq!(world.y, 10.0, epsilon = 1e-12);
        assert_relative_eq!(world.z, UAV_PLATFORM_HEIGHT_M, epsilon = 1e-12);
        assert!(observe_edge(&Pose::new(30.0, 30.0, 3.0, 0.0), ChannelId(0), &d, 3.0).is_none());
    }

    #[test]
    fn footprint_discoveries() {
        let cam = CameraModel::new(320.0, 640.0, 640.0, Mount::Downward);
        let lm = |landmark, x, y| LandmarkInfo {
            landmark,
            position: Vec3::new(x, y, 0.0),
            discovered: false,
        };
        let marks = vec![lm(Landmark::UgvPile, 12.0, 8.0), lm(Landmark::UavSite, 30.0, 8.0)];
        // 10 m up: footprint is 20 m square
        let ev = discoveries(&cam, &Pose::new(10.0, 10.0, 10.0, 0.0), &marks);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].landmark, Landmark::UgvPile);
        assert!(discoveries(&cam, &Pose::new(10.0, 35.0, 10.0, 0.0), &marks).is_empty());
        let both = discoveries(&cam, &Pose::new(21.0, 8.0, 10.0, 0.0), &marks);
        // hand containment: |12-21| <= 10 and |30-21| <= 10
        assert_eq!(both.len(), 2);
    }

    proptest! {
        #[test]
        fn back_projection_recovers_offset(fx in -0.4..0.4f64, fy in -0.4..0.4f64, yaw in -3.0..3.0f64, depth in 0.5..6.0f64) {
            let cam = CameraModel::downward();
            // stay inside the frame: half-height fov is 240/500 of depth
            let (dx, dy) = (fx * depth, fy * depth);
            let pose = Pose::new(10.0, 10.0, depth, yaw);
            let world = pose.to_world(&Vec3::new(dx, dy, 0.0));
            let b = brick_at(BrickKind::Green, world.x, world.y, 0.0, 0.3);
            let obs = observe_brick(&cam, &pose, &b).unwrap();
            let (rx, ry) = back_project(&cam, &obs, depth);
            prop_assert!((rx - dx).abs() < 1e-6 && (ry - dy).abs() < 1e-6);
        }

        #[test]
        fn area_times_depth_squared_constant(depth in 0.3..8.0f64, k in 0usize..4) {
            let cam = CameraModel::downward();
            let kind = BrickKind::ALL[k];
            let b = brick_at(kind, 0.0, 0.0, 0.0, 0.0);
            let obs = observe_brick(&cam, &Pose::new(0.0, 0.0, depth, 0.0), &b).unwrap();
            let c = obs.area_px2 * depth * depth;
            let expect = kind.top_area_m2() * 500.0 * 500.0;
            prop_assert!(((c - expect) / expect).abs() < 1e-6);
        }

        #[test]
        fn yaw_is_invariant_to_common_rotation(rot in -6.0..6.0f64, byaw in -3.0..3.0f64) {
            let cam = CameraModel::downward();
            let b0 = brick_at(BrickKind::Blue, 0.0, 0.0, 0.0, byaw);
            let o0 = observe_brick(&cam, &Pose::new(0.0, 0.0, 2.0, 0.0), &b0).unwrap();
            let b1 = brick_at(BrickKind::Blue, 0.0, 0.0, 0.0, byaw + rot);
            let o1 = observe_brick(&cam, &Pose::new(0.0, 0.0, 2.0, rot), &b1).unwrap();
            prop_assert!(wrap_half_pi(o0.yaw_rad - o1.yaw_rad).abs() < 1e-9);
        }

        #[test]
        fn centred_means_image_centre(x in 0.0..50.0f64, y in 0.0..40.0f64, depth in 0.3..8.0f64, yaw in -3.0..3.0f64) {
            let cam = CameraModel::downward();
            let b = brick_at(BrickKind::Orange, x, y, 0.0, 0.0);
            let obs = observe_brick(&cam, &Pose::new(x, y, depth, yaw), &b).unwrap();
            prop_assert_eq!(obs.center_px, (320.0, 240.0));
        }
    }
}
