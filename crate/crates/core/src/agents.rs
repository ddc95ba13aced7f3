//! Agent kinematics, the pick/place mission state machine, transit corridors
//! and the exploration sweep.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_pi, Bounds, Pose, Vec3};
use crate::world::{AgentId, BrickId, BrickKind};

/// 15 km/h.
pub const UAV_SPEED_LIMIT_MPS: f64 = 15.0 / 3.6;
/// 30 km/h.
pub const UGV_SPEED_LIMIT_MPS: f64 = 30.0 / 3.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("field of view {0} rad must lie strictly between 0 and pi")]
    DegenerateFov(f64),
    #[error("exploration altitude {0} m is outside the arena")]
    InvalidAltitude(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Uav,
    Ugv,
}

/// Linear velocity in the world frame plus yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub yaw_rate: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, vz: f64, yaw_rate: f64) -> Self {
        Self {
            linear: Vec3::new(vx, vy, vz),
            yaw_rate,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    PickFail,
    PlaceFail,
    ConnectivityLoss,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissionMode {
    Idle,
    Explore,
    TravelToPick,
    AlignOverBrick,
    Descend,
    Grip,
    Ascend,
    TravelToPlace,
    PlaceAlign,
    Release,
    Fault(FaultKind),
}

impl MissionMode {
    /// Modes in which the agent carries a brick.
    pub fn carries_payload(self) -> bool {
        matches!(
            self,
            MissionMode::Ascend | MissionMode::TravelToPlace | MissionMode::PlaceAlign | MissionMode::Release
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            MissionMode::Idle => "Idle",
            MissionMode::Explore => "Explore",
            MissionMode::TravelToPick => "TravelToPick",
            MissionMode::AlignOverBrick => "AlignOverBrick",
            MissionMode::Descend => "Descend",
            MissionMode::Grip => "Grip",
            MissionMode::Ascend => "Ascend",
            MissionMode::TravelToPlace => "TravelToPlace",
            MissionMode::PlaceAlign => "PlaceAlign",
            MissionMode::Release => "Release",
            MissionMode::Fault(FaultKind::PickFail) => "Fault(PickFail)",
            MissionMode::Fault(FaultKind::PlaceFail) => "Fault(PlaceFail)",
            MissionMode::Fault(FaultKind::ConnectivityLoss) => "Fault(ConnectivityLoss)",
            MissionMode::Fault(FaultKind::Collision) => "Fault(Collision)",
        }
    }

    pub const ALL: [MissionMode; 14] = [
        MissionMode::Idle,
        MissionMode::Explore,
        MissionMode::TravelToPick,
        MissionMode::AlignOverBrick,
        MissionMode::Descend,
        MissionMode::Grip,
        MissionMode::Ascend,
        MissionMode::TravelToPlace,
        MissionMode::PlaceAlign,
        MissionMode::Release,
        MissionMode::Fault(FaultKind::PickFail),
        MissionMode::Fault(FaultKind::PlaceFail),
        MissionMode::Fault(FaultKind::ConnectivityLoss),
        MissionMode::Fault(FaultKind::Collision),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Explore,
    Pick,
    Place,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissionEvent {
    TaskAssigned(TaskKind),
    ExplorationDone,
    ArrivedAtPick,
    Centered,
    TouchedDown,
    GripConfirmed,
    AtCorridor,
    ArrivedAtPlace,
    EdgeLocked,
    Released,
    FaultRaised(FaultKind),
    FaultCleared,
}

impl MissionEvent {
    pub const ALL: [MissionEvent; 17] = [
        MissionEvent::TaskAssigned(TaskKind::Explore),
        MissionEvent::TaskAssigned(TaskKind::Pick),
        MissionEvent::TaskAssigned(TaskKind::Place),
        MissionEvent::ExplorationDone,
        MissionEvent::ArrivedAtPick,
        MissionEvent::Centered,
        MissionEvent::TouchedDown,
        MissionEvent::GripConfirmed,
        MissionEvent::AtCorridor,
        MissionEvent::ArrivedAtPlace,
        MissionEvent::EdgeLocked,
        MissionEvent::Released,
        MissionEvent::FaultRaised(FaultKind::PickFail),
        MissionEvent::FaultRaised(FaultKind::PlaceFail),
        MissionEvent::FaultRaised(FaultKind::ConnectivityLoss),
        MissionEvent::FaultRaised(FaultKind::Collision),
        MissionEvent::FaultCleared,
    ];
}

/// The transition table, or `None` for an illegal pair.
pub fn try_transition(mode: MissionMode, event: MissionEvent) -> Option<MissionMode> {
    use MissionEvent as E;
    use MissionMode as M;
    match (mode, event) {
        (_, E::FaultRaised(kind)) => Some(M::Fault(kind)),
        (M::Fault(_), E::FaultCleared) => Some(M::Idle),
        (M::Idle, E::TaskAssigned(TaskKind::Explore)) => Some(M::Explore),
        (M::Idle, E::TaskAssigned(TaskKind::Pick)) => Some(M::TravelToPick),
        // place tasks are issued while the brick is already on board
        (M::Grip | M::Ascend, E::TaskAssigned(TaskKind::Place)) => Some(mode),
        (M::Explore, E::ExplorationDone) => Some(M::Idle),
        (M::TravelToPick, E::ArrivedAtPick) => Some(M::AlignOverBrick),
        (M::AlignOverBrick, E::Centered) => Some(M::Descend),
        (M::Descend, E::TouchedDown) => Some(M::Grip),
        (M::Grip, E::GripConfirmed) => Some(M::Ascend),
        (M::Ascend, E::AtCorridor) => Some(M::TravelToPlace),
        (M::TravelToPlace, E::ArrivedAtPlace) => Some(M::PlaceAlign),
        (M::PlaceAlign, E::EdgeLocked) => Some(M::Release),
        (M::Release, E::Released) => Some(M::Idle),
        _ => None,
    }
}

/// Total transition function: illegal pairs keep the current mode and log a warning.
pub fn mode_transition(mode: MissionMode, event: MissionEvent) -> MissionMode {
    try_transition(mode, event).unwrap_or_else(|| {
        warn!("ignoring event {event:?} in mode {mode:?}");
        mode
    })
}

/// Altitudes of the three transit corridors, by brick weight tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorMap {
    pub heavy_m: f64,
    pub medium_m: f64,
    pub light_m: f64,
}

impl Default for CorridorMap {
    fn default() -> Self {
        Self {
            heavy_m: 3.0,
            medium_m: 5.0,
            light_m: 7.0,
        }
    }
}

impl CorridorMap {
    /// Heavier bricks fly lower. Red and Green weigh the same and share the top corridor.
    pub fn for_kind(&self, kind: BrickKind) -> f64 {
        let mass = kind.mass_kg();
        if mass >= 2.0 {
            self.heavy_m
        } else if mass >= 1.5 {
            self.medium_m
        } else {
            self.light_m
        }
    }

    pub fn highest(&self) -> f64 {
        self.heavy_m.max(self.medium_m).max(self.light_m)
    }
}

pub fn corridor_for(kind: BrickKind) -> f64 {
    CorridorMap::default().for_kind(kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub pose: Pose,
    pub velocity: Twist,
    pub mode: MissionMode,
    pub payload: Option<BrickId>,
    pub corridor_m: Option<f64>,
    pub speed_limit_mps: f64,
    pub yaw_rate_limit: f64,
}

impl AgentState {
    pub fn new(id: AgentId, kind: AgentKind, pose: Pose) -> Self {
        let speed_limit_mps = match kind {
            AgentKind::Uav => UAV_SPEED_LIMIT_MPS,
            AgentKind::Ugv => UGV_SPEED_LIMIT_MPS,
        };
        let mut pose = pose;
        if kind == AgentKind::Ugv {
            pose.position.z = 0.0;
        }
        Self {
            id,
            kind,
            pose,
            velocity: Twist::zero(),
            mode: MissionMode::Idle,
            payload: None,
            corridor_m: None,
            speed_limit_mps,
            yaw_rate_limit: 2.0,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.linear.norm()
    }
}

/// Clamp a velocity command to what the vehicle can do.
pub fn saturate(state: &AgentState, command: &Twist) -> Twist {
    let mut linear = command.linear;
    if state.kind == AgentKind::Ugv {
        linear.z = 0.0;
    }
    let norm = linear.norm();
    if norm > state.speed_limit_mps {
        linear *= state.speed_limit_mps / norm;
    }
    Twist {
        linear,
        yaw_rate: command.yaw_rate.clamp(-state.yaw_rate_limit, state.yaw_rate_limit),
    }
}

/// First-order integration: the saturated command becomes the velocity, then
/// the pose advances by one step and is clamped to the arena.
pub fn step_kinematics(state: &AgentState, command: &Twist, dt: f64, bounds: &Bounds) -> AgentState {
    debug_assert!(dt > 0.0);
    let velocity = saturate(state, command);
    let mut next = state.clone();
    next.velocity = velocity;
    next.pose.position = bounds.clamp(&(state.pose.position + velocity.linear * dt));
    if state.kind == AgentKind::Ugv {
        next.pose.position.z = 0.0;
    }
    next.pose.yaw = wrap_pi(state.pose.yaw + velocity.yaw_rate * dt);
    next
}

/// Boustrophedon sweep over the arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub waypoints: Vec<Vec3>,
    pub strip_width_m: f64,
    pub passes: usize,
}

/// Sweeps run along the longer horizontal axis. Pass spacing is the cross
/// extent divided evenly over the fewest passes whose footprints cover it.
pub fn lawnmower_plan(bounds: &Bounds, altitude: f64, fov_rad: f64) -> Result<ExplorationPlan, AgentError> {
    if !(fov_rad > 0.0 && fov_rad < std::f64::consts::PI) {
        return Err(AgentError::DegenerateFov(fov_rad));
    }
    if !(altitude > bounds.min.z && altitude <= bounds.max.z) {
        return Err(AgentError::InvalidAltitude(altitude));
    }
    let strip = 2.0 * altitude * (fov_rad / 2.0).tan();
    let extent = bounds.extent();
    let along_x = extent.x >= extent.y;
    let (long, cross) = if along_x { (extent.x, extent.y) } else { (extent.y, extent.x) };
    let passes = ((cross / strip) - 1e-9).ceil().max(1.0) as usize;
    let spacing = cross / passes as f64;
    let inset = (strip / 2.0).min(long / 2.0);

    let mut waypoints = Vec::with_capacity(2 * passes);
    for k in 0..passes {
        let c = spacing * (k as f64 + 0.5);
        let (a, b) = if k % 2 == 0 { (inset, long - inset) } else { (long - inset, inset) };
        for l in [a, b] {
            let p = if along_x {
                Vec3::new(bounds.min.x + l, bounds.min.y + c, altitude)
            } else {
                Vec3::new(bounds.min.x + c, bounds.min.y + l, altitude)
            };
            waypoints.push(p);
        }
    }
    Ok(ExplorationPlan {
        waypoints,
        strip_width_m: strip,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arena() -> Bounds {
        Bounds::from_size(50.0, 40.0, 20.0)
    }

    /// Independent coverage check: a square footprint of side `strip` dragged
    /// along each segment covers a point when the point is within half a strip
    /// of the segment both across and beyond its ends.
    fn uncovered_points(plan: &ExplorationPlan, bounds: &Bounds, step: f64) -> usize {
        let half = plan.strip_width_m / 2.0 + 1e-9;
        let nx = (bounds.extent().x / step).round() as usize;
        let ny = (bounds.extent().y / step).round() as usize;
        let mut missed = 0;
        for i in 0..=nx {
            for j in 0..=ny {
                let p = (bounds.min.x + i as f64 * step, bounds.min.y + j as f64 * step);
                let covered = plan.waypoints.windows(2).any(|w| {
                    let (a, b) = (w[0], w[1]);
                    let d = (b.x - a.x, b.y - a.y);
                    let len = (d.0 * d.0 + d.1 * d.1).sqrt();
                    let (ux, uy) = if len > 0.0 { (d.0 / len, d.1 / len) } else { (1.0, 0.0) };
                    let rel = (p.0 - a.x, p.1 - a.y);
                    let along = rel.0 * ux + rel.1 * uy;
                    let across = -rel.0 * uy + rel.1 * ux;
                    along >= -half && along <= len + half && across.abs() <= half
                });
                if !covered {
                    missed += 1;
                }
            }
        }
        missed
    }

    #[test]
    fn ninety_degree_fov_two_passes() {
        let plan = lawnmower_plan(&arena(), 10.0, 90f64.to_radians()).unwrap();
        assert_relative_eq!(plan.strip_width_m, 20.0, epsilon = 1e-9);
        assert_eq!(plan.passes, 2);
        assert_eq!(uncovered_points(&plan, &arena(), 0.1), 0);
    }

    #[test]
    fn ten_metre_strip_four_passes() {
        let fov = 2.0 * 0.5f64.atan();
        let plan = lawnmower_plan(&arena(), 10.0, fov).unwrap();
        assert_relative_eq!(plan.strip_width_m, 10.0, epsilon = 1e-9);
        assert_eq!(plan.passes, 4);
        assert_eq!(uncovered_points(&plan, &arena(), 0.1), 0);
        // one fewer pass leaves a gap, so the count is minimal
        let mut short = plan.clone();
        short.waypoints.truncate(6);
        assert!(uncovered_points(&short, &arena(), 0.1) > 0);
    }

    #[test]
    fn zero_fov_rejected() {
        assert_eq!(lawnmower_plan(&arena(), 10.0, 0.0), Err(AgentError::DegenerateFov(0.0)));
        assert!(lawnmower_plan(&arena(), 10.0, std::f64::consts::PI).is_err());
        assert_eq!(lawnmower_plan(&arena(), 25.0, 1.0), Err(AgentError::InvalidAltitude(25.0)));
    }

    #[test]
    fn corridor_tiers() {
        assert_eq!(corridor_for(BrickKind::Orange), 3.0);
        assert_eq!(corridor_for(BrickKind::Blue), 5.0);
        assert_eq!(corridor_for(BrickKind::Red), 7.0);
        assert_eq!(corridor_for(BrickKind::Green), 7.0);
        let mut kinds = BrickKind::ALL.to_vec();
        kinds.sort_by(|a, b| a.mass_kg().partial_cmp(&b.mass_kg()).unwrap());
        for w in kinds.windows(2) {
            assert!(corridor_for(w[1]) <= corridor_for(w[0]));
        }
    }

    #[test]
    fn uav_speed_clamped() {
        let s = AgentState::new(AgentId(0), AgentKind::Uav, Pose::new(10.0, 10.0, 5.0, 0.0));
        let n = step_kinematics(&s, &Twist::new(10.0, 0.0, 0.0, 0.0), 0.05, &arena());
        assert_relative_eq!(n.velocity.linear.x, 4.1667, epsilon = 1e-4);
        assert_relative_eq!(n.velocity.linear.x, UAV_SPEED_LIMIT_MPS, epsilon = 1e-12);
        assert_eq!(n.velocity.linear.y, 0.0);
    }

    #[test]
    fn zero_command_keeps_pose() {
        let s = AgentState::new(AgentId(0), AgentKind::Uav, Pose::new(10.0, 10.0, 5.0, 0.3));
        let n = step_kinematics(&s, &Twist::zero(), 0.05, &arena());
        assert_eq!(n.pose, s.pose);
    }

    #[test]
    fn ugv_stays_on_ground() {
        let s = AgentState::new(AgentId(3), AgentKind::Ugv, Pose::new(10.0, 10.0, 0.0, 0.0));
        let n = step_kinematics(&s, &Twist::new(1.0, 0.0, 1.0, 0.0), 0.05, &arena());
        assert_eq!(n.velocity.linear.z, 0.0);
        assert_eq!(n.pose.z(), 0.0);
        assert_relative_eq!(n.pose.x(), 10.05, epsilon = 1e-12);
    }

    #[test]
    fn pose_clamped_to_arena() {
        let s = AgentState::new(AgentId(0), AgentKind::Uav, Pose::new(0.05, 39.99, 5.0, 0.0));
        let n = step_kinematics(&s, &Twist::new(-4.0, 4.0, 0.0, 0.0), 0.05, &arena());
        assert!(arena().contains(&n.pose.position));
    }

    #[test]
    fn transitions_from_the_pick_place_loop() {
        use MissionEvent as E;
        use MissionMode as M;
        assert_eq!(mode_transition(M::Idle, E::TaskAssigned(TaskKind::Pick)), M::TravelToPick);
        assert_eq!(mode_transition(M::Grip, E::GripConfirmed), M::Ascend);
        assert_eq!(
            mode_transition(M::Descend, E::FaultRaised(FaultKind::PickFail)),
            M::Fault(FaultKind::PickFail)
        );
        assert_eq!(mode_transition(M::Release, E::Released), M::Idle);
        // illegal pair leaves mode alone
        assert_eq!(mode_transition(M::Idle, E::Released), M::Idle);
        assert_eq!(mode_transition(M::TravelToPick, E::EdgeLocked), M::TravelToPick);
    }

    #[test]
    fn release_needs_grip_first() {
        // walk the non-fault edges backwards: Release <- PlaceAlign <- TravelToPlace <- Ascend <- Grip
        let chain = [
            MissionMode::Release,
            MissionMode::PlaceAlign,
            MissionMode::TravelToPlace,
            MissionMode::Ascend,
            MissionMode::Grip,
        ];
        for pair in chain.windows(2) {
            let preds: Vec<(MissionMode, MissionEvent)> = MissionMode::ALL
                .iter()
                .flat_map(|&from| MissionEvent::ALL.iter().map(move |&e| (from, e)))
                .filter(|&(from, e)| from != pair[0] && try_transition(from, e) == Some(pair[0]))
                .collect();
            assert_eq!(preds.len(), 1, "{:?} has predecessors {preds:?}", pair[0]);
            assert_eq!(preds[0].0, pair[1]);
        }
    }

    proptest! {
        #[test]
        fn transition_is_total(m in 0usize..14, e in 0usize..17) {
            let mode = MissionMode::ALL[m];
            let next = mode_transition(mode, MissionEvent::ALL[e]);
            prop_assert!(MissionMode::ALL.contains(&next));
        }

        #[test]
        fn speed_never_exceeds_limit(vx in -50.0..50.0f64, vy in -50.0..50.0f64, vz in -50.0..50.0f64, ugv in any::<bool>()) {
            let kind = if ugv { AgentKind::Ugv } else { AgentKind::Uav };
            let s = AgentState::new(AgentId(0), kind, Pose::new(25.0, 20.0, if ugv { 0.0 } else { 5.0 }, 0.0));
            let n = step_kinematics(&s, &Twist::new(vx, vy, vz, 0.0), 0.05, &arena());
            prop_assert!(n.speed() <= s.speed_limit_mps + 1e-9);
        }

        #[test]
        fn lawnmower_covers_arena(alt in 4.0..20.0f64, fov in 0.6..2.6f64) {
            let plan = lawnmower_plan(&arena(), alt, fov).unwrap();
            prop_assert_eq!(uncovered_points(&plan, &arena(), 0.5), 0);
        }
    }
}
