//! What each agent does in each mission mode: the velocity command from the
//! pre-move state, and the phase exit checks after the move.

use crate::agents::{AgentKind, MissionEvent, MissionMode, TaskKind, Twist};
use crate::control::{
    centering_command, descend_command, desired_area, pixel_errors, place_alignment, ugv_approach, yaw_command, ServoState,
};
use crate::geometry::{rotate_z, wrap_half_pi, wrap_pi, Pose, Vec3};
use crate::perception::{discoveries, observe_brick, observe_edge, perturb, BrickObservation, CameraModel};
use crate::scenario::stack_top;
use crate::scheduler::{FaultEvent, TaskId, TaskVariant};
use crate::world::BrickInstance;

use super::engine::Engine;
use super::faults::FaultContext;
use super::SimError;

/// Ground route points count as reached within this distance.
const DRIVE_TOL_M: f64 = 0.02;
const TURN_TOL_RAD: f64 = 1e-3;
/// Heading error above which the ground vehicle turns on the spot.
const TURN_IN_PLACE_RAD: f64 = 0.05;
/// Fraction of the area set-point that counts as arrived.
const AREA_REACHED: f64 = 0.98;
/// Airborne threshold for idle UAVs.
const GROUNDED_M: f64 = 0.3;

impl Engine {
    pub(super) fn on_assigned(&mut self, i: usize, id: TaskId) -> Result<(), SimError> {
        let variant = self.scheduler.task(id).map(|t| t.variant.clone()).expect("task just created");
        let a = self.agents[i].clone();
        let p = a.pose.position;
        let rt = &mut self.rt[i];
        rt.clear_task();
        rt.task = Some(id);
        match variant {
            TaskVariant::Explore(plan) => {
                rt.route.push_back(Vec3::new(p.x, p.y, self.config.uav.explore_altitude_m));
                rt.climb = true;
                rt.route.extend(plan.waypoints.iter().copied());
                self.transition(i, MissionEvent::TaskAssigned(TaskKind::Explore));
            }
            TaskVariant::Pick { spot, kind } => {
                rt.spot = Some(spot);
                rt.kind = Some(kind);
                let s = &self.dashboard.spots[spot.0];
                let sp = s.pose.position;
                match a.kind {
                    AgentKind::Uav => {
                        let corridor = self.config.corridors.for_kind(kind);
                        let approach = stack_top(s.remaining()) + self.config.uav.approach_depth_m;
                        rt.route.extend([
                            Vec3::new(p.x, p.y, corridor),
                            Vec3::new(sp.x, sp.y, corridor),
                            Vec3::new(sp.x, sp.y, approach),
                        ]);
                        rt.climb = true;
                        self.agents[i].corridor_m = Some(corridor);
                    }
                    AgentKind::Ugv => {
                        let yaw = self.approach_yaw[spot.0];
                        let back = Vec3::new(yaw.cos(), yaw.sin(), 0.0) * self.config.ugv.staging_m;
                        rt.route.push_back(Vec3::new(sp.x, sp.y, 0.0) - back);
                        rt.final_yaw = Some(yaw);
                    }
                }
                self.transition(i, MissionEvent::TaskAssigned(TaskKind::Pick));
            }
            TaskVariant::Place { .. } => unreachable!("place tasks come from assign_place"),
        }
        Ok(())
    }

    fn goto(&mut self, i: usize, target: Vec3) -> Twist {
        let a = &self.agents[i];
        self.rt[i].goal = Some(target);
        Twist {
            linear: (target - a.pose.position) / self.config.dt,
            yaw_rate: 0.0,
        }
    }

    fn observe(&mut self, camera: &CameraModel, pose: &Pose, brick: &BrickInstance) -> Option<BrickObservation> {
        let obs = observe_brick(camera, &camera.pose_on(pose), brick)?;
        Some(perturb(&obs, camera, self.config.noise_px, &mut self.noise))
    }

    fn target_brick(&self, i: usize) -> Option<BrickInstance> {
        let spot = self.rt[i].spot?;
        let id = self.dashboard.spots[spot.0].top()?;
        Some(self.dashboard.bricks[id.0 as usize].clone())
    }

    /// Velocity command for agent `i`, from the state before this tick's move.
    pub(super) fn command(&mut self, i: usize, tick: u64) -> Twist {
        self.rt[i].ready = false;
        self.rt[i].goal = None;
        match self.agents[i].kind {
            AgentKind::Uav => self.command_uav(i, tick),
            AgentKind::Ugv => self.command_ugv(i, tick),
        }
    }

    fn command_uav(&mut self, i: usize, tick: u64) -> Twist {
        let a = self.agents[i].clone();
        match a.mode {
            MissionMode::Idle if a.pose.z() > GROUNDED_M => {
                let loiter = self.config.uav.loiter_m;
                let home = self.rt[i].home;
                let target = if (a.pose.z() - loiter).abs() > 1e-9 {
                    Vec3::new(a.pose.x(), a.pose.y(), loiter)
                } else {
                    Vec3::new(home.x, home.y, loiter)
                };
                self.goto(i, target)
            }
            MissionMode::Explore | MissionMode::TravelToPick | MissionMode::TravelToPlace => match self.rt[i].route.front() {
                Some(&p) if self.rt[i].climb => self.goto(i, Vec3::new(a.pose.x(), a.pose.y(), p.z)),
                Some(&p) => self.goto(i, p),
                None => Twist::zero(),
            },
            MissionMode::AlignOverBrick | MissionMode::Descend => self.uav_servo(i, tick, a.mode == MissionMode::Descend),
            MissionMode::Ascend => {
                let z = match (self.rt[i].slot, a.corridor_m) {
                    (Some(_), Some(c)) => c,
                    _ => self.config.uav.loiter_m,
                };
                self.goto(i, Vec3::new(a.pose.x(), a.pose.y(), z))
            }
            MissionMode::PlaceAlign => self.uav_place(i, tick),
            _ => Twist::zero(),
        }
    }

    fn uav_servo(&mut self, i: usize, tick: u64, descend: bool) -> Twist {
        let a = self.agents[i].clone();
        let cam = self.cams.uav;
        let Some(brick) = self.target_brick(i) else {
            return Twist::zero();
        };
        let Some(obs) = self.observe(&cam, &a.pose, &brick) else {
            return Twist::zero();
        };
        let gains = self.config.gains;
        let tol = self.config.tolerances;
        let rt = &mut self.rt[i];
        let (vx, vy) = centering_command(&obs, &cam, &gains, &mut rt.servo);
        let w = yaw_command(&obs, &gains, &mut rt.servo);
        let (ex, ey) = pixel_errors(&obs, &cam);
        let centered = ex.abs() < tol.center_px && ey.abs() < tol.center_px;
        let vz = if descend {
            descend_command(&obs, &cam, &gains, &mut rt.servo, tol.center_px)
        } else {
            0.0
        };
        if vz != 0.0 && !centered {
            self.metrics.descent_gate_violations += 1;
        }
        rt.ready = if descend {
            centered && obs.area_px2 >= AREA_REACHED * rt.servo.d_area
        } else {
            centered && obs.yaw_rad.abs() < tol.yaw_rad
        };
        let e_area = rt.servo.e_area;
        self.logs.servo(tick, &a, "cx", ex, vx);
        self.logs.servo(tick, &a, "cy", ey, vy);
        self.logs.servo(tick, &a, "yaw", obs.yaw_rad, w);
        if descend {
            self.logs.servo(tick, &a, "area", e_area, vz);
        }
        let horizontal = rotate_z(&Vec3::new(vx, vy, 0.0), a.pose.yaw);
        Twist {
            linear: Vec3::new(horizontal.x, horizontal.y, vz),
            yaw_rate: w,
        }
    }

    fn uav_place(&mut self, i: usize, tick: u64) -> Twist {
        let a = self.agents[i].clone();
        let Some((slot, channel)) = self.rt[i].slot else {
            return Twist::zero();
        };
        let edge = observe_edge(&a.pose, channel, &self.dashboard, self.config.uav.edge_sensing_m);
        let slot_def = self.dashboard.slots[slot.0].clone();
        let rt = &mut self.rt[i];
        let held = rt.held;
        match place_alignment(edge.as_ref(), &slot_def, &held, &self.config.gains, &mut rt.servo, &self.config.tolerances) {
            Ok(c) => {
                rt.ready = c.release;
                self.logs.servo(tick, &a, "place", c.error.norm(), c.velocity.norm());
                self.logs.servo(tick, &a, "place_yaw", c.yaw_error, c.yaw_rate);
                Twist {
                    linear: rotate_z(&c.velocity, a.pose.yaw),
                    yaw_rate: c.yaw_rate,
                }
            }
            Err(_) => Twist::zero(),
        }
    }

    /// Unicycle drive along the route, then turn to the final heading.
    fn drive(&mut self, i: usize) -> Twist {
        let a = &self.agents[i];
        let dt = self.config.dt;
        let rt = &self.rt[i];
        if let Some(target) = rt.route.front() {
            let d = Vec3::new(target.x - a.pose.x(), target.y - a.pose.y(), 0.0);
            let dist = d.norm();
            let e = wrap_pi(d.y.atan2(d.x) - a.pose.yaw);
            if e.abs() > TURN_IN_PLACE_RAD {
                return Twist::new(0.0, 0.0, 0.0, e / dt);
            }
            let v = (dist / dt).min(a.speed_limit_mps);
            let (s, c) = a.pose.yaw.sin_cos();
            return Twist::new(v * c, v * s, 0.0, e / dt);
        }
        match rt.final_yaw {
            Some(y) => Twist::new(0.0, 0.0, 0.0, wrap_pi(y - a.pose.yaw) / dt),
            None => Twist::zero(),
        }
    }

    fn command_ugv(&mut self, i: usize, tick: u64) -> Twist {
        let a = self.agents[i].clone();
        match a.mode {
            MissionMode::TravelToPick | MissionMode::TravelToPlace => self.drive(i),
            MissionMode::AlignOverBrick => {
                let cam = self.cams.ugv;
                let Some(brick) = self.target_brick(i) else {
                    return Twist::zero();
                };
                let Some(obs) = self.observe(&cam, &a.pose, &brick) else {
                    return Twist::zero();
                };
                let rt = &mut self.rt[i];
                let (v, w) = ugv_approach(&obs, &cam, &self.config.gains, &mut rt.servo, a.speed_limit_mps);
                let (ex, _) = pixel_errors(&obs, &cam);
                rt.ready = obs.area_px2 >= AREA_REACHED * rt.servo.d_area && ex.abs() < self.config.tolerances.center_px;
                let e_area = rt.servo.d_area - obs.area_px2;
                self.logs.servo(tick, &a, "ugv_cx", ex, w);
                self.logs.servo(tick, &a, "ugv_area", e_area, v);
                let (s, c) = a.pose.yaw.sin_cos();
                Twist::new(v * c, v * s, 0.0, w)
            }
            MissionMode::PlaceAlign => {
                let Some((slot, channel)) = self.rt[i].slot else {
                    return Twist::zero();
                };
                let edge = observe_edge(&a.pose, channel, &self.dashboard, self.config.uav.edge_sensing_m);
                let slot_def = self.dashboard.slots[slot.0].clone();
                let speed = self.config.ugv.arm_speed_mps;
                let rt = &mut self.rt[i];
                let held = Pose {
                    position: rt.tool + rt.held.position,
                    yaw: rt.held.yaw,
                };
                match place_alignment(edge.as_ref(), &slot_def, &held, &self.config.gains, &mut rt.servo, &self.config.tolerances) {
                    Ok(c) => {
                        let n = c.velocity.norm();
                        rt.tool_velocity = if n > speed { c.velocity * (speed / n) } else { c.velocity };
                        rt.wrist_rate = c.yaw_rate;
                        rt.ready = c.release;
                        self.logs.servo(tick, &a, "arm", c.error.norm(), n.min(speed));
                        self.logs.servo(tick, &a, "arm_yaw", c.yaw_error, c.yaw_rate);
                    }
                    Err(_) => {
                        rt.tool_velocity = Vec3::zeros();
                        rt.wrist_rate = 0.0;
                    }
                }
                Twist::zero()
            }
            _ => Twist::zero(),
        }
    }

    /// Phase exit checks after the move. Grip and release attempts are queued
    /// on `ctx` for the fault draw.
    pub(super) fn advance(&mut self, i: usize, tick: u64, now: f64, ctx: &mut FaultContext) -> Result<(), SimError> {
        match self.agents[i].kind {
            AgentKind::Uav => self.advance_uav(i, tick, now, ctx),
            AgentKind::Ugv => self.advance_ugv(i, tick, now, ctx),
        }
    }

    fn pop_reached(&mut self, i: usize) {
        let p = self.agents[i].pose.position;
        let tol = match self.agents[i].kind {
            AgentKind::Uav => 1e-6,
            AgentKind::Ugv => DRIVE_TOL_M,
        };
        while let Some(front) = self.rt[i].route.front() {
            let d = match self.agents[i].kind {
                AgentKind::Uav if self.rt[i].climb => (front.z - p.z).abs(),
                AgentKind::Uav => (front - p).norm(),
                AgentKind::Ugv => Vec3::new(front.x - p.x, front.y - p.y, 0.0).norm(),
            };
            if d < tol {
                self.rt[i].route.pop_front();
                self.rt[i].climb = false;
            } else {
                break;
            }
        }
    }

    fn advance_uav(&mut self, i: usize, tick: u64, now: f64, ctx: &mut FaultContext) -> Result<(), SimError> {
        let a = self.agents[i].clone();
        let uav = self.config.uav;
        match a.mode {
            MissionMode::Explore => {
                self.pop_reached(i);
                let cam = self.cams.explore;
                for d in discoveries(&cam, &cam.pose_on(&a.pose), &self.dashboard.landmarks) {
                    self.dashboard.discover(d.landmark);
                }
                if self.dashboard.all_discovered() || self.rt[i].route.is_empty() {
                    if let Some(id) = self.rt[i].task {
                        self.scheduler.complete(id, &mut self.dashboard, tick)?;
                    }
                    self.rt[i].clear_task();
                    self.rt[i].next_query = now;
                    self.transition(i, MissionEvent::ExplorationDone);
                }
            }
            MissionMode::TravelToPick => {
                self.pop_reached(i);
                if self.rt[i].route.is_empty() {
                    let kind = self.rt[i].kind.expect("pick task has a kind");
                    self.rt[i].servo = ServoState::with_desired_area(desired_area(&self.cams.uav, kind, uav.touchdown_m));
                    self.transition(i, MissionEvent::ArrivedAtPick);
                }
            }
            MissionMode::AlignOverBrick if self.rt[i].ready => self.transition(i, MissionEvent::Centered),
            MissionMode::Descend if self.rt[i].ready => {
                self.rt[i].timer = 0.0;
                self.transition(i, MissionEvent::TouchedDown);
            }
            MissionMode::Grip if self.rt[i].timer >= uav.grip_s - 1e-9 => {
                ctx.grips.push((a.id, self.rt[i].spot.expect("gripping at a spot")));
            }
            MissionMode::Ascend => {
                if let (Some((slot, _)), Some(corridor)) = (self.rt[i].slot, a.corridor_m) {
                    if (a.pose.z() - corridor).abs() < 1e-9 {
                        let target = self.dashboard.slots[slot.0].target_pose;
                        let held = self.rt[i].held;
                        let offset = rotate_z(&held.position, a.pose.yaw);
                        let over = Vec3::new(target.x() - offset.x, target.y() - offset.y, corridor);
                        let low = Vec3::new(over.x, over.y, target.z() - held.position.z + uav.place_clearance_m);
                        self.rt[i].route.extend([over, low]);
                        self.transition(i, MissionEvent::AtCorridor);
                    }
                }
            }
            MissionMode::TravelToPlace => {
                self.pop_reached(i);
                if self.rt[i].route.is_empty() {
                    self.rt[i].servo = ServoState::default();
                    self.transition(i, MissionEvent::ArrivedAtPlace);
                }
            }
            MissionMode::PlaceAlign if self.rt[i].ready => {
                self.rt[i].timer = 0.0;
                self.transition(i, MissionEvent::EdgeLocked);
            }
            MissionMode::Release if self.rt[i].timer >= uav.release_s - 1e-9 => {
                ctx.releases.push((a.id, self.rt[i].slot.expect("releasing into a slot").0));
            }
            _ => {}
        }
        Ok(())
    }

    /// Where the ground vehicle parks to lay into `slot`: facing the wall from
    /// the side nearer its pile, with the slot just beyond the arm base.
    fn ugv_place_pose(&self, slot: crate::world::SlotId) -> Pose {
        let s = &self.dashboard.slots[slot.0];
        let ch = &self.dashboard.channels[s.channel.0];
        let dir = ch.direction();
        let mut n = Vec3::new(-dir.y, dir.x, 0.0);
        let to_pile = self.ugv_pile_centroid - s.target_pose.position;
        if n.dot(&Vec3::new(to_pile.x, to_pile.y, 0.0)) < 0.0 {
            n = -n;
        }
        let ugv = self.config.ugv;
        let p = s.target_pose.position + n * (ugv.place_standoff_m + ugv.arm_base.x);
        Pose::new(p.x, p.y, 0.0, (-n.y).atan2(-n.x))
    }

    fn advance_ugv(&mut self, i: usize, tick: u64, now: f64, ctx: &mut FaultContext) -> Result<(), SimError> {
        let a = self.agents[i].clone();
        let ugv = self.config.ugv;
        let at_heading = |rt: &super::engine::Runtime| {
            rt.route.is_empty() && rt.final_yaw.is_none_or(|y| wrap_pi(y - a.pose.yaw).abs() < TURN_TOL_RAD)
        };
        match a.mode {
            MissionMode::TravelToPick => {
                self.pop_reached(i);
                if at_heading(&self.rt[i]) {
                    let kind = self.rt[i].kind.expect("pick task has a kind");
                    let area = self.cams.ugv.area_at_depth(kind.side_area_m2(), ugv.standoff_depth_m);
                    self.rt[i].servo = ServoState::with_desired_area(area);
                    self.rt[i].final_yaw = None;
                    self.transition(i, MissionEvent::ArrivedAtPick);
                }
            }
            MissionMode::AlignOverBrick if self.rt[i].ready => {
                let brick = self.target_brick(i).expect("servoing on a brick");
                let local = a.pose.to_local(&brick.pose.position);
                if (local - ugv.arm_base).norm() > ugv.arm_reach_m {
                    let spot = self.rt[i].spot.expect("pick task has a spot");
                    return self.raise(FaultEvent::PickFail { agent: a.id, spot }, tick, now);
                }
                let rt = &mut self.rt[i];
                rt.tool_from = rt.tool;
                rt.tool_to = local;
                rt.timer = 0.0;
                self.transition(i, MissionEvent::Centered);
            }
            MissionMode::Descend if self.rt[i].timer >= ugv.reach_s - 1e-9 => {
                self.rt[i].timer = 0.0;
                self.transition(i, MissionEvent::TouchedDown);
            }
            MissionMode::Grip if self.rt[i].timer >= ugv.grip_s - 1e-9 => {
                ctx.grips.push((a.id, self.rt[i].spot.expect("gripping at a spot")));
            }
            MissionMode::Ascend if self.rt[i].timer >= ugv.stow_s - 1e-9 => {
                if let Some((slot, _)) = self.rt[i].slot {
                    let park = self.ugv_place_pose(slot);
                    self.rt[i].route.push_back(park.position);
                    self.rt[i].final_yaw = Some(park.yaw);
                    self.transition(i, MissionEvent::AtCorridor);
                }
            }
            MissionMode::TravelToPlace => {
                self.pop_reached(i);
                if at_heading(&self.rt[i]) {
                    self.rt[i].final_yaw = None;
                    self.rt[i].servo = ServoState::default();
                    self.transition(i, MissionEvent::ArrivedAtPlace);
                }
            }
            MissionMode::PlaceAlign if self.rt[i].ready => {
                self.rt[i].timer = 0.0;
                self.rt[i].tool_velocity = Vec3::zeros();
                self.rt[i].wrist_rate = 0.0;
                self.transition(i, MissionEvent::EdgeLocked);
            }
            MissionMode::Release if self.rt[i].timer >= ugv.release_s - 1e-9 => {
                ctx.releases.push((a.id, self.rt[i].slot.expect("releasing into a slot").0));
            }
            _ => {}
        }
        Ok(())
    }

    pub(super) fn grip_succeeded(&mut self, i: usize, tick: u64, now: f64) -> Result<(), SimError> {
        let a = self.agents[i].clone();
        let spot = self.rt[i].spot.expect("gripping at a spot");
        let brick = self.dashboard.pick_brick(spot, a.id)?;
        if let Some(id) = self.rt[i].task.take() {
            self.scheduler.complete(id, &mut self.dashboard, tick)?;
        }
        let b = &self.dashboard.bricks[brick.0 as usize];
        let local = a.pose.to_local(&b.pose.position);
        let yaw = wrap_half_pi(b.pose.yaw - a.pose.yaw);
        let kind = b.kind;
        let rt = &mut self.rt[i];
        rt.brick = Some(brick);
        rt.kind = Some(kind);
        rt.timer = 0.0;
        rt.held = match a.kind {
            AgentKind::Uav => Pose {
                position: local,
                yaw,
            },
            AgentKind::Ugv => Pose {
                position: local - rt.tool,
                yaw: b.pose.yaw - a.pose.yaw,
            },
        };
        rt.tool_from = rt.tool;
        self.agents[i].payload = Some(brick);
        self.agents[i].corridor_m = (a.kind == AgentKind::Uav).then(|| self.config.corridors.for_kind(kind));
        self.transition(i, MissionEvent::GripConfirmed);
        self.try_assign_place(i, tick, now)
    }

    pub(super) fn release_succeeded(&mut self, i: usize, tick: u64, now: f64) -> Result<(), SimError> {
        let (slot, _) = self.rt[i].slot.expect("releasing into a slot");
        let brick = self.rt[i].brick.expect("releasing a held brick");
        if !self.dashboard.layer_rule_holds(slot) {
            self.metrics.layer_rule_violations += 1;
        }
        let pose = self.dashboard.bricks[brick.0 as usize].pose;
        self.dashboard.place_brick(brick, slot, pose)?;
        if let Some(id) = self.rt[i].task.take() {
            self.scheduler.complete(id, &mut self.dashboard, tick)?;
        }
        let stow = self.config.ugv.stow;
        let rt = &mut self.rt[i];
        rt.clear_task();
        rt.brick = None;
        rt.kind = None;
        rt.tool = stow;
        rt.next_query = now;
        self.agents[i].payload = None;
        self.agents[i].corridor_m = None;
        self.placed(now);
        self.transition(i, MissionEvent::Released);
        Ok(())
    }
}
