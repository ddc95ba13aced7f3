use std::collections::VecDeque;
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    mode_transition, saturate, step_kinematics, AgentKind, AgentState, FaultKind, MissionEvent, MissionMode, Twist,
};
use crate::control::ServoState;
use crate::geometry::{horizontal_distance, Bounds, Pose, Vec3};
use crate::perception::{CameraModel, Mount};
use crate::scenario::Scenario;
use crate::scheduler::{
    ExploreSettings, FaultEvent, RecoveryAction, Scheduler, SchedulerConfig, SchedulerError, TaskId, TaskStatus,
};
use crate::world::{AgentId, BrickId, BrickKind, ChannelId, Dashboard, PileOwner, SlotId, SlotStatus, SpotId};

use super::faults::{FaultContext, FaultInjector};
use super::log::{write_dir, Logs};
use super::metrics::{DurationStats, Metrics};
use super::monitor::{collision_monitor, filter_moves, twist_for_move};
use super::{SimConfig, SimError};

/// Per-agent execution state the dashboard does not track.
#[derive(Debug, Clone)]
pub(super) struct Runtime {
    pub task: Option<TaskId>,
    pub route: VecDeque<Vec3>,
    /// The first route point only sets an altitude, flown at the current xy.
    pub climb: bool,
    /// Heading to turn to once a ground route is driven.
    pub final_yaw: Option<f64>,
    /// Position the current go-to command lands on exactly.
    pub goal: Option<Vec3>,
    pub servo: ServoState,
    pub timer: f64,
    /// Phase exit condition, from this tick's observation.
    pub ready: bool,
    pub fault_until: Option<f64>,
    pub release_at: Option<f64>,
    pub next_query: f64,
    pub spot: Option<SpotId>,
    pub kind: Option<BrickKind>,
    pub slot: Option<(SlotId, ChannelId)>,
    pub brick: Option<BrickId>,
    /// Held brick relative to the airframe (UAV) or to the arm tool (UGV).
    pub held: Pose,
    /// Arm tool position in the body frame.
    pub tool: Vec3,
    pub tool_from: Vec3,
    pub tool_to: Vec3,
    pub tool_velocity: Vec3,
    pub wrist_rate: f64,
    pub distance: f64,
    /// Where the agent parks when idle: its start point (UAVs at loiter height).
    pub home: Vec3,
}

impl Runtime {
    fn new(stow: Vec3, home: Vec3) -> Self {
        Self {
            task: None,
            route: VecDeque::new(),
            climb: false,
            final_yaw: None,
            goal: None,
            servo: ServoState::default(),
            timer: 0.0,
            ready: false,
            fault_until: None,
            release_at: None,
            next_query: 0.0,
            spot: None,
            kind: None,
            slot: None,
            brick: None,
            held: Pose::new(0.0, 0.0, 0.0, 0.0),
            tool: stow,
            tool_from: stow,
            tool_to: stow,
            tool_velocity: Vec3::zeros(),
            wrist_rate: 0.0,
            distance: 0.0,
            home,
        }
    }

    /// Forget the current task; the brick stays if still held.
    pub fn clear_task(&mut self) {
        self.task = None;
        self.route.clear();
        self.climb = false;
        self.final_yaw = None;
        self.goal = None;
        self.ready = false;
        self.timer = 0.0;
        self.spot = None;
        self.slot = None;
        self.tool_velocity = Vec3::zeros();
        self.wrist_rate = 0.0;
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Cameras {
    pub uav: CameraModel,
    pub explore: CameraModel,
    pub ugv: CameraModel,
}

#[derive(Debug)]
pub struct Engine {
    pub config: SimConfig,
    pub scenario: String,
    pub bounds: Bounds,
    pub dashboard: Dashboard,
    pub scheduler: Scheduler,
    pub agents: Vec<AgentState>,
    /// Completed steps.
    pub tick: u64,
    pub(super) rt: Vec<Runtime>,
    pub(super) approach_yaw: Vec<f64>,
    pub(super) cams: Cameras,
    pub(super) ugv_pile_centroid: Vec3,
    pub(super) noise: ChaCha8Rng,
    pub(super) logs: Logs,
    pub(super) metrics: Metrics,
    injector: FaultInjector,
    paused_until: f64,
    events_logged: usize,
    last_place_s: f64,
}

/// Metrics plus the three CSV logs.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trajectory: String,
    pub servo_errors: String,
    pub tasks: String,
}

impl RunOutput {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        write_dir(dir, &(self.trajectory.clone(), self.servo_errors.clone(), self.tasks.clone()), &self.metrics)
    }
}

/// Build an engine, run it to completion or the time limit, and collect the outputs.
pub fn run(scenario: &Scenario, config: SimConfig) -> Result<RunOutput, SimError> {
    let mut engine = Engine::new(scenario, config)?;
    engine.run()?;
    Ok(engine.finish())
}

fn expected_wait(e: &SchedulerError) -> bool {
    matches!(
        e,
        SchedulerError::NothingToDo
            | SchedulerError::AwaitingExploration
            | SchedulerError::NoRequiredBrickAvailable
            | SchedulerError::NoEligibleSlot(_)
    )
}

impl Engine {
    pub fn new(scenario: &Scenario, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let world = scenario.build()?;
        let explore_cam = CameraModel::new(
            config.uav.explore_focal_px,
            config.uav.explore_image_px,
            config.uav.explore_image_px,
            Mount::Downward,
        );
        let mut ugv_cam = CameraModel::forward();
        ugv_cam.offset = config.ugv.camera_offset;
        let scheduler = Scheduler::new(SchedulerConfig {
            params: config.costs,
            points: world.points,
            corridors: config.corridors,
            explore: ExploreSettings {
                bounds: world.bounds,
                altitude_m: config.uav.explore_altitude_m,
                fov_rad: explore_cam.narrow_fov(),
            },
            connectivity_timeout_s: config.connectivity_timeout_s,
        })?;
        let ugv_spots: Vec<Vec3> = world
            .dashboard
            .spots
            .iter()
            .filter(|s| s.owner == PileOwner::UgvPile)
            .map(|s| s.pose.position)
            .collect();
        let ugv_pile_centroid = if ugv_spots.is_empty() {
            world.bounds.min + world.bounds.extent() / 2.0
        } else {
            ugv_spots.iter().sum::<Vec3>() / ugv_spots.len() as f64
        };
        let mut engine = Self {
            scenario: scenario.name.clone(),
            bounds: world.bounds,
            rt: world.agents.iter().map(|a| Runtime::new(config.ugv.stow, a.pose.position)).collect(),
            agents: world.agents,
            dashboard: world.dashboard,
            scheduler,
            tick: 0,
            approach_yaw: world.approach_yaw,
            cams: Cameras {
                uav: config.uav.pick_camera,
                explore: explore_cam,
                ugv: ugv_cam,
            },
            ugv_pile_centroid,
            noise: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_FA11_u64),
            logs: Logs::new(),
            metrics: Metrics {
                scenario: scenario.name.clone(),
                seed: config.seed,
                ..Metrics::default()
            },
            injector: FaultInjector::new(config.seed, config.faults, config.dt, &world.pauses),
            paused_until: 0.0,
            events_logged: 0,
            last_place_s: 0.0,
            config,
        };
        engine.log_tick();
        Ok(engine)
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.dashboard.all_complete() || self.time() >= self.config.max_sim_time - 1e-9
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub(super) fn index(&self, agent: AgentId) -> usize {
        self.agents.iter().position(|a| a.id == agent).expect("agent ids come from the engine")
    }

    pub(super) fn transition(&mut self, i: usize, event: MissionEvent) {
        let a = &mut self.agents[i];
        a.mode = mode_transition(a.mode, event);
    }

    /// Advance one `dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        let k = self.tick;
        let t0 = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;

        if t0 < self.paused_until - 1e-9 {
            for a in &mut self.agents {
                a.velocity = Twist::zero();
            }
            self.tick += 1;
            self.log_tick();
            return Ok(());
        }

        self.queries(k, t0)?;

        let commands: Vec<Twist> = (0..self.agents.len()).map(|i| self.command(i, k + 1)).collect();
        let saturated: Vec<Twist> = self.agents.iter().zip(&commands).map(|(a, c)| saturate(a, c)).collect();
        let moves: Vec<Vec3> = saturated.iter().map(|c| c.linear * dt).collect();
        let (accepted, adjusted) = filter_moves(&self.agents, &moves, &self.config.avoidance);
        self.metrics.avoidance_adjustments += adjusted as u64;
        for i in 0..self.agents.len() {
            let twist = twist_for_move(&saturated[i], &accepted[i], dt);
            let before = self.agents[i].pose.position;
            let mut next = step_kinematics(&self.agents[i], &twist, dt, &self.bounds);
            if let Some(g) = self.rt[i].goal {
                if accepted[i] == moves[i] && (next.pose.position - g).norm() < 1e-6 {
                    next.pose.position = g;
                }
            }
            self.rt[i].distance += (next.pose.position - before).norm();
            self.agents[i] = next;
        }
        self.update_payloads()?;

        let mut ctx = FaultContext {
            tick: k + 1,
            ..FaultContext::default()
        };
        for i in 0..self.agents.len() {
            self.advance(i, k + 1, t1, &mut ctx)?;
        }
        ctx.connected = self
            .agents
            .iter()
            .filter(|a| a.mode != MissionMode::Fault(FaultKind::ConnectivityLoss))
            .map(|a| a.id)
            .collect();
        let events = self.injector.inject_faults(&ctx);
        self.apply_draws(&ctx, &events, k + 1, t1)?;
        self.clear_faults(k + 1, t1)?;
        self.monitor(k + 1, t1)?;
        self.check_invariants(k + 1);

        self.tick += 1;
        self.log_tick();
        Ok(())
    }

    fn queries(&mut self, k: u64, t0: f64) -> Result<(), SimError> {
        for i in 0..self.agents.len() {
            if t0 < self.rt[i].next_query - 1e-9 {
                continue;
            }
            let a = &self.agents[i];
            if a.mode == MissionMode::Idle && self.rt[i].task.is_none() {
                match self.scheduler.allocate(a, &mut self.dashboard, k) {
                    Ok(id) => self.on_assigned(i, id)?,
                    Err(e) if expected_wait(&e) => {
                        debug!("agent {} waits: {e}", a.id);
                        self.rt[i].next_query = t0 + self.config.query_retry_s;
                    }
                    Err(e) => return Err(e.into()),
                }
            } else if self.rt[i].brick.is_some() && self.rt[i].slot.is_none() && matches!(a.mode, MissionMode::Ascend | MissionMode::Grip) {
                self.try_assign_place(i, k, t0)?;
            }
        }
        Ok(())
    }

    pub(super) fn try_assign_place(&mut self, i: usize, tick: u64, now: f64) -> Result<(), SimError> {
        let kind = self.rt[i].kind.expect("a held brick has a kind");
        match self.scheduler.assign_place(&self.agents[i], &mut self.dashboard, kind, tick) {
            Ok(id) => {
                if let Some(crate::scheduler::TaskVariant::Place { slot, channel }) = self.scheduler.task(id).map(|t| t.variant.clone()) {
                    self.rt[i].slot = Some((slot, channel));
                }
                self.rt[i].task = Some(id);
                self.transition(i, MissionEvent::TaskAssigned(crate::agents::TaskKind::Place));
                Ok(())
            }
            Err(e) if expected_wait(&e) => {
                self.rt[i].next_query = now + self.config.query_retry_s;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Move held bricks and arm tools to match this tick's motion.
    fn update_payloads(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        let ugv = self.config.ugv;
        for i in 0..self.agents.len() {
            let a = &self.agents[i];
            let rt = &mut self.rt[i];
            if matches!(a.mode, MissionMode::Grip | MissionMode::Release)
                || (a.kind == AgentKind::Ugv && matches!(a.mode, MissionMode::Descend | MissionMode::Ascend))
            {
                rt.timer += dt;
            }
            if a.kind == AgentKind::Ugv {
                match a.mode {
                    MissionMode::Descend => {
                        let s = (rt.timer / ugv.reach_s).min(1.0);
                        rt.tool = rt.tool_from + (rt.tool_to - rt.tool_from) * s;
                    }
                    MissionMode::Ascend => {
                        let s = (rt.timer / ugv.stow_s).min(1.0);
                        rt.tool = rt.tool_from + (ugv.stow - rt.tool_from) * s;
                    }
                    MissionMode::PlaceAlign => {
                        rt.tool += rt.tool_velocity * dt;
                        rt.held.yaw += rt.wrist_rate * dt;
                    }
                    _ => {}
                }
            }
            if let Some(b) = rt.brick {
                let local = match a.kind {
                    AgentKind::Uav => rt.held.position,
                    AgentKind::Ugv => rt.tool + rt.held.position,
                };
                let pose = Pose {
                    position: a.pose.to_world(&local),
                    yaw: a.pose.yaw + rt.held.yaw,
                };
                self.dashboard.set_held_pose(b, pose)?;
            }
        }
        Ok(())
    }

    fn apply_draws(&mut self, ctx: &FaultContext, events: &[FaultEvent], tick: u64, now: f64) -> Result<(), SimError> {
        for &(agent, _) in &ctx.grips {
            if !events.iter().any(|e| matches!(e, FaultEvent::PickFail { agent: a, .. } if *a == agent)) {
                let i = self.index(agent);
                self.grip_succeeded(i, tick, now)?;
            }
        }
        for &(agent, _) in &ctx.releases {
            if !events.iter().any(|e| matches!(e, FaultEvent::PlaceFail { agent: a, .. } if *a == agent)) {
                let i = self.index(agent);
                self.release_succeeded(i, tick, now)?;
            }
        }
        for e in events {
            self.raise(*e, tick, now)?;
        }
        Ok(())
    }

    /// Book a fault with the scheduler and carry out its recovery actions.
    pub(super) fn raise(&mut self, event: FaultEvent, tick: u64, now: f64) -> Result<(), SimError> {
        *self.metrics.fault_counts.entry(event.label().to_string()).or_default() += 1;
        debug!("tick {tick}: {event:?}");
        let actions = self.scheduler.handle_fault(event, &mut self.dashboard, tick)?;
        for action in actions {
            match action {
                RecoveryAction::EnterFault(agent, kind) => {
                    let i = self.index(agent);
                    self.transition(i, MissionEvent::FaultRaised(kind));
                    let clear = match kind {
                        FaultKind::PickFail => Some(self.config.pick_fault_clear_s),
                        FaultKind::PlaceFail => Some(self.config.place_fault_clear_s),
                        FaultKind::Collision => Some(self.config.collision_fault_clear_s),
                        FaultKind::ConnectivityLoss => None,
                    };
                    let still_held = self.dashboard.held_by(agent).is_some();
                    let stow = self.config.ugv.stow;
                    let rt = &mut self.rt[i];
                    rt.clear_task();
                    rt.fault_until = clear.map(|c| now + c);
                    if !still_held {
                        rt.brick = None;
                        rt.kind = None;
                        rt.tool = stow;
                        self.agents[i].payload = None;
                    }
                }
                RecoveryAction::ReleaseAfter { agent, timeout_s } => {
                    let i = self.index(agent);
                    self.rt[i].release_at = Some(now + timeout_s);
                }
                RecoveryAction::Requery(agent) => {
                    let i = self.index(agent);
                    self.rt[i].next_query = 0.0;
                }
                RecoveryAction::Hover(_) => {}
                RecoveryAction::HaltAll { duration_s } => {
                    self.paused_until = self.paused_until.max(now + duration_s);
                }
            }
        }
        Ok(())
    }

    fn clear_faults(&mut self, tick: u64, now: f64) -> Result<(), SimError> {
        for i in 0..self.agents.len() {
            if !matches!(self.agents[i].mode, MissionMode::Fault(_)) {
                continue;
            }
            let id = self.agents[i].id;
            if self.rt[i].release_at.is_some_and(|t| now >= t - 1e-9) {
                self.scheduler.release_agent(id, &mut self.dashboard, tick)?;
                self.rt[i].release_at = None;
                self.rt[i].brick = None;
                self.rt[i].kind = None;
                self.rt[i].tool = self.config.ugv.stow;
                self.agents[i].payload = None;
                self.rt[i].fault_until = Some(now);
            }
            if self.rt[i].fault_until.is_some_and(|t| now >= t - 1e-9) && self.rt[i].release_at.is_none() {
                self.rt[i].fault_until = None;
                self.rt[i].next_query = now;
                self.transition(i, MissionEvent::FaultCleared);
            }
        }
        Ok(())
    }

    fn monitor(&mut self, tick: u64, now: f64) -> Result<(), SimError> {
        let th = self.config.thresholds;
        for v in collision_monitor(&self.agents, &th, Some(&self.dashboard)) {
            let (i, j) = (self.index(v.a), self.index(v.b));
            self.metrics.collision_violations += 1;
            if self.agents[i].kind == AgentKind::Uav && self.agents[j].kind == AgentKind::Uav {
                self.metrics.corridor_violations += 1;
            }
            let faulted = |m: MissionMode| m == MissionMode::Fault(FaultKind::Collision);
            if !faulted(self.agents[i].mode) && !faulted(self.agents[j].mode) {
                self.raise(FaultEvent::Collision(v.a, v.b), tick, now)?;
            }
        }
        let transit = |a: &AgentState| a.kind == AgentKind::Uav && matches!(a.mode, MissionMode::TravelToPick | MissionMode::TravelToPlace);
        for (n, a) in self.agents.iter().enumerate() {
            for b in &self.agents[n + 1..] {
                if transit(a) && transit(b) && horizontal_distance(&a.pose.position, &b.pose.position) < th.uav_horizontal_m {
                    let dz = (a.pose.z() - b.pose.z()).abs();
                    let m = &mut self.metrics.min_transit_vertical_separation_m;
                    *m = Some(m.map_or(dz, |x| x.min(dz)));
                }
            }
        }
        Ok(())
    }

    fn check_invariants(&mut self, tick: u64) {
        if !self.config.check_invariants {
            return;
        }
        let result = self
            .dashboard
            .check_invariants()
            .and_then(|_| self.scheduler.check_invariants(&self.dashboard))
            .and_then(|_| self.check_payloads());
        if let Err(msg) = result {
            self.metrics.invariant_violations += 1;
            if self.metrics.first_invariant_violation.is_none() {
                self.metrics.first_invariant_violation = Some(format!("tick {tick}: {msg}"));
            }
        }
    }

    /// Carrying modes hold a brick, and only they (or a disconnected agent) do.
    fn check_payloads(&self) -> Result<(), String> {
        for (a, rt) in self.agents.iter().zip(&self.rt) {
            let held = self.dashboard.held_by(a.id);
            if held != rt.brick {
                return Err(format!("agent {} tracks brick {:?}, dashboard says {:?}", a.id, rt.brick, held));
            }
            let allowed = a.mode.carries_payload() || a.mode == MissionMode::Fault(FaultKind::ConnectivityLoss);
            if held.is_some() && !allowed {
                return Err(format!("agent {} holds a brick in mode {}", a.id, a.mode.label()));
            }
            if held.is_none() && a.mode.carries_payload() {
                return Err(format!("agent {} in mode {} without a brick", a.id, a.mode.label()));
            }
        }
        Ok(())
    }

    fn log_tick(&mut self) {
        let time = self.time();
        for a in &self.agents {
            self.logs.trajectory(self.tick, time, a);
        }
        let events = &self.scheduler.handler.events;
        for e in &events[self.events_logged..] {
            self.logs.task(e, self.config.dt);
        }
        self.events_logged = events.len();
    }

    pub(super) fn placed(&mut self, now: f64) {
        self.last_place_s = now;
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = self.metrics.clone();
        let dt = self.config.dt;
        m.completed = self.dashboard.all_complete();
        m.sim_time_s = self.time();
        m.ticks = self.tick;
        m.makespan_s = if m.completed { self.last_place_s } else { m.sim_time_s };
        m.slots_total = self.dashboard.slots.len();
        m.slots_filled = self.dashboard.filled_count();
        m.total_points = self
            .dashboard
            .slots
            .iter()
            .filter_map(|s| match s.status {
                SlotStatus::Filled(b) => Some(self.scheduler.config.points.for_kind(self.dashboard.bricks[b.0 as usize].kind)),
                _ => None,
            })
            .sum();
        let mut samples: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for t in &self.scheduler.handler.tasks {
            if let Some(end) = t.finished_tick {
                samples
                    .entry(t.variant.label().to_string())
                    .or_default()
                    .push((end - t.started_tick) as f64 * dt);
            }
        }
        m.task_durations = samples.iter().map(|(k, v)| (k.clone(), DurationStats::from_samples(v))).collect();
        m.tasks_completed = self.scheduler.handler.count(TaskStatus::Completed);
        m.tasks_failed = self.scheduler.handler.count(TaskStatus::Failed);
        m.distance_m = self
            .agents
            .iter()
            .zip(&self.rt)
            .map(|(a, rt)| (format!("agent{}", a.id), rt.distance))
            .collect();
        m
    }

    pub fn finish(self) -> RunOutput {
        let metrics = self.metrics();
        let (trajectory, servo_errors, tasks) = self.logs.into_strings();
        RunOutput {
            metrics,
            trajectory,
            servo_errors,
            tasks,
        }
    }
}
