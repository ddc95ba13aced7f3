//! Mission planner: pickup and drop decisions from the score/points matrices
//! and travel costs, task bookkeeping, and fault recovery.
//!
//! The free functions [`choose_pick`] and [`choose_drop`] are pure. The
//! [`Scheduler`] commits their decisions to the dashboard (spot targeting,
//! slot reservation, channel blocking) and keeps the score kernels balanced.

mod score;
mod task;

pub use score::{kernel, Grid, PointsMatrix, ScoreMatrix, COLS, ROWS};
pub use task::{Task, TaskEvent, TaskHandler, TaskId, TaskStatus, TaskVariant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{lawnmower_plan, AgentError, AgentKind, AgentState, CorridorMap, ExplorationPlan, FaultKind};
use crate::geometry::{Bounds, Vec3};
use crate::world::{
    pile_for, AgentId, BrickKind, BrickState, ChannelId, Dashboard, Site, SlotId, SlotStatus, SpotId, SpotStatus,
    WorldError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("score index ({row}, {col}) outside the 4x3 matrix")]
    IndexOutOfRange { row: usize, col: usize },
    #[error("no eligible slot for a {0} brick")]
    NoEligibleSlot(BrickKind),
    #[error("no free pickup spot holds a kind the wall currently needs")]
    NoRequiredBrickAvailable,
    #[error("nothing left to do")]
    NothingToDo,
    #[error("waiting for exploration to finish")]
    AwaitingExploration,
    #[error("agent {0} already has an engaged task")]
    AgentBusy(AgentId),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub k_tr: f64,
    pub k_spot: f64,
    pub k_place: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            k_tr: 0.2,
            k_spot: 1.0,
            k_place: 5.0,
        }
    }
}

impl CostParams {
    pub fn is_valid(&self) -> bool {
        [self.k_tr, self.k_spot, self.k_place].iter().all(|k| *k >= 0.0 && k.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultEvent {
    ConnectivityLoss(AgentId),
    PickFail { agent: AgentId, spot: SpotId },
    PlaceFail { agent: AgentId, slot: SlotId },
    Collision(AgentId, AgentId),
    ResetPause { duration_s: f64 },
}

impl FaultEvent {
    pub fn label(&self) -> &'static str {
        match self {
            FaultEvent::ConnectivityLoss(_) => "ConnectivityLoss",
            FaultEvent::PickFail { .. } => "PickFail",
            FaultEvent::PlaceFail { .. } => "PlaceFail",
            FaultEvent::Collision(..) => "Collision",
            FaultEvent::ResetPause { .. } => "ResetPause",
        }
    }
}

/// What the engine must do after a fault has been booked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RecoveryAction {
    /// Agent goes back to Idle and asks for a new task.
    Requery(AgentId),
    /// Agent holds position.
    Hover(AgentId),
    /// Call [`Scheduler::release_agent`] once the timeout has elapsed.
    ReleaseAfter { agent: AgentId, timeout_s: f64 },
    EnterFault(AgentId, FaultKind),
    HaltAll { duration_s: f64 },
}

pub fn travel_cost(params: &CostParams, target: &Vec3, current: &Vec3) -> f64 {
    params.k_tr * (target - current).norm()
}

pub fn site_of(kind: AgentKind) -> Site {
    match kind {
        AgentKind::Uav => Site::UavSite,
        AgentKind::Ugv => Site::UgvSite,
    }
}

/// Travel destination used for costing: UAVs fly the carried kind's corridor,
/// ground vehicles are costed in the plane.
fn costing_points(agent: &AgentState, xy: &Vec3, kind: BrickKind, corridors: &CorridorMap) -> (Vec3, Vec3) {
    match agent.kind {
        AgentKind::Uav => (Vec3::new(xy.x, xy.y, corridors.for_kind(kind)), agent.pose.position),
        AgentKind::Ugv => (
            Vec3::new(xy.x, xy.y, 0.0),
            Vec3::new(agent.pose.x(), agent.pose.y(), 0.0),
        ),
    }
}

/// Best pickup spot for `agent`: the highest utility among free spots of its
/// pile whose kind the site still needs. UAVs pay the hindrance score; ground
/// vehicles do not use it.
pub fn choose_pick(
    dashboard: &Dashboard,
    score: &ScoreMatrix,
    points: &PointsMatrix,
    agent: &AgentState,
    params: &CostParams,
    corridors: &CorridorMap,
) -> Result<(SpotId, BrickKind), SchedulerError> {
    let site = site_of(agent.kind);
    let owner = pile_for(site);
    let demand = dashboard.kind_demand(site);
    let mut candidates: Vec<(usize, usize, SpotId)> = dashboard
        .spots
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.owner == owner && s.status == SpotStatus::Free && s.remaining() > 0 && demand[s.kind.row()] > 0
        })
        .map(|(i, s)| (s.row, s.col, SpotId(i)))
        .collect();
    candidates.sort();

    let mut best: Option<(f64, SpotId, BrickKind)> = None;
    for (row, col, id) in candidates {
        let spot = &dashboard.spots[id.0];
        let (target, from) = costing_points(agent, &spot.pose.position, spot.kind, corridors);
        let mut cost = travel_cost(params, &target, &from);
        if agent.kind == AgentKind::Uav {
            cost += params.k_spot * score.get(row, col)?;
        }
        let utility = points.get(row, col)? - cost;
        if best.is_none_or(|(u, _, _)| utility > u) {
            best = Some((utility, id, spot.kind));
        }
    }
    best.map(|(_, id, kind)| (id, kind)).ok_or(SchedulerError::NoRequiredBrickAvailable)
}

/// Cheapest slot for a held brick of `kind`. Each channel offers only its next
/// required slot, so bricks are laid in order along a layer and layers bottom
/// up. Channels blocked by other agents are skipped; a neighbouring channel
/// in use adds `k_place`.
pub fn choose_drop(
    dashboard: &Dashboard,
    kind: BrickKind,
    agent: &AgentState,
    params: &CostParams,
    corridors: &CorridorMap,
) -> Result<(SlotId, ChannelId), SchedulerError> {
    let site = site_of(agent.kind);
    let busy = |id: usize| -> bool {
        dashboard
            .channels
            .get(id)
            .is_some_and(|c| c.site == site && c.blocked_by.is_some_and(|a| a != agent.id))
    };
    let mut best: Option<((f64, usize, usize, f64), SlotId, ChannelId)> = None;
    for ch in dashboard.channels.iter().filter(|c| c.site == site) {
        if busy(ch.id.0) {
            continue;
        }
        let Some((slot_id, required)) = dashboard.next_required_brick(ch.id) else {
            continue;
        };
        if required != kind {
            continue;
        }
        let slot = &dashboard.slots[slot_id.0];
        let hindered = (ch.id.0 > 0 && busy(ch.id.0 - 1)) || busy(ch.id.0 + 1);
        let placement = if hindered { params.k_place } else { 0.0 };
        let (target, from) = costing_points(agent, &slot.target_pose.position, kind, corridors);
        let cost = placement + travel_cost(params, &target, &from);
        let key = (cost, ch.id.0, slot.layer, slot.offset_m);
        if best.as_ref().is_none_or(|(k, _, _)| key.partial_cmp(k) == Some(std::cmp::Ordering::Less)) {
            best = Some((key, slot_id, ch.id));
        }
    }
    best.map(|(_, s, c)| (s, c)).ok_or(SchedulerError::NoEligibleSlot(kind))
}

/// Where and how the exploration sweep is flown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreSettings {
    pub bounds: Bounds,
    pub altitude_m: f64,
    pub fov_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub params: CostParams,
    pub points: PointsMatrix,
    pub corridors: CorridorMap,
    pub explore: ExploreSettings,
    pub connectivity_timeout_s: f64,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    pub config: SchedulerConfig,
    pub score: ScoreMatrix,
    pub handler: TaskHandler,
    plan: ExplorationPlan,
    explorer: Option<AgentId>,
    /// Increase kernels applied minus resets, per cell.
    outstanding: [[i64; COLS]; ROWS],
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self, SchedulerError> {
        let e = &config.explore;
        let plan = lawnmower_plan(&e.bounds, e.altitude_m, e.fov_rad)?;
        Ok(Self {
            config,
            score: ScoreMatrix::default(),
            handler: TaskHandler::default(),
            plan,
            explorer: None,
            outstanding: [[0; COLS]; ROWS],
        })
    }

    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.handler.get(id)
    }

    pub fn exploration_plan(&self) -> &ExplorationPlan {
        &self.plan
    }

    /// Answer a task query from an idle agent.
    pub fn allocate(&mut self, agent: &AgentState, dashboard: &mut Dashboard, tick: u64) -> Result<TaskId, SchedulerError> {
        if !self.handler.engaged_for(agent.id).is_empty() {
            return Err(SchedulerError::AgentBusy(agent.id));
        }
        if dashboard.all_complete() {
            return Err(SchedulerError::NothingToDo);
        }
        if !dashboard.all_discovered() {
            if agent.kind == AgentKind::Uav && self.explorer.is_none() {
                self.explorer = Some(agent.id);
                return Ok(self.handler.create(TaskVariant::Explore(self.plan.clone()), agent.id, tick, false));
            }
            return Err(SchedulerError::AwaitingExploration);
        }
        if dashboard.site_complete(site_of(agent.kind)) {
            return Err(SchedulerError::NothingToDo);
        }
        let (spot, kind) = choose_pick(
            dashboard,
            &self.score,
            &self.config.points,
            agent,
            &self.config.params,
            &self.config.corridors,
        )?;
        dashboard.target_spot(spot, agent.id)?;
        let scored = agent.kind == AgentKind::Uav;
        if scored {
            let s = &dashboard.spots[spot.0];
            self.score = self.score.increase_cost(s.row, s.col)?;
            self.outstanding[s.row][s.col] += 1;
        }
        Ok(self.handler.create(TaskVariant::Pick { spot, kind }, agent.id, tick, scored))
    }

    /// Issue the Place task for a brick the agent has just gripped.
    pub fn assign_place(&mut self, agent: &AgentState, dashboard: &mut Dashboard, kind: BrickKind, tick: u64) -> Result<TaskId, SchedulerError> {
        if !self.handler.engaged_for(agent.id).is_empty() {
            return Err(SchedulerError::AgentBusy(agent.id));
        }
        let (slot, channel) = choose_drop(dashboard, kind, agent, &self.config.params, &self.config.corridors)?;
        if dashboard.channels[channel.0].blocked_by.is_none() {
            dashboard.block_channel(channel, agent.id)?;
        }
        dashboard.reserve_slot(slot, agent.id)?;
        Ok(self.handler.create(TaskVariant::Place { slot, channel }, agent.id, tick, false))
    }

    /// Mark an engaged task done and release what it held. Pick completion
    /// expects the brick to have been taken from the spot already; Place
    /// completion expects it to be in the slot.
    pub fn complete(&mut self, id: TaskId, dashboard: &mut Dashboard, tick: u64) -> Result<(), SchedulerError> {
        let task = self.handler.get(id).cloned().ok_or_else(|| SchedulerError::UnknownEntity(format!("task {id}")))?;
        if task.status != TaskStatus::Engaged {
            return Err(SchedulerError::UnknownEntity(format!("engaged task {id}")));
        }
        match task.variant {
            TaskVariant::Explore(_) => self.explorer = None,
            TaskVariant::Pick { spot, .. } => {
                if dashboard.spots[spot.0].status == SpotStatus::Targeted(task.assigned_to) {
                    dashboard.untarget_spot(spot, task.assigned_to)?;
                }
                self.unscore(&task, dashboard)?;
            }
            TaskVariant::Place { channel, .. } => {
                let _ = dashboard.release_channel(channel, task.assigned_to);
            }
        }
        self.handler.finish(id, TaskStatus::Completed, tick);
        Ok(())
    }

    fn unscore(&mut self, task: &Task, dashboard: &Dashboard) -> Result<(), SchedulerError> {
        if let (true, TaskVariant::Pick { spot, .. }) = (task.scored, &task.variant) {
            let s = &dashboard.spots[spot.0];
            self.score = self.score.reset_cost(s.row, s.col)?;
            self.outstanding[s.row][s.col] -= 1;
        }
        Ok(())
    }

    /// Fail one engaged task and free its spot, slot or channel.
    fn fail_task(&mut self, id: TaskId, dashboard: &mut Dashboard, tick: u64) -> Result<(), SchedulerError> {
        let task = self.handler.get(id).cloned().ok_or_else(|| SchedulerError::UnknownEntity(format!("task {id}")))?;
        if task.status != TaskStatus::Engaged {
            return Ok(());
        }
        let agent = task.assigned_to;
        match task.variant {
            TaskVariant::Explore(_) => self.explorer = None,
            TaskVariant::Pick { spot, .. } => {
                if dashboard.spots[spot.0].status == SpotStatus::Targeted(agent) {
                    dashboard.untarget_spot(spot, agent)?;
                }
                self.unscore(&task, dashboard)?;
            }
            TaskVariant::Place { slot, channel } => {
                if dashboard.slots[slot.0].status == SlotStatus::Reserved(agent) {
                    dashboard.unreserve_slot(slot, agent)?;
                }
                let _ = dashboard.release_channel(channel, agent);
            }
        }
        self.handler.finish(id, TaskStatus::Failed, tick);
        Ok(())
    }

    /// Fail everything the agent is engaged in, release its resources and
    /// send any carried brick back to its pile. Returns the failed tasks.
    pub fn release_agent(&mut self, agent: AgentId, dashboard: &mut Dashboard, tick: u64) -> Result<Vec<TaskId>, SchedulerError> {
        let ids = self.handler.engaged_for(agent);
        for id in &ids {
            self.fail_task(*id, dashboard, tick)?;
        }
        dashboard.release_channels_of(agent);
        if let Some(brick) = dashboard.held_by(agent) {
            let pose = dashboard.bricks[brick.0 as usize].pose;
            dashboard.drop_brick(brick, pose)?;
            dashboard.recover_brick(brick)?;
        }
        Ok(ids)
    }

    /// Book a fault and say how the engine should recover.
    pub fn handle_fault(&mut self, event: FaultEvent, dashboard: &mut Dashboard, tick: u64) -> Result<Vec<RecoveryAction>, SchedulerError> {
        match event {
            FaultEvent::PickFail { agent, spot } => {
                dashboard.spot(spot)?;
                let id = self
                    .engaged_task(agent, |v| matches!(v, TaskVariant::Pick { spot: s, .. } if *s == spot))
                    .ok_or_else(|| SchedulerError::UnknownEntity(format!("pick task of agent {agent} at spot {}", spot.0)))?;
                self.fail_task(id, dashboard, tick)?;
                Ok(vec![RecoveryAction::EnterFault(agent, FaultKind::PickFail), RecoveryAction::Requery(agent)])
            }
            FaultEvent::PlaceFail { agent, slot } => {
                dashboard.slot(slot)?;
                let id = self
                    .engaged_task(agent, |v| matches!(v, TaskVariant::Place { slot: s, .. } if *s == slot))
                    .ok_or_else(|| SchedulerError::UnknownEntity(format!("place task of agent {agent} at slot {}", slot.0)))?;
                self.fail_task(id, dashboard, tick)?;
                if let Some(brick) = dashboard.held_by(agent) {
                    let pose = dashboard.bricks[brick.0 as usize].pose;
                    dashboard.drop_brick(brick, pose)?;
                    dashboard.recover_brick(brick)?;
                }
                Ok(vec![RecoveryAction::EnterFault(agent, FaultKind::PlaceFail), RecoveryAction::Requery(agent)])
            }
            FaultEvent::ConnectivityLoss(agent) => Ok(vec![
                    RecoveryAction::EnterFault(agent, FaultKind::ConnectivityLoss),
                    RecoveryAction::Hover(agent),
                    RecoveryAction::ReleaseAfter {
                        agent,
                        timeout_s: self.config.connectivity_timeout_s,
                },
            ]),
            FaultEvent::Collision(a, b) => {
                self.release_agent(a, dashboard, tick)?;
                self.release_agent(b, dashboard, tick)?;
                Ok(vec![
                    RecoveryAction::EnterFault(a, FaultKind::Collision),
                    RecoveryAction::EnterFault(b, FaultKind::Collision),
                ])
            }
            FaultEvent::ResetPause { duration_s } => Ok(vec![RecoveryAction::HaltAll { duration_s }]),
        }
    }

    fn engaged_task(&self, agent: AgentId, pred: impl Fn(&TaskVariant) -> bool) -> Option<TaskId> {
        self.handler
            .engaged()
            .find(|t| t.assigned_to == agent && pred(&t.variant))
            .map(|t| t.id)
    }

    pub fn outstanding_kernels(&self) -> [[i64; COLS]; ROWS] {
        self.outstanding
    }

    /// Cross-check tasks against the dashboard: every engaged task holds its
    /// resource, no resource is held without a task, kernels balance and
    /// scores stay positive.
    pub fn check_invariants(&self, dashboard: &Dashboard) -> Result<(), String> {
        if !self.score.all_positive() {
            return Err("score matrix has a non-positive entry".into());
        }
        let mut expected = [[0i64; COLS]; ROWS];
        let mut per_agent = std::collections::BTreeMap::<AgentId, usize>::new();
        for t in self.handler.engaged() {
            *per_agent.entry(t.assigned_to).or_default() += 1;
            match &t.variant {
                TaskVariant::Pick { spot, .. } => {
                    let s = &dashboard.spots[spot.0];
                    if s.status != SpotStatus::Targeted(t.assigned_to) {
                        return Err(format!("task {} engaged on spot {} not targeted by its agent", t.id, spot.0));
                    }
                    if t.scored {
                        expected[s.row][s.col] += 1;
                    }
                }
                TaskVariant::Place { slot, channel } => {
                    if dashboard.slots[slot.0].status != SlotStatus::Reserved(t.assigned_to) {
                        return Err(format!("task {} engaged on slot {} not reserved by its agent", t.id, slot.0));
                    }
                    if dashboard.channels[channel.0].blocked_by != Some(t.assigned_to) {
                        return Err(format!("task {} places in channel {} without blocking it", t.id, channel.0));
                    }
                }
                TaskVariant::Explore(_) => {}
            }
        }
        if let Some((a, _)) = per_agent.iter().find(|(_, n)| **n > 1) {
            return Err(format!("agent {a} has more than one engaged task"));
        }
        if expected != self.outstanding {
            return Err(format!("kernel balance {:?} != engaged picks {:?}", self.outstanding, expected));
        }
        for (i, s) in dashboard.spots.iter().enumerate() {
            if let SpotStatus::Targeted(a) = s.status {
                if self.engaged_task(a, |v| matches!(v, TaskVariant::Pick { spot, .. } if spot.0 == i)).is_none() {
                    return Err(format!("spot {i} targeted by {a} without a task"));
                }
            }
        }
        for (i, s) in dashboard.slots.iter().enumerate() {
            if let SlotStatus::Reserved(a) = s.status {
                if self.engaged_task(a, |v| matches!(v, TaskVariant::Place { slot, .. } if slot.0 == i)).is_none() {
                    return Err(format!("slot {i} reserved by {a} without a task"));
                }
            }
        }
        for c in &dashboard.channels {
            if let Some(a) = c.blocked_by {
                if self.engaged_task(a, |v| matches!(v, TaskVariant::Place { channel, .. } if *channel == c.id)).is_none() {
                    return Err(format!("channel {} blocked by {a} without a task", c.id.0));
                }
            }
        }
        for b in &dashboard.bricks {
            if b.state == BrickState::Dropped {
                return Err(format!("brick {} left dropped", b.id.0));
            }
        }
        Ok(())
    }
}
