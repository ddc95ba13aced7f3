//! Scenario files: arena, agents, piles, walls and scripted pauses.
//!
//! Scenarios are JSON. Syntax and type errors carry the line, column and
//! field path; semantic checks name the offending field.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::agents::{AgentKind, AgentState};
use crate::geometry::{horizontal_distance_to_segment, Bounds, Pose, Vec3};
use crate::scheduler::{PointsMatrix, COLS, ROWS};
use crate::world::{
    wall_slots, AgentId, BrickKind, Channel, ChannelId, Dashboard, Landmark, PileOwner, Site, SpotDef, WallSpec,
    WorldError, BRICK_HEIGHT_M, CHANNEL_LENGTH_M,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Uav,
    Ugv,
}

impl Side {
    pub fn site(self) -> Site {
        match self {
            Side::Uav => Site::UavSite,
            Side::Ugv => Site::UgvSite,
        }
    }

    pub fn pile(self) -> PileOwner {
        match self {
            Side::Uav => PileOwner::UavPile,
            Side::Ugv => PileOwner::UgvPile,
        }
    }

    pub fn agent(self) -> AgentKind {
        match self {
            Side::Uav => AgentKind::Uav,
            Side::Ugv => AgentKind::Ugv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: Side,
    pub start: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

/// A grid of stacks. Spot `(row, col)` sits at `origin + row * row_step + col * col_step`;
/// the row is the brick kind (Red, Green, Blue, Orange).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PileSpec {
    pub owner: Side,
    pub origin: [f64; 2],
    pub row_step: [f64; 2],
    pub col_step: [f64; 2],
    pub cols: usize,
    /// Bricks per stack.
    pub count: usize,
    /// Brick heading in the stacks.
    #[serde(default)]
    pub yaw: f64,
    /// Heading a ground vehicle faces when driving up to a stack.
    #[serde(default)]
    pub approach_yaw: f64,
    /// Largest per-brick offset (m) and heading error (rad) in the stacks.
    /// Offsets are a fixed function of the brick id, so runs stay reproducible.
    #[serde(default)]
    pub stack_jitter: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub site: Side,
    /// Start of the channel at its base height.
    pub origin: [f64; 3],
    pub heading: f64,
    #[serde(default = "default_channel_length")]
    pub length_m: f64,
    #[serde(default)]
    pub reserved_kind: Option<BrickKind>,
    /// Bottom layer first; each layer lists bricks from the channel start.
    pub layers: Vec<Vec<BrickKind>>,
}

fn default_channel_length() -> f64 {
    CHANNEL_LENGTH_M
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPause {
    pub time_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub arena: [f64; 3],
    /// Points per delivered brick, by kind row.
    #[serde(default = "default_points")]
    pub points: [f64; 4],
    pub agents: Vec<AgentSpec>,
    pub piles: Vec<PileSpec>,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub scripted_pauses: Vec<ScriptedPause>,
}

fn default_points() -> [f64; 4] {
    [10.0, 6.0, 4.0, 3.0]
}

/// Everything the engine needs, expanded from a scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub bounds: Bounds,
    pub dashboard: Dashboard,
    pub agents: Vec<AgentState>,
    pub points: PointsMatrix,
    /// Per spot id.
    pub approach_yaw: Vec<f64>,
    pub pauses: Vec<ScriptedPause>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::from_size(self.arena[0], self.arena[1], self.arena[2])
    }

    fn spot_defs(&self) -> Vec<(SpotDef, f64)> {
        let mut out = Vec::new();
        for p in &self.piles {
            for row in 0..ROWS {
                for col in 0..p.cols {
                    let x = p.origin[0] + row as f64 * p.row_step[0] + col as f64 * p.col_step[0];
                    let y = p.origin[1] + row as f64 * p.row_step[1] + col as f64 * p.col_step[1];
                    out.push((
                        SpotDef {
                            row,
                            col,
                            pose: Pose::new(x, y, 0.0, p.yaw),
                            owner: p.owner.pile(),
                            count: p.count,
                        },
                        p.approach_yaw,
                    ));
                }
            }
        }
        out
    }

    fn channels(&self) -> Vec<(Channel, WallSpec)> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    Channel {
                        id: ChannelId(i),
                        origin: Vec3::new(c.origin[0], c.origin[1], c.origin[2]),
                        heading: c.heading,
                        length_m: c.length_m,
                        reserved_kind: c.reserved_kind,
                        blocked_by: None,
                        site: c.site.site(),
                    },
                    WallSpec::new(c.layers.clone()),
                )
            })
            .collect()
    }

    /// Semantic checks. Returns advisory warnings on success.
    pub fn validate(&self) -> Result<Vec<String>, ScenarioError> {
        let mut warnings = Vec::new();
        if !self.arena.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(invalid("arena", "all three dimensions must be positive"));
        }
        let bounds = self.bounds();
        if self.points.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(invalid("points", "every entry must be positive"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent is required"));
        }
        let has = |side: Side| self.agents.iter().any(|a| a.kind == side);
        if !has(Side::Uav) {
            return Err(invalid("agents", "at least one UAV is needed to explore the arena"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let p = Vec3::new(a.start[0], a.start[1], a.start[2]);
            if !bounds.contains(&p) {
                return Err(invalid(format!("agents[{i}].start"), "outside the arena"));
            }
            if a.kind == Side::Ugv && a.start[2] != 0.0 {
                warnings.push(format!("agents[{i}].start: ground vehicle start height ignored"));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            for (j, b) in self.agents.iter().enumerate().skip(i + 1) {
                let d = Vec3::new(a.start[0] - b.start[0], a.start[1] - b.start[1], 0.0).norm();
                if d < 2.5 {
                    return Err(invalid(format!("agents[{j}].start"), format!("within 2.5 m of agents[{i}]")));
                }
            }
        }

        for (i, p) in self.piles.iter().enumerate() {
            if p.cols == 0 || p.cols > COLS {
                return Err(invalid(format!("piles[{i}].cols"), format!("must be between 1 and {COLS}")));
            }
            let [dp, dy] = p.stack_jitter;
            if !(0.0..=0.5).contains(&dp) || !(0.0..=0.5).contains(&dy) {
                return Err(invalid(format!("piles[{i}].stack_jitter"), "offset and heading error must lie in [0, 0.5]"));
            }
        }
        for side in [Side::Uav, Side::Ugv] {
            let n = self.piles.iter().filter(|p| p.owner == side).count();
            if n > 1 {
                return Err(invalid("piles", format!("more than one {side:?} pile")));
            }
        }
        for (def, _) in self.spot_defs() {
            if !bounds.contains(&def.pose.position) {
                return Err(invalid("piles", format!("spot ({}, {}) lies outside the arena", def.row, def.col)));
            }
        }

        for (i, (ch, spec)) in self.channels().iter().enumerate() {
            let field = format!("channels[{i}]");
            if !(ch.length_m > 0.0) {
                return Err(invalid(format!("{field}.length_m"), "must be positive"));
            }
            if !bounds.contains(&ch.origin) || !bounds.contains(&ch.end()) {
                return Err(invalid(format!("{field}.origin"), "channel leaves the arena"));
            }
            wall_slots(spec, ch).map_err(|e| match e {
                WorldError::LayerOverflow { layer, .. } => invalid(format!("{field}.layers[{layer}]"), e.to_string()),
                other => invalid(format!("{field}.layers"), other.to_string()),
            })?;
            let expected = match ch.site {
                Site::UavSite => 2,
                Site::UgvSite => 5,
            };
            if spec.layers.len() != expected {
                warnings.push(format!("{field}.layers: {} layers, the standard wall has {expected}", spec.layers.len()));
            }
            if !has(self.channels[i].site) {
                return Err(invalid(&field, format!("no {:?} agent can build this channel", self.channels[i].site)));
            }
        }

        // enough bricks of each kind in the matching pile
        for side in [Side::Uav, Side::Ugv] {
            let mut need = [0usize; 4];
            for c in self.channels.iter().filter(|c| c.site == side) {
                for kind in c.layers.iter().flatten() {
                    need[kind.row()] += 1;
                }
            }
            let have = self
                .piles
                .iter()
                .find(|p| p.owner == side)
                .map(|p| p.cols * p.count)
                .unwrap_or(0);
            for kind in BrickKind::ALL {
                if need[kind.row()] > have {
                    return Err(invalid(
                        "piles",
                        format!("{side:?} walls need {} {kind} bricks, pile holds {have}", need[kind.row()]),
                    ));
                }
            }
        }

        for (i, s) in self.scripted_pauses.iter().enumerate() {
            if !(s.time_s >= 0.0 && s.duration_s > 0.0) {
                return Err(invalid(format!("scripted_pauses[{i}]"), "time must be >= 0 and duration > 0"));
            }
        }
        Ok(warnings)
    }

    /// Validate and expand into dashboard and agent states.
    pub fn build(&self) -> Result<World, ScenarioError> {
        self.validate()?;
        let spots = self.spot_defs();
        let defs: Vec<SpotDef> = spots.iter().map(|(d, _)| d.clone()).collect();
        let channels = self.channels();

        let mut landmarks = Vec::new();
        for side in [Side::Uav, Side::Ugv] {
            let pile: Vec<Vec3> = defs.iter().filter(|d| d.owner == side.pile()).map(|d| d.pose.position).collect();
            if !pile.is_empty() {
                let lm = if side == Side::Uav { Landmark::UavPile } else { Landmark::UgvPile };
                landmarks.push((lm, centroid(&pile)));
            }
            let site: Vec<Vec3> = channels
                .iter()
                .filter(|(c, _)| c.site == side.site())
                .map(|(c, _)| {
                    let mut m = c.midpoint();
                    m.z = 0.0;
                    m
                })
                .collect();
            if !site.is_empty() {
                let lm = if side == Side::Uav { Landmark::UavSite } else { Landmark::UgvSite };
                landmarks.push((lm, centroid(&site)));
            }
        }

        let mut dashboard = Dashboard::new(&defs, channels, landmarks).map_err(|e| invalid("channels", e.to_string()))?;
        let jitter: Vec<[f64; 2]> = self.piles.iter().flat_map(|p| std::iter::repeat_n(p.stack_jitter, ROWS * p.cols)).collect();
        for b in &mut dashboard.bricks {
            let [dp, dy] = jitter[b.home.0];
            let k = b.id.0 as f64;
            b.pose.position.x += dp * (1.7 * k + 0.3).sin();
            b.pose.position.y += dp * (2.3 * k + 1.1).cos();
            b.pose.yaw += dy * (3.1 * k + 0.7).sin();
        }
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentState::new(AgentId(i as u32), a.kind.agent(), Pose::new(a.start[0], a.start[1], a.start[2], a.yaw)))
            .collect();
        Ok(World {
            bounds: self.bounds(),
            dashboard,
            agents,
            points: PointsMatrix::from_row_values(self.points),
            approach_yaw: spots.iter().map(|(_, y)| *y).collect(),
            pauses: self.scripted_pauses.clone(),
        })
    }

    /// Three UAVs and one UGV: four two-layer UAV channels (one reserved for
    /// Orange) and a five-layer L-shaped ground wall.
    pub fn default_mission() -> Self {
        use BrickKind::*;
        let uav_channel = |i: usize, reserved: Option<BrickKind>, layers: Vec<Vec<BrickKind>>| ChannelSpec {
            site: Side::Uav,
            origin: [34.0, 22.0 + 4.0 * i as f64, 1.7],
            heading: 0.0,
            length_m: CHANNEL_LENGTH_M,
            reserved_kind: reserved,
            layers,
        };
        Scenario {
            name: "default".into(),
            arena: [50.0, 40.0, 20.0],
            points: default_points(),
            agents: vec![
                AgentSpec { kind: Side::Uav, start: [2.0, 2.0, 0.0], yaw: 0.0 },
                AgentSpec { kind: Side::Uav, start: [2.0, 5.0, 0.0], yaw: 0.0 },
                AgentSpec { kind: Side::Uav, start: [2.0, 8.0, 0.0], yaw: 0.0 },
                AgentSpec { kind: Side::Ugv, start: [2.0, 19.0, 0.0], yaw: 0.0 },
            ],
            piles: vec![
                PileSpec {
                    owner: Side::Uav,
                    origin: [8.0, 24.0],
                    row_step: [0.0, 3.0],
                    col_step: [5.0, 0.0],
                    cols: 3,
                    count: 4,
                    yaw: 0.0,
                    approach_yaw: 0.0,
                    stack_jitter: [0.15, 0.2],
                },
                PileSpec {
                    owner: Side::Ugv,
                    origin: [8.0, 16.0],
                    row_step: [8.0, 0.0],
                    col_step: [2.5, 0.0],
                    cols: 3,
                    count: 4,
                    yaw: 0.0,
                    approach_yaw: -std::f64::consts::FRAC_PI_2,
                    stack_jitter: [0.1, 0.1],
                },
            ],
            channels: vec![
                uav_channel(0, None, vec![vec![Red, Green, Blue, Green, Red], vec![Green, Red, Blue, Red, Green]]),
                uav_channel(1, None, vec![vec![Blue, Blue, Green], vec![Green, Blue, Blue]]),
                uav_channel(2, None, vec![vec![Green, Red, Blue, Red, Green], vec![Red, Green, Blue, Green, Red]]),
                uav_channel(3, Some(Orange), vec![vec![Orange, Orange], vec![Orange, Orange]]),
                ChannelSpec {
                    site: Side::Ugv,
                    origin: [34.0, 4.0, 0.0],
                    heading: 0.0,
                    length_m: CHANNEL_LENGTH_M,
                    reserved_kind: None,
                    layers: vec![vec![Orange, Orange]; 5],
                },
                ChannelSpec {
                    site: Side::Ugv,
                    origin: [33.9, 4.1, 0.0],
                    heading: std::f64::consts::FRAC_PI_2,
                    length_m: CHANNEL_LENGTH_M,
                    reserved_kind: None,
                    layers: vec![vec![Blue, Blue, Green, Red]; 5],
                },
            ],
            scripted_pauses: vec![],
        }
    }

    /// One UAV, one channel, a single Red brick.
    pub fn single_red() -> Self {
        Scenario {
            name: "single-red".into(),
            arena: [50.0, 40.0, 20.0],
            points: default_points(),
            agents: vec![AgentSpec {
                kind: Side::Uav,
                start: [2.0, 2.0, 0.0],
                yaw: 0.0,
            }],
            piles: vec![PileSpec {
                owner: Side::Uav,
                origin: [8.0, 24.0],
                row_step: [0.0, 3.0],
                col_step: [5.0, 0.0],
                cols: 3,
                count: 1,
                yaw: 0.0,
                approach_yaw: 0.0,
                stack_jitter: [0.15, 0.2],
            }],
            channels: vec![ChannelSpec {
                site: Side::Uav,
                origin: [34.0, 22.0, 1.7],
                heading: 0.0,
                length_m: CHANNEL_LENGTH_M,
                reserved_kind: None,
                layers: vec![vec![BrickKind::Red]],
            }],
            scripted_pauses: vec![],
        }
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64
}

/// Whether `p` is within `margin` of a pile stack or a channel: places where
/// ground and air vehicles legitimately work close together.
pub fn in_service_zone(dashboard: &Dashboard, p: &Vec3, margin: f64) -> bool {
    dashboard
        .spots
        .iter()
        .any(|s| Vec3::new(s.pose.x() - p.x, s.pose.y() - p.y, 0.0).norm() <= margin)
        || dashboard
            .channels
            .iter()
            .any(|c| horizontal_distance_to_segment(p, &c.origin, &c.end()) <= margin)
}

/// Height of the top of a stack of `n` bricks.
pub fn stack_top(n: usize) -> f64 {
    n as f64 * BRICK_HEIGHT_M
}
