//! Separation checks between agents, and the per-tick avoidance filter that
//! keeps commanded motion clear of them.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentState, Twist};
use crate::geometry::{horizontal_distance, rotate_z, Vec3};
use crate::scenario::in_service_zone;
use crate::world::{AgentId, Dashboard};

/// Slack on the vertical threshold so that two agents flying exactly one
/// corridor spacing apart are not flagged by rounding.
pub const VERTICAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub uav_horizontal_m: f64,
    pub uav_vertical_m: f64,
    pub ground_m: f64,
    /// Distance from a stack or channel within which ground proximity is allowed.
    pub service_margin_m: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            uav_horizontal_m: 1.5,
            uav_vertical_m: 2.0,
            ground_m: 1.5,
            service_margin_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: AgentId,
    pub b: AgentId,
    pub horizontal_m: f64,
    pub vertical_m: f64,
}

fn uav_pair_conflict(p: &Vec3, q: &Vec3, horizontal: f64, vertical: f64) -> bool {
    horizontal_distance(p, q) < horizontal && (p.z - q.z).abs() < vertical - VERTICAL_EPS
}

/// Pairs closer than the thresholds. UAV pairs need both horizontal and
/// vertical separation below threshold; pairs involving a ground vehicle use
/// 3-D distance and are exempt when either agent is in a service zone.
pub fn collision_monitor(agents: &[AgentState], thresholds: &Thresholds, dashboard: Option<&Dashboard>) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, a) in agents.iter().enumerate() {
        for b in &agents[i + 1..] {
            let (p, q) = (&a.pose.position, &b.pose.position);
            let flagged = if a.kind == AgentKind::Uav && b.kind == AgentKind::Uav {
                uav_pair_conflict(p, q, thresholds.uav_horizontal_m, thresholds.uav_vertical_m)
            } else {
                let exempt = dashboard.is_some_and(|d| {
                    in_service_zone(d, p, thresholds.service_margin_m) || in_service_zone(d, q, thresholds.service_margin_m)
                });
                !exempt && (p - q).norm() < thresholds.ground_m
            };
            if flagged {
                out.push(Violation {
                    a: a.id,
                    b: b.id,
                    horizontal_m: horizontal_distance(p, q),
                    vertical_m: (p.z - q.z).abs(),
                });
            }
        }
    }
    out
}

/// Keep-out sizes used when filtering commands. Larger than the monitor's so
/// that accepted motion never trips it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceParams {
    pub horizontal_m: f64,
    pub vertical_m: f64,
    pub ground_m: f64,
}

impl Default for AvoidanceParams {
    fn default() -> Self {
        Self {
            horizontal_m: 2.0,
            vertical_m: 2.0,
            ground_m: 2.0,
        }
    }
}

const SIDESTEPS: [f64; 6] = [
    -std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_4,
    -std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    -3.0 * std::f64::consts::FRAC_PI_4,
    3.0 * std::f64::consts::FRAC_PI_4,
];

fn conflict(kind_a: AgentKind, p: &Vec3, kind_b: AgentKind, q: &Vec3, params: &AvoidanceParams) -> bool {
    if kind_a == AgentKind::Uav && kind_b == AgentKind::Uav {
        uav_pair_conflict(p, q, params.horizontal_m, params.vertical_m)
    } else {
        (p - q).norm() < params.ground_m
    }
}

/// Adjust commands so no pair ends the tick in conflict. Agents are handled
/// in order; each takes the first of {command, command turned 45, 90 or 135
/// degrees (right before left), a sideways slide for a blocked climb, hover}
/// whose end point is clear of the
/// already committed agents and the current positions of the rest. If the
/// current configuration is conflict-free, hovering is always clear, so the
/// property carries over from tick to tick. Ground vehicles cannot sidestep
/// and only choose between their command and stopping.
///
/// `moves[i]` is the displacement agent `i` would make this tick. Returns the
/// accepted displacements and how many agents were deflected or stopped.
pub fn filter_moves(agents: &[AgentState], moves: &[Vec3], params: &AvoidanceParams) -> (Vec<Vec3>, usize) {
    let mut end: Vec<Vec3> = agents.iter().map(|a| a.pose.position).collect();
    let mut out = Vec::with_capacity(moves.len());
    let mut adjusted = 0;
    for (i, a) in agents.iter().enumerate() {
        let m = moves[i];
        let mut candidates = vec![m];
        candidates.extend(SIDESTEPS.iter().map(|angle| rotate_z(&m, *angle)));
        if a.kind == AgentKind::Uav && m.z > 0.0 {
            // A climb blocked from above slides out from under the blocker.
            let p = a.pose.position + m;
            let blocker = agents
                .iter()
                .enumerate()
                .filter(|(j, b)| *j != i && conflict(a.kind, &p, b.kind, &end[*j], params))
                .map(|(j, _)| end[j])
                .min_by(|x, y| horizontal_distance(&p, x).total_cmp(&horizontal_distance(&p, y)));
            if let Some(q) = blocker {
                let away = Vec3::new(p.x - q.x, p.y - q.y, 0.0);
                let dir = if away.norm() > 1e-9 { away / away.norm() } else { Vec3::x() };
                candidates.push(dir * m.norm());
            }
        }
        candidates.push(Vec3::zeros());
        let hover = candidates.len() - 1;
        let holonomic = a.kind == AgentKind::Uav;
        let clear = |(n, c): (usize, &Vec3)| {
            if !holonomic && n != 0 && n != hover {
                return false;
            }
            let p = a.pose.position + c;
            agents
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .all(|(j, b)| !conflict(a.kind, &p, b.kind, &end[j], params))
        };
        let chosen = candidates.iter().enumerate().position(clear).unwrap_or(hover);
        if chosen != 0 && m.norm() > 0.0 {
            adjusted += 1;
        }
        let c = candidates[chosen];
        end[i] = a.pose.position + c;
        out.push(c);
    }
    (out, adjusted)
}

/// Scale a twist so its linear part produces displacement `d` over `dt`.
pub fn twist_for_move(original: &Twist, d: &Vec3, dt: f64) -> Twist {
    Twist {
        linear: d / dt,
        yaw_rate: if d.norm() == 0.0 && original.linear.norm() > 0.0 { 0.0 } else { original.yaw_rate },
    }
}
