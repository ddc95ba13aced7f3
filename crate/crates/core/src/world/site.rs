use serde::{Deserialize, Serialize};

use super::brick::{AgentId, BrickId, BrickKind, ChannelId, BRICK_HEIGHT_M};
use super::WorldError;
use crate::geometry::{rotate_z, Pose, Vec3};

/// Standard channel length.
pub const CHANNEL_LENGTH_M: f64 = 4.0;
/// Height of the UAV construction platform; UAV channels sit on top of it.
pub const UAV_PLATFORM_HEIGHT_M: f64 = 1.7;

const LENGTH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    UavSite,
    UgvSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PileOwner {
    UavPile,
    UgvPile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpotStatus {
    Free,
    Targeted(AgentId),
    Depleted,
}

/// One stack in a pile. `row` is the brick kind, `col` the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupSpot {
    pub row: usize,
    pub col: usize,
    pub kind: BrickKind,
    /// Ground pose of the stack base.
    pub pose: Pose,
    pub owner: PileOwner,
    pub status: SpotStatus,
    /// Bottom to top.
    pub stack: Vec<BrickId>,
}

impl PickupSpot {
    pub fn remaining(&self) -> usize {
        self.stack.len()
    }

    pub fn top(&self) -> Option<BrickId> {
        self.stack.last().copied()
    }

    /// Centre of the brick that would be picked next.
    pub fn top_center(&self) -> Vec3 {
        let n = self.stack.len().max(1) as f64;
        Vec3::new(self.pose.x(), self.pose.y(), (n - 1.0) * BRICK_HEIGHT_M + BRICK_HEIGHT_M / 2.0)
    }
}

/// A straight 4 m wall segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    /// Start of the channel, at the base of the first layer.
    pub origin: Vec3,
    pub heading: f64,
    pub length_m: f64,
    pub reserved_kind: Option<BrickKind>,
    pub blocked_by: Option<AgentId>,
    pub site: Site,
}

impl Channel {
    pub fn direction(&self) -> Vec3 {
        Vec3::new(self.heading.cos(), self.heading.sin(), 0.0)
    }

    pub fn end(&self) -> Vec3 {
        self.origin + self.direction() * self.length_m
    }

    pub fn midpoint(&self) -> Vec3 {
        self.origin + self.direction() * (self.length_m / 2.0)
    }

    /// World pose of a point `along` metres down the channel at the base of `layer`.
    pub fn pose_at(&self, along: f64, layer: usize) -> Pose {
        let local = Vec3::new(along, 0.0, layer as f64 * BRICK_HEIGHT_M);
        Pose {
            position: self.origin + rotate_z(&local, self.heading),
            yaw: self.heading,
        }
    }
}

/// Ordered layers of bricks for one channel, bottom layer first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallSpec {
    pub layers: Vec<Vec<BrickKind>>,
}

impl WallSpec {
    pub fn new(layers: Vec<Vec<BrickKind>>) -> Self {
        Self { layers }
    }

    pub fn brick_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotStatus {
    Empty,
    Reserved(AgentId),
    Filled(BrickId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrickSlot {
    pub channel: ChannelId,
    pub layer: usize,
    /// Position within the layer, left to right.
    pub index: usize,
    pub offset_m: f64,
    /// Brick centre and heading in the world frame.
    pub target_pose: Pose,
    pub required_kind: BrickKind,
    pub status: SlotStatus,
}

impl BrickSlot {
    pub fn end_m(&self) -> f64 {
        self.offset_m + self.required_kind.length_m()
    }
}

/// Expand a channel's layer pattern into brick slots.
///
/// Bricks are laid from the channel origin with no gap, so each offset is the
/// prefix sum of the preceding lengths in the layer. The result is ordered
/// layer-major, then by offset.
pub fn wall_slots(spec: &WallSpec, channel: &Channel) -> Result<Vec<BrickSlot>, WorldError> {
    let mut slots = Vec::with_capacity(spec.brick_count());
    for (layer, kinds) in spec.layers.iter().enumerate() {
        let total: f64 = kinds.iter().map(|k| k.length_m()).sum();
        if total > channel.length_m + LENGTH_EPS {
            return Err(WorldError::LayerOverflow {
                channel: channel.id,
                layer,
                total_m: total,
                capacity_m: channel.length_m,
            });
        }
        let mut offset = 0.0;
        for (index, &kind) in kinds.iter().enumerate() {
            if let Some(reserved) = channel.reserved_kind {
                if kind != reserved {
                    return Err(WorldError::ReservedKindViolation {
                        channel: channel.id,
                        reserved,
                        found: kind,
                    });
                }
            }
            let center = channel.pose_at(offset + kind.length_m() / 2.0, layer);
            let target_pose = Pose {
                position: center.position + Vec3::new(0.0, 0.0, BRICK_HEIGHT_M / 2.0),
                yaw: channel.heading,
            };
            slots.push(BrickSlot {
                channel: channel.id,
                layer,
                index,
                offset_m: offset,
                target_pose,
                required_kind: kind,
                status: SlotStatus::Empty,
            });
            offset += kind.length_m();
        }
    }
    Ok(slots)
}
