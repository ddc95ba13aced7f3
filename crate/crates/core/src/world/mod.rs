//! Arena model: bricks, piles, channels, wall layouts and the shared dashboard.

mod brick;
mod dashboard;
mod site;

pub use brick::*;
pub use dashboard::{pile_for, Census, Dashboard, Landmark, LandmarkInfo, SpotDef};
pub use site::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("channel {channel:?} layer {layer}: bricks span {total_m:.2} m, channel holds {capacity_m:.2} m")]
    LayerOverflow {
        channel: ChannelId,
        layer: usize,
        total_m: f64,
        capacity_m: f64,
    },
    #[error("channel {channel:?} is reserved for {reserved} bricks, got {found}")]
    ReservedKindViolation {
        channel: ChannelId,
        reserved: BrickKind,
        found: BrickKind,
    },
    #[error("channel {channel:?} already blocked by agent {by}")]
    AlreadyBlocked { channel: ChannelId, by: AgentId },
    #[error("agent {agent} does not hold the block on channel {channel:?}")]
    NotOwner { channel: ChannelId, agent: AgentId },
    #[error("spot {0:?} is not available")]
    SpotUnavailable(SpotId),
    #[error("slot {0:?} is not available")]
    SlotUnavailable(SlotId),
    #[error("brick {brick:?} cannot move from {from:?} to {to:?}")]
    IllegalTransition {
        brick: BrickId,
        from: BrickState,
        to: BrickState,
    },
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
}
