use serde::{Deserialize, Serialize};
use std::fmt;

use crate::geometry::Pose;

/// Common cross-section of every brick.
pub const BRICK_WIDTH_M: f64 = 0.20;
pub const BRICK_HEIGHT_M: f64 = 0.20;

/// The four brick colours. The discriminant doubles as the row index in
/// the 4x3 pile, score and points matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BrickKind {
    Red,
    Green,
    Blue,
    Orange,
}

impl BrickKind {
    pub const ALL: [BrickKind; 4] = [BrickKind::Red, BrickKind::Green, BrickKind::Blue, BrickKind::Orange];

    pub fn row(self) -> usize {
        self as usize
    }

    pub fn from_row(row: usize) -> Option<BrickKind> {
        Self::ALL.get(row).copied()
    }

    pub fn length_m(self) -> f64 {
        match self {
            BrickKind::Red => 0.30,
            BrickKind::Green => 0.60,
            BrickKind::Blue => 1.20,
            BrickKind::Orange => 1.80,
        }
    }

    pub fn width_m(self) -> f64 {
        BRICK_WIDTH_M
    }

    pub fn height_m(self) -> f64 {
        BRICK_HEIGHT_M
    }

    pub fn mass_kg(self) -> f64 {
        match self {
            BrickKind::Red | BrickKind::Green => 1.0,
            BrickKind::Blue => 1.5,
            BrickKind::Orange => 2.0,
        }
    }

    /// Area of the top face, seen by a downward camera.
    pub fn top_area_m2(self) -> f64 {
        self.length_m() * self.width_m()
    }

    /// Area of the long side face, seen by a forward camera.
    pub fn side_area_m2(self) -> f64 {
        self.length_m() * self.height_m()
    }
}

impl fmt::Display for BrickKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BrickKind::Red => "Red",
            BrickKind::Green => "Green",
            BrickKind::Blue => "Blue",
            BrickKind::Orange => "Orange",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BrickKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "red" | "r" => Ok(BrickKind::Red),
            "green" | "g" => Ok(BrickKind::Green),
            "blue" | "b" => Ok(BrickKind::Blue),
            "orange" | "o" => Ok(BrickKind::Orange),
            other => Err(format!("unknown brick kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BrickId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpotId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId(pub usize);

/// Lifecycle of a brick: piled, held, then placed or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BrickState {
    InPile(SpotId),
    Held(AgentId),
    Placed(SlotId),
    Dropped,
}

impl BrickState {
    /// Legal edges. `Dropped -> InPile` is only taken by fault recovery.
    pub fn can_become(&self, next: &BrickState) -> bool {
        matches!(
            (self, next),
            (BrickState::InPile(_), BrickState::Held(_))
                | (BrickState::Held(_), BrickState::Placed(_))
                | (BrickState::Held(_), BrickState::Dropped)
                | (BrickState::Dropped, BrickState::InPile(_))
        )
    }

    /// Index into the `[piled, held, placed, dropped]` census.
    pub fn census_index(&self) -> usize {
        match self {
            BrickState::InPile(_) => 0,
            BrickState::Held(_) => 1,
            BrickState::Placed(_) => 2,
            BrickState::Dropped => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrickInstance {
    pub id: BrickId,
    pub kind: BrickKind,
    pub pose: Pose,
    pub state: BrickState,
    /// Spot the brick was originally stacked on; recovery returns it here.
    pub home: SpotId,
}
