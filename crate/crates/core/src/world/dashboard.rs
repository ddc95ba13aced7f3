use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::brick::*;
use super::site::*;
use super::WorldError;
use crate::geometry::{Pose, Vec3};

/// Things the explorer has to find before pick/place work can start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Landmark {
    UavPile,
    UgvPile,
    UavSite,
    UgvSite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkInfo {
    pub landmark: Landmark,
    /// Ground position used for footprint containment.
    pub position: Vec3,
    pub discovered: bool,
}

/// Pile stack definition consumed by [`Dashboard::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpotDef {
    pub row: usize,
    pub col: usize,
    pub pose: Pose,
    pub owner: PileOwner,
    pub count: usize,
}

/// Per-kind brick counts in each lifecycle state: `[piled, held, placed, dropped]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census {
    pub counts: [[usize; 4]; 4],
}

impl Census {
    pub fn total(&self, kind: BrickKind) -> usize {
        self.counts[kind.row()].iter().sum()
    }
}

/// Live registry of pickup spots, placement slots, channels and brick states.
///
/// All mutation goes through the methods below so the cross references
/// (spot stacks, slot fill markers, brick states) stay consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub bricks: Vec<BrickInstance>,
    pub spots: Vec<PickupSpot>,
    pub channels: Vec<Channel>,
    pub slots: Vec<BrickSlot>,
    pub landmarks: Vec<LandmarkInfo>,
    channel_slots: Vec<Range<usize>>,
    initial_totals: [usize; 4],
}

impl Dashboard {
    /// Builds the registry. Channel ids are reassigned to their index.
    pub fn new(
        spot_defs: &[SpotDef],
        walls: Vec<(Channel, WallSpec)>,
        landmarks: Vec<(Landmark, Vec3)>,
    ) -> Result<Self, WorldError> {
        let mut bricks = Vec::new();
        let mut spots = Vec::with_capacity(spot_defs.len());
        for (i, def) in spot_defs.iter().enumerate() {
            let kind = BrickKind::from_row(def.row)
                .ok_or_else(|| WorldError::UnknownEntity(format!("pile row {}", def.row)))?;
            let mut stack = Vec::with_capacity(def.count);
            for level in 0..def.count {
                let id = BrickId(bricks.len() as u32);
                let z = level as f64 * BRICK_HEIGHT_M + BRICK_HEIGHT_M / 2.0;
                bricks.push(BrickInstance {
                    id,
                    kind,
                    pose: Pose::new(def.pose.x(), def.pose.y(), z, def.pose.yaw),
                    state: BrickState::InPile(SpotId(i)),
                    home: SpotId(i),
                });
                stack.push(id);
            }
            spots.push(PickupSpot {
                row: def.row,
                col: def.col,
                kind,
                pose: def.pose,
                owner: def.owner,
                status: if def.count == 0 { SpotStatus::Depleted } else { SpotStatus::Free },
                stack,
            });
        }

        let mut channels = Vec::with_capacity(walls.len());
        let mut slots = Vec::new();
        let mut channel_slots = Vec::with_capacity(walls.len());
        for (i, (mut channel, spec)) in walls.into_iter().enumerate() {
            channel.id = ChannelId(i);
            channel.blocked_by = None;
            let start = slots.len();
            slots.extend(wall_slots(&spec, &channel)?);
            channel_slots.push(start..slots.len());
            channels.push(channel);
        }

        let mut initial_totals = [0; 4];
        for b in &bricks {
            initial_totals[b.kind.row()] += 1;
        }

        Ok(Self {
            bricks,
            spots,
            channels,
            slots,
            landmarks: landmarks
                .into_iter()
                .map(|(landmark, position)| LandmarkInfo {
                    landmark,
                    position,
                    discovered: false,
                })
                .collect(),
            channel_slots,
            initial_totals,
        })
    }

    pub fn channel(&self, id: ChannelId) -> Result<&Channel, WorldError> {
        self.channels
            .get(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("channel {}", id.0)))
    }

    pub fn slot(&self, id: SlotId) -> Result<&BrickSlot, WorldError> {
        self.slots
            .get(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("slot {}", id.0)))
    }

    pub fn spot(&self, id: SpotId) -> Result<&PickupSpot, WorldError> {
        self.spots
            .get(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("spot {}", id.0)))
    }

    pub fn brick(&self, id: BrickId) -> Result<&BrickInstance, WorldError> {
        self.bricks
            .get(id.0 as usize)
            .ok_or_else(|| WorldError::UnknownEntity(format!("brick {}", id.0)))
    }

    /// Slots of one channel in layer-major, offset order.
    pub fn channel_slots(&self, id: ChannelId) -> impl Iterator<Item = (SlotId, &BrickSlot)> + '_ {
        let range = self.channel_slots.get(id.0).cloned().unwrap_or(0..0);
        range.map(move |i| (SlotId(i), &self.slots[i]))
    }

    /// Lowest layer that still has a slot that is not filled.
    pub fn current_layer(&self, id: ChannelId) -> Option<usize> {
        self.channel_slots(id)
            .find(|(_, s)| !matches!(s.status, SlotStatus::Filled(_)))
            .map(|(_, s)| s.layer)
    }

    /// First empty slot of the lowest incomplete layer. Higher layers only
    /// open up once every slot below them is filled.
    pub fn next_required_brick(&self, id: ChannelId) -> Option<(SlotId, BrickKind)> {
        let layer = self.current_layer(id)?;
        self.channel_slots(id)
            .filter(|(_, s)| s.layer == layer)
            .find(|(_, s)| s.status == SlotStatus::Empty)
            .map(|(sid, s)| (sid, s.required_kind))
    }

    pub fn channel_complete(&self, id: ChannelId) -> bool {
        self.current_layer(id).is_none()
    }

    pub fn site_complete(&self, site: Site) -> bool {
        self.channels
            .iter()
            .filter(|c| c.site == site)
            .all(|c| self.channel_complete(c.id))
    }

    pub fn all_complete(&self) -> bool {
        self.slots.iter().all(|s| matches!(s.status, SlotStatus::Filled(_)))
    }

    pub fn filled_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s.status, SlotStatus::Filled(_)))
            .count()
    }

    /// True when every slot in lower layers of the slot's channel is filled.
    pub fn layer_rule_holds(&self, slot: SlotId) -> bool {
        let Ok(s) = self.slot(slot) else { return false };
        self.channel_slots(s.channel)
            .filter(|(_, o)| o.layer < s.layer)
            .all(|(_, o)| matches!(o.status, SlotStatus::Filled(_)))
    }

    pub fn block_channel(&mut self, id: ChannelId, agent: AgentId) -> Result<(), WorldError> {
        let ch = self
            .channels
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("channel {}", id.0)))?;
        match ch.blocked_by {
            Some(by) => Err(WorldError::AlreadyBlocked { channel: id, by }),
            None => {
                ch.blocked_by = Some(agent);
                Ok(())
            }
        }
    }

    pub fn release_channel(&mut self, id: ChannelId, agent: AgentId) -> Result<(), WorldError> {
        let ch = self
            .channels
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("channel {}", id.0)))?;
        if ch.blocked_by != Some(agent) {
            return Err(WorldError::NotOwner { channel: id, agent });
        }
        ch.blocked_by = None;
        Ok(())
    }

    /// Release every channel block held by `agent`. Returns the released ids.
    pub fn release_channels_of(&mut self, agent: AgentId) -> Vec<ChannelId> {
        let mut out = Vec::new();
        for ch in &mut self.channels {
            if ch.blocked_by == Some(agent) {
                ch.blocked_by = None;
                out.push(ch.id);
            }
        }
        out
    }

    pub fn target_spot(&mut self, id: SpotId, agent: AgentId) -> Result<(), WorldError> {
        let spot = self
            .spots
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("spot {}", id.0)))?;
        if spot.status != SpotStatus::Free || spot.stack.is_empty() {
            return Err(WorldError::SpotUnavailable(id));
        }
        spot.status = SpotStatus::Targeted(agent);
        Ok(())
    }

    /// Clear a targeting marker; the spot becomes free or depleted.
    pub fn untarget_spot(&mut self, id: SpotId, agent: AgentId) -> Result<(), WorldError> {
        let spot = self
            .spots
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("spot {}", id.0)))?;
        if spot.status != SpotStatus::Targeted(agent) {
            return Err(WorldError::SpotUnavailable(id));
        }
        spot.status = if spot.stack.is_empty() { SpotStatus::Depleted } else { SpotStatus::Free };
        Ok(())
    }

    /// Take the top brick of a spot targeted by `agent`. The target marker is cleared.
    pub fn pick_brick(&mut self, id: SpotId, agent: AgentId) -> Result<BrickId, WorldError> {
        let spot = self
            .spots
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("spot {}", id.0)))?;
        if spot.status != SpotStatus::Targeted(agent) {
            return Err(WorldError::SpotUnavailable(id));
        }
        let brick = spot.stack.pop().ok_or(WorldError::SpotUnavailable(id))?;
        spot.status = if spot.stack.is_empty() { SpotStatus::Depleted } else { SpotStatus::Free };
        self.transition(brick, BrickState::Held(agent))?;
        Ok(brick)
    }

    pub fn reserve_slot(&mut self, id: SlotId, agent: AgentId) -> Result<(), WorldError> {
        let slot = self
            .slots
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("slot {}", id.0)))?;
        if slot.status != SlotStatus::Empty {
            return Err(WorldError::SlotUnavailable(id));
        }
        slot.status = SlotStatus::Reserved(agent);
        Ok(())
    }

    pub fn unreserve_slot(&mut self, id: SlotId, agent: AgentId) -> Result<(), WorldError> {
        let slot = self
            .slots
            .get_mut(id.0)
            .ok_or_else(|| WorldError::UnknownEntity(format!("slot {}", id.0)))?;
        if slot.status != SlotStatus::Reserved(agent) {
            return Err(WorldError::SlotUnavailable(id));
        }
        slot.status = SlotStatus::Empty;
        Ok(())
    }

    /// Set a held brick down in a slot reserved by its holder.
    pub fn place_brick(&mut self, brick: BrickId, slot: SlotId, pose: Pose) -> Result<(), WorldError> {
        let holder = match self.brick(brick)?.state {
            BrickState::Held(a) => a,
            other => {
                return Err(WorldError::IllegalTransition {
                    brick,
                    from: other,
                    to: BrickState::Placed(slot),
                })
            }
        };
        if self.slot(slot)?.status != SlotStatus::Reserved(holder) {
            return Err(WorldError::SlotUnavailable(slot));
        }
        self.transition(brick, BrickState::Placed(slot))?;
        self.bricks[brick.0 as usize].pose = pose;
        self.slots[slot.0].status = SlotStatus::Filled(brick);
        Ok(())
    }

    pub fn drop_brick(&mut self, brick: BrickId, pose: Pose) -> Result<(), WorldError> {
        self.transition(brick, BrickState::Dropped)?;
        self.bricks[brick.0 as usize].pose = pose;
        Ok(())
    }

    /// Return a dropped brick to the top of its home stack.
    pub fn recover_brick(&mut self, brick: BrickId) -> Result<(), WorldError> {
        let home = self.brick(brick)?.home;
        self.transition(brick, BrickState::InPile(home))?;
        let spot = &mut self.spots[home.0];
        spot.stack.push(brick);
        let level = spot.stack.len() - 1;
        if spot.status == SpotStatus::Depleted {
            spot.status = SpotStatus::Free;
        }
        let base = spot.pose;
        self.bricks[brick.0 as usize].pose = Pose::new(
            base.x(),
            base.y(),
            level as f64 * BRICK_HEIGHT_M + BRICK_HEIGHT_M / 2.0,
            base.yaw,
        );
        Ok(())
    }

    /// Move a held brick along with its carrier.
    pub fn set_held_pose(&mut self, brick: BrickId, pose: Pose) -> Result<(), WorldError> {
        match self.brick(brick)?.state {
            BrickState::Held(_) => {
                self.bricks[brick.0 as usize].pose = pose;
                Ok(())
            }
            other => Err(WorldError::IllegalTransition {
                brick,
                from: other,
                to: other,
            }),
        }
    }

    fn transition(&mut self, brick: BrickId, to: BrickState) -> Result<(), WorldError> {
        let b = self
            .bricks
            .get_mut(brick.0 as usize)
            .ok_or_else(|| WorldError::UnknownEntity(format!("brick {}", brick.0)))?;
        if !b.state.can_become(&to) {
            return Err(WorldError::IllegalTransition {
                brick,
                from: b.state,
                to,
            });
        }
        b.state = to;
        Ok(())
    }

    pub fn held_by(&self, agent: AgentId) -> Option<BrickId> {
        self.bricks
            .iter()
            .find(|b| b.state == BrickState::Held(agent))
            .map(|b| b.id)
    }

    pub fn reserved_by(&self, agent: AgentId) -> Option<SlotId> {
        self.slots
            .iter()
            .position(|s| s.status == SlotStatus::Reserved(agent))
            .map(SlotId)
    }

    pub fn targeted_by(&self, agent: AgentId) -> Option<SpotId> {
        self.spots
            .iter()
            .position(|s| s.status == SpotStatus::Targeted(agent))
            .map(SpotId)
    }

    /// How many more bricks of each kind the site can absorb right now,
    /// net of bricks already targeted or carried without a slot.
    pub fn kind_demand(&self, site: Site) -> [i64; 4] {
        let owner = pile_for(site);
        let mut demand = [0i64; 4];
        for ch in self.channels.iter().filter(|c| c.site == site) {
            if let Some((_, kind)) = self.next_required_brick(ch.id) {
                demand[kind.row()] += 1;
            }
        }
        for spot in self.spots.iter().filter(|s| s.owner == owner) {
            if let SpotStatus::Targeted(_) = spot.status {
                demand[spot.kind.row()] -= 1;
            }
        }
        for b in &self.bricks {
            if let BrickState::Held(agent) = b.state {
                if self.spots[b.home.0].owner == owner && self.reserved_by(agent).is_none() {
                    demand[b.kind.row()] -= 1;
                }
            }
        }
        demand
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for b in &self.bricks {
            c.counts[b.kind.row()][b.state.census_index()] += 1;
        }
        c
    }

    pub fn initial_total(&self, kind: BrickKind) -> usize {
        self.initial_totals[kind.row()]
    }

    pub fn discover(&mut self, landmark: Landmark) -> bool {
        match self.landmarks.iter_mut().find(|l| l.landmark == landmark) {
            Some(l) if !l.discovered => {
                l.discovered = true;
                true
            }
            _ => false,
        }
    }

    pub fn all_discovered(&self) -> bool {
        self.landmarks.iter().all(|l| l.discovered)
    }

    /// Cross-reference and conservation checks. Returns the first problem found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let census = self.census();
        for kind in BrickKind::ALL {
            if census.total(kind) != self.initial_totals[kind.row()] {
                return Err(format!("{kind} count changed"));
            }
        }
        for (i, spot) in self.spots.iter().enumerate() {
            for &b in &spot.stack {
                if self.bricks[b.0 as usize].state != BrickState::InPile(SpotId(i)) {
                    return Err(format!("brick {} in stack {i} is not piled there", b.0));
                }
            }
            if spot.status == SpotStatus::Depleted && !spot.stack.is_empty() {
                return Err(format!("spot {i} depleted but holds bricks"));
            }
        }
        for b in &self.bricks {
            match b.state {
                BrickState::InPile(s) => {
                    if !self.spots[s.0].stack.contains(&b.id) {
                        return Err(format!("brick {} missing from stack {}", b.id.0, s.0));
                    }
                }
                BrickState::Placed(s) => {
                    if self.slots[s.0].status != SlotStatus::Filled(b.id) {
                        return Err(format!("slot {} does not record brick {}", s.0, b.id.0));
                    }
                }
                _ => {}
            }
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if let SlotStatus::Filled(b) = slot.status {
                if self.bricks[b.0 as usize].state != BrickState::Placed(SlotId(i)) {
                    return Err(format!("slot {i} filled by brick {} not placed there", b.0));
                }
            }
        }
        let mut agents: Vec<AgentId> = self
            .bricks
            .iter()
            .filter_map(|b| match b.state {
                BrickState::Held(a) => Some(a),
                _ => None,
            })
            .collect();
        agents.sort();
        if agents.windows(2).any(|w| w[0] == w[1]) {
            return Err("an agent holds two bricks".into());
        }
        let mut targeting: Vec<AgentId> = self
            .spots
            .iter()
            .filter_map(|s| match s.status {
                SpotStatus::Targeted(a) => Some(a),
                _ => None,
            })
            .collect();
        targeting.sort();
        if targeting.windows(2).any(|w| w[0] == w[1]) {
            return Err("an agent targets two spots".into());
        }
        let mut reserving: Vec<AgentId> = self
            .slots
            .iter()
            .filter_map(|s| match s.status {
                SlotStatus::Reserved(a) => Some(a),
                _ => None,
            })
            .collect();
        reserving.sort();
        if reserving.windows(2).any(|w| w[0] == w[1]) {
            return Err("an agent reserves two slots".into());
        }
        for slot in &self.slots {
            if let SlotStatus::Reserved(a) = slot.status {
                if self.channels[slot.channel.0].blocked_by != Some(a) {
                    return Err(format!("agent {a} reserves a slot in a channel it does not block"));
                }
            }
        }
        Ok(())
    }
}

pub fn pile_for(site: Site) -> PileOwner {
    match site {
        Site::UavSite => PileOwner::UavPile,
        Site::UgvSite => PileOwner::UgvPile,
    }
}
