//! Allocated units of work and their engaged/completed/failed bookkeeping.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::agents::ExplorationPlan;
use crate::world::{AgentId, BrickKind, ChannelId, SlotId, SpotId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskVariant {
    Explore(ExplorationPlan),
    Pick { spot: SpotId, kind: BrickKind },
    Place { slot: SlotId, channel: ChannelId },
}

impl TaskVariant {
    pub fn label(&self) -> &'static str {
        match self {
            TaskVariant::Explore(_) => "Explore",
            TaskVariant::Pick { .. } => "Pick",
            TaskVariant::Place { .. } => "Place",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskStatus {
    Engaged,
    Completed,
    Failed,
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskStatus::Engaged => "Engaged",
            TaskStatus::Completed => "Completed",
            TaskStatus::Failed => "Failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub variant: TaskVariant,
    pub assigned_to: AgentId,
    pub status: TaskStatus,
    pub started_tick: u64,
    pub finished_tick: Option<u64>,
    /// Pick from a scored pile cell: the score kernel was applied and must be undone.
    pub scored: bool,
}

/// One status change, as written to the task log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub tick: u64,
    pub task: TaskId,
    pub variant: &'static str,
    pub agent: AgentId,
    pub from: Option<TaskStatus>,
    pub to: TaskStatus,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TaskHandler {
    pub tasks: Vec<Task>,
    pub events: Vec<TaskEvent>,
}

impl TaskHandler {
    pub fn create(&mut self, variant: TaskVariant, agent: AgentId, tick: u64, scored: bool) -> TaskId {
        let id = TaskId(self.tasks.len() as u64);
        self.events.push(TaskEvent {
            tick,
            task: id,
            variant: variant.label(),
            agent,
            from: None,
            to: TaskStatus::Engaged,
        });
        self.tasks.push(Task {
            id,
            variant,
            assigned_to: agent,
            status: TaskStatus::Engaged,
            started_tick: tick,
            finished_tick: None,
            scored,
        });
        id
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.tasks.get(id.0 as usize)
    }

    /// Move an engaged task to a final status. Returns false if it was not engaged.
    pub fn finish(&mut self, id: TaskId, status: TaskStatus, tick: u64) -> bool {
        let Some(task) = self.tasks.get_mut(id.0 as usize) else {
            return false;
        };
        if task.status != TaskStatus::Engaged || status == TaskStatus::Engaged {
            return false;
        }
        task.status = status;
        task.finished_tick = Some(tick);
        self.events.push(TaskEvent {
            tick,
            task: id,
            variant: task.variant.label(),
            agent: task.assigned_to,
            from: Some(TaskStatus::Engaged),
            to: status,
        });
        true
    }

    pub fn engaged(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.status == TaskStatus::Engaged)
    }

    pub fn engaged_for(&self, agent: AgentId) -> Vec<TaskId> {
        self.engaged().filter(|t| t.assigned_to == agent).map(|t| t.id).collect()
    }

    pub fn count(&self, status: TaskStatus) -> usize {
        self.tasks.iter().filter(|t| t.status == status).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_logged() {
        let mut h = TaskHandler::default();
        let a = AgentId(1);
        let id = h.create(
            TaskVariant::Pick {
                spot: SpotId(0),
                kind: BrickKind::Red,
            },
            a,
            3,
            true,
        );
        assert_eq!(h.engaged_for(a), vec![id]);
        assert!(h.finish(id, TaskStatus::Completed, 9));
        assert!(!h.finish(id, TaskStatus::Failed, 10));
        assert!(h.engaged_for(a).is_empty());
        assert_eq!(h.events.len(), 2);
        assert_eq!(h.events[1].from, Some(TaskStatus::Engaged));
        assert_eq!(h.get(id).unwrap().finished_tick, Some(9));
    }
}
