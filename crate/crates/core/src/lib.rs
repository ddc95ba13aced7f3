//! Multi-robot brick-wall construction: arena model, scheduler, visual servo
//! control, perception stand-ins and a deterministic mission simulator.

pub mod agents;
pub mod control;
pub mod geometry;
pub mod perception;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod world;

pub use scenario::{Scenario, ScenarioError};
pub use sim::{run, Metrics, RunOutput, SimConfig, SimError};
