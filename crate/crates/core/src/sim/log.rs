//! CSV run logs. Floats are written with fixed precision so identical runs
//! produce identical bytes.
//!
//! Column orders:
//! - `trajectory.csv`: tick, time_s, agent, x, y, z, yaw, mode
//! - `servo_errors.csv`: tick, agent, loop, error, command
//! - `tasks.csv`: tick, time_s, task_id, variant, agent, from_status, to_status

use std::fs;
use std::path::Path;

use crate::agents::AgentState;
use crate::scheduler::TaskEvent;

use super::metrics::Metrics;

pub const TRAJECTORY_HEADER: [&str; 8] = ["tick", "time_s", "agent", "x", "y", "z", "yaw", "mode"];
pub const SERVO_HEADER: [&str; 5] = ["tick", "agent", "loop", "error", "command"];
pub const TASKS_HEADER: [&str; 7] = ["tick", "time_s", "task_id", "variant", "agent", "from_status", "to_status"];

pub struct Logs {
    trajectory: csv::Writer<Vec<u8>>,
    servo: csv::Writer<Vec<u8>>,
    tasks: csv::Writer<Vec<u8>>,
}

impl std::fmt::Debug for Logs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Logs").finish_non_exhaustive()
    }
}

fn writer(header: &[&str]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    w
}

impl Default for Logs {
    fn default() -> Self {
        Self::new()
    }
}

impl Logs {
    pub fn new() -> Self {
        Self {
            trajectory: writer(&TRAJECTORY_HEADER),
            servo: writer(&SERVO_HEADER),
            tasks: writer(&TASKS_HEADER),
        }
    }

    pub fn trajectory(&mut self, tick: u64, time_s: f64, agent: &AgentState) {
        let p = &agent.pose.position;
        self.trajectory
            .write_record([
                tick.to_string(),
                format!("{time_s:.3}"),
                agent.id.to_string(),
                format!("{:.4}", p.x),
                format!("{:.4}", p.y),
                format!("{:.4}", p.z),
                format!("{:.4}", agent.pose.yaw),
                agent.mode.label().to_string(),
            ])
            .expect("in-memory write");
    }

    pub fn servo(&mut self, tick: u64, agent: &AgentState, loop_name: &str, error: f64, command: f64) {
        self.servo
            .write_record([
                tick.to_string(),
                agent.id.to_string(),
                loop_name.to_string(),
                format!("{error:.6}"),
                format!("{command:.6}"),
            ])
            .expect("in-memory write");
    }

    pub fn task(&mut self, event: &TaskEvent, dt: f64) {
        self.tasks
            .write_record([
                event.tick.to_string(),
                format!("{:.3}", event.tick as f64 * dt),
                event.task.to_string(),
                event.variant.to_string(),
                event.agent.to_string(),
                event.from.map(|s| s.to_string()).unwrap_or_default(),
                event.to.to_string(),
            ])
            .expect("in-memory write");
    }

    /// Contents of (trajectory, servo_errors, tasks).
    pub fn into_strings(self) -> (String, String, String) {
        let finish = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
        (finish(self.trajectory), finish(self.servo), finish(self.tasks))
    }
}

/// Write the three logs and `metrics.json` into `dir`, creating it if needed.
pub fn write_dir(dir: &Path, logs: &(String, String, String), metrics: &Metrics) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), &logs.0)?;
    fs::write(dir.join("servo_errors.csv"), &logs.1)?;
    fs::write(dir.join("tasks.csv"), &logs.2)?;
    let json = serde_json::to_string_pretty(metrics).map_err(std::io::Error::other)?;
    fs::write(dir.join("metrics.json"), json + "\n")
}
