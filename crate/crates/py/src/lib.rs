//! Python bindings: scenarios, mission runs, step-wise simulation, score
//! kernels, wall expansion and the servo convergence harness.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::brickyard as core;
use core::geometry::Vec3;
use core::scheduler::{self, CostParams, ScoreMatrix as CoreScore, COLS, ROWS};
use core::sim::{self as core_sim, FaultRates, RunOutput};
use core::world::{BrickKind, SlotStatus};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn kind(name: &str) -> PyResult<BrickKind> {
    name.parse().map_err(err)
}

/// A mission layout: arena, agents, brick piles, wall channels and pauses.
#[pyclass(module = "brickyard", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: core::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn default_mission() -> Self {
        Self {
            inner: core::Scenario::default_mission(),
        }
    }

    #[staticmethod]
    fn single_red() -> Self {
        Self {
            inner: core::Scenario::single_red(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::Scenario::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::Scenario::from_path(path).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Warnings for a valid scenario; raises ValueError otherwise.
    fn validate(&self) -> PyResult<Vec<String>> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    /// Expanded brick slots as dicts with channel, layer, index, kind, offset and pose.
    fn slots<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let world = self.inner.build().map_err(err)?;
        world
            .dashboard
            .slots
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("channel", s.channel.0)?;
                d.set_item("layer", s.layer)?;
                d.set_item("index", s.index)?;
                d.set_item("kind", s.required_kind.to_string())?;
                d.set_item("offset_m", s.offset_m)?;
                let p = &s.target_pose;
                d.set_item("pose", (p.x(), p.y(), p.z(), p.yaw))?;
                Ok(d)
            })
            .collect()
    }

    /// Points for every slot in the scenario, summed from its layers.
    fn total_points(&self) -> f64 {
        self.inner
            .channels
            .iter()
            .flat_map(|c| c.layers.iter().flatten())
            .map(|k| self.inner.points[k.row()])
            .sum()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, agents={}, channels={})",
            self.inner.name,
            self.inner.agents.len(),
            self.inner.channels.len()
        )
    }
}

fn config(seed: u64, dt: f64, max_time: f64, faults: &str, noise_px: f64) -> PyResult<core_sim::SimConfig> {
    let faults: FaultRates = faults.parse().map_err(err)?;
    Ok(core_sim::SimConfig {
        seed,
        dt,
        max_sim_time: max_time,
        faults,
        noise_px,
        ..core_sim::SimConfig::default()
    })
}

/// Metrics and CSV logs of a finished run.
#[pyclass(module = "brickyard", frozen)]
struct RunResult {
    inner: RunOutput,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics)
    }

    #[getter]
    fn trajectory_csv(&self) -> &str {
        &self.inner.trajectory
    }

    #[getter]
    fn servo_errors_csv(&self) -> &str {
        &self.inner.servo_errors
    }

    #[getter]
    fn tasks_csv(&self) -> &str {
        &self.inner.tasks
    }

    fn write(&self, out_dir: PathBuf) -> PyResult<()> {
        self.inner.write_to(&out_dir).map_err(err)
    }
}

/// Run a scenario to completion or the time limit.
#[pyfunction]
#[pyo3(signature = (scenario, seed=0, dt=0.05, max_time=3600.0, faults="", noise_px=0.0))]
fn run(py: Python<'_>, scenario: &Scenario, seed: u64, dt: f64, max_time: f64, faults: &str, noise_px: f64) -> PyResult<RunResult> {
    let cfg = config(seed, dt, max_time, faults, noise_px)?;
    let s = scenario.inner.clone();
    let out = py.detach(move || core_sim::run(&s, cfg)).map_err(err)?;
    Ok(RunResult { inner: out })
}

/// Step-by-step access to a running mission.
#[pyclass(module = "brickyard")]
struct Simulation {
    engine: core_sim::Engine,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (scenario, seed=0, dt=0.05, max_time=3600.0, faults="", noise_px=0.0))]
    fn new(scenario: &Scenario, seed: u64, dt: f64, max_time: f64, faults: &str, noise_px: f64) -> PyResult<Self> {
        let cfg = config(seed, dt, max_time, faults, noise_px)?;
        Ok(Self {
            engine: core_sim::Engine::new(&scenario.inner, cfg).map_err(err)?,
        })
    }

    /// Advance `n` ticks, stopping early when the mission is over.
    #[pyo3(signature = (n=1))]
    fn step(&mut self, n: u64) -> PyResult<()> {
        for _ in 0..n {
            if self.engine.is_done() {
                break;
            }
            self.engine.step().map_err(err)?;
        }
        Ok(())
    }

    #[getter]
    fn tick(&self) -> u64 {
        self.engine.tick
    }

    #[getter]
    fn time(&self) -> f64 {
        self.engine.time()
    }

    #[getter]
    fn done(&self) -> bool {
        self.engine.is_done()
    }

    /// (id, kind, mode, x, y, z, yaw, speed) per agent.
    fn agents(&self) -> Vec<(u32, String, String, f64, f64, f64, f64, f64)> {
        self.engine
            .agents
            .iter()
            .map(|a| {
                let p = &a.pose;
                (a.id.0, format!("{:?}", a.kind), a.mode.label().to_string(), p.x(), p.y(), p.z(), p.yaw, a.speed())
            })
            .collect()
    }

    fn filled_slots(&self) -> usize {
        self.engine.dashboard.slots.iter().filter(|s| matches!(s.status, SlotStatus::Filled(_))).count()
    }

    /// Dashboard and scheduler consistency; raises ValueError on the first problem.
    fn check_invariants(&self) -> PyResult<()> {
        self.engine.dashboard.check_invariants().map_err(PyValueError::new_err)?;
        self.engine.scheduler.check_invariants(&self.engine.dashboard).map_err(PyValueError::new_err)
    }

    fn score_matrix(&self) -> [[f64; COLS]; ROWS] {
        self.engine.scheduler.score.values
    }
}

/// Pickup-spot hindrance scores.
#[pyclass(module = "brickyard", frozen)]
struct ScoreMatrix {
    inner: CoreScore,
}

#[pymethods]
impl ScoreMatrix {
    #[new]
    #[pyo3(signature = (values=None))]
    fn new(values: Option<[[f64; COLS]; ROWS]>) -> Self {
        Self {
            inner: values.map_or_else(CoreScore::default, |values| CoreScore { values }),
        }
    }

    fn increase_cost(&self, row: usize, col: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.increase_cost(row, col).map_err(err)?,
        })
    }

    fn reset_cost(&self, row: usize, col: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.reset_cost(row, col).map_err(err)?,
        })
    }

    #[getter]
    fn values(&self) -> [[f64; COLS]; ROWS] {
        self.inner.values
    }
}

#[pyfunction]
#[pyo3(signature = (target, current, k_tr=0.2))]
fn travel_cost(target: (f64, f64, f64), current: (f64, f64, f64), k_tr: f64) -> f64 {
    let params = CostParams {
        k_tr,
        ..CostParams::default()
    };
    scheduler::travel_cost(&params, &Vec3::new(target.0, target.1, target.2), &Vec3::new(current.0, current.1, current.2))
}

/// Closed-loop pick servo from a horizontal offset; returns the run summary as a dict.
#[pyfunction]
#[pyo3(signature = (brick, offset, depth=2.0, brick_yaw=0.0, duration_s=15.0, noise_px=0.0, seed=0))]
fn servo_convergence<'py>(
    py: Python<'py>,
    brick: &str,
    offset: (f64, f64),
    depth: f64,
    brick_yaw: f64,
    duration_s: f64,
    noise_px: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = core_sim::SimConfig {
        noise_px,
        seed,
        ..core_sim::SimConfig::default()
    };
    let r = core_sim::servo_convergence(&cfg, kind(brick)?, brick_yaw, offset, depth, duration_s);
    to_py(py, &r)
}

#[pymodule]
#[pyo3(name = "brickyard")]
pub fn brickyard_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<ScoreMatrix>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(travel_cost, m)?)?;
    m.add_function(wrap_pyfunction!(servo_convergence, m)?)?;
    Ok(())
}
