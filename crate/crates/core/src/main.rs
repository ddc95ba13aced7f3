use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use brickyard::scenario::Scenario;
use brickyard::sim::{self, FaultRates, SimConfig};

#[derive(Parser)]
#[command(name = "brickyard", version, about = "Multi-robot wall building simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write logs and metrics.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long = "max-time", default_value_t = 3600.0)]
        max_time: f64,
        /// Output directory for trajectory.csv, servo_errors.csv, tasks.csv and metrics.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fault rates, e.g. `pick=0.3,place=0.1,conn=0.5` (conn is losses per agent-minute).
        #[arg(long, default_value = "")]
        faults: String,
        /// Detector pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Check a scenario file and print any warnings.
    Validate { scenario: PathBuf },
    /// Print the slot expansion of every channel as CSV.
    Slots { scenario: PathBuf },
    /// Print a built-in scenario as JSON.
    Scenario {
        #[arg(value_enum, default_value_t = Builtin::Default)]
        which: Builtin,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Default,
    SingleRed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            dt,
            max_time,
            out,
            faults,
            noise,
        } => {
            let scenario = Scenario::from_path(&scenario)?;
            let faults: FaultRates = faults.parse()?;
            let config = SimConfig {
                seed,
                dt,
                max_sim_time: max_time,
                faults,
                noise_px: noise,
                ..SimConfig::default()
            };
            let output = sim::run(&scenario, config)?;
            output.write_to(&out)?;
            let m = &output.metrics;
            println!(
                "{}: completed={} points={} makespan={:.2}s slots={}/{} collisions={} invariant_violations={}",
                m.scenario, m.completed, m.total_points, m.makespan_s, m.slots_filled, m.slots_total, m.collision_violations, m.invariant_violations
            );
            println!("logs written to {}", out.display());
        }
        Command::Validate { scenario } => {
            let s = Scenario::from_path(&scenario)?;
            let warnings = s.validate()?;
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("{}: ok ({} warnings)", scenario.display(), warnings.len());
        }
        Command::Slots { scenario } => {
            let world = Scenario::from_path(&scenario)?.build()?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["slot", "channel", "layer", "index", "kind", "offset_m", "x", "y", "z", "yaw"])?;
            for (i, s) in world.dashboard.slots.iter().enumerate() {
                let p = &s.target_pose;
                w.write_record([
                    i.to_string(),
                    s.channel.0.to_string(),
                    s.layer.to_string(),
                    s.index.to_string(),
                    s.required_kind.to_string(),
                    format!("{:.3}", s.offset_m),
                    format!("{:.3}", p.x()),
                    format!("{:.3}", p.y()),
                    format!("{:.3}", p.z()),
                    format!("{:.4}", p.yaw),
                ])?;
            }
            w.flush()?;
        }
        Command::Scenario { which } => {
            let s = match which {
                Builtin::Default => Scenario::default_mission(),
                Builtin::SingleRed => Scenario::single_red(),
            };
            println!("{}", s.to_json());
        }
    }
    Ok(())
}
