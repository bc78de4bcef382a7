//! `navbridge` command-line driver.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use navbridge::bus::{measure_hop_overhead, Bus};
use navbridge::eval::{self, generate_episode_suite, load_suite, report, run_experiment, save_suite, Suite};
use navbridge::runner::{self, Mode, TrajectoryLog};

use config::Config;

#[derive(Parser)]
#[command(name = "navbridge", version, about = "Bridge discrete-action navigation agents to planar simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON file with `run`, `sim` and `experiment` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set run.max_agent_steps=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded scene and episode suite.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `episodes.json` and `scenes/`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its trajectory log.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Episode id from the suite.
        #[arg(long)]
        episode: String,
        /// Suite directory; defaults to the configured or generated suite.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// A: discrete agent, B: map planner, C: discrete agent on the differential-drive backend.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Execute actions as velocity commands at fixed dt.
        #[arg(long)]
        physics: bool,
        /// Route every message through the bus.
        #[arg(long)]
        bus: bool,
        /// Trajectory log path; defaults to `<episode>.traj`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the suite under every configured physics/bus configuration.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory for `results.csv` and `report.json`.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also write every trajectory log under `<out>/logs`.
        #[arg(long)]
        logs: bool,
    },
    /// Measure one-way publish/receive latency on the bus.
    BenchBus {
        /// Payload sizes in bytes.
        #[arg(long = "payload", default_values_t = [64usize, 1024, 65536])]
        payloads: Vec<usize>,
        /// Messages per payload size, at least 100.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    /// Re-run the episode recorded in a trajectory log.
    Replay {
        /// Log written by `run` or `experiment --logs`.
        log: PathBuf,
        /// Write the reproduced log here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with a runtime error unless the reproduction is identical.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::A => Mode::DiscreteNative,
            ModeArg::B => Mode::PlannerNative,
            ModeArg::C => Mode::DiscreteForeign,
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(args: &ConfigArgs) -> Result<Config, Failure> {
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?),
        None => None,
    };
    config::load(text.as_deref(), &args.overrides).map_err(Failure::Usage)
}

fn suite_for(cfg: &Config, dir: Option<&Path>) -> Result<Suite, Failure> {
    match dir {
        Some(d) => load_suite(d, None).map_err(runtime),
        None => cfg.experiment.suite().map_err(runtime),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { cfg, seed, out } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            let e = &cfg.experiment;
            let mut suite = generate_episode_suite(e.seed, e.n_scenes, e.n_episodes, e.scene_size, e.obstacle_density)
                .map_err(runtime)?;
            if e.include_fixtures {
                suite.extend(eval::fixtures::doorway_suite()).map_err(runtime)?;
            }
            save_suite(&suite, &out).map_err(runtime)?;
            println!("{} episodes in {} scenes written to {}", suite.episodes.len(), suite.scenes.len(), out.display());
        }
        Command::Run { cfg, episode, suite, mode, physics, bus, log } => {
            let cfg = load_config(&cfg)?;
            let mut run = cfg.run;
            if let Some(m) = mode {
                run.mode = m.into();
            }
            run.physics_enabled |= physics;
            run.use_bus |= bus;
            run.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let dir = suite.or_else(|| {
                (!cfg.experiment.episode_set.is_empty()).then(|| cfg.experiment.episode_set.clone().into())
            });
            let suite = suite_for(&cfg, dir.as_deref())?;
            let ep = suite
                .episodes
                .iter()
                .find(|e| e.episode_id == episode)
                .ok_or_else(|| Failure::Usage(format!("episode {episode} is not in the suite")))?;
            let scene = suite.scene_of(ep).map_err(runtime)?;
            let (result, traj) = runner::run_episode(ep, scene, &run, &cfg.sim).map_err(runtime)?;
            let path = log.unwrap_or_else(|| PathBuf::from(format!("{episode}.traj")));
            write(&path, &traj.render())?;
            println!("{}", serde_json::to_string_pretty(&result).map_err(runtime)?);
        }
        Command::Experiment { cfg, out, logs } => {
            let cfg = load_config(&cfg)?;
            cfg.experiment.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let suite = cfg.experiment.suite().map_err(runtime)?;
            let mut output = run_experiment(&cfg.experiment, &suite, &cfg.run, &cfg.sim, logs).map_err(runtime)?;
            output.report.effective_config = serde_json::to_value(&cfg).map_err(runtime)?;
            let mut csv = Vec::new();
            report::write_csv(&output.rows, &mut csv).map_err(runtime)?;
            write(&out.join("results.csv"), &String::from_utf8(csv).map_err(runtime)?)?;
            write(&out.join("report.json"), &output.report.to_json())?;
            for (row, log) in output.rows.iter().zip(&output.logs) {
                if let Some(log) = log {
                    let name = format!("{}_r{}_{}.traj", row.config.label(), row.repetition, row.episode_id);
                    write(&out.join("logs").join(name), &log.render())?;
                }
            }
            println!("{} rows written to {}", output.rows.len(), out.display());
        }
        Command::BenchBus { payloads, iterations } => {
            if iterations < 100 {
                return Err(Failure::Usage("--iterations must be at least 100".into()));
            }
            let bus = Bus::new();
            let mut rows = Vec::new();
            for p in payloads {
                let s = measure_hop_overhead(&bus, p, iterations).map_err(runtime)?;
                rows.push(serde_json::json!({
                    "payload_size": s.payload_size,
                    "iterations": s.iterations,
                    "mean_latency_s": s.mean,
                    "std_dev_s": s.std_dev,
                }));
            }
            bus.shutdown();
            println!("{}", serde_json::to_string_pretty(&rows).map_err(runtime)?);
        }
        Command::Replay { log, out, check } => {
            let text = fs::read_to_string(&log).map_err(|e| Failure::Runtime(format!("{}: {e}", log.display())))?;
            let parsed = TrajectoryLog::parse(&text).map_err(runtime)?;
            let rendered = runner::replay(&parsed).map_err(runtime)?.render();
            match out {
                Some(p) => write(&p, &rendered)?,
                None => print!("{rendered}"),
            }
            if check && rendered != text {
                return Err(Failure::Runtime(format!("replay of {} diverged from the recorded log", log.display())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
