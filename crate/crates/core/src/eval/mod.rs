//! Experiment harness: runs an episode suite under the four physics/bus
//! configurations, aggregates SPL and runtime, and classifies failures.

pub mod generate;
pub mod report;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Episode, Termination};
use crate::grid::OccupancyGrid;
use crate::runner::{run_direct, BusSession, RunConfig, RunError, TrajectoryLog};
use crate::sim::SimConfig;

pub use generate::{generate_episode_suite, Suite};
pub use report::{aggregate, classify_failures, AggregateReport, FailureTaxonomy, ResultRow, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("episode generation: {0}")]
    Generation(String),
    #[error("suite: {0}")]
    Suite(String),
    #[error("config: {0}")]
    Config(String),
    #[error("run: {0}")]
    Run(#[from] RunError),
    #[error("results: {0}")]
    Results(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One of the four physics × bus configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Configuration {
    pub physics: bool,
    pub bus: bool,
}

impl Configuration {
    pub const BASELINE: Configuration = Configuration { physics: false, bus: false };
    pub const ALL: [Configuration; 4] = [
        Configuration { physics: false, bus: false },
        Configuration { physics: true, bus: false },
        Configuration { physics: false, bus: true },
        Configuration { physics: true, bus: true },
    ];

    /// Label such as `-P-B` or `+P+B`.
    pub fn label(&self) -> String {
        format!("{}P{}B", if self.physics { '+' } else { '-' }, if self.bus { '+' } else { '-' })
    }

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        let b = s.as_bytes();
        let sign = |c: u8| match c {
            b'+' => Some(true),
            b'-' => Some(false),
            _ => None,
        };
        if b.len() == 4 && b[1] == b'P' && b[3] == b'B' {
            if let (Some(physics), Some(bus)) = (sign(b[0]), sign(b[2])) {
                return Ok(Self { physics, bus });
            }
        }
        Err(EvalError::Config(format!("unknown configuration {s:?}; expected one of -P-B, +P-B, -P+B, +P+B")))
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        RunConfig { physics_enabled: self.physics, use_bus: self.bus, ..*base }
    }
}

impl TryFrom<String> for Configuration {
    type Error = EvalError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Configuration::parse(&s)
    }
}

impl From<Configuration> for String {
    fn from(c: Configuration) -> String {
        c.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub configurations: Vec<Configuration>,
    /// Directory of a saved suite; when empty the suite is generated.
    pub episode_set: String,
    /// Scene directory for `episode_set`; defaults to its `scenes/`.
    pub scenes: String,
    pub seed: u64,
    pub repetitions: u32,
    pub n_scenes: usize,
    pub n_episodes: usize,
    pub scene_size: usize,
    pub obstacle_density: f64,
    /// Add the shipped adversarial fixture scene to generated suites.
    pub include_fixtures: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            configurations: Configuration::ALL.to_vec(),
            episode_set: String::new(),
            scenes: String::new(),
            seed: 42,
            repetitions: 1,
            n_scenes: 9,
            n_episodes: 10,
            scene_size: 30,
            obstacle_density: DEFAULT_DENSITY,
            include_fixtures: true,
        }
    }
}

/// Obstacle density of the default suite's generated scenes.
pub const DEFAULT_DENSITY: f64 = 0.1;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.configurations.is_empty() {
            return Err(EvalError::Config("at least one configuration is required".into()));
        }
        if self.configurations.len() > 1 && !self.configurations.contains(&Configuration::BASELINE) {
            return Err(EvalError::Config("comparisons require the -P-B baseline".into()));
        }
        if self.repetitions == 0 {
            return Err(EvalError::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// The suite this config describes: loaded from disk or generated.
    pub fn suite(&self) -> Result<Suite, EvalError> {
        if !self.episode_set.is_empty() {
            let scenes = (!self.scenes.is_empty()).then(|| Path::new(&self.scenes));
            return load_suite(Path::new(&self.episode_set), scenes);
        }
        let mut suite =
            generate_episode_suite(self.seed, self.n_scenes, self.n_episodes, self.scene_size, self.obstacle_density)?;
        if self.include_fixtures {
            suite.extend(fixtures::doorway_suite())?;
        }
        Ok(suite)
    }
}

/// Shipped fixture scenes and episodes.
pub mod fixtures {
    use super::*;

    pub const DOORWAY_SCENE: &str = include_str!("../../fixtures/narrow_doorway.scene");
    pub const DOORWAY_EPISODES: &str = include_str!("../../fixtures/narrow_doorway.episodes.json");
    pub const CORRIDOR_SCENE: &str = include_str!("../../fixtures/straight_corridor.scene");
    pub const CORRIDOR_EPISODES: &str = include_str!("../../fixtures/straight_corridor.episodes.json");

    fn parse(scene_id: &str, scene: &str, episodes: &str) -> Suite {
        let grid = OccupancyGrid::parse_scene(scene).expect("fixture scene parses");
        let episodes: Vec<Episode> = serde_json::from_str(episodes).expect("fixture episodes parse");
        Suite { scenes: [(scene_id.to_string(), grid)].into(), episodes }
    }

    /// Room split by a wall whose only opening is a narrow doorway far from
    /// the straight line between start and goal.
    pub fn doorway_suite() -> Suite {
        parse("narrow_doorway", DOORWAY_SCENE, DOORWAY_EPISODES)
    }

    pub fn corridor_suite() -> Suite {
        parse("straight_corridor", CORRIDOR_SCENE, CORRIDOR_EPISODES)
    }
}

/// Writes `dir/episodes.json` and one `dir/scenes/<id>.scene` per scene.
pub fn save_suite(suite: &Suite, dir: &Path) -> Result<(), EvalError> {
    let scenes = dir.join("scenes");
    fs::create_dir_all(&scenes)?;
    for (id, g) in &suite.scenes {
        fs::write(scenes.join(format!("{id}.scene")), g.to_scene_string())?;
    }
    fs::write(dir.join("episodes.json"), serde_json::to_string_pretty(&suite.episodes)? + "\n")?;
    Ok(())
}

/// Loads a suite saved by [`save_suite`]. Only scenes referenced by an
/// episode are loaded.
pub fn load_suite(dir: &Path, scenes_dir: Option<&Path>) -> Result<Suite, EvalError> {
    let episodes: Vec<Episode> = serde_json::from_str(&fs::read_to_string(dir.join("episodes.json"))?)?;
    let scenes_dir = scenes_dir.map(Path::to_path_buf).unwrap_or_else(|| dir.join("scenes"));
    let mut suite = Suite { scenes: Default::default(), episodes };
    for ep in &suite.episodes {
        if suite.scenes.contains_key(&ep.scene_id) {
            continue;
        }
        let path = scenes_dir.join(format!("{}.scene", ep.scene_id));
        let text = fs::read_to_string(&path)
            .map_err(|e| EvalError::Suite(format!("scene {} ({}): {e}", ep.scene_id, path.display())))?;
        let grid =
            OccupancyGrid::parse_scene(&text).map_err(|e| EvalError::Suite(format!("scene {}: {e}", ep.scene_id)))?;
        suite.scenes.insert(ep.scene_id.clone(), grid);
    }
    Ok(suite)
}

/// Per-episode rows plus, when requested, the trajectory logs in row order
/// (absent for aborted episodes).
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub logs: Vec<Option<TrajectoryLog>>,
    pub report: AggregateReport,
}

/// Runs every configuration over the suite. Wall time per configuration
/// spans bus construction through teardown; the rows partition that span,
/// so the first row carries setup and the last row carries teardown.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    suite: &Suite,
    base: &RunConfig,
    sim: &SimConfig,
    keep_logs: bool,
) -> Result<ExperimentOutput, EvalError> {
    cfg.validate()?;
    for ep in &suite.episodes {
        suite.scene_of(ep)?;
    }
    let scenes: std::collections::BTreeMap<&str, std::sync::Arc<OccupancyGrid>> =
        suite.scenes.iter().map(|(k, v)| (k.as_str(), std::sync::Arc::new(v.clone()))).collect();
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for &config in &cfg.configurations {
        let run = config.apply(base);
        run.validate()?;
        for repetition in 0..cfg.repetitions {
            let started = Instant::now();
            let mut session = if run.use_bus { Some(BusSession::start(&run, sim)?) } else { None };
            let mut last_mark = 0.0;
            let first_row = rows.len();
            for ep in &suite.episodes {
                let scene = &scenes[ep.scene_id.as_str()];
                let out = match session.as_mut() {
                    Some(s) => s.run_episode(ep, scene),
                    None => run_direct(ep, scene.clone(), &run, sim),
                };
                let now = started.elapsed().as_secs_f64();
                let wall = now - last_mark;
                last_mark = now;
                let (row, log) = match out {
                    Ok((r, log)) => (ResultRow::from_result(&r, config, repetition, wall), Some(log)),
                    Err(RunError::Aborted { .. })
                    | Err(RunError::Bus(_))
                    | Err(RunError::Sim(_))
                    | Err(RunError::Geodesic(_)) => (ResultRow::aborted(ep, config, repetition, wall), None),
                    Err(e) => return Err(e.into()),
                };
                rows.push(row);
                logs.push(if keep_logs { log } else { None });
            }
            if let Some(s) = session.take() {
                s.shutdown();
            }
            let teardown = started.elapsed().as_secs_f64() - last_mark;
            if let Some(last) = rows[first_row..].last_mut() {
                last.wall_time += teardown;
            }
        }
    }
    let report = aggregate(&rows, &cfg.configurations)?;
    Ok(ExperimentOutput { rows, logs, report })
}

/// Termination counts that mark an episode as failed.
pub fn is_failure(t: Termination) -> bool {
    t != Termination::StoppedAtGoal
}
