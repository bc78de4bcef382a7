//! Episode control loop: couples an agent to a simulator directly or through
//! the bus, handles STOP and termination, and records trajectories.

mod env;
pub mod log;
pub mod messages;
mod session;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_map::{self, ActionMapError, ControlParams};
use crate::agents::inflate_map;
use crate::agents::{depth_to_scan, plan_global, ControllerParams, PlannerAgent, PointGoalAgent};
use crate::bus::BusError;
use crate::foreign_sim::DiffDriveConfig;
use crate::geometry::{DiscreteAction, Episode, EpisodeResult, Point2};
use crate::grid::OccupancyGrid;
use crate::sim::{SimConfig, SimError};

pub use env::EpisodeEnv;
pub use log::{TrajectoryLog, TrajectoryRecord};
pub use session::BusSession;

pub const TOPIC_POINTGOAL: &str = "/observations/pointgoal";
pub const TOPIC_DEPTH: &str = "/observations/depth";
pub const TOPIC_SCAN: &str = "/scan";
pub const TOPIC_ACTION: &str = "/action";
pub const TOPIC_CMD_VEL: &str = "/cmd_vel";
pub const TOPIC_MAP: &str = "/map";
pub const TOPIC_ODOM: &str = "/odom";
pub const TOPIC_GOAL: &str = "/goal";
pub const SERVICE_RESET: &str = "/episode/reset";
pub const SERVICE_RESULT: &str = "/episode/result";

/// Operating mode: which agent drives which simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Discrete-action agent on the native simulator.
    #[serde(rename = "A_DISCRETE_AGENT_NATIVE_SIM", alias = "A")]
    DiscreteNative,
    /// Map-based planner emitting velocities on the native simulator.
    #[serde(rename = "B_CLASSICAL_PLANNER_NATIVE_SIM", alias = "B")]
    PlannerNative,
    /// Discrete-action agent on the differential-drive backend.
    #[serde(rename = "C_DISCRETE_AGENT_FOREIGN_SIM", alias = "C")]
    DiscreteForeign,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::DiscreteNative => "A_DISCRETE_AGENT_NATIVE_SIM",
            Mode::PlannerNative => "B_CLASSICAL_PLANNER_NATIVE_SIM",
            Mode::DiscreteForeign => "C_DISCRETE_AGENT_FOREIGN_SIM",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            Mode::DiscreteNative => "A",
            Mode::PlannerNative => "B",
            Mode::DiscreteForeign => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub physics_enabled: bool,
    pub use_bus: bool,
    /// Agent decisions allowed before TIMEOUT, STOP included.
    pub max_agent_steps: u32,
    pub success_radius: f64,
    /// Decisions in the stuck-detection window.
    pub stuck_window: u32,
    /// Net displacement below which a window counts as stuck, in metres.
    pub stuck_epsilon: f64,
    /// Continuous steps each planner command is held for (mode B).
    pub planner_period_steps: u32,
    /// Seconds to wait for any single bus message before aborting.
    pub bus_timeout: f64,
    pub depth_width: u32,
    /// Depth field of view in radians.
    pub depth_fov: f64,
    pub depth_max_range: f64,
    /// Differential-drive backend parameters (mode C).
    pub foreign: DiffDriveConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::DiscreteNative,
            physics_enabled: false,
            use_bus: false,
            max_agent_steps: 500,
            success_radius: 0.2,
            stuck_window: 20,
            stuck_epsilon: 0.02,
            planner_period_steps: 6,
            bus_timeout: 10.0,
            depth_width: 64,
            depth_fov: std::f64::consts::FRAC_PI_2,
            depth_max_range: 3.0,
            foreign: DiffDriveConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if matches!(self.mode, Mode::PlannerNative | Mode::DiscreteForeign) && !self.physics_enabled {
            return bad(format!("mode {} consumes velocity commands and requires physics_enabled", self.mode.short()));
        }
        if !self.use_bus && self.mode != Mode::DiscreteNative {
            return bad(format!("mode {} requires use_bus", self.mode.short()));
        }
        if self.max_agent_steps == 0 {
            return bad("max_agent_steps must be at least 1".into());
        }
        if !(self.success_radius.is_finite() && self.success_radius > 0.0) {
            return bad(format!("success_radius must be positive, got {}", self.success_radius));
        }
        if self.stuck_window == 0 {
            return bad("stuck_window must be at least 1".into());
        }
        if !(self.stuck_epsilon.is_finite() && self.stuck_epsilon >= 0.0) {
            return bad(format!("stuck_epsilon must be non-negative, got {}", self.stuck_epsilon));
        }
        if self.planner_period_steps == 0 {
            return bad("planner_period_steps must be at least 1".into());
        }
        if !(self.bus_timeout.is_finite() && self.bus_timeout > 0.0) {
            return bad(format!("bus_timeout must be positive, got {}", self.bus_timeout));
        }
        if self.depth_width < 2 {
            return bad(format!("depth_width must be at least 2, got {}", self.depth_width));
        }
        if !(self.depth_fov.is_finite() && self.depth_fov > 0.0)
            || !(self.depth_max_range.is_finite() && self.depth_max_range > 0.0)
        {
            return bad("depth_fov and depth_max_range must be positive".into());
        }
        self.foreign.validate()?;
        Ok(())
    }

    /// Simulator config with the run's physics flag applied.
    pub fn effective_sim(&self, sim: &SimConfig) -> SimConfig {
        SimConfig { physics_enabled: self.physics_enabled, ..*sim }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    ActionMap(#[from] ActionMapError),
    #[error("geodesic: {0}")]
    Geodesic(String),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("episode {episode} aborted: {reason}")]
    Aborted { episode: String, reason: String },
    #[error("trajectory log: {0}")]
    Log(String),
}

/// Success weighted by path length.
pub fn compute_spl(success: bool, path_length: f64, geodesic_length: f64) -> Result<f64, RunError> {
    if !(geodesic_length.is_finite() && geodesic_length > 0.0) {
        return Err(RunError::Geodesic(format!("geodesic length must be positive, got {geodesic_length}")));
    }
    if !(path_length.is_finite() && path_length >= 0.0) {
        return Err(RunError::Geodesic(format!("path length must be non-negative, got {path_length}")));
    }
    Ok(if success { geodesic_length / path_length.max(geodesic_length) } else { 0.0 })
}

/// Shortest obstacle-respecting distance for a disc of `body_radius`: the
/// 8-connected path on the inflated grid between the containing cells, with
/// its first and last cell centres replaced by the true endpoints.
pub fn geodesic_length(grid: &OccupancyGrid, start: Point2, goal: Point2, body_radius: f64) -> Result<f64, RunError> {
    let inflated = inflate_map(grid, body_radius);
    let path = plan_global(&inflated, start, goal).map_err(|e| RunError::Geodesic(e.to_string()))?;
    let w = &path.waypoints;
    if w.len() <= 2 {
        return Ok(start.distance(goal));
    }
    let inner = &w[1..w.len() - 1];
    let middle: f64 = inner.windows(2).map(|p| p[0].distance(p[1])).sum();
    Ok(start.distance(inner[0]) + middle + inner[inner.len() - 1].distance(goal))
}

/// Control parameters implied by a simulator config.
pub fn control_params(sim: &SimConfig) -> Result<ControlParams, RunError> {
    Ok(ControlParams::new(sim.control_period, sim.steps_per_sec())?)
}

/// Commands a discrete action expands to under `sim`.
pub fn action_commands(
    action: DiscreteAction,
    sim: &SimConfig,
) -> Result<Vec<crate::geometry::VelocityCommand>, RunError> {
    Ok(action_map::action_to_velocities(action, &control_params(sim)?)?)
}

pub(crate) fn make_pointgoal_agent(run: &RunConfig, sim: &SimConfig) -> PointGoalAgent {
    PointGoalAgent::new(run.success_radius, sim.turn_step_angle)
}

pub(crate) fn make_planner_agent(sim: &SimConfig, grid_resolution: f64) -> PlannerAgent {
    let params = ControllerParams { body_radius: sim.body.radius, ..ControllerParams::default() };
    PlannerAgent::new(params, PlannerAgent::default_inflation(sim.body.radius, grid_resolution), 0.1)
}

/// Runs one episode per the run config and returns its result and
/// trajectory log.
pub fn run_episode(
    episode: &Episode,
    scene: &OccupancyGrid,
    run: &RunConfig,
    sim: &SimConfig,
) -> Result<(EpisodeResult, TrajectoryLog), RunError> {
    run.validate()?;
    if run.use_bus {
        let mut session = BusSession::start(run, sim)?;
        let out = session.run_episode(episode, scene);
        session.shutdown();
        out
    } else {
        run_direct(episode, Arc::new(scene.clone()), run, sim)
    }
}

/// Single-threaded loop with direct calls between agent and simulator.
pub fn run_direct(
    episode: &Episode,
    scene: Arc<OccupancyGrid>,
    run: &RunConfig,
    sim: &SimConfig,
) -> Result<(EpisodeResult, TrajectoryLog), RunError> {
    let started = Instant::now();
    let mut env = EpisodeEnv::new(episode, scene.clone(), run, sim)?;
    let sim = env.sim_config();
    match run.mode {
        Mode::DiscreteNative | Mode::DiscreteForeign => {
            let mut agent = make_pointgoal_agent(run, &sim);
            while !env.is_done() {
                let action = agent.act(&env.pointgoal_observation(), env.collision());
                if run.mode == Mode::DiscreteForeign {
                    if action == DiscreteAction::Stop {
                        env.stop();
                    } else {
                        env.apply_commands(&action_commands(action, &sim)?)?;
                    }
                } else {
                    env.apply_action(action)?;
                }
            }
        }
        Mode::PlannerNative => {
            let mut agent = make_planner_agent(&sim, scene.resolution());
            agent.begin(&scene, episode.goal);
            while !env.is_done() {
                let scan = depth_to_scan(&env.depth()?);
                match agent.decide(&env.pose(), &scan) {
                    Some(cmd) => env.apply_held_command(&cmd)?,
                    None => env.stop(),
                }
            }
        }
    }
    let wall = started.elapsed().as_secs_f64();
    env.finish(wall)
}

/// Re-runs the episode described by a log and renders the new log.
pub fn replay(log: &TrajectoryLog) -> Result<TrajectoryLog, RunError> {
    let scene = log.scene()?;
    let (_, out) = run_episode(&log.episode, &scene, &log.run, &log.sim)?;
    Ok(out)
}

#[cfg(test)]
mod tests;
