//! Simulator side of an episode, shared by the direct and bus loops so both
//! produce identical trajectories.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::foreign_sim::{step_diffdrive, DiffDriveState};
use crate::geometry::{DiscreteAction, Episode, EpisodeResult, Point2, Pose2D, Termination, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::sim::{depth_at, load_scene, sense_pointgoal, DepthImage, PointGoalObservation, SimConfig, WorldState};

use super::log::{TrajectoryLog, TrajectoryRecord};
use super::{action_commands, compute_spl, geodesic_length, Mode, RunConfig, RunError};

enum Backend {
    Native(WorldState),
    Foreign { state: DiffDriveState, grid: Arc<OccupancyGrid> },
}

pub struct EpisodeEnv {
    run: RunConfig,
    sim: SimConfig,
    episode: Episode,
    backend: Backend,
    geodesic: f64,
    steps: u32,
    path_length: f64,
    /// Positions after the most recent decisions, oldest first.
    positions: VecDeque<Point2>,
    /// Whether each of the most recent decisions commanded translation.
    translating: VecDeque<bool>,
    collision: bool,
    records: Vec<TrajectoryRecord>,
    termination: Option<Termination>,
}

/// Log label for a command sequence: its length and first command.
pub(crate) fn command_label(cmds: &[VelocityCommand]) -> String {
    let c = cmds.first().copied().unwrap_or(VelocityCommand::ZERO);
    format!(
        "cmd:{}:{:.16e}:{:.16e}:{:.16e}:{:.16e}:{:.16e}:{:.16e}",
        cmds.len(),
        c.linear[0],
        c.linear[1],
        c.linear[2],
        c.angular[0],
        c.angular[1],
        c.angular[2]
    )
}

impl EpisodeEnv {
    pub fn new(
        episode: &Episode,
        grid: Arc<OccupancyGrid>,
        run: &RunConfig,
        sim: &SimConfig,
    ) -> Result<Self, RunError> {
        run.validate()?;
        let sim = run.effective_sim(sim);
        // load_scene validates the config and the start pose for both backends
        let world = load_scene(grid.clone(), episode, sim)?;
        let geodesic = geodesic_length(&grid, episode.start.position(), episode.goal, sim.body.radius)?;
        let backend = match run.mode {
            Mode::DiscreteForeign => Backend::Foreign { state: DiffDriveState::at_rest(episode.start), grid },
            _ => Backend::Native(world),
        };
        let start = episode.start;
        Ok(Self {
            run: *run,
            sim,
            episode: episode.clone(),
            backend,
            geodesic,
            steps: 0,
            path_length: 0.0,
            positions: VecDeque::from([start.position()]),
            translating: VecDeque::new(),
            collision: false,
            records: vec![TrajectoryRecord { t_step: 0, pose: start, label: "START".into(), collision: false }],
            termination: None,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        self.sim
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn grid(&self) -> &Arc<OccupancyGrid> {
        match &self.backend {
            Backend::Native(w) => &w.grid,
            Backend::Foreign { grid, .. } => grid,
        }
    }

    pub fn pose(&self) -> Pose2D {
        match &self.backend {
            Backend::Native(w) => w.agent,
            Backend::Foreign { state, .. } => state.pose,
        }
    }

    pub fn sim_time(&self) -> f64 {
        match &self.backend {
            Backend::Native(w) => w.sim_time(),
            Backend::Foreign { state, .. } => state.sim_time(self.sim.dt),
        }
    }

    /// Contact during the last decision.
    pub fn collision(&self) -> bool {
        self.collision
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn pointgoal_observation(&self) -> PointGoalObservation {
        sense_pointgoal(&self.pose(), self.episode.goal)
    }

    pub fn depth(&self) -> Result<DepthImage, RunError> {
        Ok(depth_at(
            self.grid(),
            &self.pose(),
            self.run.depth_width as usize,
            self.run.depth_fov,
            self.run.depth_max_range,
        )?)
    }

    /// Executes a discrete action: one teleport step without physics, or the
    /// converted command sequence with physics. STOP ends the episode.
    pub fn apply_action(&mut self, action: DiscreteAction) -> Result<(), RunError> {
        if action == DiscreteAction::Stop {
            self.stop();
            return Ok(());
        }
        let translating = action == DiscreteAction::MoveForward;
        match &mut self.backend {
            Backend::Native(w) if !self.sim.physics_enabled => {
                let before = w.agent.position();
                *w = w.step_discrete(action)?;
                self.path_length += before.distance(w.agent.position());
                self.collision = w.collision_flag;
            }
            Backend::Native(_) => {
                let cmds = action_commands(action, &self.sim)?;
                self.integrate(&cmds)?;
            }
            Backend::Foreign { .. } => {
                let cmds = action_commands(action, &self.sim)?;
                self.integrate(&cmds)?;
                self.after_decision(command_label(&cmds), translating);
                return Ok(());
            }
        }
        self.after_decision(action.as_str().to_string(), translating);
        Ok(())
    }

    /// Executes a command sequence received from a bridge.
    pub fn apply_commands(&mut self, cmds: &[VelocityCommand]) -> Result<(), RunError> {
        self.integrate(cmds)?;
        let translating = cmds.iter().any(|c| c.forward() != 0.0);
        self.after_decision(command_label(cmds), translating);
        Ok(())
    }

    /// Holds one planner command for the configured number of steps.
    pub fn apply_held_command(&mut self, cmd: &VelocityCommand) -> Result<(), RunError> {
        let cmds = vec![*cmd; self.run.planner_period_steps as usize];
        self.apply_commands(&cmds)
    }

    /// STOP: consumes a decision but no simulated time.
    pub fn stop(&mut self) {
        if self.is_done() {
            return;
        }
        self.steps += 1;
        self.collision = false;
        self.records.push(TrajectoryRecord {
            t_step: self.steps,
            pose: self.pose(),
            label: DiscreteAction::Stop.as_str().into(),
            collision: false,
        });
        let at_goal = self.pointgoal_observation().distance_to_goal < self.run.success_radius;
        self.termination = Some(if at_goal { Termination::StoppedAtGoal } else { Termination::StoppedAway });
    }

    fn integrate(&mut self, cmds: &[VelocityCommand]) -> Result<(), RunError> {
        let mut collided = false;
        for cmd in cmds {
            match &mut self.backend {
                Backend::Native(w) => {
                    let before = w.agent.position();
                    *w = w.step_physics(cmd)?;
                    self.path_length += before.distance(w.agent.position());
                    collided |= w.collision_flag;
                }
                Backend::Foreign { state, grid } => {
                    let before = state.pose.position();
                    *state = step_diffdrive(state, cmd, grid, self.sim.dt, &self.run.foreign, self.sim.body.radius)?;
                    self.path_length += before.distance(state.pose.position());
                    collided |= state.collision_flag;
                }
            }
        }
        self.collision = collided;
        Ok(())
    }

    fn after_decision(&mut self, label: String, translating: bool) {
        self.steps += 1;
        let pose = self.pose();
        self.records.push(TrajectoryRecord { t_step: self.steps, pose, label, collision: self.collision });
        let window = self.run.stuck_window as usize;
        self.positions.push_back(pose.position());
        self.translating.push_back(translating);
        if self.translating.len() > window {
            self.translating.pop_front();
            self.positions.pop_front();
        }
        // positions holds the pose before the window plus one per decision
        let anchor = self.positions[0];
        if self.translating.len() == window
            && self.translating.iter().all(|&t| t)
            && self.positions.iter().all(|p| anchor.distance(*p) < self.run.stuck_epsilon)
        {
            self.termination = Some(Termination::Stuck);
        } else if self.steps >= self.run.max_agent_steps {
            self.termination = Some(Termination::Timeout);
        }
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    /// Result of a terminated episode with the given wall time.
    pub fn result(&self, wall_time: f64) -> Result<EpisodeResult, RunError> {
        let termination = self
            .termination
            .ok_or_else(|| RunError::Config(format!("episode {} has not terminated", self.episode.episode_id)))?;
        let success = termination == Termination::StoppedAtGoal;
        Ok(EpisodeResult {
            episode_id: self.episode.episode_id.clone(),
            success,
            spl: compute_spl(success, self.path_length, self.geodesic)?,
            num_steps: self.steps,
            path_length: self.path_length,
            geodesic_length: self.geodesic,
            wall_time,
            sim_time: self.sim_time(),
            termination,
        })
    }

    pub fn finish(self, wall_time: f64) -> Result<(EpisodeResult, TrajectoryLog), RunError> {
        let result = self.result(wall_time)?;
        let log = TrajectoryLog {
            run: self.run,
            sim: self.sim,
            episode: self.episode.clone(),
            scene_text: self.grid().to_scene_string(),
            records: self.records,
        };
        Ok((result, log))
    }
}
