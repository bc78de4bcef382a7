//! Planar occupancy-grid simulator with two stepping semantics.
//!
//! * [`WorldState::step_discrete`] teleports the agent by one action step.
//! * [`WorldState::step_physics`] integrates one velocity command over `dt`
//!   with collision resolution (slide or truncate).
//!
//! Stepping is a pure function of the state, the input and the state's
//! [`SimConfig`]; identical inputs produce bit-identical states.

pub mod collision;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap, AgentBody, DiscreteAction, Episode, Point2, Pose2D, VelocityCommand};
use crate::grid::{Cell, OccupancyGrid};
use collision::{disc_overlaps, move_disc, sweep, BlockPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step_discrete called with physics enabled")]
    PhysicsEnabled,
    #[error("step_physics called with physics disabled")]
    PhysicsDisabled,
    #[error("STOP cannot be simulated; the episode runner handles it")]
    StopAction,
    #[error("non-finite velocity command")]
    NonFiniteCommand,
    #[error("start pose of episode {0} is in collision")]
    StartInCollision(String),
    #[error("point ({x}, {y}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid simulator config: {0}")]
    Config(String),
}

/// Simulator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub physics_enabled: bool,
    /// Seconds per continuous step.
    pub dt: f64,
    /// Metres per MOVE_FORWARD action step.
    pub forward_step_distance: f64,
    /// Degrees per TURN action step.
    pub turn_step_angle: f64,
    pub slide_on_contact: bool,
    /// Simulated seconds covered by one discrete action.
    pub control_period: f64,
    pub body: AgentBody,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_enabled: false,
            dt: 1.0 / 60.0,
            forward_step_distance: 0.25,
            turn_step_angle: 10.0,
            slide_on_contact: true,
            control_period: 1.0,
            body: AgentBody::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.dt, "dt")?;
        positive(self.forward_step_distance, "forward_step_distance")?;
        positive(self.turn_step_angle, "turn_step_angle")?;
        positive(self.control_period, "control_period")?;
        AgentBody::new(self.body.radius, self.body.height, self.body.mass, self.body.friction)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let ratio = self.control_period / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(SimError::Config(format!(
                "control_period {} is not a whole number of dt {} steps",
                self.control_period, self.dt
            )));
        }
        Ok(())
    }

    /// Continuous steps covered by one action step.
    pub fn ticks_per_action(&self) -> u64 {
        (self.control_period / self.dt).round() as u64
    }

    /// Continuous steps per simulated second.
    pub fn steps_per_sec(&self) -> f64 {
        (1.0 / self.dt).round()
    }
}

/// Complete simulator state. Cheap to clone: the grid is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agent: Pose2D,
    pub body: AgentBody,
    /// Elapsed continuous steps; simulated time is `ticks · dt`.
    pub ticks: u64,
    /// Contact during the last step.
    pub collision_flag: bool,
    pub grid: Arc<OccupancyGrid>,
    pub config: SimConfig,
}

impl WorldState {
    pub fn sim_time(&self) -> f64 {
        self.ticks as f64 * self.config.dt
    }

    /// Teleport-mode step: translate or rotate by one action step.
    pub fn step_discrete(&self, action: DiscreteAction) -> Result<WorldState, SimError> {
        if self.config.physics_enabled {
            return Err(SimError::PhysicsEnabled);
        }
        let mut next = self.clone();
        next.ticks += self.config.ticks_per_action();
        next.collision_flag = false;
        let turn = self.config.turn_step_angle.to_radians();
        match action {
            DiscreteAction::Stop => return Err(SimError::StopAction),
            DiscreteAction::TurnLeft => next.agent.theta = wrap(self.agent.theta + turn),
            DiscreteAction::TurnRight => next.agent.theta = wrap(self.agent.theta - turn),
            DiscreteAction::MoveForward => {
                let d = self.config.forward_step_distance;
                let disp = Point2::new(d * self.agent.theta.cos(), d * self.agent.theta.sin());
                let moved = move_disc(&self.grid, self.agent.position(), disp, self.body.radius, false);
                next.agent.x = moved.position.x;
                next.agent.y = moved.position.y;
                next.collision_flag = moved.contact;
            }
        }
        Ok(next)
    }

    /// Continuous step: heading first, then translation along the new
    /// heading, then collision resolution.
    pub fn step_physics(&self, cmd: &VelocityCommand) -> Result<WorldState, SimError> {
        if !self.config.physics_enabled {
            return Err(SimError::PhysicsDisabled);
        }
        integrate_planar(self, cmd, self.config.dt, self.config.slide_on_contact)
    }
}

/// Shared kinematic update used by the physics step.
fn integrate_planar(state: &WorldState, cmd: &VelocityCommand, dt: f64, slide: bool) -> Result<WorldState, SimError> {
    if !cmd.is_finite() {
        return Err(SimError::NonFiniteCommand);
    }
    let mut next = state.clone();
    next.ticks += 1;
    next.collision_flag = false;
    let yaw = cmd.yaw_rate_deg();
    if yaw != 0.0 {
        next.agent.theta = wrap(state.agent.theta + (yaw * dt).to_radians());
    }
    let v = cmd.forward();
    if v != 0.0 {
        let step = v * dt;
        let th = next.agent.theta;
        let disp = Point2::new(step * th.cos(), step * th.sin());
        let moved = move_disc(&state.grid, state.agent.position(), disp, state.body.radius, slide);
        next.agent.x = moved.position.x;
        next.agent.y = moved.position.y;
        next.collision_flag = moved.contact;
    }
    Ok(next)
}

/// Places the agent at the episode start.
pub fn load_scene(grid: Arc<OccupancyGrid>, episode: &Episode, config: SimConfig) -> Result<WorldState, SimError> {
    config.validate()?;
    let start = episode.start;
    if grid.world_to_cell(start.x, start.y).is_none() {
        return Err(SimError::OutOfBounds { x: start.x, y: start.y });
    }
    if disc_overlaps(&grid, grid.to_local(start.position()), config.body.radius, BlockPolicy::Solid) {
        return Err(SimError::StartInCollision(episode.episode_id.clone()));
    }
    Ok(WorldState { agent: start, body: config.body, ticks: 0, collision_flag: false, grid, config })
}

/// True when the agent disc at `p` overlaps a solid cell.
pub fn in_collision(grid: &OccupancyGrid, p: Point2, radius: f64) -> bool {
    disc_overlaps(grid, grid.to_local(p), radius, BlockPolicy::Solid)
}

/// Distance from `from` along world bearing `bearing` to the first occupied
/// cell boundary, inflated by `body_radius` when it is positive, capped at
/// `max_range`. Space beyond the grid returns nothing.
pub fn raycast(
    grid: &OccupancyGrid,
    from: Point2,
    bearing: f64,
    max_range: f64,
    body_radius: f64,
) -> Result<f64, SimError> {
    if grid.world_to_cell(from.x, from.y).is_none() {
        return Err(SimError::OutOfBounds { x: from.x, y: from.y });
    }
    let local = grid.to_local(from);
    let b = bearing - grid.origin().theta;
    let dir = Point2::new(b.cos(), b.sin());
    if body_radius > 0.0 {
        if disc_overlaps(grid, local, body_radius, BlockPolicy::OccupiedOnly) {
            return Ok(0.0);
        }
        let hit = sweep(grid, local, dir, max_range, body_radius, BlockPolicy::OccupiedOnly);
        return Ok(hit.map_or(max_range, |c| c.t.min(max_range)));
    }
    Ok(dda(grid, local, dir, max_range))
}

/// Grid traversal (Amanatides–Woo) over occupied cells. `p` is in the grid
/// frame and inside the grid.
fn dda(grid: &OccupancyGrid, p: Point2, dir: Point2, max_range: f64) -> f64 {
    let res = grid.resolution();
    let (mut col, mut row) = grid.local_to_signed_cell(p);
    if grid.get_signed(col, row) == Some(Cell::Occupied) {
        return 0.0;
    }
    let step_col: i64 = if dir.x > 0.0 { 1 } else { -1 };
    let step_row: i64 = if dir.y > 0.0 { 1 } else { -1 };
    // distance to the next vertical / horizontal boundary, recomputed from the
    // boundary index each time so no error accumulates
    let next_x = |col: i64| -> f64 {
        if dir.x == 0.0 {
            f64::INFINITY
        } else {
            let edge = if dir.x > 0.0 { (col + 1) as f64 * res } else { col as f64 * res };
            (edge - p.x) / dir.x
        }
    };
    let next_y = |row: i64| -> f64 {
        if dir.y == 0.0 {
            f64::INFINITY
        } else {
            let edge = if dir.y > 0.0 { (row + 1) as f64 * res } else { row as f64 * res };
            (edge - p.y) / dir.y
        }
    };
    loop {
        let (tx, ty) = (next_x(col), next_y(row));
        let t = if tx < ty {
            col += step_col;
            tx
        } else {
            row += step_row;
            ty
        };
        if t >= max_range {
            return max_range;
        }
        match grid.get_signed(col, row) {
            None => return max_range,
            Some(Cell::Occupied) => return t.max(0.0),
            Some(_) => {}
        }
    }
}

/// One-row range image: column `i` looks along
/// `theta + fov·(i/(width−1) − 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub fov: f64,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl DepthImage {
    pub fn column_bearing(&self, i: usize) -> f64 {
        column_offset(self.fov, self.width, i)
    }
}

fn column_offset(fov: f64, width: usize, i: usize) -> f64 {
    fov * (i as f64 / (width - 1) as f64 - 0.5)
}

pub fn sense_depth(state: &WorldState, width: usize, fov: f64, max_range: f64) -> Result<DepthImage, SimError> {
    depth_at(&state.grid, &state.agent, width, fov, max_range)
}

/// Depth image seen from `pose` in `grid`.
pub fn depth_at(
    grid: &OccupancyGrid,
    pose: &Pose2D,
    width: usize,
    fov: f64,
    max_range: f64,
) -> Result<DepthImage, SimError> {
    if width < 2 {
        return Err(SimError::Config(format!("depth width must be at least 2, got {width}")));
    }
    let from = pose.position();
    let ranges = (0..width)
        .map(|i| raycast(grid, from, pose.theta + column_offset(fov, width, i), max_range, 0.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DepthImage { width, fov, ranges, max_range })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGoalObservation {
    pub distance_to_goal: f64,
    /// Goal bearing in the agent frame, radians in `[-π, π)`.
    pub bearing_to_goal: f64,
}

/// Distance and agent-frame bearing to the goal. At the goal the bearing is
/// `normalize(0 − theta)`.
pub fn sense_pointgoal(agent: &Pose2D, goal: Point2) -> PointGoalObservation {
    let dx = goal.x - agent.x;
    let dy = goal.y - agent.y;
    PointGoalObservation { distance_to_goal: dx.hypot(dy), bearing_to_goal: wrap(dy.atan2(dx) - agent.theta) }
}
