//! Second simulator backend: a differential-drive base with first-order
//! actuator lag. It only accepts velocity commands.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap, Point2, Pose2D, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::sim::collision::move_disc;
use crate::sim::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffDriveConfig {
    /// Actuator time constant in seconds. Below 1e-6 the lag is disabled.
    pub tau: f64,
    /// Forward speed limit in m/s.
    pub v_limit: f64,
    /// Yaw rate limit in deg/s.
    pub w_limit: f64,
}

impl Default for DiffDriveConfig {
    fn default() -> Self {
        Self { tau: 0.05, v_limit: 0.5, w_limit: 60.0 }
    }
}

impl DiffDriveConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(SimError::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        for (name, v) in [("v_limit", self.v_limit), ("w_limit", self.w_limit)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Relaxation factor per step of length `dt`.
    pub fn alpha(&self, dt: f64) -> f64 {
        if self.tau < 1e-6 {
            1.0
        } else {
            (dt / self.tau).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffDriveState {
    pub pose: Pose2D,
    /// Realized forward speed in m/s.
    pub v_actual: f64,
    /// Realized yaw rate in rad/s.
    pub w_actual: f64,
    /// Elapsed steps; simulated time is `ticks · dt`.
    pub ticks: u64,
    pub collision_flag: bool,
}

impl DiffDriveState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self { pose, v_actual: 0.0, w_actual: 0.0, ticks: 0, collision_flag: false }
    }

    pub fn sim_time(&self, dt: f64) -> f64 {
        self.ticks as f64 * dt
    }
}

/// One step: actuals relax toward the clamped command, heading integrates
/// first, then the position moves along the new heading with sliding
/// collision response.
pub fn step_diffdrive(
    state: &DiffDriveState,
    cmd: &VelocityCommand,
    grid: &OccupancyGrid,
    dt: f64,
    config: &DiffDriveConfig,
    radius: f64,
) -> Result<DiffDriveState, SimError> {
    if !cmd.is_finite() {
        return Err(SimError::NonFiniteCommand);
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::Config(format!("dt must be positive, got {dt}")));
    }
    let alpha = config.alpha(dt);
    let v_cmd = cmd.forward().clamp(-config.v_limit, config.v_limit);
    let w_lim = config.w_limit.to_radians();
    let w_cmd = cmd.yaw_rate_deg().to_radians().clamp(-w_lim, w_lim);
    let mut next = *state;
    next.ticks += 1;
    next.collision_flag = false;
    next.v_actual = state.v_actual + (v_cmd - state.v_actual) * alpha;
    next.w_actual = state.w_actual + (w_cmd - state.w_actual) * alpha;
    if next.w_actual != 0.0 {
        next.pose.theta = wrap(state.pose.theta + next.w_actual * dt);
    }
    if next.v_actual != 0.0 {
        let step = next.v_actual * dt;
        let th = next.pose.theta;
        let disp = Point2::new(step * th.cos(), step * th.sin());
        let moved = move_disc(grid, state.pose.position(), disp, radius, true);
        next.pose.x = moved.position.x;
        next.pose.y = moved.position.y;
        next.collision_flag = moved.contact;
    }
    Ok(next)
}
