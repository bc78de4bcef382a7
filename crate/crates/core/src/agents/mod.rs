//! Agents for the three operating modes: a deterministic discrete-action
//! PointGoal agent, a map-based planner with a pure-pursuit controller, and
//! the depth-to-scan converter that feeds it.

pub mod planner;

use std::collections::VecDeque;

use crate::geometry::{DiscreteAction, Point2, Pose2D, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::sim::{DepthImage, PointGoalObservation};

pub use planner::{classical_controller, inflate_map, plan_global, ControllerParams, Path, PlanError, PlannerState};

/// Deterministic bug-style PointGoal policy.
///
/// Turns toward the goal when the bearing exceeds half a turn step, otherwise
/// moves forward. A collision queues a wall escape: enough left turns to cover
/// 90°, then one forward step. A repeat collision queues the same escape
/// again.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGoalAgent {
    success_radius: f64,
    turn_step_deg: f64,
    pending: VecDeque<DiscreteAction>,
}

impl PointGoalAgent {
    pub fn new(success_radius: f64, turn_step_deg: f64) -> Self {
        Self { success_radius, turn_step_deg, pending: VecDeque::new() }
    }

    /// Left turns per escape: ⌈90° / turn step⌉.
    pub fn escape_turns(&self) -> usize {
        (90.0 / self.turn_step_deg - 1e-9).ceil().max(1.0) as usize
    }

    pub fn reset(&mut self) {
        self.pending.clear();
    }

    pub fn act(&mut self, obs: &PointGoalObservation, collision: bool) -> DiscreteAction {
        if obs.distance_to_goal < self.success_radius {
            self.pending.clear();
            return DiscreteAction::Stop;
        }
        if collision {
            self.pending.clear();
            self.pending.extend(std::iter::repeat_n(DiscreteAction::TurnLeft, self.escape_turns()));
            self.pending.push_back(DiscreteAction::MoveForward);
        }
        if let Some(a) = self.pending.pop_front() {
            return a;
        }
        // the tolerance keeps a goal exactly half a step off-axis from
        // making the agent alternate left and right forever
        let half = (self.turn_step_deg / 2.0).to_radians() + 1e-9;
        if obs.bearing_to_goal > half {
            DiscreteAction::TurnLeft
        } else if obs.bearing_to_goal < -half {
            DiscreteAction::TurnRight
        } else {
            DiscreteAction::MoveForward
        }
    }
}

/// Map-based agent: plans once on an inflated copy of the prebuilt map and
/// follows the path with the pure-pursuit controller.
#[derive(Debug, Clone)]
pub struct PlannerAgent {
    pub params: ControllerParams,
    /// Inflation applied to the map before planning.
    pub inflation_radius: f64,
    /// Distance to the goal at which the agent stops.
    pub goal_tolerance: f64,
    map: Option<OccupancyGrid>,
    goal: Option<Point2>,
    state: Option<PlannerState>,
    no_path: bool,
}

impl PlannerAgent {
    pub fn new(params: ControllerParams, inflation_radius: f64, goal_tolerance: f64) -> Self {
        Self { params, inflation_radius, goal_tolerance, map: None, goal: None, state: None, no_path: false }
    }

    /// Inflation for a body of `body_radius` on a grid of `resolution`: the
    /// body plus half a cell diagonal, so every free cell centre is safe.
    pub fn default_inflation(body_radius: f64, resolution: f64) -> f64 {
        body_radius + resolution * std::f64::consts::SQRT_2 / 2.0
    }

    /// Starts a new episode.
    pub fn begin(&mut self, map: &OccupancyGrid, goal: Point2) {
        self.map = Some(map_from_scene(map));
        self.goal = Some(goal);
        self.state = None;
        self.no_path = false;
    }

    pub fn planner_state(&self) -> Option<&PlannerState> {
        self.state.as_ref()
    }

    /// Velocity command for this decision, or `None` to stop.
    pub fn decide(&mut self, pose: &Pose2D, scan: &LaserScan) -> Option<VelocityCommand> {
        let (Some(map), Some(goal)) = (self.map.as_ref(), self.goal) else {
            return None;
        };
        if self.no_path || pose.distance_to(goal) < self.goal_tolerance {
            return None;
        }
        if self.state.is_none() {
            // fall back to thinner inflation when the endpoints sit in the margin
            let radii = [self.inflation_radius, self.params.body_radius, 0.0];
            let planned = radii.iter().find_map(|&r| {
                let inflated = inflate_map(map, r);
                plan_global(&inflated, pose.position(), goal).ok().map(|p| PlannerState::new(&p, inflated))
            });
            match planned {
                Some(st) => self.state = Some(st),
                None => {
                    self.no_path = true;
                    return None;
                }
            }
        }
        let state = self.state.as_mut().expect("planned above");
        if state.final_waypoint().is_some_and(|w| pose.distance_to(w) < self.goal_tolerance / 2.0) {
            return None;
        }
        Some(classical_controller(pose, state, scan, &self.params))
    }
}

/// Planar range scan; beam `i` looks along
/// `angle_min + i·(angle_max − angle_min)/(len − 1)` in the agent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_max: f64,
    pub ranges: Vec<f64>,
    pub range_max: f64,
}

impl LaserScan {
    pub fn beam_angle(&self, i: usize) -> f64 {
        let n = self.ranges.len();
        if n < 2 {
            return self.angle_min;
        }
        self.angle_min + (self.angle_max - self.angle_min) * (i as f64 / (n - 1) as f64)
    }

    /// Closest obstacle ahead within a corridor of half-width `half_width`:
    /// the smallest forward component over beams whose lateral offset fits
    /// in the corridor. `range_max` when nothing qualifies.
    pub fn front_distance(&self, half_width: f64) -> f64 {
        let mut best = self.range_max;
        for (i, &d) in self.ranges.iter().enumerate() {
            if d >= self.range_max {
                continue;
            }
            let a = self.beam_angle(i);
            let (s, c) = a.sin_cos();
            if c > 0.0 && (d * s).abs() <= half_width {
                best = best.min(d * c);
            }
        }
        best
    }
}

/// One-row depth image to laser scan, beam for beam.
pub fn depth_to_scan(depth: &DepthImage) -> LaserScan {
    LaserScan {
        angle_min: -depth.fov / 2.0,
        angle_max: depth.fov / 2.0,
        ranges: depth.ranges.clone(),
        range_max: depth.max_range,
    }
}

/// The prebuilt map equals the ground-truth scene.
pub fn map_from_scene(grid: &OccupancyGrid) -> OccupancyGrid {
    grid.clone()
}
