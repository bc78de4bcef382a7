//! Shared domain types: poses, actions, velocity commands, agent bodies,
//! episodes and their evaluated results.
//!
//! Conventions: x right, y up, heading counterclockwise from +x. Headings are
//! stored in radians and kept in `[-π, π)`. [`VelocityCommand`] angular
//! components are in degrees per second; the simulators convert them exactly
//! once when stepping.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite value for {field}: {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("invalid agent body: {0}")]
    InvalidBody(&'static str),
}

/// Wrap an angle into `[-π, π)`.
///
/// Values already in range are returned unchanged, so the function is
/// idempotent bit-for-bit.
pub fn normalize_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::NonFinite { field: "theta", value: theta });
    }
    Ok(wrap(theta))
}

#[inline]
pub(crate) fn wrap(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let r = (theta + PI).rem_euclid(TWO_PI) - PI;
    // rem_euclid may round up to the modulus itself
    if r >= PI {
        r - TWO_PI
    } else if r < -PI {
        -PI
    } else {
        r
    }
}

/// Planar robot pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self, GeometryError> {
        if !x.is_finite() {
            return Err(GeometryError::NonFinite { field: "x", value: x });
        }
        if !y.is_finite() {
            return Err(GeometryError::NonFinite { field: "y", value: y });
        }
        Ok(Self { x, y, theta: normalize_angle(theta)? })
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        (p.x - self.x).hypot(p.y - self.y)
    }

    /// Same bits in every field. Distinguishes `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Pose2D) -> bool {
        self.x.to_bits() == other.x.to_bits()
            && self.y.to_bits() == other.y.to_bits()
            && self.theta.to_bits() == other.theta.to_bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// The four actions of a PointGoal agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiscreteAction {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl DiscreteAction {
    pub const ALL: [DiscreteAction; 4] =
        [DiscreteAction::MoveForward, DiscreteAction::TurnLeft, DiscreteAction::TurnRight, DiscreteAction::Stop];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiscreteAction::MoveForward => "MOVE_FORWARD",
            DiscreteAction::TurnLeft => "TURN_LEFT",
            DiscreteAction::TurnRight => "TURN_RIGHT",
            DiscreteAction::Stop => "STOP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

impl fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Linear velocity in m/s, angular velocity in deg/s.
///
/// Planar simulators read only `linear[0]` (forward speed in the body frame)
/// and `angular[2]` (yaw rate).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear: [f64; 3],
    pub angular: [f64; 3],
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { linear: [0.0; 3], angular: [0.0; 3] };

    pub fn planar(forward_mps: f64, yaw_rate_dps: f64) -> Self {
        Self { linear: [forward_mps, 0.0, 0.0], angular: [0.0, 0.0, yaw_rate_dps] }
    }

    pub fn forward(&self) -> f64 {
        self.linear[0]
    }

    pub fn yaw_rate_deg(&self) -> f64 {
        self.angular[2]
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }

    pub fn is_planar(&self) -> bool {
        self.linear[1] == 0.0 && self.linear[2] == 0.0 && self.angular[0] == 0.0 && self.angular[1] == 0.0
    }

    pub fn bit_eq(&self, other: &VelocityCommand) -> bool {
        self.linear.iter().zip(other.linear.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.angular.iter().zip(other.angular.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Cylindrical agent body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub radius: f64,
    pub height: f64,
    pub mass: f64,
    pub friction: f64,
}

impl AgentBody {
    pub fn new(radius: f64, height: f64, mass: f64, friction: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidBody("radius must be positive"));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(GeometryError::InvalidBody("mass must be positive"));
        }
        Ok(Self { radius, height, mass, friction })
    }
}

impl Default for AgentBody {
    fn default() -> Self {
        // 0.1 m x 1.5 m cylinder; mass and friction are carried but unused by
        // the planar integrators.
        Self { radius: 0.1, height: 1.5, mass: 32.0, friction: 0.5 }
    }
}

/// One PointGoal navigation task instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub scene_id: String,
    pub start: Pose2D,
    pub goal: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    StoppedAtGoal,
    StoppedAway,
    Stuck,
    Timeout,
    /// The episode could not be completed (bus timeout, invalid scene).
    Aborted,
}

impl Termination {
    pub const ALL: [Termination; 5] = [
        Termination::StoppedAtGoal,
        Termination::StoppedAway,
        Termination::Stuck,
        Termination::Timeout,
        Termination::Aborted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::StoppedAtGoal => "STOPPED_AT_GOAL",
            Termination::StoppedAway => "STOPPED_AWAY",
            Termination::Stuck => "STUCK",
            Termination::Timeout => "TIMEOUT",
            Termination::Aborted => "ABORTED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub success: bool,
    pub spl: f64,
    /// Agent decisions, including the final STOP.
    pub num_steps: u32,
    pub path_length: f64,
    pub geodesic_length: f64,
    /// Wall-clock seconds.
    pub wall_time: f64,
    /// Simulated seconds.
    pub sim_time: f64,
    pub termination: Termination,
}

impl EpisodeResult {
    /// Checks the field invariants every emitted result must satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.success != (self.termination == Termination::StoppedAtGoal) {
            return Err(format!("{}: success flag disagrees with {}", self.episode_id, self.termination));
        }
        if !self.success && self.spl != 0.0 {
            return Err(format!("{}: failed episode with spl {}", self.episode_id, self.spl));
        }
        if !(0.0..=1.0).contains(&self.spl) {
            return Err(format!("{}: spl {} outside [0, 1]", self.episode_id, self.spl));
        }
        Ok(())
    }
}
