//! Conversion of one discrete action into a constant-velocity command
//! sequence for continuous execution.

use thiserror::Error;

use crate::geometry::{DiscreteAction, VelocityCommand};

/// Metres covered by one MOVE_FORWARD.
pub const FORWARD_STEP: f64 = 0.25;
/// Degrees covered by one TURN action.
pub const TURN_STEP_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionMapError {
    #[error("invalid control parameters: {0}")]
    InvalidParams(String),
    #[error("{0} has no velocity equivalent")]
    InvalidAction(DiscreteAction),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    control_period: f64,
    steps_per_sec: f64,
}

impl ControlParams {
    /// Rejects non-positive values and periods that are not a whole number
    /// of steps (tolerance 1e-9).
    pub fn new(control_period: f64, steps_per_sec: f64) -> Result<Self, ActionMapError> {
        if !(control_period.is_finite() && control_period > 0.0) {
            return Err(ActionMapError::InvalidParams(format!(
                "control_period must be positive, got {control_period}"
            )));
        }
        if !(steps_per_sec.is_finite() && steps_per_sec >= 1.0) {
            return Err(ActionMapError::InvalidParams(format!(
                "steps_per_sec must be at least 1, got {steps_per_sec}"
            )));
        }
        let n = control_period * steps_per_sec;
        if (n - n.round()).abs() > 1e-9 {
            return Err(ActionMapError::InvalidParams(format!("control_period·steps_per_sec = {n} is not an integer")));
        }
        Ok(Self { control_period, steps_per_sec })
    }

    pub fn control_period(&self) -> f64 {
        self.control_period
    }

    pub fn steps_per_sec(&self) -> f64 {
        self.steps_per_sec
    }

    /// Commands per action.
    pub fn num_steps(&self) -> usize {
        (self.control_period * self.steps_per_sec).round() as usize
    }
}

pub fn action_to_velocities(
    action: DiscreteAction,
    params: &ControlParams,
) -> Result<Vec<VelocityCommand>, ActionMapError> {
    let period = params.control_period;
    let cmd = match action {
        DiscreteAction::MoveForward => VelocityCommand { linear: [FORWARD_STEP / period, 0.0, 0.0], angular: [0.0; 3] },
        DiscreteAction::TurnLeft => VelocityCommand { linear: [0.0; 3], angular: [0.0, 0.0, TURN_STEP_DEG / period] },
        DiscreteAction::TurnRight => VelocityCommand { linear: [0.0; 3], angular: [0.0, 0.0, -TURN_STEP_DEG / period] },
        DiscreteAction::Stop => return Err(ActionMapError::InvalidAction(action)),
    };
    Ok(vec![cmd; params.num_steps()])
}
