//! Payloads exchanged between runner nodes. Every per-step message carries
//! the episode serial and the decision index so nodes stay in lock step.

use crate::geometry::{DiscreteAction, Episode, EpisodeResult, Point2, Pose2D, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::wire::wire_struct;

use super::log::TrajectoryRecord;

/// `/observations/pointgoal`
#[derive(Debug, Clone, PartialEq)]
pub struct PointGoalMsg {
    pub episode: u32,
    pub step: u32,
    pub distance_to_goal: f64,
    pub bearing_to_goal: f64,
    pub collision: bool,
}
wire_struct!(PointGoalMsg, "PointGoalMsg", {
    episode: u32, step: u32, distance_to_goal: f64, bearing_to_goal: f64, collision: bool,
});

/// `/observations/depth`
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMsg {
    pub episode: u32,
    pub step: u32,
    pub fov: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}
wire_struct!(DepthMsg, "DepthMsg", { episode: u32, step: u32, fov: f64, max_range: f64, ranges: Vec<f64> });

/// `/scan`
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMsg {
    pub episode: u32,
    pub step: u32,
    pub angle_min: f64,
    pub angle_max: f64,
    pub range_max: f64,
    pub ranges: Vec<f64>,
}
wire_struct!(ScanMsg, "ScanMsg", {
    episode: u32, step: u32, angle_min: f64, angle_max: f64, range_max: f64, ranges: Vec<f64>,
});

/// `/action`
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMsg {
    pub episode: u32,
    pub step: u32,
    pub action: DiscreteAction,
}
wire_struct!(ActionMsg, "ActionMsg", { episode: u32, step: u32, action: DiscreteAction });

/// `/cmd_vel`. One decision may span `count` messages; `halt` ends the
/// episode instead of moving.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdVelMsg {
    pub episode: u32,
    pub step: u32,
    pub index: u32,
    pub count: u32,
    pub halt: bool,
    pub cmd: VelocityCommand,
}
wire_struct!(CmdVelMsg, "CmdVelMsg", {
    episode: u32, step: u32, index: u32, count: u32, halt: bool, cmd: VelocityCommand,
});

/// `/odom`
#[derive(Debug, Clone, PartialEq)]
pub struct OdomMsg {
    pub episode: u32,
    pub step: u32,
    pub pose: Pose2D,
}
wire_struct!(OdomMsg, "OdomMsg", { episode: u32, step: u32, pose: Pose2D });

/// `/map`
#[derive(Debug, Clone, PartialEq)]
pub struct MapMsg {
    pub episode: u32,
    pub grid: OccupancyGrid,
}
wire_struct!(MapMsg, "MapMsg", { episode: u32, grid: OccupancyGrid });

/// `/goal`
#[derive(Debug, Clone, PartialEq)]
pub struct GoalMsg {
    pub episode: u32,
    pub goal: Point2,
}
wire_struct!(GoalMsg, "GoalMsg", { episode: u32, goal: Point2 });

/// `/episode/reset` request.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetRequest {
    pub episode: Episode,
    pub grid: OccupancyGrid,
}
wire_struct!(ResetRequest, "ResetRequest", { episode: Episode, grid: OccupancyGrid });

/// `/episode/reset` response; `error` is empty on success.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetResponse {
    pub episode: u32,
    pub error: String,
}
wire_struct!(ResetResponse, "ResetResponse", { episode: u32, error: String });

/// `/episode/result` request.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRequest {
    pub episode: u32,
}
wire_struct!(ResultRequest, "ResultRequest", { episode: u32 });

/// `/episode/result` response. `result` is absent when the episode aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultResponse {
    pub result: Option<EpisodeResult>,
    pub error: String,
    pub records: Vec<TrajectoryRecord>,
}
wire_struct!(ResultResponse, "ResultResponse", {
    result: Option<EpisodeResult>, error: String, records: Vec<TrajectoryRecord>,
});
