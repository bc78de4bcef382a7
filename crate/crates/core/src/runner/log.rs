//! Self-contained trajectory logs. The header embeds everything needed to
//! re-run the episode; records use fixed 17-significant-digit decimals so
//! replays compare textually.

use std::fmt::Write as _;

use crate::geometry::{Episode, Pose2D};
use crate::grid::OccupancyGrid;
use crate::sim::SimConfig;
use crate::wire::wire_struct;

use super::{RunConfig, RunError};

pub const LOG_MAGIC: &str = "# navbridge trajectory v1";
pub const RECORD_HEADER: &str = "t_step,pose_x,pose_y,theta,action_or_cmd,collision";

/// Pose after decision `t_step`; record 0 is the start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t_step: u32,
    pub pose: Pose2D,
    /// Discrete action name, `START`, or `cmd:<n>:<lx>:<ly>:<lz>:<ax>:<ay>:<az>`.
    pub label: String,
    pub collision: bool,
}
wire_struct!(TrajectoryRecord, "TrajectoryRecord", { t_step: u32, pose: Pose2D, label: String, collision: bool });

impl TrajectoryRecord {
    pub fn render(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            self.t_step,
            self.pose.x,
            self.pose.y,
            self.pose.theta,
            self.label,
            u8::from(self.collision)
        )
    }

    pub fn parse(line: &str) -> Result<Self, RunError> {
        let err = |m: &str| RunError::Log(format!("{m}: {line:?}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let pose = Pose2D::new(num(f[1])?, num(f[2])?, num(f[3])?).map_err(|e| err(&e.to_string()))?;
        Ok(Self {
            t_step: f[0].parse().map_err(|_| err("bad step"))?,
            pose,
            label: f[4].to_string(),
            collision: match f[5] {
                "0" => false,
                "1" => true,
                _ => return Err(err("bad collision flag")),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub run: RunConfig,
    pub sim: SimConfig,
    pub episode: Episode,
    /// Scene in the scene file format.
    pub scene_text: String,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn scene(&self) -> Result<OccupancyGrid, RunError> {
        OccupancyGrid::parse_scene(&self.scene_text).map_err(|e| RunError::Log(e.to_string()))
    }

    pub fn render(&self) -> String {
        let json = |v: serde_json::Result<String>| v.expect("config types serialize");
        let mut out = String::new();
        let _ = writeln!(out, "{LOG_MAGIC}");
        let _ = writeln!(out, "# run {}", json(serde_json::to_string(&self.run)));
        let _ = writeln!(out, "# sim {}", json(serde_json::to_string(&self.sim)));
        let _ = writeln!(out, "# episode {}", json(serde_json::to_string(&self.episode)));
        for line in self.scene_text.lines() {
            let _ = writeln!(out, "# scene {line}");
        }
        let _ = writeln!(out, "{RECORD_HEADER}");
        for r in &self.records {
            let _ = writeln!(out, "{}", r.render());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_MAGIC) {
            return Err(RunError::Log("missing log header".into()));
        }
        let (mut run, mut sim, mut episode) = (None, None, None);
        let mut scene_text = String::new();
        let mut records = Vec::new();
        let mut in_records = false;
        let bad_json = |what: &str, e: serde_json::Error| RunError::Log(format!("{what}: {e}"));
        for line in lines {
            if in_records {
                records.push(TrajectoryRecord::parse(line)?);
            } else if let Some(v) = line.strip_prefix("# run ") {
                run = Some(serde_json::from_str(v).map_err(|e| bad_json("run", e))?);
            } else if let Some(v) = line.strip_prefix("# sim ") {
                sim = Some(serde_json::from_str(v).map_err(|e| bad_json("sim", e))?);
            } else if let Some(v) = line.strip_prefix("# episode ") {
                episode = Some(serde_json::from_str(v).map_err(|e| bad_json("episode", e))?);
            } else if let Some(v) = line.strip_prefix("# scene ") {
                scene_text.push_str(v);
                scene_text.push('\n');
            } else if line == RECORD_HEADER {
                in_records = true;
            } else {
                return Err(RunError::Log(format!("unexpected line {line:?}")));
            }
        }
        let missing = |w: &str| RunError::Log(format!("missing {w} header"));
        Ok(Self {
            run: run.ok_or_else(|| missing("run"))?,
            sim: sim.ok_or_else(|| missing("sim"))?,
            episode: episode.ok_or_else(|| missing("episode"))?,
            scene_text,
            records,
        })
    }
}
