//! Result rows, aggregation and failure classification. The report is a
//! pure function of the rows, so it can be rebuilt from a result file.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Episode, EpisodeResult, Termination};

use super::{Configuration, EvalError};

pub const SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

/// One line of the result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub episode_id: String,
    pub config: Configuration,
    pub success: bool,
    pub spl: f64,
    pub num_steps: u32,
    pub path_length: f64,
    pub geodesic_length: f64,
    pub wall_time: f64,
    pub termination: Termination,
    pub repetition: u32,
    pub sim_time: f64,
}

impl ResultRow {
    pub fn from_result(r: &EpisodeResult, config: Configuration, repetition: u32, wall_time: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            episode_id: r.episode_id.clone(),
            config,
            success: r.success,
            spl: r.spl,
            num_steps: r.num_steps,
            path_length: r.path_length,
            geodesic_length: r.geodesic_length,
            wall_time,
            termination: r.termination,
            repetition,
            sim_time: r.sim_time,
        }
    }

    pub fn aborted(ep: &Episode, config: Configuration, repetition: u32, wall_time: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            episode_id: ep.episode_id.clone(),
            config,
            success: false,
            spl: 0.0,
            num_steps: 0,
            path_length: 0.0,
            geodesic_length: 0.0,
            wall_time,
            termination: Termination::Aborted,
            repetition,
            sim_time: 0.0,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        return Err(EvalError::Results(format!("unsupported schema_version {}", bad.schema_version)));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    #[serde(rename = "STOPPED_AWAY")]
    pub stopped_away: u32,
    #[serde(rename = "STUCK")]
    pub stuck: u32,
    #[serde(rename = "TIMEOUT")]
    pub timeout: u32,
    #[serde(rename = "ABORTED")]
    pub aborted: u32,
}

impl FailureCounts {
    fn add(&mut self, t: Termination) {
        match t {
            Termination::StoppedAtGoal => {}
            Termination::StoppedAway => self.stopped_away += 1,
            Termination::Stuck => self.stuck += 1,
            Termination::Timeout => self.timeout += 1,
            Termination::Aborted => self.aborted += 1,
        }
    }
}

/// An episode (per repetition) that succeeded without physics and failed
/// with it, at the same bus setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsDiff {
    pub episode_id: String,
    pub repetition: u32,
    pub without_physics: Configuration,
    pub with_physics: Configuration,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTaxonomy {
    pub counts: BTreeMap<String, FailureCounts>,
    pub physics_diff: Vec<PhysicsDiff>,
}

fn index(rows: &[ResultRow]) -> BTreeMap<Configuration, BTreeMap<(String, u32), &ResultRow>> {
    let mut by: BTreeMap<Configuration, BTreeMap<(String, u32), &ResultRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.config).or_default().insert((r.episode_id.clone(), r.repetition), r);
    }
    by
}

/// Failure counts per configuration and the set of episodes that succeed
/// without physics but fail with it.
pub fn classify_failures(rows: &[ResultRow]) -> Result<FailureTaxonomy, EvalError> {
    let by = index(rows);
    if by.len() < 2 {
        return Err(EvalError::Results("classification needs results from at least two configurations".into()));
    }
    let keys: Vec<BTreeSet<&(String, u32)>> = by.values().map(|m| m.keys().collect()).collect();
    if keys.windows(2).any(|w| w[0] != w[1]) {
        return Err(EvalError::Results("configurations were run on different episode sets".into()));
    }
    let mut counts = BTreeMap::new();
    for (config, eps) in &by {
        let mut c = FailureCounts::default();
        for r in eps.values() {
            c.add(r.termination);
        }
        counts.insert(config.label(), c);
    }
    let mut physics_diff = Vec::new();
    for bus in [false, true] {
        let off = Configuration { physics: false, bus };
        let on = Configuration { physics: true, bus };
        let (Some(a), Some(b)) = (by.get(&off), by.get(&on)) else { continue };
        for (key, ra) in a {
            let rb = b[key];
            if ra.success && !rb.success {
                physics_diff.push(PhysicsDiff {
                    episode_id: key.0.clone(),
                    repetition: key.1,
                    without_physics: off,
                    with_physics: on,
                    termination: rb.termination,
                });
            }
        }
    }
    Ok(FailureTaxonomy { counts, physics_diff })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSummary {
    pub config: Configuration,
    pub episodes: u32,
    /// Mean over non-aborted episodes.
    pub mean_spl: f64,
    /// Bin `i` counts spl in `[0.05·i, 0.05·(i+1))`; the last bin includes
    /// 1.0 and failures sit in bin 0.
    pub spl_histogram: Vec<u32>,
    pub success_count: u32,
    pub failures: FailureCounts,
    pub total_wall_time: f64,
    pub total_agent_steps: u64,
    pub total_sim_time: f64,
    /// Simulated seconds per wall-clock second.
    pub throughput: f64,
}

/// Per-episode step-count differences between the bus and direct runs at
/// one physics setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusStepDeltas {
    pub without_bus: Configuration,
    pub with_bus: Configuration,
    pub episodes_compared: u32,
    pub episodes_with_delta: u32,
    pub max_abs_delta: u32,
    pub spl_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub episode_id: String,
    pub config: Configuration,
    pub repetition: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub histogram_bin_width: f64,
    pub configurations: Vec<ConfigurationSummary>,
    pub physics_diff: Vec<PhysicsDiff>,
    pub bus_step_deltas: Vec<BusStepDeltas>,
    pub errors: Vec<ErrorEntry>,
    /// Effective configuration that produced the rows, when known.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub effective_config: serde_json::Value,
}

fn histogram_bin(spl: f64) -> usize {
    ((spl / HISTOGRAM_BIN_WIDTH).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Aggregates rows for the listed configurations.
pub fn aggregate(rows: &[ResultRow], configurations: &[Configuration]) -> Result<AggregateReport, EvalError> {
    let by = index(rows);
    let mut summaries = Vec::new();
    let mut errors = Vec::new();
    for &config in configurations {
        let eps: Vec<&ResultRow> = rows.iter().filter(|r| r.config == config).collect();
        let mut hist = vec![0u32; HISTOGRAM_BINS];
        let mut failures = FailureCounts::default();
        let (mut spl_sum, mut counted, mut success) = (0.0, 0u32, 0u32);
        let (mut wall, mut sim, mut steps) = (0.0, 0.0, 0u64);
        for r in &eps {
            hist[histogram_bin(r.spl)] += 1;
            failures.add(r.termination);
            if r.termination == Termination::Aborted {
                errors.push(ErrorEntry { episode_id: r.episode_id.clone(), config, repetition: r.repetition });
            } else {
                spl_sum += r.spl;
                counted += 1;
            }
            success += u32::from(r.success);
            wall += r.wall_time;
            sim += r.sim_time;
            steps += u64::from(r.num_steps);
        }
        summaries.push(ConfigurationSummary {
            config,
            episodes: eps.len() as u32,
            mean_spl: if counted > 0 { spl_sum / counted as f64 } else { 0.0 },
            spl_histogram: hist,
            success_count: success,
            failures,
            total_wall_time: wall,
            total_agent_steps: steps,
            total_sim_time: sim,
            throughput: if wall > 0.0 { sim / wall } else { 0.0 },
        });
    }
    let physics_diff = if by.len() >= 2 { classify_failures(rows)?.physics_diff } else { Vec::new() };
    let mut bus_step_deltas = Vec::new();
    for physics in [false, true] {
        let off = Configuration { physics, bus: false };
        let on = Configuration { physics, bus: true };
        let (Some(a), Some(b)) = (by.get(&off), by.get(&on)) else { continue };
        let mut d = BusStepDeltas {
            without_bus: off,
            with_bus: on,
            episodes_compared: 0,
            episodes_with_delta: 0,
            max_abs_delta: 0,
            spl_identical: true,
        };
        for (key, ra) in a {
            let Some(rb) = b.get(key) else { continue };
            d.episodes_compared += 1;
            let delta = ra.num_steps.abs_diff(rb.num_steps);
            if delta != 0 {
                d.episodes_with_delta += 1;
            }
            d.max_abs_delta = d.max_abs_delta.max(delta);
            d.spl_identical &= ra.spl.to_bits() == rb.spl.to_bits();
        }
        bus_step_deltas.push(d);
    }
    Ok(AggregateReport {
        schema_version: SCHEMA_VERSION,
        histogram_bin_width: HISTOGRAM_BIN_WIDTH,
        configurations: summaries,
        physics_diff,
        bus_step_deltas,
        errors,
        effective_config: serde_json::Value::Null,
    })
}

impl AggregateReport {
    pub fn summary(&self, config: Configuration) -> Option<&ConfigurationSummary> {
        self.configurations.iter().find(|s| s.config == config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
