//! Bus-coupled execution. The environment, the agent and any converter
//! nodes run on their own threads and talk only through topics; episode
//! control goes through the reset and result services. Every node waits for
//! the message of the current decision, so the loop runs in lock step and
//! matches the direct loop exactly.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::agents::{depth_to_scan, LaserScan};
use crate::bus::{Bus, BusError, NodeHandle, RecvError, Subscriber, DEFAULT_QUEUE_CAPACITY};
use crate::geometry::{DiscreteAction, Episode, EpisodeResult, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::sim::{DepthImage, SimConfig};
use crate::wire::Wire;

use super::log::{TrajectoryLog, TrajectoryRecord};
use super::messages::*;
use super::*;

enum EnvCommand {
    Reset(ResetRequest, mpsc::Sender<ResetResponse>),
    Result(mpsc::Sender<ResultResponse>),
}

/// A running node graph for one (run, sim) configuration. Episodes run one
/// after another on the same graph.
pub struct BusSession {
    bus: Bus,
    control: NodeHandle,
    threads: Vec<JoinHandle<()>>,
    run: RunConfig,
    sim: SimConfig,
}

fn recv_matching<T: Wire>(
    sub: &Subscriber<T>,
    timeout: Duration,
    what: &str,
    wanted: impl Fn(&T) -> bool,
) -> Result<T, String> {
    let deadline = Instant::now() + timeout;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match sub.recv_timeout(left) {
            Ok(m) if wanted(&m.value) => return Ok(m.value),
            Ok(_) => continue,
            Err(RecvError::Timeout) => return Err(format!("timed out waiting for {what}")),
            Err(RecvError::Closed) => return Err(format!("bus closed while waiting for {what}")),
            Err(RecvError::Decode(e)) => return Err(format!("undecodable {what}: {e}")),
        }
    }
}

/// Blocks until the next message; `None` once the bus closes.
fn next<T: Wire>(sub: &Subscriber<T>) -> Option<T> {
    loop {
        match sub.recv() {
            Ok(m) => return Some(m.value),
            Err(RecvError::Decode(_)) => continue,
            Err(_) => return None,
        }
    }
}

impl BusSession {
    pub fn start(run: &RunConfig, sim: &SimConfig) -> Result<Self, RunError> {
        run.validate()?;
        if !run.use_bus {
            return Err(RunError::Config("a bus session needs use_bus".into()));
        }
        let sim = run.effective_sim(sim);
        sim.validate()?;
        let bus = Bus::new();
        let cmd_capacity =
            (sim.ticks_per_action() as usize).max(run.planner_period_steps as usize) * 2 + DEFAULT_QUEUE_CAPACITY;
        let mut threads = Vec::new();

        // environment node
        let env_node = bus.create_node("env")?;
        let (tx, rx) = mpsc::channel::<EnvCommand>();
        let reset_tx = tx.clone();
        env_node.serve(SERVICE_RESET, move |req: ResetRequest| {
            let (rtx, rrx) = mpsc::channel();
            if reset_tx.send(EnvCommand::Reset(req, rtx)).is_err() {
                return ResetResponse { episode: 0, error: "environment stopped".into() };
            }
            rrx.recv().unwrap_or_else(|_| ResetResponse { episode: 0, error: "environment stopped".into() })
        })?;
        env_node.serve(SERVICE_RESULT, move |_: ResultRequest| {
            let (rtx, rrx) = mpsc::channel();
            let stopped = || ResultResponse { result: None, error: "environment stopped".into(), records: Vec::new() };
            if tx.send(EnvCommand::Result(rtx)).is_err() {
                return stopped();
            }
            rrx.recv().unwrap_or_else(|_| stopped())
        })?;
        let inputs = match run.mode {
            Mode::DiscreteNative => EnvInputs::Action(env_node.subscribe(TOPIC_ACTION, DEFAULT_QUEUE_CAPACITY)?),
            _ => EnvInputs::CmdVel(env_node.subscribe(TOPIC_CMD_VEL, cmd_capacity)?),
        };
        let (run_c, sim_c) = (*run, sim);
        threads.push(std::thread::spawn(move || env_main(env_node, inputs, rx, run_c, sim_c)));

        match run.mode {
            Mode::DiscreteNative | Mode::DiscreteForeign => {
                let agent = bus.create_node("agent")?;
                let obs = agent.subscribe::<PointGoalMsg>(TOPIC_POINTGOAL, DEFAULT_QUEUE_CAPACITY)?;
                let mut policy = make_pointgoal_agent(run, &sim);
                threads.push(std::thread::spawn(move || {
                    let mut episode = None;
                    while let Some(o) = next(&obs) {
                        if episode != Some(o.episode) {
                            policy.reset();
                            episode = Some(o.episode);
                        }
                        let view = crate::sim::PointGoalObservation {
                            distance_to_goal: o.distance_to_goal,
                            bearing_to_goal: o.bearing_to_goal,
                        };
                        let action = policy.act(&view, o.collision);
                        let msg = ActionMsg { episode: o.episode, step: o.step, action };
                        if agent.publish(TOPIC_ACTION, &msg).is_err() {
                            break;
                        }
                    }
                }));
            }
            Mode::PlannerNative => {
                let conv = bus.create_node("depth_to_scan")?;
                let depth = conv.subscribe::<DepthMsg>(TOPIC_DEPTH, DEFAULT_QUEUE_CAPACITY)?;
                threads.push(std::thread::spawn(move || {
                    while let Some(d) = next(&depth) {
                        let image =
                            DepthImage { width: d.ranges.len(), fov: d.fov, ranges: d.ranges, max_range: d.max_range };
                        let s = depth_to_scan(&image);
                        let msg = ScanMsg {
                            episode: d.episode,
                            step: d.step,
                            angle_min: s.angle_min,
                            angle_max: s.angle_max,
                            range_max: s.range_max,
                            ranges: s.ranges,
                        };
                        if conv.publish(TOPIC_SCAN, &msg).is_err() {
                            break;
                        }
                    }
                }));

                let planner = bus.create_node("planner")?;
                let odom = planner.subscribe::<OdomMsg>(TOPIC_ODOM, DEFAULT_QUEUE_CAPACITY)?;
                let scan = planner.subscribe::<ScanMsg>(TOPIC_SCAN, DEFAULT_QUEUE_CAPACITY)?;
                let map = planner.subscribe::<MapMsg>(TOPIC_MAP, DEFAULT_QUEUE_CAPACITY)?;
                let goal = planner.subscribe::<GoalMsg>(TOPIC_GOAL, DEFAULT_QUEUE_CAPACITY)?;
                let sim_c = sim;
                threads.push(std::thread::spawn(move || {
                    let mut agent = None;
                    let mut episode = None;
                    while let Some(o) = next(&odom) {
                        if episode != Some(o.episode) {
                            let m = loop {
                                match next(&map) {
                                    Some(m) if m.episode == o.episode => break Some(m),
                                    Some(_) => continue,
                                    None => break None,
                                }
                            };
                            let g = loop {
                                match next(&goal) {
                                    Some(g) if g.episode == o.episode => break Some(g),
                                    Some(_) => continue,
                                    None => break None,
                                }
                            };
                            let (Some(m), Some(g)) = (m, g) else { return };
                            let mut a = make_planner_agent(&sim_c, m.grid.resolution());
                            a.begin(&m.grid, g.goal);
                            agent = Some(a);
                            episode = Some(o.episode);
                        }
                        let s = loop {
                            match next(&scan) {
                                Some(s) if s.episode == o.episode && s.step == o.step => break Some(s),
                                Some(_) => continue,
                                None => break None,
                            }
                        };
                        let Some(s) = s else { return };
                        let scan = LaserScan {
                            angle_min: s.angle_min,
                            angle_max: s.angle_max,
                            ranges: s.ranges,
                            range_max: s.range_max,
                        };
                        let decision = agent.as_mut().expect("set on first odometry").decide(&o.pose, &scan);
                        let msg = CmdVelMsg {
                            episode: o.episode,
                            step: o.step,
                            index: 0,
                            count: 1,
                            halt: decision.is_none(),
                            cmd: decision.unwrap_or(VelocityCommand::ZERO),
                        };
                        if planner.publish(TOPIC_CMD_VEL, &msg).is_err() {
                            return;
                        }
                    }
                }));
            }
        }

        if run.mode == Mode::DiscreteForeign {
            // action-to-velocity bridge
            let bridge = bus.create_node("bridge")?;
            let actions = bridge.subscribe::<ActionMsg>(TOPIC_ACTION, DEFAULT_QUEUE_CAPACITY)?;
            let sim_c = sim;
            threads.push(std::thread::spawn(move || {
                while let Some(a) = next(&actions) {
                    let cmds = if a.action == DiscreteAction::Stop {
                        Vec::new()
                    } else {
                        match action_commands(a.action, &sim_c) {
                            Ok(c) => c,
                            Err(_) => return,
                        }
                    };
                    let halt = cmds.is_empty();
                    let count = cmds.len().max(1) as u32;
                    let list = if halt { vec![VelocityCommand::ZERO] } else { cmds };
                    for (i, cmd) in list.into_iter().enumerate() {
                        let msg = CmdVelMsg { episode: a.episode, step: a.step, index: i as u32, count, halt, cmd };
                        if bridge.publish(TOPIC_CMD_VEL, &msg).is_err() {
                            return;
                        }
                    }
                }
            }));
        }

        let control = bus.create_node("runner")?;
        Ok(Self { bus, control, threads, run: *run, sim })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    /// Runs one episode through the node graph.
    pub fn run_episode(
        &mut self,
        episode: &Episode,
        scene: &OccupancyGrid,
    ) -> Result<(EpisodeResult, TrajectoryLog), RunError> {
        let started = Instant::now();
        let timeout = self.run.bus_timeout;
        let req = ResetRequest { episode: episode.clone(), grid: scene.clone() };
        let reset: ResetResponse = self.control.call(SERVICE_RESET, &req, timeout)?;
        if !reset.error.is_empty() {
            return Err(RunError::Aborted { episode: episode.episode_id.clone(), reason: reset.error });
        }
        // the result is ready once the whole episode has run
        let budget = timeout * (self.run.max_agent_steps as f64 + 1.0);
        let resp: ResultResponse = self
            .control
            .call(SERVICE_RESULT, &ResultRequest { episode: reset.episode }, budget)
            .map_err(|e| match e {
                BusError::Timeout(_) => {
                    RunError::Aborted { episode: episode.episode_id.clone(), reason: "result timed out".into() }
                }
                e => RunError::Bus(e),
            })?;
        let Some(mut result) = resp.result else {
            return Err(RunError::Aborted { episode: episode.episode_id.clone(), reason: resp.error });
        };
        result.wall_time = started.elapsed().as_secs_f64();
        let log = TrajectoryLog {
            run: self.run,
            sim: self.sim,
            episode: episode.clone(),
            scene_text: scene.to_scene_string(),
            records: resp.records,
        };
        Ok((result, log))
    }

    /// Closes every queue and service and joins the node threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.bus.shutdown();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for BusSession {
    fn drop(&mut self) {
        self.stop();
    }
}

enum EnvInputs {
    Action(Subscriber<ActionMsg>),
    CmdVel(Subscriber<CmdVelMsg>),
}

type Outcome = Result<(EpisodeResult, Vec<TrajectoryRecord>), String>;

fn env_main(node: NodeHandle, inputs: EnvInputs, rx: mpsc::Receiver<EnvCommand>, run: RunConfig, sim: SimConfig) {
    let mut serial: u32 = 0;
    let mut outcome: Option<Outcome> = None;
    while let Ok(cmd) = rx.recv() {
        match cmd {
            EnvCommand::Reset(req, reply) => {
                serial += 1;
                match EpisodeEnv::new(&req.episode, Arc::new(req.grid), &run, &sim) {
                    Err(e) => {
                        outcome = None;
                        let _ = reply.send(ResetResponse { episode: serial, error: e.to_string() });
                    }
                    Ok(env) => {
                        let _ = reply.send(ResetResponse { episode: serial, error: String::new() });
                        outcome = Some(drive(&node, &inputs, env, serial, &run));
                    }
                }
            }
            EnvCommand::Result(reply) => {
                let resp = match outcome.take() {
                    Some(Ok((result, records))) => {
                        ResultResponse { result: Some(result), error: String::new(), records }
                    }
                    Some(Err(e)) => ResultResponse { result: None, error: e, records: Vec::new() },
                    None => ResultResponse { result: None, error: "no episode has run".into(), records: Vec::new() },
                };
                let _ = reply.send(resp);
            }
        }
    }
}

/// The environment's lock-step loop for one episode.
fn drive(node: &NodeHandle, inputs: &EnvInputs, mut env: EpisodeEnv, episode: u32, run: &RunConfig) -> Outcome {
    let timeout = Duration::from_secs_f64(run.bus_timeout);
    let err = |e: BusError| e.to_string();
    let run_err = |e: RunError| e.to_string();
    if run.mode == Mode::PlannerNative {
        node.publish(TOPIC_MAP, &MapMsg { episode, grid: (**env.grid()).clone() }).map_err(err)?;
        node.publish(TOPIC_GOAL, &GoalMsg { episode, goal: env.episode().goal }).map_err(err)?;
    }
    let mut step = 0u32;
    while !env.is_done() {
        match (run.mode, inputs) {
            (Mode::DiscreteNative, EnvInputs::Action(actions)) => {
                publish_pointgoal(node, &env, episode, step).map_err(err)?;
                let a = recv_matching(actions, timeout, TOPIC_ACTION, |m| m.episode == episode && m.step == step)?;
                env.apply_action(a.action).map_err(run_err)?;
            }
            (Mode::PlannerNative, EnvInputs::CmdVel(cmds)) => {
                node.publish(TOPIC_ODOM, &OdomMsg { episode, step, pose: env.pose() }).map_err(err)?;
                let d = env.depth().map_err(run_err)?;
                let msg = DepthMsg { episode, step, fov: d.fov, max_range: d.max_range, ranges: d.ranges };
                node.publish(TOPIC_DEPTH, &msg).map_err(err)?;
                let c = recv_matching(cmds, timeout, TOPIC_CMD_VEL, |m| m.episode == episode && m.step == step)?;
                if c.halt {
                    env.stop();
                } else {
                    env.apply_held_command(&c.cmd).map_err(run_err)?;
                }
            }
            (Mode::DiscreteForeign, EnvInputs::CmdVel(cmds)) => {
                publish_pointgoal(node, &env, episode, step).map_err(err)?;
                let first = recv_matching(cmds, timeout, TOPIC_CMD_VEL, |m| {
                    m.episode == episode && m.step == step && m.index == 0
                })?;
                if first.halt {
                    env.stop();
                } else {
                    let mut seq = vec![first.cmd];
                    for i in 1..first.count {
                        let c = recv_matching(cmds, timeout, TOPIC_CMD_VEL, |m| {
                            m.episode == episode && m.step == step && m.index == i
                        })?;
                        seq.push(c.cmd);
                    }
                    env.apply_commands(&seq).map_err(run_err)?;
                }
            }
            _ => return Err("inputs do not match the mode".into()),
        }
        step += 1;
    }
    let records = env.records().to_vec();
    let result = env.result(0.0).map_err(run_err)?;
    Ok((result, records))
}

fn publish_pointgoal(node: &NodeHandle, env: &EpisodeEnv, episode: u32, step: u32) -> Result<(), BusError> {
    let o = env.pointgoal_observation();
    let msg = PointGoalMsg {
        episode,
        step,
        distance_to_goal: o.distance_to_goal,
        bearing_to_goal: o.bearing_to_goal,
        collision: env.collision(),
    };
    node.publish(TOPIC_POINTGOAL, &msg)
}
