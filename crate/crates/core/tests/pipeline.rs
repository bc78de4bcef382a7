use navbridge::eval::report::{read_csv, write_csv};
use navbridge::eval::{aggregate, generate_episode_suite, load_suite, run_experiment, save_suite, ExperimentConfig};
use navbridge::geometry::Termination;
use navbridge::runner::{run_episode, BusSession, RunConfig};
use navbridge::sim::SimConfig;

fn small_config() -> ExperimentConfig {
    ExperimentConfig { n_scenes: 2, n_episodes: 3, include_fixtures: true, ..ExperimentConfig::default() }
}

#[test]
fn saved_suite_runs_like_the_generated_one() {
    let cfg = small_config();
    let suite = cfg.suite().unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_suite(&suite, dir.path()).unwrap();
    let loaded = load_suite(dir.path(), None).unwrap();
    assert_eq!(loaded.episodes, suite.episodes);
    let run = |s| run_experiment(&cfg, s, &RunConfig::default(), &SimConfig::default(), false).unwrap();
    let (a, b) = (run(&suite), run(&loaded));
    assert_eq!(a.rows.len(), 4 * (2 * 3 + 10));
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.num_steps, x.spl.to_bits(), x.termination), (y.num_steps, y.spl.to_bits(), y.termination));
    }
}

#[test]
fn results_survive_csv_and_reaggregate() {
    let cfg = small_config();
    let suite = cfg.suite().unwrap();
    let out = run_experiment(&cfg, &suite, &RunConfig::default(), &SimConfig::default(), false).unwrap();
    let mut buf = Vec::new();
    write_csv(&out.rows, &mut buf).unwrap();
    let rows = read_csv(buf.as_slice()).unwrap();
    assert_eq!(rows, out.rows);
    let report = aggregate(&rows, &cfg.configurations).unwrap();
    assert_eq!(report, out.report);
    assert!(report.errors.is_empty());
    for s in &report.configurations {
        assert_eq!(s.episodes as usize, suite.episodes.len());
        assert!(s.throughput > 1.0);
    }
    let radius = RunConfig::default().success_radius;
    for r in out.rows.iter().filter(|r| r.success) {
        let ep = suite.episodes.iter().find(|e| e.episode_id == r.episode_id).unwrap();
        let straight = ep.start.distance_to(ep.goal);
        assert!(r.path_length >= straight - radius, "{}: {} < {straight}", r.episode_id, r.path_length);
        assert!(r.spl > 0.0 && r.spl <= 1.0);
    }
    for d in &report.bus_step_deltas {
        assert_eq!(d.episodes_with_delta, 0);
        assert!(d.spl_identical);
    }
}

#[test]
fn one_bus_session_matches_fresh_runs() {
    let suite = generate_episode_suite(9, 1, 4, 30, 0.1).unwrap();
    let run = RunConfig { physics_enabled: true, use_bus: true, ..RunConfig::default() };
    let sim = SimConfig::default();
    let mut session = BusSession::start(&run, &sim).unwrap();
    for ep in &suite.episodes {
        let scene = suite.scene_of(ep).unwrap();
        let (shared, shared_log) = session.run_episode(ep, scene).unwrap();
        let (fresh, fresh_log) = run_episode(ep, scene, &run, &sim).unwrap();
        assert_eq!(shared_log.render(), fresh_log.render());
        assert_eq!(shared.num_steps, fresh.num_steps);
        assert_ne!(shared.termination, Termination::Aborted);
        shared.check_invariants().unwrap();
    }
    session.shutdown();
}
