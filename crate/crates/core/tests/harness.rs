use ngsc_core::control::{IdentityFisher, UserCommand};
use ngsc_core::geometry::sample_environment;
use ngsc_core::rng::seeded;
use ngsc_core::sim::batch::{run_batch, BatchSpec};
use ngsc_core::sim::log::{EndReason, EpisodeHeader, Outcome, TickRecord, LOG_VERSION};
use ngsc_core::sim::user::CommandSequence;
use ngsc_core::sim::*;
use ngsc_core::*;

fn open_env() -> Environment {
    Environment {
        workspace: Rect::default(),
        objects: vec![
            Object { id: ObjectId(0), center: Point2::new(0.40, 0.40), radius: 0.02 },
            Object { id: ObjectId(1), center: Point2::new(0.40, 0.10), radius: 0.02 },
        ],
        obstacle: Disc::new(Point2::new(0.12, 0.40), 0.03),
        place_target: Point2::new(0.10, 0.15),
        target_object_id: ObjectId(0),
    }
}

fn scripted(env: &Environment, mode: ControllerMode, seed: u64) -> EpisodeLog {
    let settings = EpisodeSettings { user: Some(UserProfile::canonical()), ..EpisodeSettings::new(mode, seed) };
    let mut user = ScriptedUser::new(UserProfile::canonical(), seed).unwrap();
    run_episode(env, &settings, &mut user).unwrap()
}

#[test]
fn easy_instance_succeeds_in_every_mode() {
    let env = open_env();
    for mode in ControllerMode::ALL {
        let log = scripted(&env, mode, 4);
        assert!(log.outcome.success, "{mode}: {:?}", log.outcome);
        assert_eq!(log.outcome.end_reason, EndReason::Placed);
        assert!(log.outcome.ticks < log.header.max_ticks);
    }
}

#[test]
fn same_seed_gives_byte_identical_logs() {
    let env =
        sample_environment(&mut seeded(21), &SamplingConfig { obstacle_on_path: true, ..Default::default() }).unwrap();
    for mode in ControllerMode::ALL {
        assert_eq!(scripted(&env, mode, 9).to_jsonl(), scripted(&env, mode, 9).to_jsonl());
    }
}

#[test]
fn step_bounds_and_workspace_containment() {
    let env =
        sample_environment(&mut seeded(3), &SamplingConfig { obstacle_on_path: true, ..Default::default() }).unwrap();
    for mode in ControllerMode::ALL {
        let log = scripted(&env, mode, 2);
        let eta = log.header.config.step_size();
        let mut prev = log.header.initial_state.gripper;
        for t in &log.ticks {
            assert!(t.state.gripper.distance(prev) <= eta + 1e-12);
            assert!(env.workspace.contains(t.state.gripper));
            assert!(t.shared.norm() <= t.user.translation.norm() + 1e-9);
            assert!(t.beliefs.is_valid());
            t.state.check_invariants().unwrap();
            prev = t.state.gripper;
        }
    }
}

#[test]
fn direct_control_has_zero_cosine_distance() {
    let log = scripted(&open_env(), ControllerMode::DirectControl, 1);
    assert_eq!(compute_metrics(&log).unwrap().mean_cosine_distance, 0.0);
}

#[test]
fn identity_fisher_episode_matches_direct_control_bit_for_bit() {
    let env =
        sample_environment(&mut seeded(8), &SamplingConfig { obstacle_on_path: true, ..Default::default() }).unwrap();
    let settings = EpisodeSettings::new(ControllerMode::NaturalGradient, 5);
    let ng = Controller::with_estimator(ControllerMode::NaturalGradient, settings.controller, Box::new(IdentityFisher));
    let mut u1 = ScriptedUser::new(UserProfile::canonical(), 5).unwrap();
    let ng_log = run_episode_with(&env, &settings, ng, &mut u1).unwrap();
    let dc_settings = EpisodeSettings { mode: ControllerMode::DirectControl, ..settings };
    let mut u2 = ScriptedUser::new(UserProfile::canonical(), 5).unwrap();
    let dc_log = run_episode(&env, &dc_settings, &mut u2).unwrap();
    assert_eq!(ng_log.ticks.len(), dc_log.ticks.len());
    for (a, b) in ng_log.ticks.iter().zip(&dc_log.ticks) {
        assert_eq!(a.state, b.state);
        assert_eq!(a.shared, b.shared);
    }
    assert_eq!(ng_log.outcome, dc_log.outcome);
}

#[test]
fn timeout_is_an_outcome() {
    let env = open_env();
    let settings = EpisodeSettings { max_ticks: 10, ..EpisodeSettings::new(ControllerMode::DirectControl, 0) };
    let log = run_episode(&env, &settings, &mut CommandSequence::new(vec![])).unwrap();
    assert_eq!(log.outcome.end_reason, EndReason::Timeout);
    assert_eq!(log.ticks.len(), 10);
    assert!(!log.outcome.success);
    // Zero input keeps the gripper still.
    assert!(log.ticks.iter().all(|t| t.state.gripper == env.place_target));
}

#[test]
fn missed_grasp_is_a_logged_no_op() {
    let env = open_env();
    let settings = EpisodeSettings { max_ticks: 3, ..EpisodeSettings::new(ControllerMode::DirectControl, 0) };
    let press = UserCommand { grasp: true, ..Default::default() };
    let log = run_episode(&env, &settings, &mut CommandSequence::new(vec![press])).unwrap();
    assert_eq!(log.ticks[0].events, vec![TickEvent::GraspMissed]);
    assert_eq!(log.ticks[0].state.phase, Phase::Pick);
    assert_eq!(log.outcome.grasp_misses, 1);
}

#[test]
fn collisions_are_logged_but_not_terminal() {
    let env = open_env();
    // Drive from the place target straight up through the obstacle.
    let up = UserCommand::new(Vector2::new(0.08, 1.0).normalize());
    let settings = EpisodeSettings { max_ticks: 120, ..EpisodeSettings::new(ControllerMode::DirectControl, 0) };
    let log = run_episode(&env, &settings, &mut CommandSequence::new(vec![up; 120])).unwrap();
    assert_eq!(log.outcome.end_reason, EndReason::Timeout);
    assert!(log.outcome.collision_ticks > 0);
    assert!(log.ticks.iter().any(|t| t.events.contains(&TickEvent::Collision)));
    assert_eq!(compute_metrics(&log).unwrap().min_proximity_cm, 0.0);
}

fn synthetic_log(positions: &[Point2], env: Environment) -> EpisodeLog {
    let config = ControllerConfig::default();
    let header = EpisodeHeader {
        version: LOG_VERSION,
        seed: 0,
        mode: ControllerMode::DirectControl,
        tick_rate: 30.0,
        max_ticks: 1000,
        initial_state: SimState::new(positions[0]),
        environment: env.clone(),
        config,
        user: None,
    };
    let ticks = positions[1..]
        .iter()
        .enumerate()
        .map(|(i, p)| TickRecord {
            tick: i as u64,
            state: SimState::new(*p),
            user: UserCommand::new(Vector2::new(1.0, 0.0)),
            robot_actions: vec![],
            beliefs: BeliefVector::uniform(&[GoalId::Place]),
            shared: Vector2::new(1.0, 0.0),
            fisher_inv: None,
            signed_distance: env.signed_distance(*p),
            fallback: false,
            events: vec![],
        })
        .collect::<Vec<_>>();
    let outcome = Outcome {
        success: false,
        end_reason: EndReason::Aborted,
        ticks: ticks.len() as u64,
        collision_ticks: 0,
        grasp_misses: 0,
    };
    EpisodeLog { header, ticks, outcome }
}

#[test]
fn straight_line_metrics() {
    let mut env = open_env();
    env.obstacle = Disc::new(Point2::new(0.25, 0.20 + 0.043 + 0.03), 0.03);
    let positions: Vec<Point2> = (0..=30).map(|k| Point2::new(0.05 + 0.01 * k as f64, 0.20)).collect();
    let m = compute_metrics(&synthetic_log(&positions, env)).unwrap();
    assert_eq!(m.duration_s, 1.0);
    assert!((m.travel_cm - 30.0).abs() < 1e-9);
    assert!((m.min_proximity_cm - 4.3).abs() < 1e-9);
    assert_eq!(m.mean_cosine_distance, 0.0);
}

#[test]
fn empty_log_is_an_error() {
    let log = synthetic_log(&[Point2::new(0.1, 0.1)], open_env());
    assert_eq!(compute_metrics(&log), Err(NgscError::EmptyLog));
}

#[test]
fn log_round_trip_and_corruption() {
    let log = scripted(&open_env(), ControllerMode::NaturalGradient, 3);
    let text = log.to_jsonl();
    let back = EpisodeLog::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back, log);
    assert_eq!(compute_metrics(&back).unwrap(), compute_metrics(&log).unwrap());

    let mut lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with(r#"{"kind":"header","version":1,"seed":3,"mode":"NG""#));
    lines.remove(5);
    let err = EpisodeLog::read_jsonl(lines.join("\n").as_bytes()).unwrap_err();
    assert!(matches!(err, NgscError::CorruptLog { line: 6, .. }), "{err:?}");

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = "{not json".into();
    let err = EpisodeLog::read_jsonl(lines.join("\n").as_bytes()).unwrap_err();
    assert!(matches!(err, NgscError::CorruptLog { line: 4, .. }));

    let truncated: Vec<&str> = text.lines().take(10).collect();
    let err = EpisodeLog::read_jsonl(truncated.join("\n").as_bytes()).unwrap_err();
    assert!(matches!(err, NgscError::CorruptLog { line: 11, .. }));
}

fn study_spec(envs: usize, modes: Vec<ControllerMode>) -> BatchSpec {
    let sampling = SamplingConfig { obstacle_on_path: true, ..Default::default() };
    BatchSpec {
        environments: (0..envs as u64).map(|s| sample_environment(&mut seeded(s), &sampling).unwrap()).collect(),
        modes,
        seeds: vec![1],
        controller: ControllerConfig::default(),
        user: UserProfile::canonical(),
        max_ticks: 1800,
    }
}

#[test]
fn four_by_four_batch_has_sixteen_episodes() {
    let spec = study_spec(4, ControllerMode::ALL.to_vec());
    let report = run_batch(&spec).unwrap();
    assert_eq!(report.episodes.len(), 16);
    assert_eq!(report.summary.len(), 4);
    assert!(report.summary.iter().all(|s| s.episodes == 4));

    let csv = |r: &BatchReport| {
        let mut buf = Vec::new();
        r.write_summary_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let first = csv(&report);
    assert!(first.starts_with("mode,episodes,duration_s,duration_sd,travel_cm,travel_sd,min_prox_cm,min_prox_sd,cosine_dist,cosine_sd,success_rate\n"));
    assert_eq!(first.lines().count(), 5);
    assert_eq!(first, csv(&run_batch(&spec).unwrap()));
}

#[test]
fn empty_mode_list_is_rejected() {
    assert_eq!(run_batch(&study_spec(2, vec![])), Err(NgscError::EmptyBatch("modes")));
}

#[test]
fn failing_cell_does_not_abort_batch() {
    let mut spec = study_spec(2, vec![ControllerMode::DirectControl]);
    spec.environments[1].objects.clear();
    let report = run_batch(&spec).unwrap();
    assert_eq!(report.episodes.len(), 2);
    assert!(report.episodes[0].error.is_none());
    assert!(report.episodes[1].error.is_some());
    assert_eq!(report.summary[0].success_rate, 0.5);
}
