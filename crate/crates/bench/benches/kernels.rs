use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ngsc_core::control::{step_ngsc, LocalFisher, TickSeed, UserCommand};
use ngsc_core::fisher_field::{fisher_field, BeliefMode, FisherFieldSpec};
use ngsc_core::geometry::{sample_environment, Environment, Point2, SamplingConfig, SimState};
use ngsc_core::lwr::fit_lwr;
use ngsc_core::natural_gradient::{compute_fisher, FisherConfig, GoalId};
use ngsc_core::policy::{sample_field_dataset, FieldGains, PolicyField};
use ngsc_core::rng::seeded;
use ngsc_core::value::{environment_value_grid, ValueCostConfig};
use ngsc_core::{control::goal_candidates, ControllerConfig, Vector2};
use std::hint::black_box;

fn environment() -> Environment {
    sample_environment(&mut seeded(3), &SamplingConfig { obstacle_on_path: true, ..Default::default() }).unwrap()
}

fn lwr(c: &mut Criterion) {
    let env = environment();
    let field = PolicyField::new(&env, env.target_object().center, FieldGains::default());
    let q = Point2::new(0.2, 0.3);
    let mut group = c.benchmark_group("fit_lwr");
    for n in [16usize, 64, 256] {
        let samples = sample_field_dataset(&field, &env.workspace, q, 0.03, n, &mut seeded(1));
        group.bench_with_input(BenchmarkId::from_parameter(n), &samples, |b, s| {
            b.iter(|| fit_lwr(black_box(s), q, 0.02, 1e-8).unwrap())
        });
    }
    group.finish();
}

fn fisher(c: &mut Criterion) {
    let env = environment();
    let field = PolicyField::new(&env, env.place_target, FieldGains::default());
    let cfg = FisherConfig::default();
    let free = Point2::new(0.05, 0.45);
    let near = Point2::new(env.obstacle.center.x + env.obstacle.radius + 0.01, env.obstacle.center.y);
    let mut group = c.benchmark_group("compute_fisher");
    for (name, s) in [("free", free), ("near_obstacle", near)] {
        group.bench_function(name, |b| {
            let mut rng = seeded(7);
            b.iter(|| {
                compute_fisher(&field, &env.workspace, Some(&env), GoalId::Place, black_box(s), &cfg, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

fn ngsc_step(c: &mut Criterion) {
    let env = environment();
    let cfg = ControllerConfig::default();
    let estimator = LocalFisher { cfg: cfg.fisher };
    let state = SimState::new(Point2::new(0.25, 0.2));
    let cmd = UserCommand::new(Vector2::new(0.6, 0.8));
    let goals = goal_candidates(&env, state.phase).len();
    c.bench_function(&format!("step_ngsc/{goals}_goals"), |b| {
        let mut tick = 0;
        b.iter(|| {
            tick += 1;
            step_ngsc(&env, black_box(&state), &cmd, &cfg, &estimator, TickSeed { episode_seed: 1, tick })
        })
    });
}

fn value_iteration(c: &mut Criterion) {
    let env = environment();
    let mut group = c.benchmark_group("soft_value_iteration");
    group.sample_size(10);
    for resolution in [25usize, 50] {
        let cfg = ValueCostConfig { resolution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(resolution), &cfg, |b, cfg| {
            b.iter(|| environment_value_grid(&env, env.place_target, black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn field_grid(c: &mut Criterion) {
    let env = environment();
    let cfg = ControllerConfig::default();
    let spec = FisherFieldSpec {
        resolution: 20,
        goals: goal_candidates(&env, ngsc_core::geometry::Phase::Pick),
        beliefs: BeliefMode::Distance,
        belief_temperature: cfg.belief_temperature,
        fisher: cfg.fisher,
        gains: cfg.gains,
        seed: 0,
    };
    let mut group = c.benchmark_group("fisher_field");
    group.sample_size(10);
    group.bench_function("20x20_pick", |b| b.iter(|| fisher_field(&env, black_box(&spec)).unwrap()));
    group.finish();
}

criterion_group!(benches, lwr, fisher, ngsc_step, value_iteration, field_grid);
criterion_main!(benches);
