//! Autonomous robot policy: a normalized potential field per goal, policy
//! sample datasets for local fitting, and autonomous pick-and-place rollouts.
//!
//! The field is a sink at the goal and a source around the obstacle. Outside
//! the goal-arrival radius every action has unit norm; inside it the robot
//! stops.

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Disc, Environment, Phase, Point2, Rect, SimState};

/// A state-to-action mapping over the plane.
pub trait ActionField {
    fn action(&self, s: Point2) -> Vector2<f64>;
}

impl<F> ActionField for F
where
    F: Fn(Point2) -> Vector2<f64>,
{
    fn action(&self, s: Point2) -> Vector2<f64> {
        self(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldGains {
    pub attract: f64,
    /// Barrier scale in meters; the barrier magnitude is
    /// `repulse * (1/sd - 1/influence_radius)`.
    pub repulse: f64,
    pub influence_radius: f64,
    pub arrival_radius: f64,
}

impl Default for FieldGains {
    fn default() -> Self {
        Self { attract: 1.0, repulse: 0.01, influence_radius: 0.045, arrival_radius: 0.01 }
    }
}

/// Closest the barrier term evaluates the distance field; deeper queries
/// (including points inside the obstacle) saturate here.
const MIN_BARRIER_DISTANCE: f64 = 1e-4;
const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyField {
    pub workspace: Rect,
    pub obstacle: Option<Disc>,
    pub goal: Point2,
    pub gains: FieldGains,
}

impl PolicyField {
    pub fn new(env: &Environment, goal: Point2, gains: FieldGains) -> Self {
        Self { workspace: env.workspace, obstacle: Some(env.obstacle), goal, gains }
    }

    /// Pure attraction with no obstacle term.
    pub fn attractor(workspace: Rect, goal: Point2, gains: FieldGains) -> Self {
        Self { workspace, obstacle: None, goal, gains }
    }

    /// Unnormalized barrier gradient; zero outside the influence radius.
    pub fn barrier(&self, s: Point2) -> Vector2<f64> {
        let Some(obs) = self.obstacle else {
            return Vector2::zeros();
        };
        let rho = self.gains.influence_radius;
        let sd = obs.signed_distance(s);
        if sd >= rho {
            return Vector2::zeros();
        }
        let sd = sd.max(MIN_BARRIER_DISTANCE);
        obs.sdf_gradient(s) * (self.gains.repulse * (1.0 / sd - 1.0 / rho))
    }

    /// Normalized robot action at `s`. Degenerate points resolve to the
    /// documented tie-breaks: zero at the goal, radially outward (`+x`) at the
    /// obstacle center.
    pub fn robot_action(&self, s: Point2) -> Vector2<f64> {
        let to_goal = self.goal - s;
        let dist = to_goal.norm();
        if dist <= self.gains.arrival_radius {
            return Vector2::zeros();
        }
        let raw = to_goal * (self.gains.attract / dist) + self.barrier(s);
        let n = raw.norm();
        if n > 1e-12 {
            raw / n
        } else {
            // Attraction and repulsion cancel exactly: slide around the obstacle.
            Vector2::new(-to_goal.y, to_goal.x) / dist
        }
    }

    /// Like [`robot_action`](Self::robot_action) but reports degenerate
    /// queries instead of applying the tie-break.
    pub fn checked_action(&self, s: Point2) -> Result<Vector2<f64>> {
        if s.distance(self.goal) <= DEGENERATE_TOL {
            return Err(NgscError::DegenerateQuery { x: s.x, y: s.y, what: "query coincides with the goal" });
        }
        if let Some(obs) = self.obstacle {
            if s.distance(obs.center) <= DEGENERATE_TOL {
                return Err(NgscError::DegenerateQuery {
                    x: s.x,
                    y: s.y,
                    what: "query coincides with the obstacle center",
                });
            }
        }
        Ok(self.robot_action(s))
    }

    pub fn sample_dataset<R: Rng + ?Sized>(
        &self,
        center: Point2,
        radius: f64,
        n: usize,
        rng: &mut R,
    ) -> Vec<(Point2, Vector2<f64>)> {
        sample_field_dataset(self, &self.workspace, center, radius, n, rng)
    }
}

impl ActionField for PolicyField {
    fn action(&self, s: Point2) -> Vector2<f64> {
        self.robot_action(s)
    }
}

/// Pure obstacle-repulsion field `strength * exp(-sd / decay) * grad(sd)`.
/// Used for obstacle-avoidance assistance and for synthetic fit samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepulsionField {
    pub obstacle: Disc,
    pub strength: f64,
    pub decay: f64,
}

impl ActionField for RepulsionField {
    fn action(&self, s: Point2) -> Vector2<f64> {
        let sd = self.obstacle.signed_distance(s);
        self.obstacle.sdf_gradient(s) * (self.strength * (-sd / self.decay).exp())
    }
}

/// Draws `n` states uniformly from the disc around `center` intersected with
/// the workspace and pairs each with the field's action there.
///
/// States come in antithetic pairs `c + d`, `c - d`, so even-order terms of
/// the field cancel out of a local linear fit's slope. A mirror that leaves
/// the workspace is dropped and the pair is completed by a fresh draw.
pub fn sample_field_dataset<F, R>(
    field: &F,
    workspace: &Rect,
    center: Point2,
    radius: f64,
    n: usize,
    rng: &mut R,
) -> Vec<(Point2, Vector2<f64>)>
where
    F: ActionField + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        let r = radius * rng.random::<f64>().sqrt();
        let t = rng.random::<f64>() * std::f64::consts::TAU;
        let d = Vector2::new(r * t.cos(), r * t.sin());
        // A disc centered inside the rectangle always overlaps it; the cap
        // only guards against a center far outside.
        let give_up = tries > 1000 * n.max(1);
        for p in [center + d, center - d] {
            if out.len() < n && (workspace.contains(p) || give_up) {
                let p = workspace.clamp(p);
                out.push((p, field.action(p)));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub state: SimState,
    pub action: Vector2<f64>,
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn min_signed_distance(&self, env: &Environment) -> f64 {
        self.points.iter().map(|p| env.signed_distance(p.state.gripper)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Meters moved per step at unit action.
    pub step_size: f64,
    pub max_steps: usize,
    pub grasp_radius: f64,
    pub place_tolerance: f64,
    pub tick_rate: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { step_size: 0.1 / 30.0, max_steps: 900, grasp_radius: 0.015, place_tolerance: 0.015, tick_rate: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutOutcome {
    pub trajectory: Trajectory,
    pub success: bool,
    pub placed: bool,
    pub steps: usize,
}

/// Follows the pick field until the target object is within grasp radius,
/// then the place field until the place target is reached.
pub fn autonomous_rollout(
    pick: &PolicyField,
    place: &PolicyField,
    env: &Environment,
    s0: SimState,
    cfg: &RolloutConfig,
) -> Result<RolloutOutcome> {
    if !(cfg.step_size > 0.0) {
        return Err(NgscError::InvalidConfig("rollout step size must be positive".into()));
    }
    let target = env.target_object();
    let mut state = s0;
    let mut points = Vec::new();
    let mut placed = false;
    let mut steps = 0;
    let mut collided = env.signed_distance(state.gripper) < 0.0;

    while steps < cfg.max_steps {
        if state.phase == Phase::Pick && state.gripper.distance(target.center) <= cfg.grasp_radius {
            state.phase = Phase::Place;
            state.held_object = Some(target.id);
        }
        if state.phase == Phase::Place && state.gripper.distance(env.place_target) <= cfg.place_tolerance {
            placed = true;
            break;
        }
        let field = match state.phase {
            Phase::Pick => pick,
            Phase::Place => place,
        };
        let action = field.robot_action(state.gripper);
        points.push(TrajectoryPoint { state, action, time: steps as f64 / cfg.tick_rate });
        state.gripper = env.workspace.clamp(state.gripper + action * cfg.step_size);
        collided |= env.signed_distance(state.gripper) < 0.0;
        steps += 1;
    }
    points.push(TrajectoryPoint { state, action: Vector2::zeros(), time: steps as f64 / cfg.tick_rate });

    Ok(RolloutOutcome { trajectory: Trajectory { points }, success: placed && !collided, placed, steps })
}

/// Builds the pick and place fields of an environment and runs a rollout
/// starting at the place target.
pub fn rollout_environment(env: &Environment, gains: FieldGains, cfg: &RolloutConfig) -> Result<RolloutOutcome> {
    let pick = PolicyField::new(env, env.target_object().center, gains);
    let place = PolicyField::new(env, env.place_target, gains);
    autonomous_rollout(&pick, &place, env, SimState::new(env.place_target), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Object, ObjectId};
    use crate::rng::seeded;

    fn env_with_obstacle(obstacle: Point2) -> Environment {
        Environment {
            workspace: Rect::default(),
            objects: vec![Object { id: ObjectId(0), center: Point2::new(0.4, 0.25), radius: 0.02 }],
            obstacle: Disc::new(obstacle, 0.03),
            place_target: Point2::new(0.1, 0.25),
            target_object_id: ObjectId(0),
        }
    }

    /// Central-difference divergence with a 1e-4 stencil.
    fn divergence(field: &PolicyField, p: Point2) -> f64 {
        let h = 1e-4;
        let dx = field.robot_action(Point2::new(p.x + h, p.y)).x - field.robot_action(Point2::new(p.x - h, p.y)).x;
        let dy = field.robot_action(Point2::new(p.x, p.y + h)).y - field.robot_action(Point2::new(p.x, p.y - h)).y;
        (dx + dy) / (2.0 * h)
    }

    fn ring_mean_divergence(field: &PolicyField, c: Point2, r: f64) -> f64 {
        let n = 64;
        (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) / n as f64 * std::f64::consts::TAU;
                divergence(field, Point2::new(c.x + r * t.cos(), c.y + r * t.sin()))
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn pure_attraction_is_unit_toward_goal() {
        let env = env_with_obstacle(Point2::new(0.4, 0.4));
        let field = PolicyField::new(&env, Point2::new(0.3, 0.1), FieldGains::default());
        let a = field.robot_action(Point2::new(0.1, 0.1));
        assert!((a - Vector2::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn goal_is_a_sink_with_zero_action() {
        let env = env_with_obstacle(Point2::new(0.25, 0.25));
        let goal = Point2::new(0.4, 0.25);
        let field = PolicyField::new(&env, goal, FieldGains::default());
        assert_eq!(field.robot_action(goal), Vector2::zeros());
        assert!(field.checked_action(goal).is_err());
        assert!(field.checked_action(env.obstacle.center).is_err());
        let at_center = field.robot_action(env.obstacle.center);
        assert!((at_center.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn obstacle_is_a_source_and_goal_a_sink() {
        let env = env_with_obstacle(Point2::new(0.25, 0.25));
        let gains = FieldGains::default();
        let field = PolicyField::new(&env, Point2::new(0.4, 0.25), gains);
        assert!(ring_mean_divergence(&field, field.goal, 2.0 * gains.arrival_radius) < 0.0);
        assert!(ring_mean_divergence(&field, env.obstacle.center, env.obstacle.radius + 0.002) > 0.0);

        // Just off the obstacle-goal line, inside the influence radius: the
        // action is deflected away from the line.
        let s = Point2::new(0.25 - 0.05, 0.25 + 0.01);
        let a = field.robot_action(s);
        let pure = (field.goal - s).normalize();
        assert!(a.y > pure.y);
    }

    #[test]
    fn action_norm_is_unit_outside_arrival_radius() {
        let env = env_with_obstacle(Point2::new(0.25, 0.25));
        let field = PolicyField::new(&env, Point2::new(0.4, 0.25), FieldGains::default());
        for i in 0..100 {
            for j in 0..100 {
                let s = Point2::new(0.5 * i as f64 / 99.0, 0.5 * j as f64 / 99.0);
                let n = field.robot_action(s).norm();
                if s.distance(field.goal) > field.gains.arrival_radius {
                    assert!((n - 1.0).abs() < 1e-12, "norm {n} at {s:?}");
                } else {
                    assert_eq!(n, 0.0);
                }
            }
        }
    }

    #[test]
    fn dataset_is_contained_and_deterministic() {
        let env = env_with_obstacle(Point2::new(0.25, 0.25));
        let field = PolicyField::new(&env, Point2::new(0.4, 0.25), FieldGains::default());
        let c = Point2::new(0.2, 0.1);
        let a = field.sample_dataset(c, 0.03, 50, &mut seeded(4));
        let b = field.sample_dataset(c, 0.03, 50, &mut seeded(4));
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert!(a.iter().all(|(p, _)| p.distance(c) <= 0.03 + 1e-15));
    }

    #[test]
    fn dataset_mean_matches_linear_field_at_center() {
        let lin = |s: Point2| Vector2::new(0.3 * s.x - 0.2 * s.y + 0.1, 0.5 * s.y + 0.05);
        let c = Point2::new(0.25, 0.25);
        let data = sample_field_dataset(&lin, &Rect::default(), c, 0.03, 20_000, &mut seeded(11));
        let mean = data.iter().fold(Vector2::zeros(), |acc, (_, a)| acc + a) / data.len() as f64;
        assert!((mean - lin(c)).norm() <= 1e-3);
    }

    #[test]
    fn unobstructed_rollout_succeeds_quickly() {
        let mut env = env_with_obstacle(Point2::new(0.25, 0.45));
        env.objects[0].center = Point2::new(0.16, 0.25);
        let out = rollout_environment(&env, FieldGains::default(), &RolloutConfig::default()).unwrap();
        assert!(out.success);
        assert!(out.steps < 50, "steps {}", out.steps);
    }

    #[test]
    fn rollout_steps_respect_step_size() {
        let env = env_with_obstacle(Point2::new(0.25, 0.26));
        let cfg = RolloutConfig::default();
        let out = rollout_environment(&env, FieldGains::default(), &cfg).unwrap();
        for w in out.trajectory.points.windows(2) {
            let d = w[1].state.gripper.distance(w[0].state.gripper);
            assert!(d <= cfg.step_size * w[0].action.norm() + 1e-12);
        }
    }

    #[test]
    fn rollouts_behind_obstacle_never_penetrate() {
        let cfg = RolloutConfig::default();
        for seed in 0..100u64 {
            let mut rng = seeded(seed);
            // Start inside the influence band on the far side of the obstacle.
            let obstacle = Point2::new(0.25, 0.25);
            let angle = rng.random_range(-0.6..0.6f64);
            let env = Environment {
                workspace: Rect::default(),
                objects: vec![Object {
                    id: ObjectId(0),
                    center: Point2::new(0.25 + 0.15 * angle.cos(), 0.25 + 0.15 * angle.sin()),
                    radius: 0.02,
                }],
                obstacle: Disc::new(obstacle, 0.03),
                place_target: Point2::new(0.05, 0.25),
                target_object_id: ObjectId(0),
            };
            let gains = FieldGains::default();
            let start_r = 0.03 + rng.random_range(0.005..gains.influence_radius);
            let start_t = std::f64::consts::PI + rng.random_range(-0.3..0.3f64);
            let s0 = SimState::new(Point2::new(0.25 + start_r * start_t.cos(), 0.25 + start_r * start_t.sin()));
            let pick = PolicyField::new(&env, env.objects[0].center, gains);
            let place = PolicyField::new(&env, env.place_target, gains);
            let out = autonomous_rollout(&pick, &place, &env, s0, &cfg).unwrap();
            assert!(out.trajectory.min_signed_distance(&env) >= 0.0, "seed {seed}");
            assert!(out.placed, "seed {seed}");
        }
    }
}
