//! Shared-control policies: direct control, natural-gradient shared control,
//! timid linear blending and obstacle-avoidance-only assistance, plus the
//! distance-based goal belief they share.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Phase, Point2, SimState};
use crate::lwr::AugmentConfig;
use crate::natural_gradient::{
    belief_weighted_inverse, compute_fisher, fisher_ellipse, shared_action, BeliefVector, Ellipse, FisherConfig,
    FisherResult, GoalId,
};
use crate::policy::{FieldGains, PolicyField};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerMode {
    #[serde(rename = "DC")]
    DirectControl,
    #[serde(rename = "NG")]
    NaturalGradient,
    #[serde(rename = "LB")]
    LinearBlend,
    #[serde(rename = "OA")]
    ObstacleAvoidance,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] = [
        ControllerMode::DirectControl,
        ControllerMode::NaturalGradient,
        ControllerMode::LinearBlend,
        ControllerMode::ObstacleAvoidance,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ControllerMode::DirectControl => "DC",
            ControllerMode::NaturalGradient => "NG",
            ControllerMode::LinearBlend => "LB",
            ControllerMode::ObstacleAvoidance => "OA",
        }
    }
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = NgscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" | "direct" | "direct-control" => Ok(ControllerMode::DirectControl),
            "ng" | "natural-gradient" | "ngsc" => Ok(ControllerMode::NaturalGradient),
            "lb" | "linear-blend" => Ok(ControllerMode::LinearBlend),
            "oa" | "obstacle-avoidance" => Ok(ControllerMode::ObstacleAvoidance),
            _ => Err(NgscError::InvalidConfig(format!("unknown controller mode '{s}'"))),
        }
    }
}

/// Fisher eigenvalue floor used by the controllers, 1/m: the tangential
/// curvature of a unit attractor at the 0.5 m workspace scale.
pub const CONTROL_FISHER_FLOOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Gripper speed at unit command, m/s.
    pub max_speed: f64,
    pub tick_rate: f64,
    /// Yaw rate at unit rotation command, rad/s.
    pub max_rotation_speed: f64,
    /// Belief softmax temperature, 1/m.
    pub belief_temperature: f64,
    pub blend_cap: f64,
    /// Minimum top-two belief margin before linear blending assists.
    pub blend_threshold: f64,
    pub grasp_radius: f64,
    pub place_tolerance: f64,
    pub gains: FieldGains,
    pub fisher: FisherConfig,
    /// Repulsion field used by obstacle-avoidance assistance.
    pub avoidance: AugmentConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            max_speed: 0.1,
            tick_rate: 30.0,
            max_rotation_speed: 1.5,
            belief_temperature: 10.0,
            blend_cap: 0.7,
            blend_threshold: 0.3,
            grasp_radius: 0.015,
            place_tolerance: 0.015,
            gains: FieldGains::default(),
            fisher: FisherConfig { floor: CONTROL_FISHER_FLOOR, ..FisherConfig::default() },
            avoidance: AugmentConfig::default(),
        }
    }
}

impl ControllerConfig {
    /// Meters per tick at unit command.
    pub fn step_size(&self) -> f64 {
        self.max_speed / self.tick_rate
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_speed", self.max_speed),
            ("tick_rate", self.tick_rate),
            ("max_rotation_speed", self.max_rotation_speed),
            ("blend_cap", self.blend_cap),
            ("grasp_radius", self.grasp_radius),
            ("place_tolerance", self.place_tolerance),
            ("fisher.floor", self.fisher.floor),
            ("fisher.bandwidth", self.fisher.bandwidth),
            ("fisher.sample_radius", self.fisher.sample_radius),
            ("avoidance.trigger_radius", self.avoidance.trigger_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NgscError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.belief_temperature >= 0.0) {
            return Err(NgscError::InvalidConfig("belief_temperature must be nonnegative".into()));
        }
        if self.blend_cap > 1.0 {
            return Err(NgscError::InvalidConfig("blend_cap must not exceed 1".into()));
        }
        if self.fisher.samples < 3 {
            return Err(NgscError::InvalidConfig("fisher.samples must be at least 3".into()));
        }
        Ok(())
    }
}

/// One tick of operator input: planar command, yaw command and grasp trigger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserCommand {
    pub translation: Vector2<f64>,
    pub rotation: f64,
    pub grasp: bool,
}

impl UserCommand {
    pub fn new(translation: Vector2<f64>) -> Self {
        Self { translation, rotation: 0.0, grasp: false }
    }

    /// Translation clamped to unit norm and rotation to [-1, 1]; non-finite
    /// values become zero.
    pub fn sanitized(mut self) -> Self {
        if !(self.translation.x.is_finite() && self.translation.y.is_finite()) {
            self.translation = Vector2::zeros();
        }
        let n = self.translation.norm();
        // A vector divided by its own norm can land a few ulps above 1; the
        // slack keeps a second pass a no-op.
        if n > 1.0 + 4.0 * f64::EPSILON {
            self.translation /= n;
        }
        self.rotation = if self.rotation.is_finite() { self.rotation.clamp(-1.0, 1.0) } else { 0.0 };
        self
    }
}

/// Goal candidates of the current phase: every object while picking, the
/// place target while placing.
pub fn goal_candidates(env: &Environment, phase: Phase) -> Vec<(GoalId, Point2)> {
    match phase {
        Phase::Pick => env.objects.iter().map(|o| (GoalId::Object(o.id.0), o.center)).collect(),
        Phase::Place => vec![(GoalId::Place, env.place_target)],
    }
}

/// Memoryless distance softmax `b_g ~ exp(-kappa |s - p_g|)`. `_prev` is
/// accepted for interface stability and ignored.
pub fn update_beliefs(
    goals: &[(GoalId, Point2)],
    s: Point2,
    _prev: Option<&BeliefVector>,
    temperature: f64,
) -> BeliefVector {
    let logits: Vec<f64> = goals.iter().map(|(_, p)| -temperature * s.distance(*p)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    BeliefVector { entries: goals.iter().zip(exps).map(|((g, _), e)| (*g, e / total)).collect() }
}

/// Source of per-goal Fisher information.
pub trait FisherEstimator: Send + Sync {
    fn estimate(
        &self,
        env: &Environment,
        field: &PolicyField,
        goal: GoalId,
        s: Point2,
        seed: u64,
    ) -> Result<FisherResult>;
}

/// Local-regression estimator driven by [`FisherConfig`].
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalFisher {
    pub cfg: FisherConfig,
}

impl FisherEstimator for LocalFisher {
    fn estimate(
        &self,
        env: &Environment,
        field: &PolicyField,
        goal: GoalId,
        s: Point2,
        seed: u64,
    ) -> Result<FisherResult> {
        compute_fisher(field, &env.workspace, Some(env), goal, s, &self.cfg, &mut seeded(seed))
    }
}

/// Returns `F = I` for every goal; natural-gradient control then reduces to
/// direct control.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityFisher;

impl FisherEstimator for IdentityFisher {
    fn estimate(&self, _: &Environment, _: &PolicyField, goal: GoalId, s: Point2, _: u64) -> Result<FisherResult> {
        Ok(FisherResult::isotropic(goal, s, 1.0))
    }
}

/// Seed material for stochastic per-tick computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TickSeed {
    pub episode_seed: u64,
    pub tick: u64,
}

impl TickSeed {
    pub fn for_goal(&self, goal: GoalId) -> u64 {
        derive_seed(self.episode_seed, &[self.tick, goal.ordinal()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub beliefs: BeliefVector,
    pub robot_actions: Vec<(GoalId, Vector2<f64>)>,
    pub fisher_inv: Option<Matrix2<f64>>,
    pub ellipse: Option<Ellipse>,
    /// The Fisher pipeline failed this tick and the command passed through.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlStep {
    pub shared: Vector2<f64>,
    pub diagnostics: StepDiagnostics,
}

pub fn step_direct(user: &Vector2<f64>) -> Vector2<f64> {
    *user
}

fn policy_fields(env: &Environment, goals: &[(GoalId, Point2)], gains: FieldGains) -> Vec<(GoalId, PolicyField)> {
    goals.iter().map(|(g, p)| (*g, PolicyField::new(env, *p, gains))).collect()
}

fn base_diagnostics(
    env: &Environment,
    state: &SimState,
    cfg: &ControllerConfig,
) -> (Vec<(GoalId, PolicyField)>, StepDiagnostics) {
    let goals = goal_candidates(env, state.phase);
    let beliefs = update_beliefs(&goals, state.gripper, None, cfg.belief_temperature);
    let fields = policy_fields(env, &goals, cfg.gains);
    let robot_actions = fields.iter().map(|(g, f)| (*g, f.robot_action(state.gripper))).collect();
    (fields, StepDiagnostics { beliefs, robot_actions, fisher_inv: None, ellipse: None, fallback: false })
}

/// Natural-gradient shared action for one tick.
pub fn ngsc_action(
    env: &Environment,
    state: &SimState,
    user: &Vector2<f64>,
    cfg: &ControllerConfig,
    estimator: &dyn FisherEstimator,
    seed: TickSeed,
) -> ControlStep {
    let (fields, mut diagnostics) = base_diagnostics(env, state, cfg);
    let s = state.gripper;
    let results: Result<Vec<FisherResult>> =
        fields.iter().map(|(g, f)| estimator.estimate(env, f, *g, s, seed.for_goal(*g))).collect();
    let f_inv = results.and_then(|rs| belief_weighted_inverse(&rs, &diagnostics.beliefs));
    let shared = match f_inv {
        Ok(f_inv) => {
            diagnostics.fisher_inv = Some(f_inv);
            diagnostics.ellipse = Some(fisher_ellipse(&f_inv, s, 1.0));
            shared_action(&f_inv, user)
        }
        Err(_) => {
            diagnostics.fallback = true;
            *user
        }
    };
    ControlStep { shared, diagnostics }
}

/// Moves the gripper by `step_size * u` (clamped to the workspace) and turns
/// it by the user's rotation command.
pub fn advance_state(
    env: &Environment,
    state: &SimState,
    shared: &Vector2<f64>,
    rotation: f64,
    cfg: &ControllerConfig,
) -> SimState {
    let mut next = *state;
    next.gripper = env.workspace.clamp(state.gripper + shared * cfg.step_size());
    if rotation != 0.0 {
        next = next.with_heading_angle(state.heading_angle() + rotation * cfg.max_rotation_speed / cfg.tick_rate);
    }
    next
}

/// One natural-gradient tick: shared action, next state and diagnostics.
pub fn step_ngsc(
    env: &Environment,
    state: &SimState,
    command: &UserCommand,
    cfg: &ControllerConfig,
    estimator: &dyn FisherEstimator,
    seed: TickSeed,
) -> (Vector2<f64>, SimState, StepDiagnostics) {
    let step = ngsc_action(env, state, &command.translation, cfg, estimator, seed);
    let next = advance_state(env, state, &step.shared, command.rotation, cfg);
    (step.shared, next, step.diagnostics)
}

fn rescale_to(v: Vector2<f64>, speed: f64) -> Vector2<f64> {
    let n = v.norm();
    if n > 1e-12 {
        v * (speed / n)
    } else {
        Vector2::zeros()
    }
}

/// Timid linear blending toward the most likely goal.
pub fn linear_blend_action(
    env: &Environment,
    state: &SimState,
    user: &Vector2<f64>,
    cfg: &ControllerConfig,
) -> ControlStep {
    let (_, diagnostics) = base_diagnostics(env, state, cfg);
    let Some((goal, margin)) = diagnostics.beliefs.top_with_margin() else {
        return ControlStep { shared: *user, diagnostics };
    };
    let alpha = if margin > cfg.blend_threshold { cfg.blend_cap * margin } else { 0.0 };
    let speed = user.norm();
    if alpha == 0.0 || speed == 0.0 {
        return ControlStep { shared: *user, diagnostics };
    }
    let robot =
        diagnostics.robot_actions.iter().find(|(g, _)| *g == goal).map(|(_, a)| *a).unwrap_or_else(Vector2::zeros);
    let shared = rescale_to(user * (1.0 - alpha) + robot * alpha, speed);
    ControlStep { shared, diagnostics }
}

pub fn step_linear_blend(
    env: &Environment,
    state: &SimState,
    user: &Vector2<f64>,
    cfg: &ControllerConfig,
) -> Vector2<f64> {
    linear_blend_action(env, state, user, cfg).shared
}

/// Natural-gradient transform through the Fisher information of the pure
/// obstacle-repulsion field; the command passes through beyond the trigger
/// radius.
pub fn obstacle_avoidance_action(
    env: &Environment,
    state: &SimState,
    user: &Vector2<f64>,
    cfg: &ControllerConfig,
    seed: TickSeed,
) -> ControlStep {
    let (_, mut diagnostics) = base_diagnostics(env, state, cfg);
    let s = state.gripper;
    if env.signed_distance(s) > cfg.avoidance.trigger_radius {
        return ControlStep { shared: *user, diagnostics };
    }
    let field = cfg.avoidance.field(env);
    let fisher_cfg = FisherConfig { augment: None, ..cfg.fisher };
    let mut rng = seeded(derive_seed(seed.episode_seed, &[seed.tick, u64::MAX]));
    match compute_fisher(&field, &env.workspace, None, GoalId::Place, s, &fisher_cfg, &mut rng) {
        Ok(r) => {
            diagnostics.fisher_inv = Some(r.fisher_inv);
            diagnostics.ellipse = Some(fisher_ellipse(&r.fisher_inv, s, 1.0));
            ControlStep { shared: shared_action(&r.fisher_inv, user), diagnostics }
        }
        Err(_) => {
            diagnostics.fallback = true;
            ControlStep { shared: *user, diagnostics }
        }
    }
}

pub fn step_obstacle_avoidance(
    env: &Environment,
    state: &SimState,
    user: &Vector2<f64>,
    cfg: &ControllerConfig,
    seed: TickSeed,
) -> Vector2<f64> {
    obstacle_avoidance_action(env, state, user, cfg, seed).shared
}

/// A configured controller for one episode.
pub struct Controller {
    pub mode: ControllerMode,
    pub cfg: ControllerConfig,
    estimator: Box<dyn FisherEstimator>,
}

impl Controller {
    pub fn new(mode: ControllerMode, cfg: ControllerConfig) -> Self {
        let estimator = Box::new(LocalFisher { cfg: cfg.fisher });
        Self { mode, cfg, estimator }
    }

    pub fn with_estimator(mode: ControllerMode, cfg: ControllerConfig, estimator: Box<dyn FisherEstimator>) -> Self {
        Self { mode, cfg, estimator }
    }

    pub fn act(&self, env: &Environment, state: &SimState, user: &Vector2<f64>, seed: TickSeed) -> ControlStep {
        match self.mode {
            ControllerMode::DirectControl => {
                let (_, diagnostics) = base_diagnostics(env, state, &self.cfg);
                ControlStep { shared: step_direct(user), diagnostics }
            }
            ControllerMode::NaturalGradient => ngsc_action(env, state, user, &self.cfg, self.estimator.as_ref(), seed),
            ControllerMode::LinearBlend => linear_blend_action(env, state, user, &self.cfg),
            ControllerMode::ObstacleAvoidance => obstacle_avoidance_action(env, state, user, &self.cfg, seed),
        }
    }
}
