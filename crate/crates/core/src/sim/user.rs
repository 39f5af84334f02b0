//! Scripted operator standing in for a human at the joystick.

use nalgebra::{Rotation2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, UserCommand};
use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Phase, Point2, SimState};
use crate::rng::{seeded, SimRng};

/// Source of per-tick operator commands.
pub trait InputSource {
    fn command(&mut self, state: &SimState, env: &Environment, cfg: &ControllerConfig) -> UserCommand;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserProfile {
    /// Std-dev of the heading noise, radians.
    pub direction_noise: f64,
    pub pause_probability: f64,
    /// Idle ticks at episode start and after each phase change.
    pub reaction_delay: u32,
    /// Aim at tangent points of the obstacle inflated by this margin when it
    /// blocks the straight line; `None` heads straight at the target.
    pub obstacle_clearance: Option<f64>,
}

impl Default for UserProfile {
    fn default() -> Self {
        Self::canonical()
    }
}

impl UserProfile {
    /// Version-pinned profile used by the comparative batch.
    pub const fn canonical() -> Self {
        Self { direction_noise: 0.35, pause_probability: 0.05, reaction_delay: 6, obstacle_clearance: Some(0.01) }
    }

    pub const fn perfect() -> Self {
        Self { direction_noise: 0.0, pause_probability: 0.0, reaction_delay: 0, obstacle_clearance: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.direction_noise >= 0.0 && self.direction_noise.is_finite()) {
            return Err(NgscError::InvalidConfig("direction_noise must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.pause_probability) {
            return Err(NgscError::InvalidConfig("pause_probability must lie in [0, 1)".into()));
        }
        if let Some(c) = self.obstacle_clearance {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(NgscError::InvalidConfig("obstacle_clearance must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

pub struct ScriptedUser {
    pub profile: UserProfile,
    rng: SimRng,
    noise: Normal<f64>,
    delay_left: u32,
    last_phase: Option<Phase>,
}

impl ScriptedUser {
    pub fn new(profile: UserProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let noise = Normal::new(0.0, profile.direction_noise)
            .map_err(|e| NgscError::InvalidConfig(format!("direction noise: {e}")))?;
        Ok(Self { profile, rng: seeded(seed), noise, delay_left: 0, last_phase: None })
    }
}

/// Current-phase target position: the target object while picking, the
/// place target while placing.
pub fn phase_target(env: &Environment, state: &SimState) -> Point2 {
    match state.phase {
        Phase::Pick => env.target_object().center,
        Phase::Place => env.place_target,
    }
}

/// Heading toward `target`, detouring around the obstacle inflated by
/// `clearance` when it blocks the straight segment.
pub fn detour_direction(env: &Environment, from: Point2, target: Point2, clearance: f64) -> Vector2<f64> {
    let direct = target - from;
    let dist = direct.norm();
    if dist == 0.0 {
        return Vector2::zeros();
    }
    let goal_dir = direct / dist;
    let c = env.obstacle.center;
    let r = env.obstacle.radius + clearance;
    let to_c = c - from;
    let d = to_c.norm();
    if d <= r {
        // Inside the inflated disc: slide along it toward the target side,
        // or go straight if the target lies away from the obstacle.
        if goal_dir.dot(&to_c) <= 0.0 || d == 0.0 {
            return goal_dir;
        }
        let tangent = Vector2::new(-to_c.y, to_c.x) / d;
        return if tangent.dot(&goal_dir) >= 0.0 { tangent } else { -tangent };
    }
    let along = to_c.dot(&goal_dir);
    let lateral = (to_c - goal_dir * along).norm();
    if along <= 0.0 || along >= dist || lateral >= r || target.distance(c) <= r {
        return goal_dir;
    }
    let half = (r / d).asin();
    let base = to_c / d;
    let left = Rotation2::new(half) * base;
    let right = Rotation2::new(-half) * base;
    if left.dot(&goal_dir) >= right.dot(&goal_dir) {
        left
    } else {
        right
    }
}

/// Scripted command for one tick.
pub fn scripted_user_action(
    user: &mut ScriptedUser,
    s: &SimState,
    env: &Environment,
    cfg: &ControllerConfig,
) -> UserCommand {
    if user.last_phase != Some(s.phase) {
        user.last_phase = Some(s.phase);
        user.delay_left = user.profile.reaction_delay;
    }
    // Draw every tick so the stream does not depend on which branch runs.
    let paused = user.rng.random::<f64>() < user.profile.pause_probability;
    let angle = if user.profile.direction_noise > 0.0 { user.noise.sample(&mut user.rng) } else { 0.0 };

    let target = phase_target(env, s);
    let grasp = s.phase == Phase::Pick && s.gripper.distance(target) <= cfg.grasp_radius;
    if user.delay_left > 0 {
        user.delay_left -= 1;
        return UserCommand { grasp, ..Default::default() };
    }
    if paused {
        return UserCommand { grasp, ..Default::default() };
    }
    let dir = match user.profile.obstacle_clearance {
        Some(c) => detour_direction(env, s.gripper, target, c),
        None => {
            let v = target - s.gripper;
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                Vector2::zeros()
            }
        }
    };
    let translation = if angle != 0.0 { Rotation2::new(angle) * dir } else { dir };
    UserCommand { translation, rotation: 0.0, grasp }
}

impl InputSource for ScriptedUser {
    fn command(&mut self, state: &SimState, env: &Environment, cfg: &ControllerConfig) -> UserCommand {
        scripted_user_action(self, state, env, cfg)
    }
}

/// Replays a fixed command sequence, then zeros.
pub struct CommandSequence {
    commands: std::vec::IntoIter<UserCommand>,
}

impl CommandSequence {
    pub fn new(commands: Vec<UserCommand>) -> Self {
        Self { commands: commands.into_iter() }
    }
}

impl InputSource for CommandSequence {
    fn command(&mut self, _: &SimState, _: &Environment, _: &ControllerConfig) -> UserCommand {
        self.commands.next().unwrap_or_default()
    }
}

impl<F> InputSource for F
where
    F: FnMut(&SimState, &Environment) -> UserCommand,
{
    fn command(&mut self, state: &SimState, env: &Environment, _: &ControllerConfig) -> UserCommand {
        self(state, env)
    }
}
