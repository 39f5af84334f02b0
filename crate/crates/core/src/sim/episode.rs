//! Fixed-timestep pick-and-place episodes.

use serde::{Deserialize, Serialize};

use crate::control::{advance_state, Controller, ControllerConfig, ControllerMode, TickSeed, UserCommand};
use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Phase, SimState};
use crate::sim::log::{matrix_rows, EndReason, EpisodeHeader, EpisodeLog, Outcome, TickEvent, TickRecord, LOG_VERSION};
use crate::sim::metrics::{Metrics, MetricsAccumulator};
use crate::sim::user::{InputSource, UserProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSettings {
    pub mode: ControllerMode,
    pub controller: ControllerConfig,
    pub max_ticks: u64,
    pub seed: u64,
    /// Recorded in the log header when a scripted user drives the episode.
    pub user: Option<UserProfile>,
}

impl EpisodeSettings {
    pub fn new(mode: ControllerMode, seed: u64) -> Self {
        Self { mode, controller: ControllerConfig::default(), max_ticks: 1800, seed, user: None }
    }
}

/// A running episode, advanced one tick at a time.
pub struct Episode {
    env: Environment,
    controller: Controller,
    header: EpisodeHeader,
    state: SimState,
    ticks: Vec<TickRecord>,
    metrics: MetricsAccumulator,
    collision_ticks: u64,
    grasp_misses: u64,
    outcome: Option<Outcome>,
}

impl Episode {
    pub fn new(env: Environment, settings: &EpisodeSettings) -> Result<Self> {
        let controller = Controller::new(settings.mode, settings.controller);
        Self::with_controller(env, settings, controller)
    }

    pub fn with_controller(env: Environment, settings: &EpisodeSettings, controller: Controller) -> Result<Self> {
        env.validate()?;
        settings.controller.validate()?;
        if settings.max_ticks == 0 {
            return Err(NgscError::InvalidConfig("max_ticks must be positive".into()));
        }
        let state = SimState::new(env.place_target);
        let header = EpisodeHeader {
            version: LOG_VERSION,
            seed: settings.seed,
            mode: settings.mode,
            tick_rate: settings.controller.tick_rate,
            max_ticks: settings.max_ticks,
            environment: env.clone(),
            config: settings.controller,
            user: settings.user,
            initial_state: state,
        };
        let metrics = MetricsAccumulator::new(&env, state.gripper, settings.controller.tick_rate);
        Ok(Self {
            env,
            controller,
            header,
            state,
            ticks: Vec::new(),
            metrics,
            collision_ticks: 0,
            grasp_misses: 0,
            outcome: None,
        })
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.controller.cfg
    }

    pub fn mode(&self) -> ControllerMode {
        self.controller.mode
    }

    pub fn tick(&self) -> u64 {
        self.ticks.len() as u64
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn metrics_so_far(&self) -> Metrics {
        self.metrics.snapshot()
    }

    pub fn last_record(&self) -> Option<&TickRecord> {
        self.ticks.last()
    }

    /// Applies one command. Grasping is resolved before motion; the episode
    /// ends when the held object reaches the place target or at `max_ticks`.
    pub fn step(&mut self, command: UserCommand) -> Result<&TickRecord> {
        if self.outcome.is_some() {
            return Err(NgscError::InvalidConfig("episode already finished".into()));
        }
        let cfg = self.controller.cfg;
        let command = command.sanitized();
        let tick = self.tick();
        let mut events = Vec::new();

        let mut state = self.state;
        if command.grasp && state.phase == Phase::Pick {
            let target = self.env.target_object();
            if state.gripper.distance(target.center) <= cfg.grasp_radius {
                state.phase = Phase::Place;
                state.held_object = Some(target.id);
                events.push(TickEvent::Grasped { object: target.id });
            } else {
                self.grasp_misses += 1;
                events.push(TickEvent::GraspMissed);
            }
        }

        let seed = TickSeed { episode_seed: self.header.seed, tick };
        let step = self.controller.act(&self.env, &state, &command.translation, seed);
        let next = advance_state(&self.env, &state, &step.shared, command.rotation, &cfg);
        let sd = self.env.signed_distance(next.gripper);
        if sd < 0.0 {
            self.collision_ticks += 1;
            events.push(TickEvent::Collision);
        }
        let placed = next.phase == Phase::Place && next.gripper.distance(self.env.place_target) <= cfg.place_tolerance;
        if placed {
            events.push(TickEvent::Placed);
        }

        self.metrics.push(next.gripper, sd, &command.translation, &step.shared);
        self.state = next;
        let d = step.diagnostics;
        self.ticks.push(TickRecord {
            tick,
            state: next,
            user: command,
            robot_actions: d.robot_actions,
            beliefs: d.beliefs,
            shared: step.shared,
            fisher_inv: d.fisher_inv.as_ref().map(matrix_rows),
            signed_distance: sd,
            fallback: d.fallback,
            events,
        });

        if placed {
            self.finish(EndReason::Placed);
        } else if self.tick() >= self.header.max_ticks {
            self.finish(EndReason::Timeout);
        }
        Ok(self.ticks.last().expect("just pushed"))
    }

    /// Ends the episode; no-op when already finished.
    pub fn finish(&mut self, reason: EndReason) {
        if self.outcome.is_none() {
            self.outcome = Some(Outcome {
                success: reason == EndReason::Placed && self.collision_ticks == 0,
                end_reason: reason,
                ticks: self.tick(),
                collision_ticks: self.collision_ticks,
                grasp_misses: self.grasp_misses,
            });
        }
    }

    /// The complete log; aborts the episode first if it is still running.
    pub fn into_log(mut self) -> EpisodeLog {
        self.finish(EndReason::Aborted);
        EpisodeLog { header: self.header, ticks: self.ticks, outcome: self.outcome.expect("finished above") }
    }
}

/// Runs an episode to completion on the simulated clock.
pub fn run_episode(env: &Environment, settings: &EpisodeSettings, input: &mut dyn InputSource) -> Result<EpisodeLog> {
    let controller = Controller::new(settings.mode, settings.controller);
    run_episode_with(env, settings, controller, input)
}

pub fn run_episode_with(
    env: &Environment,
    settings: &EpisodeSettings,
    controller: Controller,
    input: &mut dyn InputSource,
) -> Result<EpisodeLog> {
    let mut episode = Episode::with_controller(env.clone(), settings, controller)?;
    while episode.outcome().is_none() {
        let command = input.command(episode.state(), episode.environment(), episode.config());
        episode.step(command)?;
    }
    Ok(episode.into_log())
}
