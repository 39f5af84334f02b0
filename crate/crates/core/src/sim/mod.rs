//! Episode simulation, scripted users, logs, metrics and batches.

pub mod batch;
pub mod episode;
pub mod log;
pub mod metrics;
pub mod user;

pub use batch::{run_batch, BatchReport, BatchSpec, EpisodeResult, ModeSummary};
pub use episode::{run_episode, run_episode_with, Episode, EpisodeSettings};
pub use log::{EndReason, EpisodeHeader, EpisodeLog, Outcome, TickEvent, TickRecord};
pub use metrics::{compute_metrics, Metrics};
pub use user::{scripted_user_action, InputSource, ScriptedUser, UserProfile};
