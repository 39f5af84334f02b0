//! `replay`: re-emits a logged episode as protocol messages.

use std::io::Write;
use std::time::{Duration, Instant};

use anyhow::bail;
use ngsc_core::natural_gradient::fisher_ellipse;
use ngsc_core::protocol::{MessageBody, SessionMessage};
use ngsc_core::sim::log::TickRecord;
use ngsc_core::sim::metrics::{Metrics, MetricsAccumulator};
use ngsc_core::EpisodeLog;

/// `state_update` body for a logged tick, with the ellipse centered on the
/// resulting gripper position.
pub fn state_update(record: &TickRecord, metrics: Metrics) -> MessageBody {
    MessageBody::StateUpdate {
        tick: record.tick,
        state: record.state,
        phase: record.state.phase,
        beliefs: record.beliefs.clone(),
        ellipse: record.fisher_inv_matrix().map(|m| fisher_ellipse(&m, record.state.gripper, 1.0)),
        shared: record.shared,
        metrics,
    }
}

/// One `state_update` per tick followed by `episode_end`; metrics are
/// recomputed from the stream.
pub fn replay_messages(log: &EpisodeLog, session: &str) -> Vec<SessionMessage> {
    let h = &log.header;
    let mut acc = MetricsAccumulator::new(&h.environment, h.initial_state.gripper, h.tick_rate);
    let mut out: Vec<SessionMessage> = log
        .ticks
        .iter()
        .map(|t| {
            acc.push(t.state.gripper, t.signed_distance, &t.user.translation, &t.shared);
            SessionMessage::new(session, state_update(t, acc.snapshot()))
        })
        .collect();
    let metrics = (acc.ticks() > 0).then(|| acc.snapshot());
    out.push(SessionMessage::new(session, MessageBody::EpisodeEnd { outcome: log.outcome, metrics, log_path: None }));
    out
}

/// Writes the replay stream as JSON lines, paced at `speed` times the logged
/// tick rate. Returns the number of `state_update` messages.
pub fn replay_to<W: Write>(log: &EpisodeLog, speed: f64, mut out: W) -> anyhow::Result<usize> {
    if !(speed > 0.0 && speed.is_finite()) {
        bail!("speed must be positive, got {speed}");
    }
    let period = Duration::from_secs_f64(1.0 / (log.header.tick_rate * speed));
    let start = Instant::now();
    let messages = replay_messages(log, "replay");
    let ticks = messages.len() - 1;
    for (k, msg) in messages.iter().enumerate() {
        if k > 0 && k <= ticks {
            let due = start + period * k as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        writeln!(out, "{}", msg.to_json())?;
    }
    out.flush()?;
    Ok(ticks)
}
