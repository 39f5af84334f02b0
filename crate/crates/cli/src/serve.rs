//! WebSocket session service for live teleoperation.
//!
//! Each connection gets a reader (this task), a writer task fed by a bounded
//! channel, and at most one episode or replay loop. Inputs go through a
//! latest-value slot: the loop reads the most recent command every tick.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::Context;
use futures_util::{SinkExt, StreamExt};
use ngsc_core::geometry::sample_environment;
use ngsc_core::protocol::{ErrorCode, MessageBody, ProtocolError, SessionMessage};
use ngsc_core::rng::{derive_seed, seeded};
use ngsc_core::sim::{EndReason, Episode, EpisodeSettings};
use ngsc_core::{ControllerConfig, ControllerMode, Environment, EpisodeLog, SamplingConfig, UserCommand};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, info, warn};

use crate::replay::{replay_messages, state_update};

/// Outbound frames buffered per client before state updates are dropped.
pub const OUTBOUND_CAPACITY: usize = 64;

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub controller: ControllerConfig,
    pub sampling: SamplingConfig,
    pub max_ticks: u64,
    pub log_dir: PathBuf,
    /// Multiplier on the tick rate; 1 is real time.
    pub speedup: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            sampling: SamplingConfig::default(),
            max_ticks: crate::config::DEFAULT_MAX_TICKS,
            log_dir: PathBuf::from("ngsc-out/sessions"),
            speedup: 1.0,
        }
    }
}

enum Outbound {
    Text(String),
    Close(CloseFrame),
}

#[derive(Default)]
struct InputSlot {
    latest: UserCommand,
    grasp_pending: bool,
}

#[derive(Default)]
struct SessionShared {
    input: Mutex<InputSlot>,
    busy: AtomicBool,
    cancel: AtomicBool,
}

impl SessionShared {
    /// Latest command; a grasp press is delivered to exactly one tick.
    fn take_input(&self) -> UserCommand {
        let mut slot = self.input.lock().expect("input slot poisoned");
        let mut cmd = slot.latest;
        cmd.grasp = std::mem::take(&mut slot.grasp_pending);
        cmd
    }
}

struct Session {
    id: String,
    opts: Arc<ServeOptions>,
    shared: Arc<SessionShared>,
    tx: mpsc::Sender<Outbound>,
    task: Option<JoinHandle<()>>,
    episodes: u64,
}

/// Accepts connections until the listener fails.
pub async fn run_server(listener: TcpListener, opts: ServeOptions) -> anyhow::Result<()> {
    let opts = Arc::new(opts);
    let counter = AtomicU64::new(0);
    info!(addr = %listener.local_addr()?, "serving");
    loop {
        let (stream, peer) = listener.accept().await.context("accepting connection")?;
        let id = format!("s{}", counter.fetch_add(1, Ordering::Relaxed) + 1);
        let opts = opts.clone();
        tokio::spawn(async move {
            debug!(%peer, session = %id, "connected");
            if let Err(e) = handle_connection(stream, id.clone(), opts).await {
                warn!(session = %id, error = %e, "session ended with error");
            }
        });
    }
}

async fn handle_connection(stream: TcpStream, id: String, opts: Arc<ServeOptions>) -> anyhow::Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::channel::<Outbound>(OUTBOUND_CAPACITY);
    let writer = tokio::spawn(async move {
        while let Some(out) = rx.recv().await {
            match out {
                Outbound::Text(t) => sink.send(Message::text(t)).await?,
                Outbound::Close(frame) => {
                    sink.send(Message::Close(Some(frame))).await?;
                    break;
                }
            }
        }
        Ok::<_, tokio_tungstenite::tungstenite::Error>(())
    });

    let mut session = Session { id, opts, shared: Arc::default(), tx, task: None, episodes: 0 };
    while let Some(frame) = source.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                session.send_error(ErrorCode::MalformedMessage, "binary frames are not supported").await;
                continue;
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        match SessionMessage::parse(text.as_str()) {
            Ok(msg) => session.handle(msg.body).await,
            Err(e @ ProtocolError::VersionMismatch { .. }) => {
                session.send_error(ErrorCode::VersionMismatch, e.to_string()).await;
                let frame = CloseFrame { code: CloseCode::Protocol, reason: "protocol version mismatch".into() };
                let _ = session.tx.send(Outbound::Close(frame)).await;
                break;
            }
            Err(e) => session.send_error(ErrorCode::MalformedMessage, e.to_string()).await,
        }
    }

    session.shared.cancel.store(true, Ordering::SeqCst);
    if let Some(task) = session.task.take() {
        let _ = task.await;
    }
    drop(session);
    let _ = writer.await;
    Ok(())
}

impl Session {
    async fn send(&self, body: MessageBody) {
        let _ = self.tx.send(Outbound::Text(SessionMessage::new(&self.id, body).to_json())).await;
    }

    async fn send_error(&self, code: ErrorCode, message: impl Into<String>) {
        self.send(MessageBody::error(code, message)).await;
    }

    async fn handle(&mut self, body: MessageBody) {
        match body {
            MessageBody::Input { .. } => {
                let cmd = body.as_command().expect("input body");
                let mut slot = self.shared.input.lock().expect("input slot poisoned");
                slot.latest = UserCommand { grasp: false, ..cmd };
                slot.grasp_pending |= cmd.grasp;
            }
            MessageBody::SetMode { .. } => {
                if self.shared.busy.load(Ordering::SeqCst) {
                    self.send_error(ErrorCode::ModeLocked, "the controller mode is fixed for the running episode")
                        .await;
                } else {
                    self.send_error(ErrorCode::InvalidRequest, "choose the mode in start_episode").await;
                }
            }
            MessageBody::StartEpisode { mode, seed, environment } => self.start_episode(mode, seed, environment).await,
            MessageBody::RequestReplay { path, speed } => self.start_replay(&path, speed.unwrap_or(1.0)).await,
            other => {
                let kind = serde_json::to_value(&other)
                    .ok()
                    .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(String::from))
                    .unwrap_or_default();
                self.send_error(ErrorCode::InvalidRequest, format!("'{kind}' is a server message")).await;
            }
        }
    }

    fn claim(&self) -> bool {
        self.shared.busy.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok()
    }

    async fn start_episode(&mut self, mode: ControllerMode, seed: Option<u64>, environment: Option<Environment>) {
        if !self.claim() {
            self.send_error(ErrorCode::EpisodeRunning, "an episode or replay is already running").await;
            return;
        }
        self.episodes += 1;
        let seed = seed.unwrap_or_else(|| derive_seed(self.episodes, &[self.id.len() as u64]));
        let env = match environment {
            Some(env) => Ok(env),
            None => sample_environment(&mut seeded(seed), &self.opts.sampling),
        };
        let settings = EpisodeSettings {
            mode,
            controller: self.opts.controller,
            max_ticks: self.opts.max_ticks,
            seed,
            user: None,
        };
        let episode = match env.and_then(|env| Episode::new(env, &settings)) {
            Ok(ep) => ep,
            Err(e) => {
                self.shared.busy.store(false, Ordering::SeqCst);
                self.send_error(ErrorCode::InvalidRequest, e.to_string()).await;
                return;
            }
        };
        *self.shared.input.lock().expect("input slot poisoned") = InputSlot::default();
        self.shared.cancel.store(false, Ordering::SeqCst);
        self.send(MessageBody::EpisodeStarted { mode, seed, environment: episode.environment().clone() }).await;
        if let Some(old) = self.task.take() {
            let _ = old.await;
        }
        let log_path = self.opts.log_dir.join(format!("{}-episode{}.jsonl", self.id, self.episodes));
        self.task = Some(tokio::spawn(episode_loop(
            episode,
            self.shared.clone(),
            self.tx.clone(),
            self.id.clone(),
            self.opts.speedup,
            log_path,
        )));
    }

    async fn start_replay(&mut self, path: &str, speed: f64) {
        if !(speed > 0.0 && speed.is_finite()) {
            self.send_error(ErrorCode::InvalidRequest, "replay speed must be positive").await;
            return;
        }
        if !self.claim() {
            self.send_error(ErrorCode::EpisodeRunning, "an episode or replay is already running").await;
            return;
        }
        let log = match resolve_log_path(&self.opts.log_dir, path).and_then(|p| Ok(EpisodeLog::read_file(&p)?)) {
            Ok(log) => log,
            Err(e) => {
                self.shared.busy.store(false, Ordering::SeqCst);
                self.send_error(ErrorCode::ReplayFailed, e.to_string()).await;
                return;
            }
        };
        self.shared.cancel.store(false, Ordering::SeqCst);
        if let Some(old) = self.task.take() {
            let _ = old.await;
        }
        let period = tick_period(log.header.tick_rate, speed * self.opts.speedup);
        let messages = replay_messages(&log, &self.id);
        let shared = self.shared.clone();
        let tx = self.tx.clone();
        self.task = Some(tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
            let last = messages.len() - 1;
            for (k, msg) in messages.into_iter().enumerate() {
                let text = Outbound::Text(msg.to_json());
                if k == last {
                    shared.busy.store(false, Ordering::SeqCst);
                    let _ = tx.send(text).await;
                    break;
                }
                interval.tick().await;
                if shared.cancel.load(Ordering::SeqCst) {
                    shared.busy.store(false, Ordering::SeqCst);
                    return;
                }
                let _ = tx.try_send(text);
            }
        }));
    }
}

fn tick_period(tick_rate: f64, speedup: f64) -> Duration {
    Duration::from_secs_f64(1.0 / (tick_rate * speedup))
}

/// Replays are restricted to files inside the session log directory.
fn resolve_log_path(log_dir: &Path, requested: &str) -> anyhow::Result<PathBuf> {
    let dir = log_dir.canonicalize().with_context(|| format!("log directory {}", log_dir.display()))?;
    let candidate = Path::new(requested);
    let joined = if candidate.is_absolute() { candidate.to_path_buf() } else { dir.join(candidate) };
    let resolved = joined.canonicalize().with_context(|| format!("log {requested}"))?;
    if !resolved.starts_with(&dir) {
        anyhow::bail!("log {requested} is outside the log directory");
    }
    Ok(resolved)
}

async fn episode_loop(
    mut episode: Episode,
    shared: Arc<SessionShared>,
    tx: mpsc::Sender<Outbound>,
    session: String,
    speedup: f64,
    log_path: PathBuf,
) {
    let mut interval = tokio::time::interval(tick_period(episode.config().tick_rate, speedup));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    interval.tick().await;
    while episode.outcome().is_none() {
        interval.tick().await;
        if shared.cancel.load(Ordering::SeqCst) {
            episode.finish(EndReason::Aborted);
            break;
        }
        let record = match episode.step(shared.take_input()) {
            Ok(r) => r.clone(),
            Err(e) => {
                warn!(%session, error = %e, "episode step failed");
                episode.finish(EndReason::Aborted);
                break;
            }
        };
        let update = SessionMessage::new(&session, state_update(&record, episode.metrics_so_far()));
        // Best effort: a slow client loses updates, never ticks.
        let _ = tx.try_send(Outbound::Text(update.to_json()));
    }
    let metrics = (episode.tick() > 0).then(|| episode.metrics_so_far());
    let log = episode.into_log();
    let saved = persist(&log, &log_path);
    if let Err(e) = &saved {
        warn!(%session, error = %e, "could not persist episode log");
    }
    shared.busy.store(false, Ordering::SeqCst);
    let end = MessageBody::EpisodeEnd {
        outcome: log.outcome,
        metrics,
        log_path: saved.ok().map(|p| p.display().to_string()),
    };
    let _ = tx.send(Outbound::Text(SessionMessage::new(&session, end).to_json())).await;
}

fn persist(log: &EpisodeLog, path: &Path) -> anyhow::Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    log.write_jsonl(std::io::BufWriter::new(file))?;
    Ok(path.to_path_buf())
}
