//! JSON-lines episode logs: one header line, one line per tick, one outcome
//! line. Fields appear in declaration order.

use std::io::{BufRead, Write};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, ControllerMode, UserCommand};
use crate::error::{NgscError, Result};
use crate::geometry::{Environment, ObjectId, SimState};
use crate::natural_gradient::{BeliefVector, GoalId};
use crate::sim::user::UserProfile;

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub version: u32,
    pub seed: u64,
    pub mode: ControllerMode,
    pub tick_rate: f64,
    pub max_ticks: u64,
    pub environment: Environment,
    pub config: ControllerConfig,
    pub user: Option<UserProfile>,
    pub initial_state: SimState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TickEvent {
    Grasped {
        object: ObjectId,
    },
    /// Grasp pressed with no graspable target in range; no effect.
    GraspMissed,
    Collision,
    Placed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    /// State after applying `shared`.
    pub state: SimState,
    pub user: UserCommand,
    pub robot_actions: Vec<(GoalId, Vector2<f64>)>,
    pub beliefs: BeliefVector,
    pub shared: Vector2<f64>,
    /// Row-major `[[a, b], [c, d]]`.
    pub fisher_inv: Option<[[f64; 2]; 2]>,
    pub signed_distance: f64,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<TickEvent>,
}

impl TickRecord {
    pub fn fisher_inv_matrix(&self) -> Option<Matrix2<f64>> {
        self.fisher_inv.map(|m| Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
    }
}

pub fn matrix_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Placed,
    Timeout,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    /// Placed with no tick inside the obstacle.
    pub success: bool,
    pub end_reason: EndReason,
    pub ticks: u64,
    pub collision_ticks: u64,
    pub grasp_misses: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub ticks: Vec<TickRecord>,
    pub outcome: Outcome,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<EpisodeHeader>),
    Tick(TickRecord),
    Outcome(Outcome),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a EpisodeHeader),
    Tick(&'a TickRecord),
    Outcome(&'a Outcome),
}

fn write_line<W: Write>(out: &mut W, line: &LineRef<'_>) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

impl EpisodeLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_line(&mut out, &LineRef::Header(&self.header))?;
        for t in &self.ticks {
            write_line(&mut out, &LineRef::Tick(t))?;
        }
        write_line(&mut out, &LineRef::Outcome(&self.outcome))?;
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses and validates a log; errors name the first offending line
    /// (1-based).
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let corrupt = |line: usize, reason: String| NgscError::CorruptLog { line, reason };
        let mut header = None;
        let mut ticks: Vec<TickRecord> = Vec::new();
        let mut outcome = None;
        let mut last_line = 0;
        for (i, raw) in input.lines().enumerate() {
            let n = i + 1;
            last_line = n;
            let raw = raw.map_err(|e| corrupt(n, e.to_string()))?;
            if raw.trim().is_empty() {
                continue;
            }
            if outcome.is_some() {
                return Err(corrupt(n, "content after outcome".into()));
            }
            match serde_json::from_str::<Line>(&raw).map_err(|e| corrupt(n, e.to_string()))? {
                Line::Header(h) if header.is_none() && n == 1 => {
                    if h.version != LOG_VERSION {
                        return Err(corrupt(n, format!("unsupported log version {}", h.version)));
                    }
                    header = Some(*h);
                }
                Line::Header(_) => return Err(corrupt(n, "header must be the first line and appear once".into())),
                _ if header.is_none() => return Err(corrupt(n, "missing header".into())),
                Line::Tick(t) => {
                    if t.tick != ticks.len() as u64 {
                        return Err(corrupt(n, format!("expected tick {}, found {}", ticks.len(), t.tick)));
                    }
                    ticks.push(t);
                }
                Line::Outcome(o) => {
                    if o.ticks != ticks.len() as u64 {
                        return Err(corrupt(n, format!("outcome counts {} ticks, log has {}", o.ticks, ticks.len())));
                    }
                    outcome = Some(o);
                }
            }
        }
        let header = header.ok_or_else(|| corrupt(1, "missing header".into()))?;
        let outcome = outcome.ok_or_else(|| corrupt(last_line + 1, "missing outcome".into()))?;
        Ok(Self { header, ticks, outcome })
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| NgscError::CorruptLog { line: 0, reason: e.to_string() })?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}
