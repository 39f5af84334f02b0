//! Versioned JSON messages exchanged with live teleoperation clients.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerMode, UserCommand};
use crate::geometry::{Environment, Phase, SimState};
use crate::natural_gradient::{BeliefVector, Ellipse};
use crate::sim::log::Outcome;
use crate::sim::metrics::Metrics;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMessage {
    pub version: u32,
    pub session: String,
    #[serde(flatten)]
    pub body: MessageBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageBody {
    // server -> client
    StateUpdate {
        tick: u64,
        state: SimState,
        phase: Phase,
        beliefs: BeliefVector,
        ellipse: Option<Ellipse>,
        shared: Vector2<f64>,
        metrics: Metrics,
    },
    EpisodeStarted {
        mode: ControllerMode,
        seed: u64,
        environment: Environment,
    },
    EpisodeEnd {
        outcome: Outcome,
        metrics: Option<Metrics>,
        log_path: Option<String>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    // client -> server
    Input {
        translation: Vector2<f64>,
        #[serde(default)]
        rotation: f64,
        #[serde(default)]
        grasp: bool,
    },
    SetMode {
        mode: ControllerMode,
    },
    StartEpisode {
        mode: ControllerMode,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        environment: Option<Environment>,
    },
    RequestReplay {
        path: String,
        #[serde(default)]
        speed: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedMessage,
    VersionMismatch,
    ModeLocked,
    NoEpisode,
    EpisodeRunning,
    InvalidRequest,
    ReplayFailed,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol version {got} is not supported (expected {PROTOCOL_VERSION})")]
    VersionMismatch { got: u64 },
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl SessionMessage {
    pub fn new(session: impl Into<String>, body: MessageBody) -> Self {
        Self { version: PROTOCOL_VERSION, session: session.into(), body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    /// Decodes a text frame. The version is checked before the body so a
    /// newer client gets a version error rather than a parse error. Input
    /// commands are clamped to unit norm.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == PROTOCOL_VERSION as u64 => {}
            Some(v) => return Err(ProtocolError::VersionMismatch { got: v }),
            None => return Err(ProtocolError::Malformed("missing numeric 'version'".into())),
        }
        let mut msg: SessionMessage =
            serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if let MessageBody::Input { translation, rotation, grasp } = &mut msg.body {
            let c = UserCommand { translation: *translation, rotation: *rotation, grasp: *grasp }.sanitized();
            *translation = c.translation;
            *rotation = c.rotation;
        }
        Ok(msg)
    }
}

impl MessageBody {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        MessageBody::Error { code, message: message.into() }
    }

    pub fn as_command(&self) -> Option<UserCommand> {
        match self {
            MessageBody::Input { translation, rotation, grasp } => {
                Some(UserCommand { translation: *translation, rotation: *rotation, grasp: *grasp })
            }
            _ => None,
        }
    }
}
