//! Natural-gradient shared control for planar pick-and-place teleoperation.
//!
//! The robot's policy field is fitted locally around the gripper, its
//! symmetrized Jacobian serves as a per-goal Fisher information matrix, and
//! the operator's command is transformed by the belief-weighted inverse.

// Parameter guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod fisher_field;
pub mod geometry;
pub mod lwr;
pub mod natural_gradient;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod value;

pub use control::{Controller, ControllerConfig, ControllerMode, UserCommand};
pub use error::{NgscError, Result};
pub use geometry::{Disc, Environment, Object, ObjectId, Phase, Point2, Rect, SamplingConfig, SimState};
pub use natural_gradient::{BeliefVector, Ellipse, FisherConfig, FisherResult, GoalId};
pub use policy::{FieldGains, PolicyField};
pub use protocol::{MessageBody, SessionMessage, PROTOCOL_VERSION};
pub use sim::{EpisodeLog, Metrics, UserProfile};

pub use nalgebra::{Matrix2, Vector2};
