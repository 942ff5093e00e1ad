//! Operator wire protocol: command and state messages, the three control
//! modes, injected link latency and the session server.

mod client;
mod latency;
mod server;
mod session;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::Client;
pub use latency::DelayLine;
pub use server::{serve, ServerConfig, ServerHandle};
pub use session::{LogEntry, Session, SessionConfig};

use crate::executor::{ExecutionEvent, ExecutorStatus, PlanId};
use crate::geometry::{Pose6D, Vec3};
use crate::perception::FrameDescription;
use crate::plan::{ActionSpec, SelectionArea};
use crate::world::{ObjectClass, ObjectInstance};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("websocket: {0}")]
    WebSocket(String),
    #[error("invalid link config: {0}")]
    InvalidLink(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server is busy with another session")]
    Busy,
    #[error("connection closed")]
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cc,
    Pc,
    Tla,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Tla, Mode::Pc, Mode::Cc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cc => "cc",
            Mode::Pc => "pc",
            Mode::Tla => "tla",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cc" => Ok(Mode::Cc),
            "pc" => Ok(Mode::Pc),
            "tla" => Ok(Mode::Tla),
            _ => Err(format!("unknown mode {s}")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NudgeAxis {
    X,
    Y,
    Z,
    Roll,
    Pitch,
    Yaw,
}

impl NudgeAxis {
    pub const ALL: [NudgeAxis; 6] = [
        NudgeAxis::X,
        NudgeAxis::Y,
        NudgeAxis::Z,
        NudgeAxis::Roll,
        NudgeAxis::Pitch,
        NudgeAxis::Yaw,
    ];

    pub fn is_rotation(self) -> bool {
        matches!(self, NudgeAxis::Roll | NudgeAxis::Pitch | NudgeAxis::Yaw)
    }
}

/// End-effector pose after one nudge button press: a world-frame step for
/// the position buttons, an Euler-angle increment for the rotation buttons.
pub fn nudged(pose: &Pose6D, axis: NudgeAxis, positive: bool, step: f64, angle: f64) -> Pose6D {
    let s = if positive { 1.0 } else { -1.0 };
    let mut p = *pose;
    match axis {
        NudgeAxis::X => p.position += Vec3::x() * (s * step),
        NudgeAxis::Y => p.position += Vec3::y() * (s * step),
        NudgeAxis::Z => p.position += Vec3::z() * (s * step),
        NudgeAxis::Roll => p.roll += s * angle,
        NudgeAxis::Pitch => p.pitch += s * angle,
        NudgeAxis::Yaw => p.yaw += s * angle,
    }
    Pose6D::new(p.position, p.yaw, p.pitch, p.roll)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommandBody {
    CartesianGoto { pose: Pose6D },
    CameraNudge { axis: NudgeAxis, positive: bool },
    Grasp,
    Release,
    Reset,
    SingleAction { frame_id: u64, action: ActionSpec },
    SubmitPlan { frame_id: u64, areas: Vec<SelectionArea> },
    /// Cancels the given plan, or the running one when absent.
    Cancel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlanId>,
    },
    Resume,
}

impl CommandBody {
    pub fn name(&self) -> &'static str {
        match self {
            CommandBody::CartesianGoto { .. } => "cartesian_goto",
            CommandBody::CameraNudge { .. } => "camera_nudge",
            CommandBody::Grasp => "grasp",
            CommandBody::Release => "release",
            CommandBody::Reset => "reset",
            CommandBody::SingleAction { .. } => "single_action",
            CommandBody::SubmitPlan { .. } => "submit_plan",
            CommandBody::Cancel { .. } => "cancel",
            CommandBody::Resume => "resume",
        }
    }

    pub fn allowed_in(&self, mode: Mode) -> bool {
        match self {
            CommandBody::CartesianGoto { .. } => mode == Mode::Cc,
            CommandBody::SingleAction { .. } => mode == Mode::Pc,
            CommandBody::SubmitPlan { .. } => mode == Mode::Tla,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMsg {
    pub v: u32,
    pub seq: u64,
    pub mode: Mode,
    pub body: CommandBody,
}

impl CommandMsg {
    pub fn new(seq: u64, mode: Mode, body: CommandBody) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            seq,
            mode,
            body,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    ModeViolation,
    DuplicateSeq,
    RobotBusy,
    SafetyLocked,
    NotLocked,
    NoSuchPlan,
    StaleFrame,
    Grounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorMsg {
    pub fn new(seq: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            seq,
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Done,
    Active,
    Pending,
    Cancelled,
}

/// One action line of the plan sidebar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanViewEntry {
    pub plan: PlanId,
    pub label: String,
    pub status: EntryStatus,
}

/// Rendered geometry of one object, without anything only a close reader sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class: ObjectClass,
    pub pose: Pose6D,
    pub size: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
}

impl From<&ObjectInstance> for SceneObject {
    fn from(o: &ObjectInstance) -> Self {
        Self {
            id: o.id.clone(),
            class: o.class,
            pose: o.pose,
            size: o.size,
            articulation: o.articulation_value(),
            container: o.container.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub sim_time: f64,
    pub frame: FrameDescription,
    pub scene: Vec<SceneObject>,
    pub dirt_cleared: f64,
    pub executor: ExecutorStatus,
    /// The arm or its fingers or tool are in motion.
    #[serde(default)]
    pub moving: bool,
    pub game_plan_view: Vec<PlanViewEntry>,
    /// Last applied command sequence number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack: Option<u64>,
    pub tasks_done: Vec<u8>,
}

impl StateMsg {
    pub fn scene_object(&self, id: &str) -> Option<&SceneObject> {
        self.scene.iter().find(|o| o.id == id)
    }

    pub fn acked(&self, seq: u64) -> bool {
        self.ack.is_some_and(|a| a >= seq)
    }

    /// Executor idle and nothing in motion.
    pub fn settled(&self) -> bool {
        self.executor.state == crate::executor::ExecState::Idle && !self.moving
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State(Box<StateMsg>),
    Error(ErrorMsg),
    Event { event: ExecutionEvent },
    Busy,
}

/// Injected one-way latency and the state publication rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub one_way_delay_ms: u64,
    pub jitter_ms: u64,
    pub state_rate_hz: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            one_way_delay_ms: 0,
            jitter_ms: 0,
            state_rate_hz: 10.0,
        }
    }
}

impl LinkConfig {
    pub fn with_delay(one_way_delay_ms: u64) -> Self {
        Self {
            one_way_delay_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.jitter_ms > self.one_way_delay_ms {
            return Err(ProtocolError::InvalidLink(format!(
                "jitter {} ms exceeds delay {} ms",
                self.jitter_ms, self.one_way_delay_ms
            )));
        }
        if !(self.state_rate_hz > 0.0 && self.state_rate_hz.is_finite()) {
            return Err(ProtocolError::InvalidLink(format!(
                "state rate {} Hz",
                self.state_rate_hz
            )));
        }
        Ok(())
    }

    pub fn state_period_us(&self) -> u64 {
        (1e6 / self.state_rate_hz).round() as u64
    }
}
