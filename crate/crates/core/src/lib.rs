//! Task-level authoring for a simulated tabletop robot.
//!
//! The crate holds the workspace simulation, the simulated camera, the plan
//! compiler that turns on-screen selections into robot primitives, the
//! asynchronous executor, the latency-injecting wire protocol and the study
//! harness with scripted operators.

pub mod executor;
pub mod geometry;
pub mod harness;
pub mod perception;
pub mod plan;
pub mod protocol;
pub mod world;

pub use executor::{
    EventKind, ExecState, ExecutionEvent, Executor, ExecutorError, ExecutorStatus, PlanId,
};
pub use geometry::{normalize_angle, Pose6D, Rect2, Vec2, Vec3};
pub use harness::{
    algorithm1_oracle, autonomy_periods, run_agent, task_score, AutonomyPeriod, HumanLatencyProfile,
    SessionReport, StudyConfig, TaskMonitor,
};
pub use perception::{CameraModel, DetectionMarker, FrameDescription, PerceptionError};
pub use world::{
    ArticulationKind, ArticulationState, GripperState, GripperStatus, ObjectClass,
    ObjectInstance, Physics, World, WorldError, WorkspaceSpec, WorkspaceState,
};
pub use protocol::{
    serve, Client, CommandBody, CommandMsg, ErrorCode, ErrorMsg, LinkConfig, Mode, ServerConfig,
    ServerHandle, ServerMsg, Session, SessionConfig, StateMsg,
};
