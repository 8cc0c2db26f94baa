//! Headless simulator: world format, omnidrive kinematics, 2D stepping with
//! collision handling, sensor sampling, and the bus-facing sim process.

pub mod geometry;
pub mod kinematics;
mod server;
mod sim;
mod world;

pub use geometry::{clearance, ray_distance, wrap_angle, Pose2D, Rect};
pub use kinematics::{forward_kinematics, inverse_kinematics, Twist};
pub use server::{FaultPlan, SimServer, SimServerConfig, SteppingRegime};
pub use sim::{
    RobotState, SensorEvent, SensorKind, SimWorld, SimulationMode, CONTACT_EPS, DEPTH_FOV,
    DEPTH_MAX_RANGE, DEPTH_RAYS,
};
pub use world::{RobotSpec, Target, WorldSpec};

use thiserror::Error;

use crate::busline::BusError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("world load failed: {0}")]
    WorldLoad(String),
    #[error("unknown simulation mode {0:?}")]
    BadMode(String),
    #[error("sampling period {period_ms} ms is not a positive multiple of the {timestep_ms} ms timestep")]
    BadPeriod { period_ms: u64, timestep_ms: u64 },
    #[error("bad command: {0}")]
    BadCommand(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

impl SimError {
    /// Wire error code used when a service handler fails.
    pub fn code(&self) -> &str {
        match self {
            SimError::BadMode(_) => "BAD_MODE",
            SimError::BadPeriod { .. } => "BAD_PERIOD",
            SimError::BadCommand(_) => "BAD_COMMAND",
            SimError::Unsupported(_) => "UNSUPPORTED",
            SimError::WorldLoad(_) => "WORLD_ERROR",
            SimError::Bus(e) => e.code(),
        }
    }
}

impl From<SimError> for BusError {
    fn from(e: SimError) -> BusError {
        match e {
            SimError::Bus(b) => b,
            other => BusError::remote(other.code().to_string(), other.to_string()),
        }
    }
}
