//! Client facades over the bus: simulator lifecycle handle, observer and
//! supervisor clients, robot building blocks and the Robotino facade.

mod blocks;
mod handle;
mod observer;
mod robotino;

pub use blocks::{Camera, DistanceSensor, Motor, TouchSensor};
pub use handle::{FastScope, Launcher, SimulatorConfig, SimulatorHandle};
pub use observer::{Observer, Supervisor};
pub use robotino::{MovementAction, Robotino, RobotinoAbc, RobotinoReading, ScriptedRobotino};

use thiserror::Error;

use crate::busline::BusError;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("failed to spawn simulator: {0}")]
    SpawnError(String),
    #[error("simulator did not become available within {0:?}")]
    StartTimeout(std::time::Duration),
    #[error("a managed simulator process is already running (pid {0})")]
    AlreadyRunning(u32),
    #[error("broker unreachable: {0}")]
    BusDown(String),
    #[error("failed to set simulation mode: {0}")]
    ModeError(String),
    #[error("enabled sensors have no valid post-reset reading")]
    StaleSensors,
    #[error(transparent)]
    Bus(#[from] BusError),
}

impl ClientError {
    /// True when the simulator should be considered gone (crash or hang),
    /// which is what triggers the pipeline restart policy.
    pub fn is_simulator_loss(&self) -> bool {
        match self {
            ClientError::Bus(e) => {
                matches!(e, BusError::Timeout | BusError::PeerGone | BusError::ConnectionClosed)
                    || e.is_code("PEER_GONE")
                    || e.is_code("TIMEOUT")
                    || e.is_code("NO_SUCH_SERVICE")
            }
            ClientError::StartTimeout(_) => true,
            _ => false,
        }
    }
}
