//! Read-only and state-altering clients for the supervisor node.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::ClientError;
use crate::busline::{BusClient, NodeName};
use crate::simcore::{Pose2D, SimulationMode};

pub(crate) const CALL_TIMEOUT: Duration = Duration::from_secs(10);

/// Probing methods that do not affect the simulation.
#[derive(Clone)]
pub struct Observer {
    client: BusClient,
    supervisor: NodeName,
}

impl Observer {
    pub fn new(client: BusClient, supervisor: NodeName) -> Observer {
        Observer { client, supervisor }
    }

    fn call(&self, service: &str, payload: Value) -> Result<Value, ClientError> {
        Ok(self.client.call(&self.supervisor, service, payload, CALL_TIMEOUT)?)
    }

    pub fn get_position(&self, robot: &NodeName) -> Result<Pose2D, ClientError> {
        let v = self.call("get_position", json!({"robot": robot.as_str()}))?;
        Ok(Pose2D::new(
            v.get("x").and_then(Value::as_f64).unwrap_or(f64::NAN),
            v.get("y").and_then(Value::as_f64).unwrap_or(f64::NAN),
            v.get("theta").and_then(Value::as_f64).unwrap_or(f64::NAN),
        ))
    }

    pub fn get_sim_time(&self) -> Result<f64, ClientError> {
        let v = self.call("get_sim_time", json!({}))?;
        Ok(v.get("sim_time").and_then(Value::as_f64).unwrap_or(f64::NAN))
    }

    pub fn get_mode(&self) -> Result<SimulationMode, ClientError> {
        let v = self.call("get_mode", json!({}))?;
        let mode = v.get("mode").and_then(Value::as_str).unwrap_or("");
        SimulationMode::parse(mode).map_err(|e| ClientError::ModeError(e.to_string()))
    }

    pub fn ping(&self) -> Result<(), ClientError> {
        self.call("ping", json!({}))?;
        Ok(())
    }
}

/// Altering methods that control the simulation.
#[derive(Clone)]
pub struct Supervisor {
    client: BusClient,
    supervisor: NodeName,
    resets: Arc<AtomicU32>,
}

impl Supervisor {
    pub fn new(client: BusClient, supervisor: NodeName, resets: Arc<AtomicU32>) -> Supervisor {
        Supervisor {
            client,
            supervisor,
            resets,
        }
    }

    fn call(&self, service: &str, payload: Value) -> Result<Value, ClientError> {
        Ok(self.client.call(&self.supervisor, service, payload, CALL_TIMEOUT)?)
    }

    /// Reset the simulation and count it against the owning handle's
    /// resets-since-start budget.
    pub fn reset(&self) -> Result<(), ClientError> {
        self.resets.fetch_add(1, Ordering::Relaxed);
        self.call("reset", json!({}))?;
        Ok(())
    }

    pub fn set_mode(&self, mode: SimulationMode) -> Result<(), ClientError> {
        self.call("set_mode", json!({"mode": mode.as_str()}))
            .map_err(|e| match e {
                ClientError::Bus(b) if b.is_code("BAD_MODE") => ClientError::ModeError(b.to_string()),
                other => other,
            })?;
        Ok(())
    }

    pub fn shutdown(&self) -> Result<(), ClientError> {
        self.call("shutdown", json!({}))?;
        Ok(())
    }

    /// Step the world exactly `steps` basic timesteps (FAST mode only).
    pub fn advance(&self, steps: u64) -> Result<f64, ClientError> {
        let v = self.call("advance", json!({"steps": steps}))?;
        Ok(v.get("sim_time").and_then(Value::as_f64).unwrap_or(f64::NAN))
    }

    /// Choose who drives stepping in FAST mode: the simulator itself
    /// (`driven = false`) or explicit `advance` calls (`driven = true`).
    pub fn set_stepping(&self, driven: bool) -> Result<(), ClientError> {
        let mode = if driven { "driven" } else { "free" };
        self.call("set_stepping", json!({"mode": mode}))?;
        Ok(())
    }
}
