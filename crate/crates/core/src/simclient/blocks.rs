//! Robot building blocks: robot-agnostic facades for one device class each,
//! built from a service call (enable/command) plus a topic subscription.

use serde_json::{json, Value};

use super::observer::CALL_TIMEOUT;
use super::ClientError;
use crate::busline::{BusClient, BusError, NodeName, Subscription};

fn stamped_values(v: &Value) -> Option<(f64, Vec<f64>)> {
    let stamp = v.get("stamp").and_then(Value::as_f64)?;
    let values = v
        .get("values")
        .and_then(Value::as_array)?
        .iter()
        .map(Value::as_f64)
        .collect::<Option<Vec<f64>>>()?;
    Some((stamp, values))
}

fn enable_sensor(
    client: &BusClient,
    node: &NodeName,
    sensor: &str,
    period_ms: u64,
) -> Result<Subscription, ClientError> {
    client.call(
        node,
        "enable_sensor",
        json!({"sensor": sensor, "period_ms": period_ms}),
        CALL_TIMEOUT,
    )?;
    let topic = NodeName::new(format!("{node}/{sensor}"))?;
    Ok(client.subscribe(&topic)?)
}

/// Boolean contact sensor.
pub struct TouchSensor {
    client: BusClient,
    node: NodeName,
    sub: Option<Subscription>,
}

impl TouchSensor {
    pub fn new(client: BusClient, node: NodeName) -> TouchSensor {
        TouchSensor {
            client,
            node,
            sub: None,
        }
    }

    pub fn enable(&mut self, period_ms: u64) -> Result<(), ClientError> {
        self.sub = Some(enable_sensor(&self.client, &self.node, "touch", period_ms)?);
        Ok(())
    }

    /// Latest stamped reading, or None before the first post-enable publish.
    pub fn read(&self) -> Option<(f64, bool)> {
        let v = self.sub.as_ref()?.latest()?;
        let stamp = v.get("stamp").and_then(Value::as_f64)?;
        let value = v.get("value").and_then(Value::as_bool)?;
        Some((stamp, value))
    }

    pub fn invalidate(&self) {
        if let Some(sub) = &self.sub {
            sub.invalidate();
        }
    }
}

/// The infrared ring: distances to the nearest surface per heading.
pub struct DistanceSensor {
    client: BusClient,
    node: NodeName,
    sub: Option<Subscription>,
}

impl DistanceSensor {
    pub fn new(client: BusClient, node: NodeName) -> DistanceSensor {
        DistanceSensor {
            client,
            node,
            sub: None,
        }
    }

    pub fn enable(&mut self, period_ms: u64) -> Result<(), ClientError> {
        self.sub = Some(enable_sensor(&self.client, &self.node, "ir", period_ms)?);
        Ok(())
    }

    pub fn read(&self) -> Option<(f64, Vec<f64>)> {
        stamped_values(&self.sub.as_ref()?.latest()?)
    }

    pub fn invalidate(&self) {
        if let Some(sub) = &self.sub {
            sub.invalidate();
        }
    }
}

/// Range-image camera. Only the depth variant is simulated; enabling the
/// color camera yields UNSUPPORTED from the simulator.
pub struct Camera {
    client: BusClient,
    node: NodeName,
    kind: &'static str,
    sub: Option<Subscription>,
}

impl Camera {
    pub fn depth(client: BusClient, node: NodeName) -> Camera {
        Camera {
            client,
            node,
            kind: "depth",
            sub: None,
        }
    }

    pub fn color(client: BusClient, node: NodeName) -> Camera {
        Camera {
            client,
            node,
            kind: "color",
            sub: None,
        }
    }

    pub fn enable(&mut self, period_ms: u64) -> Result<(), ClientError> {
        self.sub = Some(enable_sensor(&self.client, &self.node, self.kind, period_ms)?);
        Ok(())
    }

    pub fn read(&self) -> Option<(f64, Vec<f64>)> {
        stamped_values(&self.sub.as_ref()?.latest()?)
    }
}

/// One wheel motor; velocity commands are clamped by the simulator to the
/// robot's maximum wheel speed.
pub struct Motor {
    client: BusClient,
    node: NodeName,
    index: usize,
}

impl Motor {
    pub fn new(client: BusClient, node: NodeName, index: usize) -> Motor {
        Motor {
            client,
            node,
            index,
        }
    }

    pub fn set_velocity(&self, value: f64) -> Result<(), ClientError> {
        self.client
            .call(
                &self.node,
                "set_wheel_velocity",
                json!({"index": self.index, "value": value}),
                CALL_TIMEOUT,
            )
            .map_err(BusError::from)?;
        Ok(())
    }
}
