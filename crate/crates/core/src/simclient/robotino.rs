//! Robot-agnostic interface and the simulated-Robotino facade behind it.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::observer::CALL_TIMEOUT;
use super::{ClientError, DistanceSensor, TouchSensor};
use crate::busline::{BusClient, NodeName};
use crate::simcore::{inverse_kinematics, RobotSpec, Twist};

/// Linear speed of the compass-direction actions, m/s.
pub const ACTION_LINEAR_SPEED: f64 = 0.2;
/// Angular speed of the turn actions, rad/s.
pub const ACTION_ANGULAR_SPEED: f64 = 1.0;

/// Discrete movement actions with a stable dense integer mapping from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MovementAction {
    Stop,
    Forward,
    Backward,
    Left,
    Right,
    ForwardLeft,
    ForwardRight,
    BackwardLeft,
    BackwardRight,
    TurnLeft,
    TurnRight,
}

impl MovementAction {
    pub const ALL: [MovementAction; 11] = [
        MovementAction::Stop,
        MovementAction::Forward,
        MovementAction::Backward,
        MovementAction::Left,
        MovementAction::Right,
        MovementAction::ForwardLeft,
        MovementAction::ForwardRight,
        MovementAction::BackwardLeft,
        MovementAction::BackwardRight,
        MovementAction::TurnLeft,
        MovementAction::TurnRight,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|a| a == self).unwrap()
    }

    pub fn from_index(index: usize) -> Option<MovementAction> {
        Self::ALL.get(index).copied()
    }

    /// Body twist realized by this action. Diagonals are normalized to the
    /// same linear speed as the straight directions.
    pub fn twist(&self) -> Twist {
        let v = ACTION_LINEAR_SPEED;
        let d = v / std::f64::consts::SQRT_2;
        let w = ACTION_ANGULAR_SPEED;
        match self {
            MovementAction::Stop => Twist::zero(),
            MovementAction::Forward => Twist::new(v, 0.0, 0.0),
            MovementAction::Backward => Twist::new(-v, 0.0, 0.0),
            MovementAction::Left => Twist::new(0.0, v, 0.0),
            MovementAction::Right => Twist::new(0.0, -v, 0.0),
            MovementAction::ForwardLeft => Twist::new(d, d, 0.0),
            MovementAction::ForwardRight => Twist::new(d, -d, 0.0),
            MovementAction::BackwardLeft => Twist::new(-d, d, 0.0),
            MovementAction::BackwardRight => Twist::new(-d, -d, 0.0),
            MovementAction::TurnLeft => Twist::new(0.0, 0.0, w),
            MovementAction::TurnRight => Twist::new(0.0, 0.0, -w),
        }
    }
}

/// Snapshot of the robot's sensors with per-sensor sim-time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotinoReading {
    pub ir: Vec<f64>,
    pub touch: bool,
    pub ir_stamp: f64,
    pub touch_stamp: f64,
}

/// Robot-agnostic interface; the environment layer depends only on this,
/// so a scripted in-memory implementation can stand in for the bus-backed
/// facade (or, eventually, real hardware).
pub trait RobotinoAbc {
    fn apply_action(&mut self, action: MovementAction) -> Result<(), ClientError>;
    /// Latest assembled reading; STALE_SENSORS while any enabled sensor has
    /// no valid post-reset value.
    fn observe(&mut self) -> Result<RobotinoReading, ClientError>;
    /// Forget buffered readings, e.g. right after a simulation reset.
    fn invalidate_readings(&mut self);
}

/// Bus-backed Robotino facade over the robot node's services and topics.
pub struct Robotino {
    client: BusClient,
    node: NodeName,
    spec: RobotSpec,
    ir: DistanceSensor,
    touch: TouchSensor,
}

impl Robotino {
    pub fn new(client: BusClient, spec: RobotSpec) -> Robotino {
        let node = spec.name.clone();
        Robotino {
            ir: DistanceSensor::new(client.clone(), node.clone()),
            touch: TouchSensor::new(client.clone(), node.clone()),
            client,
            node,
            spec,
        }
    }

    /// Enable the IR ring and touch sensor with the given sampling period.
    pub fn enable_sensors(&mut self, period_ms: u64) -> Result<(), ClientError> {
        self.ir.enable(period_ms)?;
        self.touch.enable(period_ms)?;
        Ok(())
    }

    pub fn spec(&self) -> &RobotSpec {
        &self.spec
    }

    pub fn node(&self) -> &NodeName {
        &self.node
    }

    pub fn set_wheel_velocities(&self, values: [f64; 3]) -> Result<(), ClientError> {
        self.client.call(
            &self.node,
            "set_wheel_velocities",
            json!({"values": values.to_vec()}),
            CALL_TIMEOUT,
        )?;
        Ok(())
    }
}

impl RobotinoAbc for Robotino {
    fn apply_action(&mut self, action: MovementAction) -> Result<(), ClientError> {
        let wheels = inverse_kinematics(action.twist(), &self.spec);
        self.set_wheel_velocities(wheels)
    }

    fn observe(&mut self) -> Result<RobotinoReading, ClientError> {
        let (ir_stamp, ir) = self.ir.read().ok_or(ClientError::StaleSensors)?;
        let (touch_stamp, touch) = self.touch.read().ok_or(ClientError::StaleSensors)?;
        Ok(RobotinoReading {
            ir,
            touch,
            ir_stamp,
            touch_stamp,
        })
    }

    fn invalidate_readings(&mut self) {
        self.ir.invalidate();
        self.touch.invalidate();
    }
}

/// In-memory scripted implementation for tests: plays back queued readings
/// and records applied actions.
#[derive(Default)]
pub struct ScriptedRobotino {
    pub applied: Vec<MovementAction>,
    pub readings: std::collections::VecDeque<RobotinoReading>,
    pub current: Option<RobotinoReading>,
}

impl RobotinoAbc for ScriptedRobotino {
    fn apply_action(&mut self, action: MovementAction) -> Result<(), ClientError> {
        self.applied.push(action);
        Ok(())
    }

    fn observe(&mut self) -> Result<RobotinoReading, ClientError> {
        if let Some(next) = self.readings.pop_front() {
            self.current = Some(next);
        }
        self.current.clone().ok_or(ClientError::StaleSensors)
    }

    fn invalidate_readings(&mut self) {
        self.current = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_stable_index_mapping() {
        assert_eq!(MovementAction::Stop.index(), 0);
        assert_eq!(MovementAction::TurnRight.index(), 10);
        for (i, a) in MovementAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(MovementAction::from_index(i), Some(*a));
        }
        assert_eq!(MovementAction::from_index(11), None);
    }

    #[test]
    fn stop_is_zero_twist() {
        assert_eq!(MovementAction::Stop.twist(), Twist::zero());
    }

    #[test]
    fn diagonals_have_unit_linear_speed() {
        for a in [
            MovementAction::ForwardLeft,
            MovementAction::ForwardRight,
            MovementAction::BackwardLeft,
            MovementAction::BackwardRight,
        ] {
            let t = a.twist();
            let speed = (t.vx * t.vx + t.vy * t.vy).sqrt();
            assert!((speed - ACTION_LINEAR_SPEED).abs() < 1e-12);
        }
    }
}
