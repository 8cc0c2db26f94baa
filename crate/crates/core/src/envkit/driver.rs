//! Simulation drivers behind the environment: the full bus-backed stack and
//! an in-process stand-in with identical semantics.

use std::time::{Duration, Instant};

use super::EnvError;
use crate::simclient::{
    ClientError, MovementAction, Observer, Robotino, RobotinoAbc, RobotinoReading, SimulatorHandle,
    Supervisor,
};
use crate::simcore::{inverse_kinematics, Pose2D, SensorKind, SimWorld, SimulationMode, WorldSpec};

/// What the environment needs from a simulation: lifecycle-scoped stepping,
/// resets, action application and stamped sensor readings.
pub trait SimDriver {
    /// Reset the simulation and invalidate any buffered readings.
    fn reset(&mut self) -> Result<(), EnvError>;
    /// Step exactly `steps` basic timesteps.
    fn advance(&mut self, steps: u32) -> Result<(), EnvError>;
    fn apply_action(&mut self, action: MovementAction) -> Result<(), EnvError>;
    /// Reading aligned with the last advance boundary; None while any
    /// enabled sensor has no valid post-reset value.
    fn observe(&mut self) -> Result<Option<RobotinoReading>, EnvError>;
    fn position(&mut self) -> Result<Pose2D, EnvError>;
    /// Enter/leave a FAST scope. Nesting keeps FAST until the outermost exit.
    fn enter_fast(&mut self) -> Result<(), EnvError>;
    fn exit_fast(&mut self);
}

/// Driver over the real stack: simulator handle + supervisor + Robotino.
pub struct BusDriver {
    handle: SimulatorHandle,
    supervisor: Supervisor,
    observer: Observer,
    robotino: Robotino,
    period_ms: u64,
    last_boundary: f64,
    scopes: Vec<crate::simclient::FastScope>,
}

impl BusDriver {
    pub fn new(
        handle: SimulatorHandle,
        world: &WorldSpec,
        robot_index: usize,
        period_ms: Option<u64>,
    ) -> Result<BusDriver, EnvError> {
        let spec = world
            .robots
            .get(robot_index)
            .ok_or_else(|| EnvError::BadConfig(format!("world has no robot {robot_index}")))?
            .clone();
        let bus = handle.bus().map_err(EnvError::from)?;
        Ok(BusDriver {
            supervisor: handle.supervisor()?,
            observer: handle.observer()?,
            robotino: Robotino::new(bus, spec),
            period_ms: period_ms.unwrap_or(world.basic_timestep_ms),
            last_boundary: 0.0,
            scopes: Vec::new(),
            handle,
        })
    }

    pub fn handle(&self) -> &SimulatorHandle {
        &self.handle
    }

    /// Re-apply per-process simulator state (sensor enablement, driven
    /// stepping). Needed after every reset since the process may have been
    /// restarted in between.
    fn rearm(&mut self) -> Result<(), EnvError> {
        self.supervisor.set_stepping(true)?;
        self.robotino.enable_sensors(self.period_ms)?;
        Ok(())
    }
}

impl SimDriver for BusDriver {
    fn reset(&mut self) -> Result<(), EnvError> {
        self.supervisor.reset()?;
        self.robotino.invalidate_readings();
        self.last_boundary = 0.0;
        self.rearm()?;
        Ok(())
    }

    fn advance(&mut self, steps: u32) -> Result<(), EnvError> {
        self.last_boundary = self.supervisor.advance(steps as u64)?;
        Ok(())
    }

    fn apply_action(&mut self, action: MovementAction) -> Result<(), EnvError> {
        self.robotino.apply_action(action)?;
        Ok(())
    }

    fn observe(&mut self) -> Result<Option<RobotinoReading>, EnvError> {
        // Publishes ride a different connection than the advance reply, so
        // wait until the stamps catch up with the step boundary.
        let deadline = Instant::now() + Duration::from_secs(2);
        let want = self.last_boundary - 1e-9;
        loop {
            match self.robotino.observe() {
                Ok(reading) => {
                    if reading.ir_stamp >= want && reading.touch_stamp >= want {
                        return Ok(Some(reading));
                    }
                }
                Err(ClientError::StaleSensors) => {}
                Err(e) => return Err(e.into()),
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    fn position(&mut self) -> Result<Pose2D, EnvError> {
        Ok(self.observer.get_position(self.robotino.node())?)
    }

    fn enter_fast(&mut self) -> Result<(), EnvError> {
        self.scopes.push(self.handle.fast_scope()?);
        Ok(())
    }

    fn exit_fast(&mut self) {
        self.scopes.pop();
    }
}

/// In-process driver owning the stepped world directly; no bus, no process.
/// Semantics match the bus driver step for step.
pub struct LocalDriver {
    pub sim: SimWorld,
    robot: usize,
    period_ms: u64,
}

impl LocalDriver {
    pub fn new(world: WorldSpec, robot: usize, period_ms: Option<u64>) -> LocalDriver {
        let period_ms = period_ms.unwrap_or(world.basic_timestep_ms);
        LocalDriver {
            sim: SimWorld::new(world, SimulationMode::Pause),
            robot,
            period_ms,
        }
    }
}

impl SimDriver for LocalDriver {
    fn reset(&mut self) -> Result<(), EnvError> {
        self.sim.reset();
        for kind in [SensorKind::Ir, SensorKind::Touch] {
            self.sim
                .enable_sensor(self.robot, kind, self.period_ms)
                .map_err(|e| EnvError::BadConfig(e.to_string()))?;
        }
        Ok(())
    }

    fn advance(&mut self, steps: u32) -> Result<(), EnvError> {
        for _ in 0..steps {
            self.sim.step();
        }
        Ok(())
    }

    fn apply_action(&mut self, action: MovementAction) -> Result<(), EnvError> {
        let wheels = inverse_kinematics(action.twist(), &self.sim.spec.robots[self.robot]);
        self.sim.set_wheel_speeds(self.robot, wheels);
        Ok(())
    }

    fn observe(&mut self) -> Result<Option<RobotinoReading>, EnvError> {
        let state = &self.sim.robots[self.robot];
        let (Some(ir_stamp), Some(touch_stamp)) = (
            state.sensor_stamp(SensorKind::Ir),
            state.sensor_stamp(SensorKind::Touch),
        ) else {
            return Ok(None);
        };
        Ok(Some(RobotinoReading {
            ir: state.ir.clone(),
            touch: state.touch,
            ir_stamp,
            touch_stamp,
        }))
    }

    fn position(&mut self) -> Result<Pose2D, EnvError> {
        Ok(self.sim.robots[self.robot].pose)
    }

    fn enter_fast(&mut self) -> Result<(), EnvError> {
        self.sim.mode = SimulationMode::Fast;
        Ok(())
    }

    fn exit_fast(&mut self) {
        self.sim.mode = SimulationMode::Pause;
    }
}
