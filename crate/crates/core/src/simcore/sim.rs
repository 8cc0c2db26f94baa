//! Kinematic stepping of a loaded world: integration, collision handling and
//! periodic sensor sampling.

use serde_json::{json, Value};

use super::geometry::{clearance, ray_distance, wrap_angle, Pose2D};
use super::kinematics::{forward_kinematics, Twist};
use super::world::{RobotSpec, WorldSpec};
use super::SimError;

/// Number of rays in the depth-camera fan.
pub const DEPTH_RAYS: usize = 16;
/// Field of view of the depth-camera fan, radians.
pub const DEPTH_FOV: f64 = std::f64::consts::FRAC_PI_2;
/// Depth-camera maximum range, meters.
pub const DEPTH_MAX_RANGE: f64 = 2.0;
/// Contact tolerance for the touch flag and non-penetration bound.
pub const CONTACT_EPS: f64 = 1e-9;

/// Global stepping regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    Pause,
    Fast,
}

impl SimulationMode {
    pub fn parse(s: &str) -> Result<SimulationMode, SimError> {
        match s.to_ascii_lowercase().as_str() {
            "pause" => Ok(SimulationMode::Pause),
            "fast" => Ok(SimulationMode::Fast),
            other => Err(SimError::BadMode(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SimulationMode::Pause => "pause",
            SimulationMode::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorKind {
    Ir,
    Touch,
    Depth,
}

impl SensorKind {
    pub fn parse(s: &str) -> Option<SensorKind> {
        match s {
            "ir" => Some(SensorKind::Ir),
            "touch" => Some(SensorKind::Touch),
            "depth" => Some(SensorKind::Depth),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SensorKind::Ir => "ir",
            SensorKind::Touch => "touch",
            SensorKind::Depth => "depth",
        }
    }

    pub fn all() -> [SensorKind; 3] {
        [SensorKind::Ir, SensorKind::Touch, SensorKind::Depth]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SensorChannel {
    enabled: bool,
    period_ms: u64,
    /// Sim time of the last publish since the last reset.
    last_stamp: Option<f64>,
}

/// Live state of one simulated robot.
#[derive(Debug, Clone)]
pub struct RobotState {
    pub pose: Pose2D,
    /// Commanded wheel speeds, clamped to the spec limit.
    pub wheel_speeds: [f64; 3],
    pub touch: bool,
    pub ir: Vec<f64>,
    ir_channel: SensorChannel,
    touch_channel: SensorChannel,
    depth_channel: SensorChannel,
}

impl RobotState {
    fn spawned(spec: &RobotSpec) -> RobotState {
        RobotState {
            pose: spec.spawn,
            wheel_speeds: [0.0; 3],
            touch: false,
            ir: vec![0.0; spec.ir_count],
            ir_channel: SensorChannel::default(),
            touch_channel: SensorChannel::default(),
            depth_channel: SensorChannel::default(),
        }
    }

    fn channel_mut(&mut self, kind: SensorKind) -> &mut SensorChannel {
        match kind {
            SensorKind::Ir => &mut self.ir_channel,
            SensorKind::Touch => &mut self.touch_channel,
            SensorKind::Depth => &mut self.depth_channel,
        }
    }

    fn channel(&self, kind: SensorKind) -> &SensorChannel {
        match kind {
            SensorKind::Ir => &self.ir_channel,
            SensorKind::Touch => &self.touch_channel,
            SensorKind::Depth => &self.depth_channel,
        }
    }

    /// Stamp of the last publish on `kind` since the most recent reset.
    pub fn sensor_stamp(&self, kind: SensorKind) -> Option<f64> {
        self.channel(kind).last_stamp
    }

    pub fn sensor_enabled(&self, kind: SensorKind) -> bool {
        self.channel(kind).enabled
    }

    /// True when every enabled sensor has published since the last reset.
    pub fn sensors_valid(&self) -> bool {
        SensorKind::all().iter().all(|k| {
            let ch = self.channel(*k);
            !ch.enabled || ch.last_stamp.is_some()
        })
    }
}

/// One sensor publication produced by a step.
#[derive(Debug, Clone)]
pub struct SensorEvent {
    pub robot: usize,
    pub kind: SensorKind,
    pub stamp: f64,
    pub payload: Value,
}

/// The stepped world. A single owner mutates it; bus commands are applied
/// between steps by the server loop.
pub struct SimWorld {
    pub spec: WorldSpec,
    pub robots: Vec<RobotState>,
    sim_time_ms: u64,
    pub mode: SimulationMode,
}

impl SimWorld {
    pub fn new(spec: WorldSpec, mode: SimulationMode) -> SimWorld {
        let robots = spec.robots.iter().map(RobotState::spawned).collect();
        SimWorld {
            spec,
            robots,
            sim_time_ms: 0,
            mode,
        }
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time_ms as f64 / 1000.0
    }

    pub fn robot_index(&self, name: &str) -> Option<usize> {
        self.spec.robots.iter().position(|r| r.name.as_str() == name)
    }

    /// Restore spawn poses, zero commands, rewind sim time and invalidate
    /// sensor stamps. Sensor enablement survives the reset.
    pub fn reset(&mut self) {
        for (state, spec) in self.robots.iter_mut().zip(self.spec.robots.iter()) {
            state.pose = spec.spawn;
            state.wheel_speeds = [0.0; 3];
            state.touch = false;
            state.ir = vec![0.0; spec.ir_count];
            for kind in SensorKind::all() {
                state.channel_mut(kind).last_stamp = None;
            }
        }
        self.sim_time_ms = 0;
    }

    pub fn enable_sensor(&mut self, robot: usize, kind: SensorKind, period_ms: u64) -> Result<(), SimError> {
        if period_ms == 0 || period_ms % self.spec.basic_timestep_ms != 0 {
            return Err(SimError::BadPeriod {
                period_ms,
                timestep_ms: self.spec.basic_timestep_ms,
            });
        }
        let ch = self.robots[robot].channel_mut(kind);
        ch.enabled = true;
        ch.period_ms = period_ms;
        Ok(())
    }

    pub fn disable_sensor(&mut self, robot: usize, kind: SensorKind) {
        let ch = self.robots[robot].channel_mut(kind);
        ch.enabled = false;
        ch.last_stamp = None;
    }

    pub fn set_wheel_speed(&mut self, robot: usize, index: usize, value: f64) -> Result<(), SimError> {
        if index >= 3 {
            return Err(SimError::BadCommand(format!("wheel index {index} out of range")));
        }
        let limit = self.spec.robots[robot].max_wheel_speed;
        self.robots[robot].wheel_speeds[index] = value.clamp(-limit, limit);
        Ok(())
    }

    pub fn set_wheel_speeds(&mut self, robot: usize, values: [f64; 3]) {
        let limit = self.spec.robots[robot].max_wheel_speed;
        self.robots[robot].wheel_speeds = values.map(|v| v.clamp(-limit, limit));
    }

    /// Advance one basic timestep and return the sensor events that became
    /// due at the new sim time.
    pub fn step(&mut self) -> Vec<SensorEvent> {
        let dt = self.spec.basic_timestep_ms as f64 / 1000.0;
        for (idx, state) in self.robots.iter_mut().enumerate() {
            let spec = &self.spec.robots[idx];
            let twist = forward_kinematics(state.wheel_speeds, spec);
            step_pose(state, spec, &self.spec, twist, dt);
        }
        self.sim_time_ms += self.spec.basic_timestep_ms;
        self.collect_due_sensors()
    }

    fn collect_due_sensors(&mut self) -> Vec<SensorEvent> {
        let stamp = self.sim_time();
        let now_ms = self.sim_time_ms;
        let mut events = Vec::new();
        for idx in 0..self.robots.len() {
            for kind in SensorKind::all() {
                let due = {
                    let ch = self.robots[idx].channel(kind);
                    ch.enabled && now_ms % ch.period_ms == 0
                };
                if !due {
                    continue;
                }
                let payload = self.sample_sensor(idx, kind, stamp);
                self.robots[idx].channel_mut(kind).last_stamp = Some(stamp);
                events.push(SensorEvent {
                    robot: idx,
                    kind,
                    stamp,
                    payload,
                });
            }
        }
        events
    }

    fn sample_sensor(&mut self, robot: usize, kind: SensorKind, stamp: f64) -> Value {
        let spec = &self.spec.robots[robot];
        let pose = self.robots[robot].pose;
        match kind {
            SensorKind::Ir => {
                let values: Vec<f64> = spec
                    .ir_headings
                    .iter()
                    .map(|h| {
                        ray_distance(
                            &pose,
                            *h,
                            spec.body_radius,
                            spec.ir_max_range,
                            &self.spec.arena,
                            &self.spec.obstacles,
                        )
                    })
                    .collect();
                self.robots[robot].ir = values.clone();
                json!({"stamp": stamp, "values": values})
            }
            SensorKind::Touch => {
                json!({"stamp": stamp, "value": self.robots[robot].touch})
            }
            SensorKind::Depth => {
                let values: Vec<f64> = (0..DEPTH_RAYS)
                    .map(|i| {
                        let heading = -DEPTH_FOV / 2.0 + DEPTH_FOV * i as f64 / (DEPTH_RAYS - 1) as f64;
                        ray_distance(
                            &pose,
                            heading,
                            spec.body_radius,
                            DEPTH_MAX_RANGE,
                            &self.spec.arena,
                            &self.spec.obstacles,
                        )
                    })
                    .collect();
                json!({"stamp": stamp, "values": values})
            }
        }
    }
}

/// Integrate one robot pose over `dt`, stopping at contact on collision.
fn step_pose(state: &mut RobotState, spec: &RobotSpec, world: &WorldSpec, twist: Twist, dt: f64) {
    let theta = state.pose.theta;
    let dtheta = twist.omega * dt;
    // Exact integration of a constant body twist over dt.
    let (dxb, dyb) = if dtheta.abs() < 1e-12 {
        (twist.vx * dt, twist.vy * dt)
    } else {
        (
            (twist.vx * dtheta.sin() + twist.vy * (dtheta.cos() - 1.0)) / twist.omega,
            (twist.vx * (1.0 - dtheta.cos()) + twist.vy * dtheta.sin()) / twist.omega,
        )
    };
    let dxw = theta.cos() * dxb - theta.sin() * dyb;
    let dyw = theta.sin() * dxb + theta.cos() * dyb;

    let clear_at = |s: f64| {
        clearance(
            state.pose.x + s * dxw,
            state.pose.y + s * dyw,
            spec.body_radius,
            &world.arena,
            &world.obstacles,
        )
    };

    let new_theta = wrap_angle(theta + dtheta);
    let end_clearance = clear_at(1.0);
    if end_clearance >= 0.0 {
        state.pose = Pose2D {
            x: state.pose.x + dxw,
            y: state.pose.y + dyw,
            theta: new_theta,
        };
        state.touch = end_clearance <= CONTACT_EPS;
        return;
    }

    // Collision: bisect for the largest collision-free fraction of the move.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    if clear_at(0.0) < 0.0 {
        // Already in (numerical) contact; hold position.
        lo = 0.0;
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if clear_at(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    state.pose = Pose2D {
        x: state.pose.x + lo * dxw,
        y: state.pose.y + lo * dyw,
        theta: new_theta,
    };
    state.touch = true;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::world::WorldSpec;

    fn world() -> WorldSpec {
        WorldSpec::from_json(
            r#"{
            "supervisor_name": "supervisor",
            "arena": {"min_x": -2.0, "min_y": -2.0, "max_x": 2.0, "max_y": 2.0},
            "target": {"x": 1.0, "y": 0.0, "radius": 0.1},
            "robots": [{"name": "robotino", "spawn": {"x": 0.0, "y": 0.0, "theta": 0.0}}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_twist_advances_time_only() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        let before = sim.robots[0].pose;
        sim.step();
        assert_eq!(sim.robots[0].pose, before);
        assert!((sim.sim_time() - 0.032).abs() < 1e-12);
    }

    #[test]
    fn straight_drive_arithmetic() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        let spec = sim.spec.robots[0].clone();
        let wheels = crate::simcore::kinematics::inverse_kinematics(Twist::new(0.1, 0.0, 0.0), &spec);
        sim.set_wheel_speeds(0, wheels);
        sim.step();
        assert!((sim.robots[0].pose.x - 0.0032).abs() < 1e-12);
        assert!(sim.robots[0].pose.y.abs() < 1e-12);
    }

    #[test]
    fn wall_stops_and_touches() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        let spec = sim.spec.robots[0].clone();
        let wheels = crate::simcore::kinematics::inverse_kinematics(Twist::new(1.0, 0.0, 0.0), &spec);
        sim.set_wheel_speeds(0, wheels);
        for _ in 0..100 {
            sim.step();
            let c = clearance(
                sim.robots[0].pose.x,
                sim.robots[0].pose.y,
                spec.body_radius,
                &sim.spec.arena,
                &sim.spec.obstacles,
            );
            assert!(c >= -CONTACT_EPS, "penetration: clearance {c}");
        }
        assert!(sim.robots[0].touch);
        assert!((sim.robots[0].pose.x - (2.0 - spec.body_radius)).abs() < 1e-6);
    }

    #[test]
    fn reset_restores_spawn_and_invalidates_stamps() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        sim.enable_sensor(0, SensorKind::Ir, 32).unwrap();
        sim.set_wheel_speeds(0, [5.0, 5.0, 5.0]);
        let events = sim.step();
        assert_eq!(events.len(), 1);
        assert!(sim.robots[0].sensor_stamp(SensorKind::Ir).is_some());
        sim.reset();
        assert_eq!(sim.robots[0].pose, sim.spec.robots[0].spawn);
        assert_eq!(sim.robots[0].wheel_speeds, [0.0; 3]);
        assert_eq!(sim.sim_time(), 0.0);
        assert!(sim.robots[0].sensor_stamp(SensorKind::Ir).is_none());
        assert!(sim.robots[0].sensor_enabled(SensorKind::Ir));
    }

    #[test]
    fn sensor_period_must_divide() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        assert!(sim.enable_sensor(0, SensorKind::Ir, 64).is_ok());
        assert!(matches!(
            sim.enable_sensor(0, SensorKind::Touch, 48),
            Err(SimError::BadPeriod { .. })
        ));
    }

    #[test]
    fn period_64_publishes_every_second_step() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        sim.enable_sensor(0, SensorKind::Ir, 64).unwrap();
        assert!(sim.step().is_empty());
        assert_eq!(sim.step().len(), 1);
        assert!(sim.step().is_empty());
        assert_eq!(sim.step().len(), 1);
    }

    #[test]
    fn wheel_speed_clamped() {
        let mut sim = SimWorld::new(world(), SimulationMode::Fast);
        sim.set_wheel_speed(0, 0, 1000.0).unwrap();
        assert_eq!(sim.robots[0].wheel_speeds[0], sim.spec.robots[0].max_wheel_speed);
        assert!(sim.set_wheel_speed(0, 3, 1.0).is_err());
    }
}
