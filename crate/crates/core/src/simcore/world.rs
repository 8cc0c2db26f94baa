//! Declarative world format: arena, obstacles, target and robots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{clearance, Pose2D, Rect};
use super::SimError;
use crate::busline::NodeName;

fn default_body_radius() -> f64 {
    0.225
}
fn default_wheel_radius() -> f64 {
    0.04
}
fn default_wheel_offset() -> f64 {
    0.135
}
fn default_wheel_angles() -> [f64; 3] {
    [60f64.to_radians(), 180f64.to_radians(), 300f64.to_radians()]
}
fn default_ir_count() -> usize {
    9
}
fn default_ir_max_range() -> f64 {
    0.30
}
fn default_ir_headings() -> Vec<f64> {
    (0..9).map(|i| (i as f64) * 40f64.to_radians()).collect()
}
fn default_max_wheel_speed() -> f64 {
    31.4
}
fn default_timestep() -> u64 {
    32
}

/// One robot: identity, spawn pose and physical constants.
/// Defaults approximate a Robotino-class omnidrive platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub name: NodeName,
    pub spawn: Pose2D,
    #[serde(default = "default_body_radius")]
    pub body_radius: f64,
    #[serde(default = "default_wheel_radius")]
    pub wheel_radius: f64,
    #[serde(default = "default_wheel_offset")]
    pub wheel_offset: f64,
    #[serde(default = "default_wheel_angles")]
    pub wheel_angles: [f64; 3],
    #[serde(default = "default_ir_count")]
    pub ir_count: usize,
    #[serde(default = "default_ir_max_range")]
    pub ir_max_range: f64,
    #[serde(default = "default_ir_headings")]
    pub ir_headings: Vec<f64>,
    #[serde(default = "default_max_wheel_speed")]
    pub max_wheel_speed: f64,
}

impl RobotSpec {
    /// A robot with all physical defaults at the given spawn pose.
    pub fn default_at(name: &str, x: f64, y: f64, theta: f64) -> RobotSpec {
        RobotSpec {
            name: NodeName::new(name).expect("valid robot name"),
            spawn: Pose2D::new(x, y, theta),
            body_radius: default_body_radius(),
            wheel_radius: default_wheel_radius(),
            wheel_offset: default_wheel_offset(),
            wheel_angles: default_wheel_angles(),
            ir_count: default_ir_count(),
            ir_max_range: default_ir_max_range(),
            ir_headings: default_ir_headings(),
            max_wheel_speed: default_max_wheel_speed(),
        }
    }
}

/// Target disc the robots drive to.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Validated world description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "default_timestep")]
    pub basic_timestep_ms: u64,
    pub supervisor_name: NodeName,
    pub arena: Rect,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub target: Target,
    pub robots: Vec<RobotSpec>,
}

impl WorldSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<WorldSpec, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::WorldLoad(format!("{}: {e}", path.display())))?;
        WorldSpec::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<WorldSpec, SimError> {
        let spec: WorldSpec =
            serde_json::from_str(text).map_err(|e| SimError::WorldLoad(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::WorldLoad(m));
        if self.basic_timestep_ms < 1 {
            return fail("basic_timestep_ms must be at least 1".into());
        }
        if !self.arena.is_valid() {
            return fail("arena rectangle is degenerate".into());
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if !ob.is_valid() {
                return fail(format!("obstacle {i} is degenerate"));
            }
        }
        if self.robots.is_empty() {
            return fail("world has no robots".into());
        }
        let mut names: Vec<&NodeName> = self.robots.iter().map(|r| &r.name).collect();
        names.push(&self.supervisor_name);
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                if a == b {
                    return fail(format!("duplicate node name {a}"));
                }
            }
        }
        if self.target.radius <= 0.0 {
            return fail("target radius must be positive".into());
        }
        if !self.arena.contains(self.target.x, self.target.y) {
            return fail("target lies outside the arena".into());
        }
        for ob in &self.obstacles {
            if ob.contains(self.target.x, self.target.y) {
                return fail("target lies inside an obstacle".into());
            }
        }
        for robot in &self.robots {
            for v in [
                robot.body_radius,
                robot.wheel_radius,
                robot.wheel_offset,
                robot.ir_max_range,
                robot.max_wheel_speed,
            ] {
                if !(v > 0.0) {
                    return fail(format!("robot {} has a non-positive physical constant", robot.name));
                }
            }
            if robot.ir_count != robot.ir_headings.len() {
                return fail(format!(
                    "robot {}: ir_count {} does not match {} headings",
                    robot.name,
                    robot.ir_count,
                    robot.ir_headings.len()
                ));
            }
            if clearance(
                robot.spawn.x,
                robot.spawn.y,
                robot.body_radius,
                &self.arena,
                &self.obstacles,
            ) < 0.0
            {
                return fail(format!(
                    "robot {} spawns intersecting an obstacle or arena wall",
                    robot.name
                ));
            }
        }
        Ok(())
    }

    pub fn robot(&self, name: &NodeName) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| &r.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{
            "supervisor_name": "supervisor",
            "arena": {"min_x": -2.0, "min_y": -2.0, "max_x": 2.0, "max_y": 2.0},
            "target": {"x": 1.0, "y": 0.0, "radius": 0.1},
            "robots": [{"name": "robotino", "spawn": {"x": 0.0, "y": 0.0, "theta": 0.0}}]
        }"#
    }

    #[test]
    fn minimal_world_gets_defaults() {
        let w = WorldSpec::from_json(minimal_json()).unwrap();
        assert_eq!(w.basic_timestep_ms, 32);
        assert!(w.obstacles.is_empty());
        let r = &w.robots[0];
        assert_eq!(r.ir_count, 9);
        assert_eq!(r.ir_headings.len(), 9);
        for (i, h) in r.ir_headings.iter().enumerate() {
            assert!((h - (i as f64) * 40f64.to_radians()).abs() < 1e-12);
        }
        assert!((r.body_radius - 0.225).abs() < 1e-12);
    }

    #[test]
    fn spawn_inside_obstacle_rejected() {
        let text = r#"{
            "supervisor_name": "supervisor",
            "arena": {"min_x": -2.0, "min_y": -2.0, "max_x": 2.0, "max_y": 2.0},
            "obstacles": [{"min_x": -0.5, "min_y": -0.5, "max_x": 0.5, "max_y": 0.5}],
            "target": {"x": 1.0, "y": 1.0, "radius": 0.1},
            "robots": [{"name": "robotino", "spawn": {"x": 0.0, "y": 0.0, "theta": 0.0}}]
        }"#;
        let err = WorldSpec::from_json(text).unwrap_err();
        assert!(err.to_string().contains("obstacle"), "{err}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = minimal_json().replace("\"robotino\"", "\"supervisor\"");
        assert!(WorldSpec::from_json(&text).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal_json().replace("\"supervisor_name\"", "\"bogus\": 1, \"supervisor_name\"");
        assert!(WorldSpec::from_json(&text).is_err());
    }
}
