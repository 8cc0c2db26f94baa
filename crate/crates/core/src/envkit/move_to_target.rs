//! The "move to a given target position and stop there" environment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::driver::SimDriver;
use super::render::render_grid;
use super::reward::{reward_dense, reward_terminal};
use super::{EnvConfig, EnvError, Observation, Outcome, RewardMode, StepResult};
use crate::simclient::MovementAction;
use crate::simcore::{clearance, Pose2D, Rect, WorldSpec};

/// Registered environment identifier.
pub const ENV_ID: &str = "MoveToTargetEnv-v0";

const VALIDITY_STEPS: u32 = 100;

pub struct MoveToTargetEnv<D: SimDriver> {
    driver: D,
    config: EnvConfig,
    arena: Rect,
    obstacles: Vec<Rect>,
    world_target: (f64, f64),
    target: (f64, f64),
    target_margin: f64,
    step_count: u32,
    prev_dist: f64,
    last_pose: Option<Pose2D>,
    ready: bool,
    closed: bool,
    rng: ChaCha8Rng,
}

impl<D: SimDriver> MoveToTargetEnv<D> {
    /// Construct by environment id, mirroring a gym-style registry.
    pub fn make(id: &str, driver: D, world: &WorldSpec, config: EnvConfig) -> Result<Self, EnvError> {
        if id != ENV_ID {
            return Err(EnvError::BadConfig(format!("unknown environment id {id:?}")));
        }
        Self::new(driver, world, config)
    }

    pub fn new(driver: D, world: &WorldSpec, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let target = (world.target.x, world.target.y);
        Ok(MoveToTargetEnv {
            driver,
            config,
            arena: world.arena,
            obstacles: world.obstacles.clone(),
            world_target: target,
            target,
            target_margin: world.target.radius,
            step_count: 0,
            prev_dist: 0.0,
            last_pose: None,
            ready: false,
            closed: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn observation_dim(&self) -> usize {
        if self.config.include_target {
            15
        } else {
            13
        }
    }

    pub fn action_count(&self) -> usize {
        self.config.action_set.len()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn target(&self) -> (f64, f64) {
        self.target
    }

    pub fn driver_mut(&mut self) -> &mut D {
        &mut self.driver
    }

    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        if self.closed {
            return Err(EnvError::Closed);
        }
        self.driver.enter_fast()?;
        let result = self.reset_inner();
        self.driver.exit_fast();
        result
    }

    fn reset_inner(&mut self) -> Result<Observation, EnvError> {
        self.driver.reset()?;
        self.target = if self.config.randomize_target {
            self.sample_target()?
        } else {
            self.world_target
        };
        // Run until every enabled sensor has a valid post-reset value.
        let mut reading = None;
        for _ in 0..VALIDITY_STEPS {
            self.driver.advance(1)?;
            if let Some(r) = self.driver.observe()? {
                reading = Some(r);
                break;
            }
        }
        let reading = reading.ok_or(EnvError::ValidityTimeout(VALIDITY_STEPS))?;
        let pose = self.driver.position()?;
        self.prev_dist = pose.distance_to(self.target.0, self.target.1);
        self.step_count = 0;
        self.ready = true;
        self.last_pose = Some(pose);
        Ok(Observation {
            ir: reading.ir,
            touch: reading.touch,
            pose,
            target: self.config.include_target.then_some(self.target),
        })
    }

    fn sample_target(&mut self) -> Result<(f64, f64), EnvError> {
        let region = self.config.target_region.unwrap_or(self.arena);
        for _ in 0..100 {
            let x = self.rng.gen_range(region.min_x..region.max_x);
            let y = self.rng.gen_range(region.min_y..region.max_y);
            if clearance(x, y, self.target_margin, &self.arena, &self.obstacles) >= 0.0 {
                return Ok((x, y));
            }
        }
        Err(EnvError::BadConfig(
            "could not sample a free target position".into(),
        ))
    }

    pub fn step(&mut self, action_index: usize) -> Result<StepResult, EnvError> {
        if self.closed {
            return Err(EnvError::Closed);
        }
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        let action = *self
            .config
            .action_set
            .get(action_index)
            .ok_or(EnvError::OutOfRange {
                index: action_index,
                len: self.config.action_set.len(),
            })?;
        self.driver.enter_fast()?;
        let result = self.step_inner(action);
        self.driver.exit_fast();
        result
    }

    fn step_inner(&mut self, action: MovementAction) -> Result<StepResult, EnvError> {
        self.driver.apply_action(action)?;
        self.driver.advance(self.config.steps_per_action)?;
        let reading = self
            .driver
            .observe()?
            .ok_or_else(|| EnvError::SimulatorLost("sensor readings stopped arriving".into()))?;
        let pose = self.driver.position()?;
        self.step_count += 1;
        let new_dist = pose.distance_to(self.target.0, self.target.1);

        let at_target = new_dist <= self.config.solve_radius;
        let stopped = !self.config.solve_requires_stop || action == MovementAction::Stop;
        let outcome = if reading.touch {
            Outcome::Collision
        } else if at_target && stopped {
            Outcome::Solved
        } else if self.step_count >= self.config.max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        let reward = match self.config.reward_mode {
            RewardMode::Dense => reward_dense(self.prev_dist, new_dist, outcome),
            RewardMode::Terminal => reward_terminal(outcome),
        };
        self.prev_dist = new_dist;
        self.last_pose = Some(pose);
        let terminated = matches!(outcome, Outcome::Solved | Outcome::Collision);
        let truncated = outcome == Outcome::Timeout;
        if terminated || truncated {
            self.ready = false;
        }
        Ok(StepResult {
            observation: Observation {
                ir: reading.ir,
                touch: reading.touch,
                pose,
                target: self.config.include_target.then_some(self.target),
            },
            reward,
            terminated,
            truncated,
            outcome,
        })
    }

    /// Top-down snapshot of the last observed state; pure, no simulator
    /// interaction.
    pub fn render(&self) -> String {
        render_grid(
            &self.arena,
            &self.obstacles,
            self.last_pose.as_ref(),
            Some(self.target),
        )
    }

    /// Release the environment. Idempotent; the simulator lifecycle belongs
    /// to the handle, not to the environment.
    pub fn close(&mut self) {
        self.closed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envkit::driver::LocalDriver;
    use crate::simclient::{ClientError, RobotinoAbc, RobotinoReading, ScriptedRobotino};

    fn easy_world() -> WorldSpec {
        WorldSpec::from_json(
            r#"{
            "supervisor_name": "supervisor",
            "arena": {"min_x": -1.5, "min_y": -1.5, "max_x": 1.5, "max_y": 1.5},
            "target": {"x": 0.5, "y": 0.0, "radius": 0.1},
            "robots": [{"name": "robotino", "spawn": {"x": 0.0, "y": 0.0, "theta": 0.0}}]
        }"#,
        )
        .unwrap()
    }

    fn easy_env(config: EnvConfig) -> MoveToTargetEnv<LocalDriver> {
        let world = easy_world();
        let driver = LocalDriver::new(world.clone(), 0, None);
        MoveToTargetEnv::new(driver, &world, config).unwrap()
    }

    fn forward_stop_config() -> EnvConfig {
        EnvConfig {
            action_set: vec![MovementAction::Stop, MovementAction::Forward],
            ..EnvConfig::default()
        }
    }

    #[test]
    fn reset_returns_spawn_pose() {
        let mut env = easy_env(EnvConfig::default());
        let obs = env.reset().unwrap();
        assert!(obs.pose.x.abs() < 1e-6);
        assert!(obs.pose.y.abs() < 1e-6);
        assert_eq!(obs.flatten().len(), 15);
        let obs2 = env.reset().unwrap();
        assert_eq!(obs.flatten(), obs2.flatten());
    }

    #[test]
    fn forward_then_stop_solves() {
        let mut env = easy_env(forward_stop_config());
        env.reset().unwrap();
        // 0.0512 m per env step at 0.2 m/s over 8 x 32 ms.
        let mut solved = false;
        for _ in 0..env.config().max_steps {
            let dist = env.prev_dist;
            let action = if dist <= env.config().solve_radius { 0 } else { 1 };
            let result = env.step(action).unwrap();
            if result.outcome == Outcome::Solved {
                assert!(result.terminated);
                assert!(!result.truncated);
                solved = true;
                break;
            }
            assert_eq!(result.outcome, Outcome::Running);
        }
        assert!(solved, "scripted forward-then-stop policy must solve");
    }

    #[test]
    fn stop_forever_times_out_at_step_limit() {
        let mut env = easy_env(forward_stop_config());
        env.reset().unwrap();
        for i in 1..=200u32 {
            let result = env.step(0).unwrap();
            if i < 200 {
                assert_eq!(result.outcome, Outcome::Running);
            } else {
                assert_eq!(result.outcome, Outcome::Timeout);
                assert!(result.truncated);
                assert!(!result.terminated);
            }
        }
        assert!(matches!(env.step(0), Err(EnvError::NotReset)));
    }

    #[test]
    fn driving_into_wall_collides() {
        let mut env = easy_env(EnvConfig {
            action_set: vec![MovementAction::Backward],
            solve_requires_stop: false,
            ..EnvConfig::default()
        });
        env.reset().unwrap();
        let mut collided = false;
        for _ in 0..200 {
            let result = env.step(0).unwrap();
            if result.outcome == Outcome::Collision {
                assert!(result.terminated);
                assert!(result.reward < -9.0);
                collided = true;
                break;
            }
        }
        assert!(collided);
    }

    #[test]
    fn terminal_mode_episode_sum_equals_final_reward() {
        let mut env = easy_env(EnvConfig {
            reward_mode: RewardMode::Terminal,
            ..forward_stop_config()
        });
        env.reset().unwrap();
        let mut total = 0.0;
        let mut last = Outcome::Running;
        for _ in 0..200 {
            let dist = env.prev_dist;
            let action = if dist <= env.config().solve_radius { 0 } else { 1 };
            let result = env.step(action).unwrap();
            total += result.reward;
            last = result.outcome;
            if result.terminated || result.truncated {
                break;
            }
        }
        assert_eq!(last, Outcome::Solved);
        assert!((total - reward_terminal(last)).abs() < 1e-12);
    }

    #[test]
    fn observation_layout_without_target() {
        let mut env = easy_env(EnvConfig {
            include_target: false,
            ..EnvConfig::default()
        });
        let obs = env.reset().unwrap();
        assert_eq!(obs.flatten().len(), 13);
        assert_eq!(env.observation_dim(), 13);
    }

    #[test]
    fn close_semantics() {
        let mut env = easy_env(EnvConfig::default());
        env.reset().unwrap();
        env.close();
        env.close();
        assert!(matches!(env.step(0), Err(EnvError::Closed)));
        assert!(matches!(env.reset(), Err(EnvError::Closed)));
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut env = easy_env(forward_stop_config());
        env.reset().unwrap();
        assert!(matches!(env.step(2), Err(EnvError::OutOfRange { .. })));
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut env = easy_env(EnvConfig::default());
            env.reset().unwrap();
            let mut trace = Vec::new();
            for i in 0..50usize {
                let result = env.step(i % env.action_count()).unwrap();
                trace.push(result.observation.flatten());
                if result.terminated || result.truncated {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    /// The environment layer must work against the robot-agnostic interface
    /// alone: a scripted fake with no bus and no simulator.
    struct FakeDriver {
        robot: ScriptedRobotino,
        pose: Pose2D,
    }

    impl SimDriver for FakeDriver {
        fn reset(&mut self) -> Result<(), EnvError> {
            self.robot.invalidate_readings();
            self.pose = Pose2D::new(0.0, 0.0, 0.0);
            Ok(())
        }
        fn advance(&mut self, _steps: u32) -> Result<(), EnvError> {
            Ok(())
        }
        fn apply_action(&mut self, action: MovementAction) -> Result<(), EnvError> {
            let t = action.twist();
            self.pose = Pose2D::new(self.pose.x + t.vx, self.pose.y + t.vy, self.pose.theta);
            self.robot.apply_action(action)?;
            Ok(())
        }
        fn observe(&mut self) -> Result<Option<RobotinoReading>, EnvError> {
            match self.robot.observe() {
                Ok(r) => Ok(Some(r)),
                Err(ClientError::StaleSensors) => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
        fn position(&mut self) -> Result<Pose2D, EnvError> {
            Ok(self.pose)
        }
        fn enter_fast(&mut self) -> Result<(), EnvError> {
            Ok(())
        }
        fn exit_fast(&mut self) {}
    }

    #[test]
    fn runs_against_scripted_robot_interface() {
        let fresh = |stamp: f64| RobotinoReading {
            ir: vec![0.3; 9],
            touch: false,
            ir_stamp: stamp,
            touch_stamp: stamp,
        };
        let mut robot = ScriptedRobotino::default();
        for i in 0..64 {
            robot.readings.push_back(fresh(i as f64));
        }
        let world = easy_world();
        let driver = FakeDriver {
            robot,
            pose: Pose2D::new(0.0, 0.0, 0.0),
        };
        let mut env = MoveToTargetEnv::make(ENV_ID, driver, &world, EnvConfig::default()).unwrap();
        env.reset().unwrap();
        let result = env.step(MovementAction::Forward.index()).unwrap();
        assert_eq!(result.observation.ir.len(), 9);
        assert_eq!(
            env.driver_mut().robot.applied.last(),
            Some(&MovementAction::Forward)
        );
    }
}
