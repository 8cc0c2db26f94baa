//! Python bindings: the move-to-target environment over the in-process
//! simulator, saved-policy inference, the broker, and a few pure helpers.
//!
//! Build with `cargo build -p simrl-py`, then import the produced cdylib as
//! `simrl_py` (see `python/smoke_test.py` for a loader that does this
//! straight out of the target directory).

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use simrl::agents::{self, Mlp};
use simrl::busline::{Broker as RsBroker, BrokerConfig};
use simrl::envkit::{EnvConfig, LocalDriver, MoveToTargetEnv};
use simrl::pipeline::instantiate_world_variants;
use simrl::simclient::MovementAction;
use simrl::simcore::WorldSpec;

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn action_name(action: &MovementAction) -> String {
    serde_json::to_value(action)
        .expect("action serializes")
        .as_str()
        .expect("action serializes to a string")
        .to_string()
}

/// The move-to-target task over the in-process (local) simulator backend.
#[pyclass]
struct Env {
    inner: MoveToTargetEnv<LocalDriver>,
    actions: Vec<MovementAction>,
}

#[pymethods]
impl Env {
    /// `Env(world_path, config_json=None)`: config is the same JSON object
    /// accepted under `"env"` in a session config.
    #[new]
    #[pyo3(signature = (world_path, config_json = None))]
    fn new(world_path: &str, config_json: Option<&str>) -> PyResult<Env> {
        let world = WorldSpec::load(world_path).map_err(value_err)?;
        let config: EnvConfig = match config_json {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => EnvConfig::default(),
        };
        let driver = LocalDriver::new(world.clone(), 0, None);
        let actions = config.action_set.clone();
        let inner = MoveToTargetEnv::new(driver, &world, config).map_err(value_err)?;
        Ok(Env { inner, actions })
    }

    fn seed(&mut self, seed: u64) {
        self.inner.seed(seed);
    }

    /// Start an episode; returns the flattened observation.
    fn reset(&mut self) -> PyResult<Vec<f64>> {
        Ok(self.inner.reset().map_err(runtime_err)?.flatten())
    }

    /// Apply one action; returns
    /// `(observation, reward, terminated, truncated, outcome)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool, bool, String)> {
        let r = self.inner.step(action).map_err(runtime_err)?;
        Ok((
            r.observation.flatten(),
            r.reward,
            r.terminated,
            r.truncated,
            r.outcome.as_str().to_string(),
        ))
    }

    #[getter]
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    /// Action names, index-aligned with the action argument of `step`.
    #[getter]
    fn actions(&self) -> Vec<String> {
        self.actions.iter().map(action_name).collect()
    }
}

/// A trained policy loaded from a checkpoint file.
#[pyclass]
struct Policy {
    mlp: Mlp,
    actions: Vec<MovementAction>,
    obs_layout: Vec<String>,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Policy> {
        let (mlp, actions, obs_layout) =
            agents::load_policy(Path::new(path)).map_err(value_err)?;
        Ok(Policy { mlp, actions, obs_layout })
    }

    /// Greedy action index for one observation.
    fn act(&self, observation: Vec<f64>) -> PyResult<usize> {
        let values = self.mlp.forward(&observation).map_err(value_err)?;
        Ok(agents::dqn::greedy(&values))
    }

    /// Raw network outputs (Q-values or logits).
    fn forward(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        self.mlp.forward(&observation).map_err(value_err)
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.actions.iter().map(action_name).collect()
    }

    #[getter]
    fn obs_layout(&self) -> Vec<String> {
        self.obs_layout.clone()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.mlp.layer_sizes.clone()
    }
}

/// An in-process broker, for wiring external simulator/clients from Python.
#[pyclass]
struct Broker {
    inner: Option<RsBroker>,
    addr: String,
}

#[pymethods]
impl Broker {
    #[new]
    fn new() -> PyResult<Broker> {
        let broker = RsBroker::start(BrokerConfig::default()).map_err(runtime_err)?;
        let addr = broker.addr().to_string();
        Ok(Broker { inner: Some(broker), addr })
    }

    #[getter]
    fn addr(&self) -> &str {
        &self.addr
    }

    fn shutdown(&mut self) {
        if let Some(broker) = self.inner.take() {
            broker.shutdown();
        }
    }
}

/// Discounted returns, right-to-left, matching the trainer's definition.
#[pyfunction]
fn compute_returns(rewards: Vec<f64>, gamma: f64) -> Vec<f64> {
    agents::compute_returns(&rewards, gamma)
}

/// Write `n` world variants with suffixed node names; returns their paths.
#[pyfunction]
fn generate_world_variants(world_path: &str, n: usize, out_dir: &str) -> PyResult<Vec<String>> {
    let paths: Vec<PathBuf> =
        instantiate_world_variants(Path::new(world_path), n, Path::new(out_dir))
            .map_err(value_err)?;
    Ok(paths.iter().map(|p| p.display().to_string()).collect())
}

/// All movement actions understood by the robot, in index order.
#[pyfunction]
fn movement_actions() -> Vec<String> {
    MovementAction::ALL.iter().map(action_name).collect()
}

#[pymodule]
fn simrl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_class::<Broker>()?;
    m.add_function(wrap_pyfunction!(compute_returns, m)?)?;
    m.add_function(wrap_pyfunction!(generate_world_variants, m)?)?;
    m.add_function(wrap_pyfunction!(movement_actions, m)?)?;
    Ok(())
}
