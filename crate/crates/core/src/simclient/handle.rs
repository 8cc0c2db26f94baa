//! Simulator lifecycle facade: start, stop, restart, availability and
//! FAST/PAUSE mode scoping.

use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::observer::{Observer, Supervisor};
use super::ClientError;
use crate::busline::{BusClient, NodeName};
use crate::simcore::SimulationMode;

/// Command template for spawning the simulator process. Each argument may
/// contain the placeholders `{world}` and `{broker}`.
#[derive(Debug, Clone)]
pub struct Launcher {
    pub argv: Vec<String>,
}

impl Launcher {
    pub fn new(argv: Vec<String>) -> Launcher {
        Launcher { argv }
    }

    /// Launch the harness's own binary as the simulator.
    pub fn self_sim(extra_args: &[String]) -> Launcher {
        let exe = std::env::current_exe()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|_| "simrl".to_string());
        let mut argv = vec![
            exe,
            "sim".into(),
            "--broker".into(),
            "{broker}".into(),
            "--world".into(),
            "{world}".into(),
        ];
        argv.extend(extra_args.iter().cloned());
        Launcher { argv }
    }

    fn render(&self, world: &str, broker: &str) -> Vec<String> {
        self.argv
            .iter()
            .map(|a| a.replace("{world}", world).replace("{broker}", broker))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimulatorConfig {
    pub supervisor_name: NodeName,
    pub world_path: PathBuf,
    pub broker: std::net::SocketAddr,
    pub launcher: Launcher,
    pub availability_timeout: Duration,
}

impl SimulatorConfig {
    pub fn new(
        supervisor_name: NodeName,
        world_path: impl Into<PathBuf>,
        broker: std::net::SocketAddr,
        launcher: Launcher,
    ) -> SimulatorConfig {
        SimulatorConfig {
            supervisor_name,
            world_path: world_path.into(),
            broker,
            launcher,
            availability_timeout: Duration::from_secs(15),
        }
    }
}

struct Inner {
    config: SimulatorConfig,
    bus: Mutex<Option<BusClient>>,
    child: Mutex<Option<Child>>,
    fast_depth: AtomicUsize,
    resets_since_start: Arc<AtomicU32>,
}

/// Facade managing at most one simulator process. Availability is defined
/// solely by supervisor-node presence on the bus, never by local process
/// bookkeeping.
#[derive(Clone)]
pub struct SimulatorHandle {
    inner: Arc<Inner>,
}

const STOP_GRACE: Duration = Duration::from_secs(5);

impl SimulatorHandle {
    pub fn new(config: SimulatorConfig) -> SimulatorHandle {
        SimulatorHandle {
            inner: Arc::new(Inner {
                config,
                bus: Mutex::new(None),
                child: Mutex::new(None),
                fast_depth: AtomicUsize::new(0),
                resets_since_start: Arc::new(AtomicU32::new(0)),
            }),
        }
    }

    /// Shared connection to the broker, reconnecting if it was lost.
    pub fn bus(&self) -> Result<BusClient, ClientError> {
        let mut guard = self.inner.bus.lock().unwrap();
        if let Some(client) = guard.as_ref() {
            if !client.is_closed() {
                return Ok(client.clone());
            }
        }
        let client = BusClient::connect(self.inner.config.broker)
            .map_err(|e| ClientError::BusDown(e.to_string()))?;
        *guard = Some(client.clone());
        Ok(client)
    }

    pub fn supervisor_name(&self) -> &NodeName {
        &self.inner.config.supervisor_name
    }

    pub fn observer(&self) -> Result<Observer, ClientError> {
        Ok(Observer::new(self.bus()?, self.inner.config.supervisor_name.clone()))
    }

    pub fn supervisor(&self) -> Result<Supervisor, ClientError> {
        Ok(Supervisor::new(
            self.bus()?,
            self.inner.config.supervisor_name.clone(),
            Arc::clone(&self.inner.resets_since_start),
        ))
    }

    /// Supervisor resets issued since this handle last (re)started the sim.
    pub fn resets_since_start(&self) -> u32 {
        self.inner.resets_since_start.load(Ordering::Relaxed)
    }

    /// Pid of the managed child, if one is running.
    pub fn child_pid(&self) -> Option<u32> {
        self.inner.child.lock().unwrap().as_ref().map(Child::id)
    }

    /// True iff the supervisor node is currently registered on the bus.
    pub fn available(&self) -> Result<bool, ClientError> {
        let bus = self.bus()?;
        bus.lookup(&self.inner.config.supervisor_name)
            .map_err(|e| ClientError::BusDown(e.to_string()))
    }

    /// Spawn the simulator and block until it is available on the bus.
    pub fn start(&self) -> Result<(), ClientError> {
        {
            let mut child_guard = self.inner.child.lock().unwrap();
            if let Some(child) = child_guard.as_mut() {
                match child.try_wait() {
                    Ok(None) => return Err(ClientError::AlreadyRunning(child.id())),
                    _ => {
                        *child_guard = None;
                    }
                }
            }
            let argv = self.inner.config.launcher.render(
                &self.inner.config.world_path.display().to_string(),
                &self.inner.config.broker.to_string(),
            );
            if argv.is_empty() {
                return Err(ClientError::SpawnError("empty launcher command".into()));
            }
            let child = Command::new(&argv[0])
                .args(&argv[1..])
                .stdin(Stdio::null())
                .spawn()
                .map_err(|e| ClientError::SpawnError(format!("{}: {e}", argv[0])))?;
            *child_guard = Some(child);
        }
        self.inner.resets_since_start.store(0, Ordering::Relaxed);

        let deadline = Instant::now() + self.inner.config.availability_timeout;
        loop {
            if matches!(self.available(), Ok(true)) {
                return Ok(());
            }
            // A child that already exited will never become available.
            if let Some(child) = self.inner.child.lock().unwrap().as_mut() {
                if let Ok(Some(status)) = child.try_wait() {
                    self.reap();
                    return Err(ClientError::SpawnError(format!(
                        "simulator exited during startup with {status}"
                    )));
                }
            }
            if Instant::now() >= deadline {
                self.kill_child();
                return Err(ClientError::StartTimeout(self.inner.config.availability_timeout));
            }
            std::thread::sleep(Duration::from_millis(25));
        }
    }

    /// Controlled stop: supervisor shutdown, then kill after a grace period.
    /// Idempotent; never fails outward.
    pub fn stop(&self) {
        if matches!(self.available(), Ok(true)) {
            if let Ok(supervisor) = self.supervisor() {
                let _ = supervisor.shutdown();
            }
        }
        let deadline = Instant::now() + STOP_GRACE;
        loop {
            let exited = {
                let mut guard = self.inner.child.lock().unwrap();
                match guard.as_mut() {
                    None => true,
                    Some(child) => matches!(child.try_wait(), Ok(Some(_))),
                }
            };
            if exited {
                break;
            }
            if Instant::now() >= deadline {
                log::warn!("simulator ignored shutdown; killing");
                self.kill_child();
                break;
            }
            std::thread::sleep(Duration::from_millis(25));
        }
        self.reap();
        // Wait briefly for the registration to disappear from the bus.
        let deadline = Instant::now() + Duration::from_secs(2);
        while matches!(self.available(), Ok(true)) && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(25));
        }
        self.inner.fast_depth.store(0, Ordering::Relaxed);
    }

    /// stop() then start(), zeroing the reset counter.
    pub fn restart(&self) -> Result<(), ClientError> {
        self.stop();
        self.start()
    }

    fn kill_child(&self) {
        let mut guard = self.inner.child.lock().unwrap();
        if let Some(child) = guard.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        *guard = None;
    }

    fn reap(&self) {
        let mut guard = self.inner.child.lock().unwrap();
        if let Some(child) = guard.as_mut() {
            if matches!(child.try_wait(), Ok(Some(_))) {
                *guard = None;
            }
        }
    }

    /// Exit status of the most recently managed process, if it has exited
    /// while still tracked.
    pub fn try_exit_status(&self) -> Option<std::process::ExitStatus> {
        let mut guard = self.inner.child.lock().unwrap();
        guard.as_mut().and_then(|c| c.try_wait().ok().flatten())
    }

    fn enter_fast(&self) -> Result<(), ClientError> {
        if !matches!(self.available(), Ok(true)) {
            self.start()?;
        }
        let depth = self.inner.fast_depth.fetch_add(1, Ordering::SeqCst);
        if depth == 0 {
            self.supervisor()?.set_mode(SimulationMode::Fast)?;
        }
        Ok(())
    }

    fn exit_fast(&self) {
        // Saturating decrement: stop() zeroes the depth, so a scope guard
        // outliving a restart must not underflow it.
        let depth = self
            .inner
            .fast_depth
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |d| d.checked_sub(1))
            .unwrap_or(0);
        if depth == 1 {
            if let Ok(supervisor) = self.supervisor() {
                let _ = supervisor.set_mode(SimulationMode::Pause);
            }
        }
    }

    /// Run `callback` with the simulator available and in FAST mode, and
    /// restore PAUSE afterwards regardless of the callback outcome.
    pub fn run<R>(
        &self,
        callback: impl FnOnce() -> R,
        restart: bool,
    ) -> Result<R, ClientError> {
        if restart {
            self.restart()?;
        }
        let _scope = self.fast_scope()?;
        Ok(callback())
    }

    /// RAII form of the FAST scope; nested scopes keep FAST until the
    /// outermost one ends.
    pub fn fast_scope(&self) -> Result<FastScope, ClientError> {
        self.enter_fast()?;
        Ok(FastScope {
            handle: self.clone(),
        })
    }
}

/// Scope guard holding the simulator in FAST mode.
pub struct FastScope {
    handle: SimulatorHandle,
}

impl Drop for FastScope {
    fn drop(&mut self) {
        self.handle.exit_fast();
    }
}
