//! The unattended collect–train–evaluate loop.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, SessionConfig};
use super::metrics::{MetricsRecord, MetricsWriter, METRICS_FILE};
use super::report::{
    write_report, EvalRecord, RestartCounts, RestartEvent, SessionReport, CHECKPOINT_FILE,
};
use super::PipelineError;
use crate::agents::{obs_layout, save_policy, DqnAgent, Episode, ReinforceAgent, Transition};
use crate::busline::{Broker, BrokerConfig};
use crate::envkit::{BusDriver, EnvError, MoveToTargetEnv, Outcome, SimDriver};
use crate::simclient::{Launcher, SimulatorConfig, SimulatorHandle};
use crate::simcore::WorldSpec;

/// Set by the CLI's signal handler; the session aborts at the next episode
/// boundary once raised.
pub static INTERRUPT: AtomicBool = AtomicBool::new(false);

const RESTART_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartDecision {
    Proceed,
    RestartFirst,
}

/// Proactive reset-bound policy: restart before the next reset once the
/// counter reaches the limit.
pub fn restart_policy(resets_since_start: u32, limit: u32) -> RestartDecision {
    if resets_since_start >= limit {
        RestartDecision::RestartFirst
    } else {
        RestartDecision::Proceed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Greedy rollouts without parameter updates.
pub fn evaluate_policy<D: SimDriver>(
    env: &mut MoveToTargetEnv<D>,
    policy: &mut dyn FnMut(&[f64]) -> usize,
    episodes: u32,
) -> Result<EvalResult, PipelineError> {
    evaluate_policy_with(env, policy, episodes, &mut || Ok(()))
}

fn evaluate_policy_with<D: SimDriver>(
    env: &mut MoveToTargetEnv<D>,
    policy: &mut dyn FnMut(&[f64]) -> usize,
    episodes: u32,
    before_episode: &mut dyn FnMut() -> Result<(), PipelineError>,
) -> Result<EvalResult, PipelineError> {
    let mut successes = 0u32;
    let mut total_return = 0.0;
    for _ in 0..episodes {
        before_episode()?;
        let mut obs = env.reset()?.flatten();
        loop {
            let result = env.step(policy(&obs))?;
            total_return += result.reward;
            if result.terminated || result.truncated {
                if result.outcome == Outcome::Solved {
                    successes += 1;
                }
                break;
            }
            obs = result.observation.flatten();
        }
    }
    Ok(EvalResult {
        success_rate: successes as f64 / episodes as f64,
        mean_return: total_return / episodes as f64,
    })
}

struct CompletedEpisode {
    steps: u32,
    ret: f64,
    outcome: Outcome,
    transitions: Vec<Transition>,
    episode: Episode,
}

/// Mutable session bookkeeping shared by the per-algorithm loops.
struct Session<'a> {
    cfg: &'a SessionConfig,
    handle: SimulatorHandle,
    metrics: MetricsWriter,
    counts: RestartCounts,
    events: Vec<RestartEvent>,
    episodes: u64,
    env_steps: u64,
    eval_history: Vec<EvalRecord>,
}

impl Session<'_> {
    /// Pre-reset guard: honor interrupts and the reset-bound restart policy.
    fn guard(&mut self) -> Result<(), PipelineError> {
        if INTERRUPT.load(Ordering::SeqCst) {
            return Err(PipelineError::Aborted("interrupted by signal".into()));
        }
        let resets = self.handle.resets_since_start();
        if restart_policy(resets, self.cfg.restart_after_resets) == RestartDecision::RestartFirst {
            self.events.push(RestartEvent::Scheduled {
                resets_since_start: resets,
            });
            self.counts.scheduled += 1;
            self.restart_with_retries()?;
        }
        Ok(())
    }

    /// React to a lost simulator: log the event and bring a fresh process up.
    fn recover(&mut self) -> Result<(), PipelineError> {
        let exit_code = self.handle.try_exit_status().and_then(|s| s.code());
        log::warn!("simulator lost (exit code {exit_code:?}); restarting");
        self.events.push(RestartEvent::Crash { exit_code });
        self.counts.crash += 1;
        self.restart_with_retries()
    }

    fn restart_with_retries(&mut self) -> Result<(), PipelineError> {
        let mut last_err = String::new();
        for attempt in 1..=RESTART_ATTEMPTS {
            match self.handle.restart() {
                Ok(()) => return Ok(()),
                Err(e) => {
                    log::warn!("restart attempt {attempt}/{RESTART_ATTEMPTS} failed: {e}");
                    last_err = e.to_string();
                }
            }
        }
        Err(PipelineError::Aborted(format!(
            "{RESTART_ATTEMPTS} consecutive failed restarts: {last_err}"
        )))
    }

    fn record_episode(&mut self, ep: &CompletedEpisode, wall_ms: u64) -> Result<(), PipelineError> {
        self.episodes += 1;
        self.env_steps += ep.steps as u64;
        self.metrics.write(&MetricsRecord {
            episode: self.episodes - 1,
            steps: ep.steps,
            ret: ep.ret,
            outcome: ep.outcome,
            wall_ms,
            resets_since_start: self.handle.resets_since_start(),
        })
    }
}

/// One full episode under `policy`; transitions and the episode trace are
/// both returned so either agent style can consume it.
fn run_episode(
    env: &mut MoveToTargetEnv<BusDriver>,
    policy: &mut dyn FnMut(&[f64]) -> usize,
) -> Result<CompletedEpisode, EnvError> {
    let mut obs = env.reset()?.flatten();
    let mut out = CompletedEpisode {
        steps: 0,
        ret: 0.0,
        outcome: Outcome::Running,
        transitions: Vec::new(),
        episode: Episode::default(),
    };
    loop {
        let action = policy(&obs);
        let result = env.step(action)?;
        let next_obs = result.observation.flatten();
        out.steps += 1;
        out.ret += result.reward;
        out.transitions.push(Transition {
            obs: obs.clone(),
            action,
            reward: result.reward,
            next_obs: next_obs.clone(),
            terminal: result.terminated,
        });
        out.episode.push(obs, action, result.reward);
        if result.terminated || result.truncated {
            out.outcome = result.outcome;
            return Ok(out);
        }
        obs = next_obs;
    }
}

/// A provisioned broker + simulator pair ready for an environment.
pub struct Stack {
    pub handle: SimulatorHandle,
    pub world: WorldSpec,
    broker: Option<Broker>,
}

impl Stack {
    /// Stop the simulator and shut the in-process broker down, if any.
    pub fn teardown(self) {
        self.handle.stop();
        if let Some(broker) = self.broker {
            broker.shutdown();
        }
    }
}

/// Load the world, start (or locate) the broker, and spawn the simulator.
pub fn provision(cfg: &SessionConfig) -> Result<Stack, PipelineError> {
    cfg.validate()?;
    let world = WorldSpec::load(&cfg.world_path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", cfg.world_path.display())))?;

    // Broker: external address, or an in-process instance for "autostart".
    let broker_choice = cfg.effective_broker();
    let (broker, broker_addr) = if broker_choice == "autostart" {
        let broker = Broker::start(BrokerConfig::default())
            .map_err(|e| PipelineError::Aborted(format!("broker autostart failed: {e}")))?;
        let addr = broker.addr();
        (Some(broker), addr)
    } else {
        let addr = broker_choice
            .parse()
            .map_err(|e| PipelineError::Config(format!("broker address {broker_choice:?}: {e}")))?;
        (None, addr)
    };

    let launcher = match &cfg.simulator_cmd {
        Some(argv) => Launcher::new(argv.clone()),
        None => Launcher::self_sim(&[]),
    };
    let handle = SimulatorHandle::new(SimulatorConfig::new(
        world.supervisor_name.clone(),
        &cfg.world_path,
        broker_addr,
        launcher,
    ));
    handle.start()?;
    Ok(Stack {
        handle,
        world,
        broker,
    })
}

/// Greedy evaluation of a saved checkpoint over the full stack.
pub fn run_eval_only(
    cfg: &SessionConfig,
    checkpoint: &std::path::Path,
    episodes: u32,
) -> Result<EvalResult, PipelineError> {
    let (mlp, actions, layout) = crate::agents::load_policy(checkpoint)?;
    if actions != cfg.env.action_set {
        return Err(PipelineError::Config(format!(
            "checkpoint action set {actions:?} does not match the config's {:?}",
            cfg.env.action_set
        )));
    }
    if layout != obs_layout(cfg.env.include_target) {
        return Err(PipelineError::Config(
            "checkpoint observation layout does not match the config".into(),
        ));
    }
    let stack = provision(cfg)?;
    let result = (|| {
        let driver = BusDriver::new(stack.handle.clone(), &stack.world, 0, cfg.env.sensor_period_ms)?;
        let mut env = MoveToTargetEnv::new(driver, &stack.world, cfg.env.clone())?;
        env.seed(cfg.seed);
        evaluate_policy(&mut env, &mut |obs| greedy_action(&mlp, obs), episodes)
    })();
    stack.teardown();
    result
}

fn greedy_action(mlp: &crate::agents::Mlp, obs: &[f64]) -> usize {
    crate::agents::dqn::greedy(&mlp.forward(obs).expect("layout checked at load"))
}

/// Run a complete training session: provision broker and simulator, train to
/// budget surviving simulator deaths, evaluate, and write metrics, the final
/// checkpoint and the report into `out_dir`.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionReport, PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::io(cfg.out_dir.display(), e))?;
    let stack = provision(cfg)?;
    let Stack { handle, world, broker: own_broker } = stack;

    let start = Instant::now();
    let result = (|| {
        let driver = BusDriver::new(handle.clone(), &world, 0, cfg.env.sensor_period_ms)?;
        let mut env = MoveToTargetEnv::new(driver, &world, cfg.env.clone())?;
        env.seed(cfg.seed);
        let mut session = Session {
            cfg,
            handle: handle.clone(),
            metrics: MetricsWriter::append_to(&cfg.out_dir.join(METRICS_FILE))?,
            counts: RestartCounts::default(),
            events: Vec::new(),
            episodes: 0,
            env_steps: 0,
            eval_history: Vec::new(),
        };
        match cfg.algorithm {
            Algorithm::Dqn => train_dqn(cfg, &mut session, &mut env),
            Algorithm::Reinforce => train_reinforce(cfg, &mut session, &mut env),
        }
        .map(|()| session)
    })();

    let (report, outcome) = match result {
        Ok(session) => {
            let report = SessionReport {
                algorithm: cfg.algorithm.as_str().to_string(),
                total_duration_s: start.elapsed().as_secs_f64(),
                episodes: session.episodes,
                env_steps: session.env_steps,
                simulator_restarts: session.counts,
                restart_events: session.events,
                final_eval_success_rate: session
                    .eval_history
                    .last()
                    .map_or(0.0, |e| e.success_rate),
                eval_history: session.eval_history,
                aborted: false,
            };
            (report, Ok(()))
        }
        Err(e) => {
            let report = SessionReport {
                algorithm: cfg.algorithm.as_str().to_string(),
                total_duration_s: start.elapsed().as_secs_f64(),
                episodes: 0,
                env_steps: 0,
                simulator_restarts: RestartCounts::default(),
                restart_events: Vec::new(),
                final_eval_success_rate: 0.0,
                eval_history: Vec::new(),
                aborted: true,
            };
            (report, Err(e))
        }
    };
    write_report(&report, &cfg.out_dir)?;
    handle.stop();
    if let Some(broker) = own_broker {
        broker.shutdown();
    }
    outcome.map(|()| report)
}

/// Collect phase wrapper: retries an episode-shaped unit of work across
/// simulator losses, discarding the interrupted attempt each time.
fn with_recovery<T>(
    session: &mut Session<'_>,
    mut work: impl FnMut(&mut Session<'_>) -> Result<T, PipelineError>,
) -> Result<T, PipelineError> {
    loop {
        match work(session) {
            Err(PipelineError::Env(EnvError::SimulatorLost(reason))) => {
                log::warn!("discarding in-flight work: {reason}");
                session.recover()?;
            }
            other => return other,
        }
    }
}

fn train_dqn(
    cfg: &SessionConfig,
    session: &mut Session<'_>,
    env: &mut MoveToTargetEnv<BusDriver>,
) -> Result<(), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = DqnAgent::new(
        env.observation_dim(),
        env.action_count(),
        cfg.dqn.clone(),
        &mut rng,
    );
    let mut next_eval = if cfg.eval_every > 0 { cfg.eval_every } else { u64::MAX };
    while session.env_steps < cfg.budget {
        let wall = Instant::now();
        let ep = with_recovery(session, |s| {
            s.guard()?;
            run_episode(env, &mut |obs| agent.act(obs, &mut rng).expect("obs dim fixed"))
                .map_err(PipelineError::from)
        })?;
        // Train only on completed episodes so a crash discards cleanly.
        for t in ep.transitions.iter().cloned() {
            agent.record(t);
            match agent.update(&mut rng) {
                Ok(_) | Err(crate::agents::AgentError::UnderfullBuffer { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        session.record_episode(&ep, wall.elapsed().as_millis() as u64)?;
        if session.env_steps >= next_eval && session.env_steps < cfg.budget {
            run_eval(cfg, session, env, &mut |obs| {
                agent.act_greedy(obs).expect("obs dim fixed")
            })?;
            next_eval += cfg.eval_every;
        }
    }
    run_eval(cfg, session, env, &mut |obs| {
        agent.act_greedy(obs).expect("obs dim fixed")
    })?;
    save_policy(
        &agent.online,
        &cfg.env.action_set,
        &obs_layout(cfg.env.include_target),
        &cfg.out_dir.join(CHECKPOINT_FILE),
    )?;
    Ok(())
}

fn train_reinforce(
    cfg: &SessionConfig,
    session: &mut Session<'_>,
    env: &mut MoveToTargetEnv<BusDriver>,
) -> Result<(), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = ReinforceAgent::new(
        env.observation_dim(),
        env.action_count(),
        cfg.reinforce.clone(),
        &mut rng,
    );
    let mut batch: Vec<Episode> = Vec::new();
    let mut next_eval = if cfg.eval_every > 0 { cfg.eval_every } else { u64::MAX };
    while session.episodes < cfg.budget {
        let wall = Instant::now();
        let ep = with_recovery(session, |s| {
            s.guard()?;
            run_episode(env, &mut |obs| agent.act(obs, &mut rng).expect("obs dim fixed"))
                .map_err(PipelineError::from)
        })?;
        batch.push(ep.episode.clone());
        session.record_episode(&ep, wall.elapsed().as_millis() as u64)?;
        if batch.len() >= cfg.reinforce.episodes_per_update {
            agent.update(&batch)?;
            batch.clear();
        }
        if session.episodes >= next_eval && session.episodes < cfg.budget {
            run_eval(cfg, session, env, &mut |obs| {
                agent.act_greedy(obs).expect("obs dim fixed")
            })?;
            next_eval += cfg.eval_every;
        }
    }
    if !batch.is_empty() {
        agent.update(&batch)?;
    }
    run_eval(cfg, session, env, &mut |obs| {
        agent.act_greedy(obs).expect("obs dim fixed")
    })?;
    save_policy(
        &agent.policy,
        &cfg.env.action_set,
        &obs_layout(cfg.env.include_target),
        &cfg.out_dir.join(CHECKPOINT_FILE),
    )?;
    Ok(())
}

fn run_eval(
    cfg: &SessionConfig,
    session: &mut Session<'_>,
    env: &mut MoveToTargetEnv<BusDriver>,
    policy: &mut dyn FnMut(&[f64]) -> usize,
) -> Result<(), PipelineError> {
    let at = match cfg.algorithm {
        Algorithm::Dqn => session.env_steps,
        Algorithm::Reinforce => session.episodes,
    };
    let result = with_recovery(session, |s| {
        // The guard runs before every eval episode: eval resets count
        // against the reset bound exactly like training resets.
        let episodes = s.cfg.eval_episodes;
        evaluate_policy_with(env, policy, episodes, &mut || s.guard())
    })?;
    log::info!(
        "eval at {at}: success {:.2} mean return {:.3}",
        result.success_rate,
        result.mean_return
    );
    session.eval_history.push(EvalRecord {
        at,
        success_rate: result.success_rate,
        mean_return: result.mean_return,
    });
    Ok(())
}
