//! Command-line entry point: broker, simulator, training, evaluation,
//! world-variant generation and report inspection.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure/abort.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use simrl::busline::{Broker, BrokerConfig};
use simrl::pipeline::{
    self, read_metrics, read_report, run_eval_only, run_session, PipelineError, SessionConfig,
};
use simrl::simcore::{FaultPlan, SimServer, SimServerConfig, SimulationMode, WorldSpec};

#[derive(Parser)]
#[command(name = "simrl", about = "Headless RL training harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartMode {
    Pause,
    Fast,
}

#[derive(Subcommand)]
enum Command {
    /// Run the message broker.
    Broker {
        #[arg(long, default_value = "127.0.0.1:7000")]
        listen: SocketAddr,
        /// Keepalive interval in seconds; silent connections are dropped
        /// after three intervals.
        #[arg(long, default_value_t = 2)]
        liveness_secs: u64,
    },
    /// Run the headless simulator against a broker.
    Sim {
        #[arg(long)]
        broker: SocketAddr,
        #[arg(long)]
        world: PathBuf,
        /// Inject a crash on the N-th reset request (chaos testing).
        #[arg(long)]
        fault_resets: Option<u32>,
        #[arg(long, value_enum, default_value = "pause")]
        start_mode: StartMode,
    },
    /// Run an unattended training session.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved checkpoint greedily.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: u32,
    },
    /// Generate world variants with per-instance node-name suffixes.
    Worldgen {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        instances: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretty-print the report of a finished session.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

extern "C" fn on_signal(_sig: libc::c_int) {
    pipeline::session::INTERRUPT.store(true, Ordering::SeqCst);
}

fn install_signal_handlers() {
    unsafe {
        libc::signal(libc::SIGINT, on_signal as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_signal as *const () as libc::sighandler_t);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Broker {
            listen,
            liveness_secs,
        } => {
            let broker = Broker::start(BrokerConfig {
                listen,
                liveness: Duration::from_secs(liveness_secs.max(1)),
            })
            .map_err(|e| PipelineError::Aborted(format!("broker: {e}")))?;
            println!("broker listening on {}", broker.addr());
            install_signal_handlers();
            while !pipeline::session::INTERRUPT.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(100));
            }
            broker.shutdown();
            Err(PipelineError::Aborted("interrupted by signal".into()))
        }
        Command::Sim {
            broker,
            world,
            fault_resets,
            start_mode,
        } => {
            let world = WorldSpec::load(&world)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", world.display())))?;
            let fault = match fault_resets {
                Some(n) => FaultPlan::crash_at(n),
                None => FaultPlan::default(),
            };
            SimServer::run(SimServerConfig {
                broker,
                world,
                fault,
                start_mode: match start_mode {
                    StartMode::Pause => SimulationMode::Pause,
                    StartMode::Fast => SimulationMode::Fast,
                },
            })
            .map_err(|e| PipelineError::Aborted(format!("simulator: {e}")))
        }
        Command::Train { config, seed, out } => {
            let mut cfg = SessionConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            install_signal_handlers();
            let report = run_session(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
        } => {
            if episodes == 0 {
                return Err(PipelineError::Config("episodes must be positive".into()));
            }
            let cfg = SessionConfig::load(&config)?;
            install_signal_handlers();
            let result = run_eval_only(&cfg, &checkpoint, episodes)?;
            println!(
                "{}",
                serde_json::json!({
                    "episodes": episodes,
                    "success_rate": result.success_rate,
                    "mean_return": result.mean_return,
                })
            );
            Ok(())
        }
        Command::Worldgen {
            world,
            instances,
            out,
        } => {
            let paths = pipeline::instantiate_world_variants(&world, instances, &out)?;
            for path in paths {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Report { dir } => {
            let report = read_report(&dir)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            match read_metrics(&dir.join(pipeline::metrics::METRICS_FILE)) {
                Ok(records) => println!("metrics lines: {}", records.len()),
                Err(e) => eprintln!("metrics unreadable: {e}"),
            }
            Ok(())
        }
    }
}
