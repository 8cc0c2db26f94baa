//! The simulator process: registers supervisor and robot nodes on the bus,
//! serves their control services, and runs the stepping loop.
//!
//! All world state is owned by one loop; service handlers enqueue commands
//! that are applied between steps, so the state trace is a pure function of
//! the command sequence.

use std::net::SocketAddr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde_json::{json, Value};

use super::sim::{SensorEvent, SensorKind, SimWorld, SimulationMode};
use super::world::WorldSpec;
use super::SimError;
use crate::busline::{BusClient, BusError, NodeName};

/// Deliberate crash injection: abort the process on the N-th reset request.
#[derive(Debug, Clone, Copy)]
pub struct FaultPlan {
    pub crash_on_reset_number: Option<u32>,
    pub crash_exit_code: i32,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan {
            crash_on_reset_number: None,
            crash_exit_code: 7,
        }
    }
}

impl FaultPlan {
    /// The profile reproducing the crash-after-24-resets defect: resets 1..=24
    /// succeed, the 25th kills the process.
    pub fn crash_at(n: u32) -> FaultPlan {
        FaultPlan {
            crash_on_reset_number: Some(n),
            ..FaultPlan::default()
        }
    }
}

/// Who drives stepping in FAST mode: the sim itself or explicit `advance` calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteppingRegime {
    Free,
    Driven,
}

#[derive(Debug, Clone)]
pub struct SimServerConfig {
    pub broker: SocketAddr,
    pub world: WorldSpec,
    pub fault: FaultPlan,
    pub start_mode: SimulationMode,
}

type Reply = Sender<Result<Value, SimError>>;

enum Command {
    Ping(Reply),
    GetMode(Reply),
    SetMode(SimulationMode, Reply),
    Reset(Reply),
    Shutdown(Reply),
    GetPosition(String, Reply),
    GetSimTime(Reply),
    Advance(u64, Reply),
    SetStepping(SteppingRegime, Reply),
    EnableSensor { robot: usize, kind: SensorKind, period_ms: u64, reply: Reply },
    DisableSensor { robot: usize, kind: SensorKind, reply: Reply },
    SetWheel { robot: usize, index: usize, value: f64, reply: Reply },
    SetWheels { robot: usize, values: [f64; 3], reply: Reply },
}

/// A running simulator service. Construct with [`SimServer::run`], which
/// blocks until a `shutdown` service call arrives.
pub struct SimServer;

impl SimServer {
    pub fn run(config: SimServerConfig) -> Result<(), SimError> {
        let (cmd_tx, cmd_rx) = mpsc::channel::<Command>();

        // One bus connection per node so registrations die with the process
        // naturally and independently.
        let supervisor_client = BusClient::connect(config.broker).map_err(SimError::Bus)?;
        supervisor_client
            .register(&config.world.supervisor_name)
            .map_err(SimError::Bus)?;
        serve_supervisor(&supervisor_client, &cmd_tx);

        let mut robot_clients = Vec::new();
        for (idx, robot) in config.world.robots.iter().enumerate() {
            let client = BusClient::connect(config.broker).map_err(SimError::Bus)?;
            client.register(&robot.name).map_err(SimError::Bus)?;
            serve_robot(&client, &cmd_tx, idx);
            robot_clients.push(client);
        }

        let world = SimWorld::new(config.world, config.start_mode);
        run_loop(world, cmd_rx, &robot_clients, config.fault);

        // Let the shutdown REPLY drain before tearing connections down.
        std::thread::sleep(Duration::from_millis(100));
        for client in &robot_clients {
            client.close();
        }
        supervisor_client.close();
        Ok(())
    }
}

fn run_loop(mut world: SimWorld, cmd_rx: Receiver<Command>, robot_clients: &[BusClient], fault: FaultPlan) {
    let mut regime = SteppingRegime::Free;
    let mut reset_count: u32 = 0;
    loop {
        let free_running = world.mode == SimulationMode::Fast && regime == SteppingRegime::Free;
        let cmd = if free_running {
            match cmd_rx.try_recv() {
                Ok(c) => Some(c),
                Err(mpsc::TryRecvError::Empty) => None,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        } else {
            match cmd_rx.recv_timeout(Duration::from_millis(50)) {
                Ok(c) => Some(c),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => return,
            }
        };
        match cmd {
            Some(cmd) => {
                if apply(cmd, &mut world, &mut regime, &mut reset_count, robot_clients, fault) {
                    return;
                }
            }
            None if free_running => {
                let events = world.step();
                publish_events(&world, &events, robot_clients);
            }
            None => {}
        }
    }
}

/// Apply one command; returns true when the loop should exit.
fn apply(
    cmd: Command,
    world: &mut SimWorld,
    regime: &mut SteppingRegime,
    reset_count: &mut u32,
    robot_clients: &[BusClient],
    fault: FaultPlan,
) -> bool {
    match cmd {
        Command::Ping(reply) => {
            let _ = reply.send(Ok(json!({"ok": true})));
        }
        Command::GetMode(reply) => {
            let _ = reply.send(Ok(json!({"mode": world.mode.as_str()})));
        }
        Command::SetMode(mode, reply) => {
            world.mode = mode;
            let _ = reply.send(Ok(json!({"mode": mode.as_str()})));
        }
        Command::Reset(reply) => {
            *reset_count += 1;
            if fault.crash_on_reset_number == Some(*reset_count) {
                // The modeled simulator defect: die without acknowledging.
                std::process::exit(fault.crash_exit_code);
            }
            world.reset();
            let _ = reply.send(Ok(json!({"ok": true, "reset_count": *reset_count})));
        }
        Command::Shutdown(reply) => {
            let _ = reply.send(Ok(json!({"ok": true})));
            return true;
        }
        Command::GetPosition(name, reply) => {
            let result = match world.robot_index(&name) {
                Some(idx) => {
                    let p = world.robots[idx].pose;
                    Ok(json!({"x": p.x, "y": p.y, "theta": p.theta}))
                }
                None => Err(SimError::BadCommand(format!("unknown robot {name:?}"))),
            };
            let _ = reply.send(result);
        }
        Command::GetSimTime(reply) => {
            let _ = reply.send(Ok(json!({"sim_time": world.sim_time()})));
        }
        Command::Advance(steps, reply) => {
            if world.mode != SimulationMode::Fast {
                let _ = reply.send(Err(SimError::BadMode("advance requires fast mode".into())));
            } else {
                for _ in 0..steps {
                    let events = world.step();
                    publish_events(world, &events, robot_clients);
                }
                let _ = reply.send(Ok(json!({"sim_time": world.sim_time()})));
            }
        }
        Command::SetStepping(new_regime, reply) => {
            *regime = new_regime;
            let _ = reply.send(Ok(json!({"ok": true})));
        }
        Command::EnableSensor { robot, kind, period_ms, reply } => {
            let _ = reply.send(world.enable_sensor(robot, kind, period_ms).map(|_| json!({"ok": true})));
        }
        Command::DisableSensor { robot, kind, reply } => {
            world.disable_sensor(robot, kind);
            let _ = reply.send(Ok(json!({"ok": true})));
        }
        Command::SetWheel { robot, index, value, reply } => {
            let _ = reply.send(world.set_wheel_speed(robot, index, value).map(|_| json!({"ok": true})));
        }
        Command::SetWheels { robot, values, reply } => {
            world.set_wheel_speeds(robot, values);
            let _ = reply.send(Ok(json!({"ok": true})));
        }
    }
    false
}

fn publish_events(world: &SimWorld, events: &[SensorEvent], robot_clients: &[BusClient]) {
    for event in events {
        let robot_name = &world.spec.robots[event.robot].name;
        let topic = NodeName::new(format!("{}/{}", robot_name, event.kind.as_str()))
            .expect("topic name from validated parts");
        let _ = robot_clients[event.robot].publish(&topic, event.payload.clone());
    }
}

fn enqueue(cmd_tx: &Sender<Command>, build: impl FnOnce(Reply) -> Command) -> Result<Value, BusError> {
    let (tx, rx) = mpsc::channel();
    cmd_tx
        .send(build(tx))
        .map_err(|_| BusError::remote("SIM_DOWN", "stepping loop has exited"))?;
    match rx.recv_timeout(Duration::from_secs(60)) {
        Ok(result) => result.map_err(BusError::from),
        Err(_) => Err(BusError::Timeout),
    }
}

fn serve_supervisor(client: &BusClient, cmd_tx: &Sender<Command>) {
    let simple = |tx: Sender<Command>, build: fn(Reply) -> Command| {
        std::sync::Arc::new(move |_payload: Value| enqueue(&tx, build))
            as crate::busline::ServiceFn
    };
    client.serve("ping", simple(cmd_tx.clone(), Command::Ping));
    client.serve("get_mode", simple(cmd_tx.clone(), Command::GetMode));
    client.serve("reset", simple(cmd_tx.clone(), Command::Reset));
    client.serve("shutdown", simple(cmd_tx.clone(), Command::Shutdown));
    client.serve("get_sim_time", simple(cmd_tx.clone(), Command::GetSimTime));

    let tx = cmd_tx.clone();
    client.serve(
        "set_mode",
        std::sync::Arc::new(move |payload: Value| {
            let mode_str = payload
                .get("mode")
                .and_then(Value::as_str)
                .ok_or_else(|| BusError::remote("BAD_MODE", "missing mode field"))?;
            let mode = SimulationMode::parse(mode_str).map_err(BusError::from)?;
            enqueue(&tx, |r| Command::SetMode(mode, r))
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "get_position",
        std::sync::Arc::new(move |payload: Value| {
            let robot = payload
                .get("robot")
                .and_then(Value::as_str)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", "missing robot field"))?
                .to_string();
            enqueue(&tx, |r| Command::GetPosition(robot, r))
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "advance",
        std::sync::Arc::new(move |payload: Value| {
            let steps = payload
                .get("steps")
                .and_then(Value::as_u64)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", "missing steps field"))?;
            enqueue(&tx, |r| Command::Advance(steps, r))
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "set_stepping",
        std::sync::Arc::new(move |payload: Value| {
            let regime = match payload.get("mode").and_then(Value::as_str) {
                Some("free") => SteppingRegime::Free,
                Some("driven") => SteppingRegime::Driven,
                other => {
                    return Err(BusError::remote(
                        "BAD_COMMAND",
                        format!("stepping mode must be free or driven, got {other:?}"),
                    ))
                }
            };
            enqueue(&tx, |r| Command::SetStepping(regime, r))
        }),
    );
}

fn serve_robot(client: &BusClient, cmd_tx: &Sender<Command>, robot: usize) {
    let tx = cmd_tx.clone();
    client.serve(
        "enable_sensor",
        std::sync::Arc::new(move |payload: Value| {
            let sensor = payload.get("sensor").and_then(Value::as_str).unwrap_or("");
            if sensor == "color" {
                return Err(BusError::remote("UNSUPPORTED", "color camera is not simulated"));
            }
            let kind = SensorKind::parse(sensor)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", format!("unknown sensor {sensor:?}")))?;
            let period_ms = payload
                .get("period_ms")
                .and_then(Value::as_u64)
                .ok_or_else(|| BusError::remote("BAD_PERIOD", "missing period_ms"))?;
            enqueue(&tx, |r| Command::EnableSensor { robot, kind, period_ms, reply: r })
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "disable_sensor",
        std::sync::Arc::new(move |payload: Value| {
            let sensor = payload.get("sensor").and_then(Value::as_str).unwrap_or("");
            let kind = SensorKind::parse(sensor)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", format!("unknown sensor {sensor:?}")))?;
            enqueue(&tx, |r| Command::DisableSensor { robot, kind, reply: r })
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "set_wheel_velocity",
        std::sync::Arc::new(move |payload: Value| {
            let index = payload
                .get("index")
                .and_then(Value::as_u64)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", "missing index"))? as usize;
            let value = payload
                .get("value")
                .and_then(Value::as_f64)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", "missing value"))?;
            enqueue(&tx, |r| Command::SetWheel { robot, index, value, reply: r })
        }),
    );

    let tx = cmd_tx.clone();
    client.serve(
        "set_wheel_velocities",
        std::sync::Arc::new(move |payload: Value| {
            let values = payload
                .get("values")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 3)
                .ok_or_else(|| BusError::remote("BAD_COMMAND", "values must be an array of 3"))?;
            let mut out = [0.0f64; 3];
            for (slot, v) in out.iter_mut().zip(values.iter()) {
                *slot = v
                    .as_f64()
                    .ok_or_else(|| BusError::remote("BAD_COMMAND", "values must be numbers"))?;
            }
            enqueue(&tx, |r| Command::SetWheels { robot, values: out, reply: r })
        }),
    );
}
