//! Central message broker: node registry, service call routing and topic fanout.
//!
//! One broker serves the whole star topology. Registrations are bound to the
//! TCP connection that made them; when the connection dies (graceful BYE or
//! process kill) the names vanish from the registry, which is what clients
//! observe as node unavailability.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::frame::{decode_frame, encode_frame};
use super::{BusError, NodeName};

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub listen: SocketAddr,
    /// Keepalive interval; a connection silent for 3 intervals is dropped.
    pub liveness: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            liveness: Duration::from_secs(2),
        }
    }
}

type ConnId = u64;

struct Conn {
    tx: Sender<Vec<u8>>,
    stream: TcpStream,
    last_seen: Instant,
}

#[derive(Default)]
struct State {
    conns: HashMap<ConnId, Conn>,
    registry: HashMap<NodeName, ConnId>,
    /// topic -> subscribing connections with their subscription ids.
    subs: HashMap<String, Vec<(ConnId, u64)>>,
    /// (target conn, forwarded id) -> (caller conn, caller id).
    pending: HashMap<(ConnId, u64), (ConnId, u64)>,
    next_fwd_id: u64,
}

/// Handle to a running broker. Dropping it does not stop the broker;
/// call [`Broker::shutdown`] for a clean stop.
pub struct Broker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl Broker {
    /// Bind and start serving. Use port 0 to pick a free port.
    pub fn start(config: BrokerConfig) -> Result<Broker, BusError> {
        let listener = TcpListener::bind(config.listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let state = Arc::new(Mutex::new(State::default()));
        let next_conn = Arc::new(AtomicU64::new(1));

        // Keepalive sweep: ping everyone, drop connections silent too long.
        {
            let state = Arc::clone(&state);
            let stop = Arc::clone(&stop);
            let liveness = config.liveness;
            thread::spawn(move || keepalive_loop(state, stop, liveness));
        }

        let accept_state = Arc::clone(&state);
        let accept_stop = Arc::clone(&stop);
        let accept_thread = thread::spawn(move || loop {
            if accept_stop.load(Ordering::Relaxed) {
                let mut st = accept_state.lock().unwrap();
                for conn in st.conns.values() {
                    let _ = conn.stream.shutdown(std::net::Shutdown::Both);
                }
                st.conns.clear();
                break;
            }
            match listener.accept() {
                Ok((stream, _peer)) => {
                    stream.set_nodelay(true).ok();
                    let id = next_conn.fetch_add(1, Ordering::Relaxed);
                    spawn_connection(id, stream, Arc::clone(&accept_state));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(20));
                }
                Err(_) => break,
            }
        });

        Ok(Broker {
            addr,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn keepalive_loop(state: Arc<Mutex<State>>, stop: Arc<AtomicBool>, liveness: Duration) {
    let ping = encode_frame(&json!({"op": "PING"})).unwrap();
    while !stop.load(Ordering::Relaxed) {
        thread::sleep(liveness);
        let dead: Vec<ConnId> = {
            let st = state.lock().unwrap();
            st.conns
                .iter()
                .filter(|(_, c)| c.last_seen.elapsed() > liveness * 3)
                .map(|(id, _)| *id)
                .collect()
        };
        for id in dead {
            let stream = state.lock().unwrap().conns.get(&id).map(|c| c.stream.try_clone());
            if let Some(Ok(s)) = stream {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
        let st = state.lock().unwrap();
        for conn in st.conns.values() {
            let _ = conn.tx.send(ping.clone());
        }
    }
}

fn spawn_connection(id: ConnId, stream: TcpStream, state: Arc<Mutex<State>>) {
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let write_stream = match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    };
    {
        let mut st = state.lock().unwrap();
        st.conns.insert(
            id,
            Conn {
                tx,
                stream: match stream.try_clone() {
                    Ok(s) => s,
                    Err(_) => return,
                },
                last_seen: Instant::now(),
            },
        );
    }

    // Writer: drains the outbound queue; a write failure ends the connection.
    thread::spawn(move || {
        use std::io::Write;
        let mut stream = write_stream;
        while let Ok(frame) = rx.recv() {
            if stream.write_all(&frame).is_err() {
                let _ = stream.shutdown(std::net::Shutdown::Both);
                break;
            }
        }
    });

    thread::spawn(move || {
        let mut reader = std::io::BufReader::new(stream);
        loop {
            match decode_frame(&mut reader) {
                Ok(body) => {
                    {
                        let mut st = state.lock().unwrap();
                        if let Some(c) = st.conns.get_mut(&id) {
                            c.last_seen = Instant::now();
                        }
                    }
                    if !handle_frame(id, &body, &state) {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        cleanup_connection(id, &state);
    });
}

fn send_to(st: &State, conn: ConnId, body: &Value) {
    if let Some(c) = st.conns.get(&conn) {
        if let Ok(frame) = encode_frame(body) {
            let _ = c.tx.send(frame);
        }
    }
}

fn error_to(st: &State, conn: ConnId, id: Option<&Value>, code: &str, message: &str) {
    let mut body = json!({"op": "ERROR", "code": code, "message": message});
    if let Some(id) = id {
        body["id"] = id.clone();
    }
    send_to(st, conn, &body);
}

/// Process one inbound frame. Returns false when the connection should close.
fn handle_frame(conn: ConnId, body: &Value, state: &Arc<Mutex<State>>) -> bool {
    let op = body.get("op").and_then(Value::as_str).unwrap_or("");
    match op {
        "PING" => {
            let st = state.lock().unwrap();
            send_to(&st, conn, &json!({"op": "PONG"}));
        }
        "PONG" => {}
        "BYE" => return false,
        "REGISTER" => {
            let mut st = state.lock().unwrap();
            let raw = body.get("name").and_then(Value::as_str).unwrap_or("");
            match NodeName::new(raw) {
                Ok(name) => {
                    if st.registry.contains_key(&name) {
                        error_to(&st, conn, None, "DUPLICATE_NODE", &format!("{name} is already registered"));
                    } else {
                        st.registry.insert(name.clone(), conn);
                        send_to(&st, conn, &json!({"op": "REGISTERED", "name": name.as_str()}));
                    }
                }
                Err(e) => error_to(&st, conn, None, "BAD_NAME", &e.to_string()),
            }
        }
        "LOOKUP" => {
            let st = state.lock().unwrap();
            let raw = body.get("name").and_then(Value::as_str).unwrap_or("");
            let found = NodeName::new(raw).map(|n| st.registry.contains_key(&n)).unwrap_or(false);
            send_to(&st, conn, &json!({"op": "LOOKUP_REPLY", "name": raw, "found": found}));
        }
        "LIST" => {
            let st = state.lock().unwrap();
            let mut nodes: Vec<&str> = st.registry.keys().map(NodeName::as_str).collect();
            nodes.sort_unstable();
            send_to(&st, conn, &json!({"op": "LIST_REPLY", "nodes": nodes}));
        }
        "SUBSCRIBE" => {
            let mut st = state.lock().unwrap();
            let id = body.get("id").and_then(Value::as_u64).unwrap_or(0);
            let topic = body.get("topic").and_then(Value::as_str).unwrap_or("");
            if NodeName::new(topic).is_err() {
                error_to(&st, conn, body.get("id"), "BAD_NAME", "invalid topic name");
            } else {
                // One delivery per connection and topic: the client fans an
                // EVENT out to all of its local subscriptions itself, and
                // deduping here keeps re-subscribes (e.g. after every sim
                // reset) from multiplying traffic.
                let entry = st.subs.entry(topic.to_string()).or_default();
                match entry.iter_mut().find(|(c, _)| *c == conn) {
                    Some(slot) => slot.1 = id,
                    None => entry.push((conn, id)),
                }
                send_to(&st, conn, &json!({"op": "SUBSCRIBED", "id": id, "topic": topic}));
            }
        }
        "PUBLISH" => {
            let st = state.lock().unwrap();
            let topic = body.get("topic").and_then(Value::as_str).unwrap_or("");
            let payload = body.get("payload").cloned().unwrap_or(Value::Null);
            if let Some(subs) = st.subs.get(topic) {
                let event = json!({"op": "EVENT", "topic": topic, "payload": payload});
                for (sub_conn, _) in subs {
                    send_to(&st, *sub_conn, &event);
                }
            }
        }
        "CALL" => {
            let mut st = state.lock().unwrap();
            let caller_id = body.get("id").and_then(Value::as_u64).unwrap_or(0);
            let node = body.get("node").and_then(Value::as_str).unwrap_or("");
            let target = NodeName::new(node).ok().and_then(|n| st.registry.get(&n).copied());
            match target {
                Some(target) => {
                    st.next_fwd_id += 1;
                    let fwd_id = st.next_fwd_id;
                    st.pending.insert((target, fwd_id), (conn, caller_id));
                    let mut fwd = body.clone();
                    fwd["id"] = json!(fwd_id);
                    send_to(&st, target, &fwd);
                }
                None => error_to(
                    &st,
                    conn,
                    body.get("id"),
                    "NO_SUCH_SERVICE",
                    &format!("node {node:?} is not registered"),
                ),
            }
        }
        "REPLY" | "ERROR" => {
            // A serving node answering a forwarded CALL.
            let mut st = state.lock().unwrap();
            let fwd_id = body.get("id").and_then(Value::as_u64).unwrap_or(0);
            if let Some((caller, caller_id)) = st.pending.remove(&(conn, fwd_id)) {
                let mut reply = body.clone();
                reply["id"] = json!(caller_id);
                send_to(&st, caller, &reply);
            }
        }
        _ => {
            let st = state.lock().unwrap();
            error_to(&st, conn, body.get("id"), "BAD_OP", &format!("unknown op {op:?}"));
        }
    }
    true
}

fn cleanup_connection(conn: ConnId, state: &Arc<Mutex<State>>) {
    let mut st = state.lock().unwrap();
    if let Some(c) = st.conns.remove(&conn) {
        let _ = c.stream.shutdown(std::net::Shutdown::Both);
    }
    st.registry.retain(|_, owner| *owner != conn);
    for subs in st.subs.values_mut() {
        subs.retain(|(c, _)| *c != conn);
    }
    st.subs.retain(|_, subs| !subs.is_empty());
    // In-flight calls served by this connection fail over to PEER_GONE.
    let orphaned: Vec<((ConnId, u64), (ConnId, u64))> = st
        .pending
        .iter()
        .filter(|((target, _), _)| *target == conn)
        .map(|(k, v)| (*k, *v))
        .collect();
    for (key, (caller, caller_id)) in orphaned {
        st.pending.remove(&key);
        error_to(
            &st,
            caller,
            Some(&json!(caller_id)),
            "PEER_GONE",
            "serving node disconnected mid-call",
        );
    }
    st.pending.retain(|_, (caller, _)| *caller != conn);
}
