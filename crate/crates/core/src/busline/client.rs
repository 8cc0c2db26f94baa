//! Client endpoint for the bus: register a node, look up peers, call services,
//! serve services, and publish/subscribe topics.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::frame::{decode_frame, encode_frame};
use super::{BusError, NodeName};

/// Handler invoked for each inbound service call. Returning `Err` produces an
/// ERROR reply with the error's wire code.
pub type ServiceFn = Arc<dyn Fn(Value) -> Result<Value, BusError> + Send + Sync>;

const SUB_BUFFER: usize = 64;
const CONTROL_TIMEOUT: Duration = Duration::from_secs(5);

struct SubInner {
    buf: Mutex<SubBuf>,
    cond: Condvar,
}

#[derive(Default)]
struct SubBuf {
    queue: VecDeque<Value>,
    latest: Option<Value>,
    closed: bool,
}

/// Handle to one topic subscription. Bounded buffer of 64 payloads,
/// oldest dropped first; `latest` always reflects the newest payload seen.
pub struct Subscription {
    topic: NodeName,
    inner: Arc<SubInner>,
}

impl Subscription {
    pub fn topic(&self) -> &NodeName {
        &self.topic
    }

    /// Newest payload observed so far, if any.
    pub fn latest(&self) -> Option<Value> {
        self.inner.buf.lock().unwrap().latest.clone()
    }

    /// Pop the next buffered payload, waiting up to `timeout`.
    pub fn next(&self, timeout: Duration) -> Result<Value, BusError> {
        let deadline = std::time::Instant::now() + timeout;
        let mut buf = self.inner.buf.lock().unwrap();
        loop {
            if let Some(v) = buf.queue.pop_front() {
                return Ok(v);
            }
            if buf.closed {
                return Err(BusError::ConnectionClosed);
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return Err(BusError::Timeout);
            }
            let (next, timed_out) = self.inner.cond.wait_timeout(buf, deadline - now).unwrap();
            buf = next;
            if timed_out.timed_out() && buf.queue.is_empty() {
                return if buf.closed {
                    Err(BusError::ConnectionClosed)
                } else {
                    Err(BusError::Timeout)
                };
            }
        }
    }

    /// True once the owning connection has gone away.
    pub fn is_closed(&self) -> bool {
        self.inner.buf.lock().unwrap().closed
    }

    /// Drop everything buffered, keeping the subscription live.
    pub fn drain(&self) {
        self.inner.buf.lock().unwrap().queue.clear();
    }

    /// Forget buffered payloads and the latest value, so stale pre-reset
    /// readings cannot be mistaken for fresh ones.
    pub fn invalidate(&self) {
        let mut buf = self.inner.buf.lock().unwrap();
        buf.queue.clear();
        buf.latest = None;
    }
}

enum ControlReply {
    Registered(String),
    LookupReply(String, bool),
    ListReply(Vec<String>),
    Error { code: String, message: String },
}

struct Inner {
    writer: Mutex<TcpStream>,
    next_id: AtomicU64,
    pending: Mutex<HashMap<u64, Sender<Result<Value, BusError>>>>,
    control_tx: Mutex<Sender<ControlReply>>,
    control_rx: Mutex<Receiver<ControlReply>>,
    /// Serializes register/lookup/list exchanges, which carry no id.
    control_gate: Mutex<()>,
    subs: Mutex<HashMap<String, Vec<Weak<SubInner>>>>,
    services: Mutex<HashMap<String, ServiceFn>>,
    closed: AtomicBool,
}

/// One connection to the broker. Cloning shares the connection; calls and
/// publishes are safe from multiple threads.
#[derive(Clone)]
pub struct BusClient {
    inner: Arc<Inner>,
}

impl BusClient {
    pub fn connect(addr: SocketAddr) -> Result<BusClient, BusError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true).ok();
        let read_stream = stream.try_clone()?;
        let (ctl_tx, ctl_rx) = mpsc::channel();
        let inner = Arc::new(Inner {
            writer: Mutex::new(stream),
            next_id: AtomicU64::new(1),
            pending: Mutex::new(HashMap::new()),
            control_tx: Mutex::new(ctl_tx),
            control_rx: Mutex::new(ctl_rx),
            control_gate: Mutex::new(()),
            subs: Mutex::new(HashMap::new()),
            services: Mutex::new(HashMap::new()),
            closed: AtomicBool::new(false),
        });
        let client = BusClient { inner: Arc::clone(&inner) };
        let reader_client = client.clone();
        thread::spawn(move || reader_client.read_loop(read_stream));
        Ok(client)
    }

    fn read_loop(&self, stream: TcpStream) {
        let mut reader = std::io::BufReader::new(stream);
        loop {
            match decode_frame(&mut reader) {
                Ok(body) => self.dispatch(body),
                Err(_) => break,
            }
        }
        self.mark_closed();
    }

    fn mark_closed(&self) {
        self.inner.closed.store(true, Ordering::Relaxed);
        let mut pending = self.inner.pending.lock().unwrap();
        for (_, tx) in pending.drain() {
            let _ = tx.send(Err(BusError::ConnectionClosed));
        }
        drop(pending);
        for subs in self.inner.subs.lock().unwrap().values() {
            for sub in subs {
                if let Some(sub) = sub.upgrade() {
                    sub.buf.lock().unwrap().closed = true;
                    sub.cond.notify_all();
                }
            }
        }
    }

    fn dispatch(&self, body: Value) {
        let op = body.get("op").and_then(Value::as_str).unwrap_or("");
        match op {
            "PING" => {
                let _ = self.send(&json!({"op": "PONG"}));
            }
            "PONG" => {}
            "EVENT" => {
                let topic = body.get("topic").and_then(Value::as_str).unwrap_or("");
                let payload = body.get("payload").cloned().unwrap_or(Value::Null);
                let subs = self.inner.subs.lock().unwrap();
                if let Some(list) = subs.get(topic) {
                    for sub in list {
                        if let Some(sub) = sub.upgrade() {
                            let mut buf = sub.buf.lock().unwrap();
                            if buf.queue.len() >= SUB_BUFFER {
                                buf.queue.pop_front();
                            }
                            buf.queue.push_back(payload.clone());
                            buf.latest = Some(payload.clone());
                            sub.cond.notify_all();
                        }
                    }
                }
            }
            "REPLY" => {
                if let Some(id) = body.get("id").and_then(Value::as_u64) {
                    if let Some(tx) = self.inner.pending.lock().unwrap().remove(&id) {
                        let payload = body.get("payload").cloned().unwrap_or(Value::Null);
                        let _ = tx.send(Ok(payload));
                    }
                }
            }
            "ERROR" => {
                let code = body.get("code").and_then(Value::as_str).unwrap_or("INTERNAL").to_string();
                let message = body.get("message").and_then(Value::as_str).unwrap_or("").to_string();
                match body.get("id").and_then(Value::as_u64) {
                    Some(id) => {
                        if let Some(tx) = self.inner.pending.lock().unwrap().remove(&id) {
                            let _ = tx.send(Err(BusError::Remote { code, message }));
                        }
                    }
                    None => {
                        let _ = self
                            .inner
                            .control_tx
                            .lock()
                            .unwrap()
                            .send(ControlReply::Error { code, message });
                    }
                }
            }
            "REGISTERED" => {
                let name = body.get("name").and_then(Value::as_str).unwrap_or("").to_string();
                let _ = self.inner.control_tx.lock().unwrap().send(ControlReply::Registered(name));
            }
            "LOOKUP_REPLY" => {
                let name = body.get("name").and_then(Value::as_str).unwrap_or("").to_string();
                let found = body.get("found").and_then(Value::as_bool).unwrap_or(false);
                let _ = self
                    .inner
                    .control_tx
                    .lock()
                    .unwrap()
                    .send(ControlReply::LookupReply(name, found));
            }
            "LIST_REPLY" => {
                let nodes = body
                    .get("nodes")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_str).map(String::from).collect())
                    .unwrap_or_default();
                let _ = self.inner.control_tx.lock().unwrap().send(ControlReply::ListReply(nodes));
            }
            "SUBSCRIBED" => {
                if let Some(id) = body.get("id").and_then(Value::as_u64) {
                    if let Some(tx) = self.inner.pending.lock().unwrap().remove(&id) {
                        let _ = tx.send(Ok(Value::Null));
                    }
                }
            }
            "CALL" => {
                let id = body.get("id").and_then(Value::as_u64).unwrap_or(0);
                let service = body.get("service").and_then(Value::as_str).unwrap_or("").to_string();
                let payload = body.get("payload").cloned().unwrap_or(Value::Null);
                let handler = self.inner.services.lock().unwrap().get(&service).cloned();
                let me = self.clone();
                match handler {
                    Some(handler) => {
                        thread::spawn(move || {
                            let reply = match handler(payload) {
                                Ok(result) => json!({"op": "REPLY", "id": id, "payload": result}),
                                Err(e) => json!({
                                    "op": "ERROR", "id": id,
                                    "code": e.code(), "message": e.to_string(),
                                }),
                            };
                            let _ = me.send(&reply);
                        });
                    }
                    None => {
                        let _ = self.send(&json!({
                            "op": "ERROR", "id": id,
                            "code": "NO_SUCH_SERVICE",
                            "message": format!("no service {service:?} on this node"),
                        }));
                    }
                }
            }
            _ => {}
        }
    }

    fn send(&self, body: &Value) -> Result<(), BusError> {
        if self.inner.closed.load(Ordering::Relaxed) {
            return Err(BusError::ConnectionClosed);
        }
        let frame = encode_frame(body)?;
        let mut writer = self.inner.writer.lock().unwrap();
        writer.write_all(&frame)?;
        Ok(())
    }

    fn control_exchange(&self, request: &Value) -> Result<ControlReply, BusError> {
        let _gate = self.inner.control_gate.lock().unwrap();
        let rx = self.inner.control_rx.lock().unwrap();
        // Drop stragglers from an earlier timed-out exchange.
        while rx.try_recv().is_ok() {}
        self.send(request)?;
        rx.recv_timeout(CONTROL_TIMEOUT).map_err(|e| match e {
            RecvTimeoutError::Timeout => BusError::Timeout,
            RecvTimeoutError::Disconnected => BusError::ConnectionClosed,
        })
    }

    /// Claim `name` on the broker. The registration lives exactly as long as
    /// this connection.
    pub fn register(&self, name: &NodeName) -> Result<(), BusError> {
        match self.control_exchange(&json!({"op": "REGISTER", "name": name.as_str()}))? {
            ControlReply::Registered(n) if n == name.as_str() => Ok(()),
            ControlReply::Error { code, message } => Err(BusError::Remote { code, message }),
            _ => Err(BusError::Protocol("unexpected reply to REGISTER".into())),
        }
    }

    /// True iff a live connection currently holds the registration.
    pub fn lookup(&self, name: &NodeName) -> Result<bool, BusError> {
        match self.control_exchange(&json!({"op": "LOOKUP", "name": name.as_str()}))? {
            ControlReply::LookupReply(n, found) if n == name.as_str() => Ok(found),
            ControlReply::Error { code, message } => Err(BusError::Remote { code, message }),
            _ => Err(BusError::Protocol("unexpected reply to LOOKUP".into())),
        }
    }

    /// All currently registered node names, sorted.
    pub fn list_nodes(&self) -> Result<Vec<String>, BusError> {
        match self.control_exchange(&json!({"op": "LIST"}))? {
            ControlReply::ListReply(nodes) => Ok(nodes),
            ControlReply::Error { code, message } => Err(BusError::Remote { code, message }),
            _ => Err(BusError::Protocol("unexpected reply to LIST".into())),
        }
    }

    /// Synchronous service call, correlated by a per-connection id.
    pub fn call(
        &self,
        node: &NodeName,
        service: &str,
        payload: Value,
        timeout: Duration,
    ) -> Result<Value, BusError> {
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        self.inner.pending.lock().unwrap().insert(id, tx);
        let request = json!({
            "op": "CALL", "id": id,
            "node": node.as_str(), "service": service,
            "payload": payload,
        });
        if let Err(e) = self.send(&request) {
            self.inner.pending.lock().unwrap().remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => {
                self.inner.pending.lock().unwrap().remove(&id);
                Err(BusError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(BusError::ConnectionClosed),
        }
    }

    /// Expose a service on this node under `service`.
    pub fn serve(&self, service: impl Into<String>, handler: ServiceFn) {
        self.inner.services.lock().unwrap().insert(service.into(), handler);
    }

    /// Fire-and-forget topic publish.
    pub fn publish(&self, topic: &NodeName, payload: Value) -> Result<(), BusError> {
        self.send(&json!({"op": "PUBLISH", "topic": topic.as_str(), "payload": payload}))
    }

    /// Subscribe to a topic; the SUBSCRIBED ack is awaited before returning,
    /// so every later publish on the topic is observed.
    pub fn subscribe(&self, topic: &NodeName) -> Result<Subscription, BusError> {
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let inner = Arc::new(SubInner {
            buf: Mutex::new(SubBuf::default()),
            cond: Condvar::new(),
        });
        self.inner
            .subs
            .lock()
            .unwrap()
            .entry(topic.as_str().to_string())
            .or_default()
            .push(Arc::downgrade(&inner));
        let (tx, rx) = mpsc::channel();
        self.inner.pending.lock().unwrap().insert(id, tx);
        self.send(&json!({"op": "SUBSCRIBE", "id": id, "topic": topic.as_str()}))?;
        match rx.recv_timeout(CONTROL_TIMEOUT) {
            Ok(Ok(_)) => Ok(Subscription {
                topic: topic.clone(),
                inner,
            }),
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => {
                self.inner.pending.lock().unwrap().remove(&id);
                Err(BusError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(BusError::ConnectionClosed),
        }
    }

    /// Graceful close: BYE then socket shutdown.
    pub fn close(&self) {
        let _ = self.send(&json!({"op": "BYE"}));
        if let Ok(writer) = self.inner.writer.lock() {
            let _ = writer.shutdown(std::net::Shutdown::Both);
        }
        self.mark_closed();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::Relaxed)
    }
}
