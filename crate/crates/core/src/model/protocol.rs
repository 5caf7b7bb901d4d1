//! Client side of the newline-delimited JSON scoring protocol.
//!
//! ```text
//! adapter -> client  {"type":"hello","protocol":1,"concurrency":"serial"}
//! client  -> adapter {"type":"score","id":7,"batch":[[[f1,...,fd], ...], ...]}
//! adapter -> client  {"type":"scores","id":7,"scores":[0.12, ...]}
//! adapter -> client  {"type":"error","id":7,"message":"..."}
//! ```
//!
//! Ids increase strictly per connection. Responses are routed to requests by
//! id, so arrival order does not matter for adapters that declared
//! `concurrent`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{Concurrency, SequenceScorer};
use crate::error::{ModelError, Result};
use crate::seqdata::SequenceMatrix;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command whose stdin/stdout carry the protocol.
    Process(String),
    /// `host:port` of a listening adapter.
    Tcp(String),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Process(cmd) => write!(f, "proc:{cmd}"),
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub handshake_timeout: Duration,
    /// `None` waits indefinitely for each response.
    pub response_timeout: Option<Duration>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            handshake_timeout: Duration::from_secs(10),
            response_timeout: Some(Duration::from_secs(600)),
        }
    }
}

type Reply = std::result::Result<Vec<f64>, ModelError>;

#[derive(Default)]
struct Router {
    pending: HashMap<u64, Sender<Reply>>,
    /// Set once the connection is unusable; every later request fails with it.
    failure: Option<String>,
}

impl Router {
    fn fail_all(&mut self, err: impl Fn() -> ModelError, reason: String) {
        for (_, tx) in self.pending.drain() {
            let _ = tx.send(Err(err()));
        }
        self.failure.get_or_insert(reason);
    }
}

enum Connection {
    Process(Child),
    Tcp(TcpStream),
}

/// A scorer that forwards batches to an external adapter.
pub struct ProtocolScorer {
    endpoint: Endpoint,
    writer: Mutex<Box<dyn Write + Send>>,
    router: Arc<Mutex<Router>>,
    next_id: AtomicU64,
    concurrency: Concurrency,
    serial_gate: Mutex<()>,
    config: ProtocolConfig,
    connection: Mutex<Connection>,
}

/// Launches or dials an adapter and completes the hello handshake.
pub fn connect_protocol_model(endpoint: &Endpoint, config: ProtocolConfig) -> Result<ProtocolScorer> {
    let (reader, writer, connection): (Box<dyn BufRead + Send>, Box<dyn Write + Send>, Connection) = match endpoint {
        Endpoint::Process(cmd) => {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(cmd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| ModelError::Transport(format!("failed to launch '{cmd}': {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            (
                Box::new(BufReader::new(stdout)),
                Box::new(stdin),
                Connection::Process(child),
            )
        }
        Endpoint::Tcp(addr) => {
            let stream = TcpStream::connect(addr.as_str())
                .map_err(|e| ModelError::Transport(format!("failed to connect to {addr}: {e}")))?;
            let _ = stream.set_nodelay(true);
            let read_half = stream.try_clone().map_err(|e| ModelError::Transport(e.to_string()))?;
            let write_half = stream.try_clone().map_err(|e| ModelError::Transport(e.to_string()))?;
            (
                Box::new(BufReader::new(read_half)),
                Box::new(write_half),
                Connection::Tcp(stream),
            )
        }
    };

    let router = Arc::new(Mutex::new(Router::default()));
    let (hello_tx, hello_rx) = mpsc::channel();
    {
        let router = Arc::clone(&router);
        thread::Builder::new()
            .name("seqshap-protocol-reader".into())
            .spawn(move || reader_loop(reader, hello_tx, router))
            .map_err(|e| ModelError::Transport(e.to_string()))?;
    }

    let scorer_parts = (writer, connection);
    let concurrency = match await_hello(&hello_rx, config.handshake_timeout) {
        Ok(c) => c,
        Err(e) => {
            shutdown(scorer_parts.1);
            return Err(e.into());
        }
    };

    Ok(ProtocolScorer {
        endpoint: endpoint.clone(),
        writer: Mutex::new(scorer_parts.0),
        router,
        next_id: AtomicU64::new(1),
        concurrency,
        serial_gate: Mutex::new(()),
        config,
        connection: Mutex::new(scorer_parts.1),
    })
}

fn shutdown(connection: Connection) {
    match connection {
        Connection::Process(mut child) => {
            let _ = child.kill();
            let _ = child.wait();
        }
        Connection::Tcp(stream) => {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

fn await_hello(rx: &Receiver<std::io::Result<Option<String>>>, timeout: Duration) -> std::result::Result<Concurrency, ModelError> {
    let line = match rx.recv_timeout(timeout) {
        Ok(Ok(Some(line))) => line,
        Ok(Ok(None)) => return Err(ModelError::Transport("adapter closed before sending hello".into())),
        Ok(Err(e)) => return Err(ModelError::Transport(format!("reading hello: {e}"))),
        Err(RecvTimeoutError::Timeout) => return Err(ModelError::HandshakeTimeout(timeout)),
        Err(RecvTimeoutError::Disconnected) => {
            return Err(ModelError::Transport("adapter reader stopped before hello".into()))
        }
    };
    parse_hello(&line)
}

fn malformed(line: &str, reason: impl Into<String>) -> ModelError {
    ModelError::MalformedResponse {
        line: line.to_string(),
        reason: reason.into(),
    }
}

fn parse_hello(line: &str) -> std::result::Result<Concurrency, ModelError> {
    let v: Value = serde_json::from_str(line).map_err(|e| malformed(line, format!("invalid JSON: {e}")))?;
    if v.get("type").and_then(Value::as_str) != Some("hello") {
        return Err(malformed(line, "expected a hello message"));
    }
    let offered = v
        .get("protocol")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(line, "hello lacks an integer protocol"))?;
    if offered != u64::from(PROTOCOL_VERSION) {
        return Err(ModelError::VersionMismatch {
            expected: PROTOCOL_VERSION,
            offered,
        });
    }
    match v.get("concurrency").and_then(Value::as_str) {
        None | Some("serial") => Ok(Concurrency::Serial),
        Some("concurrent") => Ok(Concurrency::Concurrent),
        Some(other) => Err(malformed(line, format!("unknown concurrency '{other}'"))),
    }
}

enum Incoming {
    Scores(u64, Vec<f64>),
    Error(u64, String),
}

fn parse_incoming(line: &str) -> std::result::Result<Incoming, ModelError> {
    let v: Value = serde_json::from_str(line).map_err(|e| malformed(line, format!("invalid JSON: {e}")))?;
    let id = v
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(line, "missing integer id"))?;
    match v.get("type").and_then(Value::as_str) {
        Some("scores") => {
            let scores = v
                .get("scores")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(line, "missing scores array"))?
                .iter()
                .map(|s| s.as_f64().ok_or_else(|| malformed(line, "non-numeric score")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Incoming::Scores(id, scores))
        }
        Some("error") => {
            let message = v
                .get("message")
                .and_then(Value::as_str)
                .unwrap_or("(no message)")
                .to_string();
            Ok(Incoming::Error(id, message))
        }
        _ => Err(malformed(line, "unknown message type")),
    }
}

fn reader_loop(
    mut reader: Box<dyn BufRead + Send>,
    hello: Sender<std::io::Result<Option<String>>>,
    router: Arc<Mutex<Router>>,
) {
    let mut line = String::new();
    let first = match reader.read_line(&mut line) {
        Ok(0) => Ok(None),
        Ok(_) => Ok(Some(line.trim_end().to_string())),
        Err(e) => Err(e),
    };
    let proceed = matches!(first, Ok(Some(_)));
    let _ = hello.send(first);
    if !proceed {
        return;
    }

    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => {
                let mut r = router.lock().unwrap();
                r.fail_all(
                    || ModelError::Transport("adapter closed the connection".into()),
                    "adapter closed the connection".into(),
                );
                return;
            }
            Err(e) => {
                let msg = format!("read failed: {e}");
                router
                    .lock()
                    .unwrap()
                    .fail_all(|| ModelError::Transport(msg.clone()), msg.clone());
                return;
            }
            Ok(_) => {}
        }
        let text = line.trim_end();
        if text.is_empty() {
            continue;
        }
        let mut r = router.lock().unwrap();
        let outcome = parse_incoming(text).and_then(|msg| {
            let (id, reply) = match msg {
                Incoming::Scores(id, scores) => (id, Ok(scores)),
                Incoming::Error(id, message) => (id, Err(ModelError::Remote { id, message })),
            };
            match r.pending.remove(&id) {
                Some(tx) => {
                    let _ = tx.send(reply);
                    Ok(())
                }
                None => Err(malformed(text, format!("response id {id} matches no outstanding request"))),
            }
        });
        if let Err(err) = outcome {
            let (line_s, reason) = match &err {
                ModelError::MalformedResponse { line, reason } => (line.clone(), reason.clone()),
                other => (text.to_string(), other.to_string()),
            };
            r.fail_all(
                || ModelError::MalformedResponse {
                    line: line_s.clone(),
                    reason: reason.clone(),
                },
                format!("malformed response ({reason}): {line_s}"),
            );
        }
    }
}

fn encode_request(id: u64, batch: &[SequenceMatrix]) -> String {
    let sequences: Vec<Vec<Vec<f64>>> = batch.iter().map(|x| x.events().collect()).collect();
    let mut line = serde_json::json!({"type": "score", "id": id, "batch": sequences}).to_string();
    line.push('\n');
    line
}

impl ProtocolScorer {
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn round_trip(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        let (tx, rx) = mpsc::channel();
        let id = {
            let mut writer = self.writer.lock().unwrap();
            let id = self.next_id.fetch_add(1, Ordering::SeqCst);
            {
                let mut r = self.router.lock().unwrap();
                if let Some(reason) = &r.failure {
                    return Err(ModelError::Transport(format!("connection unusable: {reason}")).into());
                }
                r.pending.insert(id, tx);
            }
            let line = encode_request(id, batch);
            if let Err(e) = writer.write_all(line.as_bytes()).and_then(|_| writer.flush()) {
                self.router.lock().unwrap().pending.remove(&id);
                return Err(ModelError::Transport(format!("write failed: {e}")).into());
            }
            id
        };
        let reply = match self.config.response_timeout {
            Some(t) => rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => {
                    self.router.lock().unwrap().pending.remove(&id);
                    ModelError::Transport(format!("request {id} timed out after {t:?}"))
                }
                RecvTimeoutError::Disconnected => ModelError::Transport("reader stopped".into()),
            })?,
            None => rx
                .recv()
                .map_err(|_| ModelError::Transport("reader stopped".into()))?,
        };
        let scores = reply?;
        if scores.len() != batch.len() {
            return Err(ModelError::BatchSize {
                expected: batch.len(),
                got: scores.len(),
            }
            .into());
        }
        Ok(scores)
    }
}

impl SequenceScorer for ProtocolScorer {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        match self.concurrency {
            Concurrency::Serial => {
                let _gate = self.serial_gate.lock().unwrap();
                self.round_trip(batch)
            }
            Concurrency::Concurrent => self.round_trip(batch),
        }
    }

    fn concurrency(&self) -> Concurrency {
        self.concurrency
    }
}

impl Drop for ProtocolScorer {
    fn drop(&mut self) {
        match self.connection.get_mut().unwrap() {
            Connection::Process(child) => {
                let _ = child.kill();
                let _ = child.wait();
            }
            Connection::Tcp(stream) => {
                let _ = stream.shutdown(Shutdown::Both);
            }
        }
    }
}
