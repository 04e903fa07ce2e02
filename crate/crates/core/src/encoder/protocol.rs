//! Client side of the encoder sidecar protocol.
//!
//! Messages are single-line UTF-8 JSON objects:
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"name":"...","dim":768,"layers":"sum-last-4"}
//! -> {"op":"encode","lang":"it","text":"..."}
//! <- {"dim":768,"tokens":[{"start":0,"end":2,"vec":[...]}, ...]}
//! <- {"error":"code","msg":"..."}
//! ```

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EncodeError, EncoderBackend, Token, TokenEncoding};
use crate::text::CharSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToken {
    pub start: usize,
    pub end: usize,
    pub vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub dim: usize,
    pub tokens: Vec<WireToken>,
}

impl EncodeResponse {
    /// Converts and validates; a violating response is rejected whole.
    pub fn into_encoding(self, lang: &str, text: &str, backend_id: &str) -> Result<TokenEncoding, EncodeError> {
        let enc = TokenEncoding {
            lang: lang.to_string(),
            text: text.to_string(),
            dim: self.dim,
            backend_id: backend_id.to_string(),
            tokens: self
                .tokens
                .into_iter()
                .map(|t| Token {
                    span: CharSpan::new(t.start, t.end),
                    vector: t.vec,
                })
                .collect(),
        };
        enc.validate()?;
        Ok(enc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub name: String,
    pub dim: usize,
    pub layers: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio { program: String, args: Vec<String> },
}

impl FromStr for Endpoint {
    type Err = EncodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            if let Some(program) = parts.next() {
                return Ok(Endpoint::Stdio {
                    program,
                    args: parts.collect(),
                });
            }
        }
        Err(EncodeError::Unreachable(format!(
            "endpoint {s:?} is neither tcp://host:port nor stdio:<command>"
        )))
    }
}

struct Connection {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    timeout: Duration,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn io_error(e: io::Error, timeout: Duration) -> EncodeError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => EncodeError::Timeout(timeout),
        _ => EncodeError::Unreachable(e.to_string()),
    }
}

impl Connection {
    fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Self, EncodeError> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(|e| EncodeError::Unreachable(format!("{addr}: {e}")))?;
                stream
                    .set_read_timeout(Some(timeout))
                    .and_then(|_| stream.set_write_timeout(Some(timeout)))
                    .map_err(|e| EncodeError::Unreachable(e.to_string()))?;
                let read_half = stream.try_clone().map_err(|e| EncodeError::Unreachable(e.to_string()))?;
                Ok(Connection {
                    reader: BufReader::new(Box::new(read_half)),
                    writer: Box::new(stream),
                    child: None,
                    timeout,
                })
            }
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| EncodeError::Unreachable(format!("{program}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Connection {
                    reader: BufReader::new(Box::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                    timeout,
                })
            }
        }
    }

    fn round_trip(&mut self, request: &Value) -> Result<Value, EncodeError> {
        let mut line = request.to_string();
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| io_error(e, self.timeout))?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(|e| io_error(e, self.timeout))?;
        if n == 0 {
            return Err(EncodeError::Unreachable("sidecar closed the connection".into()));
        }
        let value: Value = serde_json::from_str(reply.trim_end()).map_err(|e| EncodeError::ProtocolViolation {
            diagnostics: vec![format!("reply is not JSON: {e}")],
        })?;
        if let Some(code) = value.get("error") {
            let code = code.as_str().map(str::to_string).unwrap_or_else(|| code.to_string());
            let msg = value.get("msg").and_then(Value::as_str).unwrap_or_default().to_string();
            return Err(EncodeError::Remote { code, msg });
        }
        Ok(value)
    }

    fn hello(&mut self) -> Result<Hello, EncodeError> {
        let value = self.round_trip(&json!({"op": "hello"}))?;
        let hello: Hello = serde_json::from_value(value).map_err(|e| EncodeError::ProtocolViolation {
            diagnostics: vec![format!("bad hello reply: {e}")],
        })?;
        if hello.dim == 0 {
            return Err(EncodeError::ProtocolViolation {
                diagnostics: vec!["hello advertised dim 0".into()],
            });
        }
        Ok(hello)
    }
}

struct Pool {
    idle: Vec<Connection>,
    open: usize,
}

/// Sidecar client. Up to `max_in_flight` connections are kept open and
/// requests wait for a free one; a stdio endpoint always uses one process.
pub struct ProtocolClient {
    endpoint: Endpoint,
    cap: usize,
    timeout: Duration,
    hello: Hello,
    id: String,
    pool: Mutex<Pool>,
    freed: Condvar,
}

impl ProtocolClient {
    pub fn connect(endpoint: Endpoint, max_in_flight: usize, timeout: Duration) -> Result<Self, EncodeError> {
        let mut conn = Connection::open(&endpoint, timeout)?;
        let hello = conn.hello()?;
        let cap = match endpoint {
            Endpoint::Stdio { .. } => 1,
            Endpoint::Tcp(_) => max_in_flight.max(1),
        };
        Ok(ProtocolClient {
            id: format!("protocol:{}", hello.name),
            endpoint,
            cap,
            timeout,
            hello,
            pool: Mutex::new(Pool {
                idle: vec![conn],
                open: 1,
            }),
            freed: Condvar::new(),
        })
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    fn checkout(&self) -> Result<Connection, EncodeError> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(conn) = pool.idle.pop() {
                return Ok(conn);
            }
            if pool.open < self.cap {
                pool.open += 1;
                drop(pool);
                let opened = Connection::open(&self.endpoint, self.timeout).and_then(|mut c| {
                    let hello = c.hello()?;
                    if hello.dim != self.hello.dim {
                        return Err(EncodeError::ProtocolViolation {
                            diagnostics: vec![format!("sidecar dim changed from {} to {}", self.hello.dim, hello.dim)],
                        });
                    }
                    Ok(c)
                });
                if opened.is_err() {
                    self.discard();
                }
                return opened;
            }
            pool = self.freed.wait(pool).expect("pool lock");
        }
    }

    fn give_back(&self, conn: Connection) {
        self.pool.lock().expect("pool lock").idle.push(conn);
        self.freed.notify_one();
    }

    fn discard(&self) {
        self.pool.lock().expect("pool lock").open -= 1;
        self.freed.notify_one();
    }
}

impl EncoderBackend for ProtocolClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn encode(&self, lang: &str, text: &str) -> Result<TokenEncoding, EncodeError> {
        let mut conn = self.checkout()?;
        let reply = match conn.round_trip(&json!({"op": "encode", "lang": lang, "text": text})) {
            Ok(v) => {
                self.give_back(conn);
                v
            }
            Err(e @ EncodeError::Remote { .. }) => {
                self.give_back(conn);
                return Err(e);
            }
            Err(e) => {
                drop(conn);
                self.discard();
                return Err(e);
            }
        };
        let response: EncodeResponse = serde_json::from_value(reply).map_err(|e| EncodeError::ProtocolViolation {
            diagnostics: vec![format!("bad encode reply: {e}")],
        })?;
        if response.dim != self.hello.dim {
            return Err(EncodeError::ProtocolViolation {
                diagnostics: vec![format!("reply dim {} != advertised dim {}", response.dim, self.hello.dim)],
            });
        }
        response.into_encoding(lang, text, &self.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    /// Fake sidecar: whitespace tokens, vector = [token length, position].
    /// Texts containing "BAD" get an out-of-range span; "ERR" an error reply.
    fn reply_for(req: &Value) -> Value {
        match req["op"].as_str() {
            Some("hello") => json!({"name": "fake", "dim": 2, "layers": "sum-last-4"}),
            Some("encode") => {
                let text = req["text"].as_str().unwrap();
                if text.contains("ERR") {
                    return json!({"error": "oom", "msg": "out of memory"});
                }
                let mut tokens = Vec::new();
                let mut pos = 0;
                for (i, w) in text.split(' ').enumerate() {
                    let n = w.chars().count();
                    let end = if w == "BAD" { pos + 100 } else { pos + n };
                    tokens.push(json!({"start": pos, "end": end, "vec": [n as f64, i as f64]}));
                    pos += n + 1;
                }
                json!({"dim": 2, "tokens": tokens})
            }
            _ => json!({"error": "bad-op", "msg": "unknown op"}),
        }
    }

    fn spawn_tcp_sidecar() -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let conns = Arc::new(AtomicUsize::new(0));
        let counter = conns.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let stream = stream.unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut writer = stream;
                    let mut line = String::new();
                    while reader.read_line(&mut line).unwrap_or(0) > 0 {
                        let req: Value = serde_json::from_str(line.trim()).unwrap();
                        // slow down so concurrent callers overlap
                        thread::sleep(Duration::from_millis(20));
                        writeln!(writer, "{}", reply_for(&req)).unwrap();
                        line.clear();
                    }
                });
            }
        });
        (format!("tcp://{addr}"), conns)
    }

    #[test]
    fn tcp_handshake_and_encode() {
        let (endpoint, _) = spawn_tcp_sidecar();
        let client = ProtocolClient::connect(endpoint.parse().unwrap(), 4, Duration::from_secs(5)).unwrap();
        assert_eq!(client.hello().dim, 2);
        assert_eq!(client.hello().layers, "sum-last-4");
        let enc = encode(&client, "it", "la cella").unwrap();
        assert_eq!(enc.tokens.len(), 2);
        assert_eq!(enc.tokens[1].span, CharSpan::new(3, 8));
        assert_eq!(enc.tokens[1].vector, vec![5.0, 1.0]);
    }

    #[test]
    fn out_of_range_span_is_protocol_violation() {
        let (endpoint, _) = spawn_tcp_sidecar();
        let client = ProtocolClient::connect(endpoint.parse().unwrap(), 1, Duration::from_secs(5)).unwrap();
        match encode(&client, "en", "ok BAD") {
            Err(EncodeError::ProtocolViolation { diagnostics }) => {
                assert!(diagnostics[0].contains("beyond text length"), "{diagnostics:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
        // the connection is still usable afterwards
        assert!(encode(&client, "en", "fine").is_ok());
    }

    #[test]
    fn remote_error_surfaces() {
        let (endpoint, _) = spawn_tcp_sidecar();
        let client = ProtocolClient::connect(endpoint.parse().unwrap(), 1, Duration::from_secs(5)).unwrap();
        match client.encode("en", "ERR here") {
            Err(EncodeError::Remote { code, msg }) => {
                assert_eq!(code, "oom");
                assert_eq!(msg, "out of memory");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concurrency_capped_by_pool() {
        let (endpoint, conns) = spawn_tcp_sidecar();
        let client = Arc::new(ProtocolClient::connect(endpoint.parse().unwrap(), 3, Duration::from_secs(5)).unwrap());
        let handles: Vec<_> = (0..12)
            .map(|i| {
                let c = client.clone();
                thread::spawn(move || encode(&*c, "en", &format!("word{i} x")).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(conns.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn unreachable_endpoint() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = ProtocolClient::connect(Endpoint::Tcp(addr.to_string()), 1, Duration::from_secs(1))
            .err()
            .unwrap();
        assert!(matches!(err, EncodeError::Unreachable(_)));
        assert!("ftp://x".parse::<Endpoint>().is_err());
    }

    #[test]
    fn stdio_sidecar() {
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "hello":
        out = {"name": "py", "dim": 1, "layers": "sum-last-4"}
    else:
        t = req["text"]
        out = {"dim": 1, "tokens": [{"start": 0, "end": len(t), "vec": [1.0]}]}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
"#;
        let endpoint = Endpoint::Stdio {
            program: "python3".into(),
            args: vec!["-c".into(), script.into()],
        };
        let client = match ProtocolClient::connect(endpoint, 4, Duration::from_secs(10)) {
            Ok(c) => c,
            Err(EncodeError::Unreachable(msg)) => {
                eprintln!("python3 unavailable, skipping: {msg}");
                return;
            }
            Err(e) => panic!("{e}"),
        };
        let enc = encode(&client, "el", "κελί").unwrap();
        assert_eq!(enc.tokens[0].span, CharSpan::new(0, 4));
    }
}
