//! External scorers over line-delimited JSON on a subprocess's stdio.
//!
//! The scorer speaks first with a `hello` line advertising its roles; the
//! host then sends `rank` / `read` requests and waits for the matching
//! `rank_result` / `read_result` (or `error`). Request ids are echoed. A
//! session only has several requests in flight when the scorer's hello set
//! `"pipelined": true`.
//!
//! Each session is a serial channel; [`ExternalScorer`] keeps a pool of
//! sessions so concurrent callers never interleave on one process.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Passage, Ranker, Reader, ScorerDescriptor, ScorerError, SpanScore};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

const STDERR_TAIL: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerRole {
    Rank,
    Read,
}

impl ScorerRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerRole::Rank => "rank",
            ScorerRole::Read => "read",
        }
    }
}

/// Host-to-scorer messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Rank { id: String, question: String, text: String },
    Read { id: String, question: String, text: String, k: usize },
}

impl Request {
    pub fn id(&self) -> &str {
        match self {
            Request::Rank { id, .. } | Request::Read { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSpan {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Scorer-to-host messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Hello {
        protocol: u32,
        roles: Vec<ScorerRole>,
        #[serde(default)]
        pipelined: bool,
    },
    RankResult {
        id: String,
        score: f64,
    },
    ReadResult {
        id: String,
        spans: Vec<WireSpan>,
    },
    Error {
        #[serde(default)]
        id: String,
        message: String,
    },
}

impl Response {
    fn id(&self) -> Option<&str> {
        match self {
            Response::Hello { .. } => None,
            Response::RankResult { id, .. } | Response::ReadResult { id, .. } | Response::Error { id, .. } => Some(id),
        }
    }
}

pub fn parse_response(line: &str) -> Result<Response, ScorerError> {
    serde_json::from_str(line.trim_end())
        .map_err(|e| ScorerError::Malformed { line: line.trim_end().to_string(), reason: e.to_string() })
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub handshake_timeout: Duration,
    pub request_timeout: Duration,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT, request_timeout: DEFAULT_REQUEST_TIMEOUT }
    }
}

/// One scorer subprocess.
pub struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    roles: Vec<ScorerRole>,
    pipelined: bool,
    request_timeout: Duration,
    next_id: u64,
}

impl Session {
    /// Spawns `command[0]` with the remaining arguments and waits for hello.
    pub fn spawn(command: &[String], options: &SessionOptions) -> Result<Session, ScorerError> {
        let (program, args) =
            command.split_first().ok_or_else(|| ScorerError::Protocol("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| ScorerError::Spawn { command: command.join(" "), source })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let stderr_pipe = child.stderr.take().expect("stderr is piped");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut reader = BufReader::new(stderr_pipe);
            let mut buf = [0u8; 1024];
            while let Ok(n) = reader.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().unwrap_or_else(|e| e.into_inner());
                tail.push_str(&String::from_utf8_lossy(&buf[..n]));
                if tail.len() > STDERR_TAIL {
                    let mut cut = tail.len() - STDERR_TAIL;
                    while !tail.is_char_boundary(cut) {
                        cut += 1;
                    }
                    tail.drain(..cut);
                }
            }
        });

        let mut session = Session {
            child,
            stdin,
            lines,
            stderr,
            roles: Vec::new(),
            pipelined: false,
            request_timeout: options.request_timeout,
            next_id: 0,
        };
        let hello = match session.lines.recv_timeout(options.handshake_timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => return Err(ScorerError::HandshakeTimeout(options.handshake_timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(session.exited()),
        };
        match parse_response(&hello)? {
            Response::Hello { protocol, roles, pipelined } => {
                if protocol != PROTOCOL_VERSION {
                    return Err(ScorerError::Protocol(format!(
                        "scorer speaks protocol {protocol}, host speaks {PROTOCOL_VERSION}"
                    )));
                }
                session.roles = roles;
                session.pipelined = pipelined;
            }
            other => {
                return Err(ScorerError::Malformed {
                    line: hello.clone(),
                    reason: format!("expected hello, got {}", type_name(&other)),
                })
            }
        }
        Ok(session)
    }

    pub fn roles(&self) -> &[ScorerRole] {
        &self.roles
    }

    pub fn pipelined(&self) -> bool {
        self.pipelined
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("r{}", self.next_id)
    }

    fn exited(&mut self) -> ScorerError {
        // Give the process a moment to finish so the status is available.
        let deadline = Instant::now() + Duration::from_millis(500);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(status)) => break status.to_string(),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                Ok(None) => break "stdout closed".to_string(),
                Err(e) => break e.to_string(),
            }
        };
        thread::sleep(Duration::from_millis(20));
        let stderr = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        ScorerError::Exited { status, stderr }
    }

    fn send(&mut self, request: &Request) -> Result<(), ScorerError> {
        let mut line = serde_json::to_string(request).map_err(|e| ScorerError::Protocol(e.to_string()))?;
        line.push('\n');
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(ScorerError::Protocol("scorer stdin is closed".into()));
        };
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            return Err(self.exited());
        }
        Ok(())
    }

    fn receive(&mut self) -> Result<Response, ScorerError> {
        match self.lines.recv_timeout(self.request_timeout) {
            Ok(line) => parse_response(&line),
            Err(RecvTimeoutError::Timeout) => Err(ScorerError::Timeout(self.request_timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(self.exited()),
        }
    }

    /// Sends the requests and returns responses in request order.
    pub fn call_many(&mut self, requests: &[Request]) -> Result<Vec<Response>, ScorerError> {
        if !self.pipelined {
            let mut out = Vec::with_capacity(requests.len());
            for r in requests {
                self.send(r)?;
                let resp = self.receive()?;
                out.push(check_id(resp, r.id())?);
            }
            return Ok(out);
        }
        for r in requests {
            self.send(r)?;
        }
        let mut by_id: HashMap<String, Response> = HashMap::with_capacity(requests.len());
        while by_id.len() < requests.len() {
            let resp = self.receive()?;
            let id = resp.id().ok_or_else(|| ScorerError::Protocol("unexpected hello".into()))?.to_string();
            if !requests.iter().any(|r| r.id() == id) {
                return Err(ScorerError::Protocol(format!("response for unknown id `{id}`")));
            }
            by_id.insert(id, resp);
        }
        requests.iter().map(|r| check_id(by_id.remove(r.id()).expect("all ids received"), r.id())).collect()
    }

    pub fn rank(&mut self, question: &str, texts: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let requests: Vec<Request> = texts
            .iter()
            .map(|t| Request::Rank { id: self.fresh_id(), question: question.to_string(), text: t.to_string() })
            .collect();
        self.call_many(&requests)?
            .into_iter()
            .map(|r| match r {
                Response::RankResult { score, .. } if score.is_finite() => Ok(score),
                Response::RankResult { score, .. } => {
                    Err(ScorerError::Protocol(format!("non-finite rank score {score}")))
                }
                other => Err(unexpected("rank_result", &other)),
            })
            .collect()
    }

    pub fn read(&mut self, question: &str, text: &str, k: usize) -> Result<Vec<SpanScore>, ScorerError> {
        let request = Request::Read { id: self.fresh_id(), question: question.to_string(), text: text.to_string(), k };
        match self.call_many(std::slice::from_ref(&request))?.pop() {
            Some(Response::ReadResult { spans, .. }) => {
                Ok(spans.into_iter().map(|s| SpanScore { start: s.start, end: s.end, score: s.score }).collect())
            }
            Some(other) => Err(unexpected("read_result", &other)),
            None => Err(ScorerError::Protocol("no response".into())),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        // Closing stdin asks the scorer to exit.
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn type_name(r: &Response) -> &'static str {
    match r {
        Response::Hello { .. } => "hello",
        Response::RankResult { .. } => "rank_result",
        Response::ReadResult { .. } => "read_result",
        Response::Error { .. } => "error",
    }
}

fn unexpected(expected: &str, got: &Response) -> ScorerError {
    ScorerError::Protocol(format!("expected {expected}, got {}", type_name(got)))
}

fn check_id(resp: Response, id: &str) -> Result<Response, ScorerError> {
    if let Response::Error { id, message } = resp {
        return Err(ScorerError::Remote { id, message });
    }
    match resp.id() {
        Some(got) if got == id => Ok(resp),
        Some(got) => Err(ScorerError::Protocol(format!("response id `{got}` does not match request id `{id}`"))),
        None => Err(unexpected("a result", &resp)),
    }
}

/// A pool of sessions of one external scorer command.
pub struct ExternalScorer {
    command: Vec<String>,
    role: ScorerRole,
    sessions: Vec<Mutex<Session>>,
    next: AtomicUsize,
}

impl ExternalScorer {
    pub fn spawn(
        command: &[String],
        role: ScorerRole,
        pool_size: usize,
        options: &SessionOptions,
    ) -> Result<ExternalScorer, ScorerError> {
        let mut sessions = Vec::new();
        for _ in 0..pool_size.max(1) {
            let s = Session::spawn(command, options)?;
            if !s.roles().contains(&role) {
                return Err(ScorerError::UnsupportedRole(role.as_str().to_string()));
            }
            sessions.push(Mutex::new(s));
        }
        Ok(ExternalScorer { command: command.to_vec(), role, sessions, next: AtomicUsize::new(0) })
    }

    pub fn pool_size(&self) -> usize {
        self.sessions.len()
    }

    fn with_session<T>(&self, f: impl FnOnce(&mut Session) -> Result<T, ScorerError>) -> Result<T, ScorerError> {
        let start = self.next.fetch_add(1, Ordering::Relaxed) % self.sessions.len();
        for i in 0..self.sessions.len() {
            let slot = &self.sessions[(start + i) % self.sessions.len()];
            if let Ok(mut guard) = slot.try_lock() {
                return f(&mut guard);
            }
        }
        let mut guard =
            self.sessions[start].lock().map_err(|_| ScorerError::Protocol("scorer session poisoned".into()))?;
        f(&mut guard)
    }

    fn require(&self, role: ScorerRole) -> Result<(), ScorerError> {
        if self.role == role {
            Ok(())
        } else {
            Err(ScorerError::UnsupportedRole(role.as_str().to_string()))
        }
    }

    fn describe(&self) -> ScorerDescriptor {
        ScorerDescriptor {
            kind: "external".into(),
            detail: format!("{} (pool {})", self.command.join(" "), self.sessions.len()),
        }
    }
}

impl Ranker for ExternalScorer {
    fn score(&self, question: &str, passage: Passage<'_>) -> Result<f64, ScorerError> {
        self.require(ScorerRole::Rank)?;
        let scores = self.with_session(|s| s.rank(question, &[passage.text]))?;
        Ok(scores[0])
    }

    fn score_batch(&self, question: &str, passages: &[Passage<'_>]) -> Result<Vec<f64>, ScorerError> {
        self.require(ScorerRole::Rank)?;
        let texts: Vec<&str> = passages.iter().map(|p| p.text).collect();
        self.with_session(|s| s.rank(question, &texts))
    }

    fn descriptor(&self) -> ScorerDescriptor {
        self.describe()
    }
}

impl Reader for ExternalScorer {
    fn read(&self, question: &str, passage: Passage<'_>, k: usize) -> Result<Vec<SpanScore>, ScorerError> {
        self.require(ScorerRole::Read)?;
        self.with_session(|s| s.read(question, passage.text, k))
    }

    fn descriptor(&self) -> ScorerDescriptor {
        self.describe()
    }
}
