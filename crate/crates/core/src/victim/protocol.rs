//! Newline-delimited JSON victim protocol.
//!
//! Request: `{"id": int, "graph": <graph JSON>}`. Reply: `{"id": int, "scores": [...]}`
//! or `{"id": int, "error": "text"}`. Replies must echo the request id.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{VictimError, VictimModel, VictimResponse};
use crate::data::GraphJson;
use crate::graph::Graph;

/// Id used in error replies when the request id could not be read.
pub const UNKNOWN_ID: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: i64,
    pub graph: GraphJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Response {
    Scores { id: i64, scores: Vec<f64> },
    Error { id: i64, error: String },
}

impl Response {
    pub fn id(&self) -> i64 {
        match self {
            Self::Scores { id, .. } | Self::Error { id, .. } => *id,
        }
    }
}

/// How the numbers in a `scores` reply are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    #[default]
    Probabilities,
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalVictimOptions {
    pub timeout: Duration,
    pub kind: ScoreKind,
}

impl Default for ExternalVictimOptions {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(30), kind: ScoreKind::Probabilities }
    }
}

/// Client side of the protocol. Replies are read on a background thread so
/// that a silent victim surfaces as [`VictimError::Timeout`].
pub struct ExternalVictim {
    writer: Box<dyn Write + Send>,
    replies: Receiver<std::io::Result<String>>,
    options: ExternalVictimOptions,
    next_id: i64,
    abandoned: HashSet<i64>,
    child: Option<Child>,
}

impl ExternalVictim {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        options: ExternalVictimOptions,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer: Box::new(writer), replies: rx, options, next_id: 0, abandoned: HashSet::new(), child: None }
    }

    /// Spawns `cmd` and talks to it over its stdin and stdout.
    pub fn spawn(cmd: &mut Command, options: ExternalVictimOptions) -> std::io::Result<Self> {
        let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut victim = Self::from_streams(stdout, stdin, options);
        victim.child = Some(child);
        Ok(victim)
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, options: ExternalVictimOptions) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(reader, stream, options))
    }

    fn send(&mut self, id: i64, g: &Graph) -> Result<(), VictimError> {
        let request = Request { id, graph: GraphJson::from(g) };
        let mut line = serde_json::to_string(&request).expect("request serialises");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|()| self.writer.flush())
            .map_err(|e| VictimError::SendFailed(e.to_string()))
    }

    fn receive(&mut self, id: i64) -> Result<Response, VictimError> {
        loop {
            let line = match self.replies.recv_timeout(self.options.timeout) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => {
                    self.abandoned.insert(id);
                    return Err(VictimError::Timeout(self.options.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(VictimError::Protocol("victim closed the connection".into()))
                }
            };
            let reply: Response = serde_json::from_str(&line)
                .map_err(|e| VictimError::Protocol(format!("malformed reply {line:?}: {e}")))?;
            // Late answers to requests that already timed out are dropped.
            if self.abandoned.remove(&reply.id()) {
                continue;
            }
            if reply.id() != id {
                return Err(VictimError::Protocol(format!("reply id {} does not match request id {id}", reply.id())));
            }
            return Ok(reply);
        }
    }
}

impl VictimModel for ExternalVictim {
    fn predict(&mut self, g: &Graph) -> Result<VictimResponse, VictimError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(id, g)?;
        match self.receive(id)? {
            Response::Error { error, .. } => Err(VictimError::Remote(error)),
            Response::Scores { scores, .. } => match self.options.kind {
                ScoreKind::Probabilities => VictimResponse::from_probabilities(scores),
                ScoreKind::Logits => VictimResponse::from_logits(&scores),
            },
        }
    }
}

impl Drop for ExternalVictim {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn answer(model: &mut impl VictimModel, line: &str) -> Response {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return Response::Error { id: UNKNOWN_ID, error: format!("invalid JSON: {e}") },
    };
    let id = value.get("id").and_then(|v| v.as_i64()).unwrap_or(UNKNOWN_ID);
    let fail = |error: String| Response::Error { id, error };
    let request: Request = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return fail(format!("invalid request: {e}")),
    };
    let graph = match request.graph.into_graph() {
        Ok(g) => g,
        Err(e) => return fail(e.to_string()),
    };
    match model.predict(&graph) {
        Ok(r) => Response::Scores { id, scores: r.class_scores },
        Err(e) => fail(e.to_string()),
    }
}

/// Answers requests until the reader is exhausted. Bad requests get an error
/// reply and the loop continues. Returns the number of replies written.
pub fn serve(model: &mut impl VictimModel, reader: impl BufRead, mut writer: impl Write) -> std::io::Result<u64> {
    let mut answered = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = answer(model, &line);
        serde_json::to_writer(&mut writer, &reply)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        answered += 1;
    }
    Ok(answered)
}

/// Accepts connections forever, serving each on its own thread with a fresh model.
pub fn serve_tcp<M, F>(listener: TcpListener, make_model: F) -> std::io::Result<()>
where
    M: VictimModel + 'static,
    F: Fn() -> M + Send + Sync + 'static,
{
    let make_model = std::sync::Arc::new(make_model);
    for stream in listener.incoming() {
        let stream = stream?;
        let make_model = make_model.clone();
        thread::spawn(move || {
            let mut model = make_model();
            if let Ok(reader) = stream.try_clone() {
                let _ = serve(&mut model, BufReader::new(reader), stream);
            }
        });
    }
    Ok(())
}
