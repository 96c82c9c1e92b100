//! Client for the hyperbolic-volume sidecar.
//!
//! The wire format is one JSON object per line in each direction:
//! requests `{"id", "letters", "strands"}` and responses
//! `{"id", "volume", "status", "message"}`.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::braid::BraidWord;

pub const ORACLE_ENV: &str = "BRAIDFORGE_ORACLE";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const VOLUME_TOLERANCE: f64 = 1e-5;
/// Complement volume of the figure-eight knot.
pub const FIGURE_EIGHT_VOLUME: f64 = 2.029_883_212_819_307;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("volume bridge unavailable: {0}")]
    BridgeUnavailable(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cannot compare volumes with statuses {0} and {1}")]
    StatusMismatch(VolumeStatus, VolumeStatus),
    #[error("invalid endpoint {0:?}; expected stdio:<command>, tcp:<host>:<port> or unix:<path>")]
    InvalidEndpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Spawn a sidecar and talk over its standard streams.
    Stdio(Vec<String>),
    Tcp(String),
    Unix(PathBuf),
}

impl FromStr for Endpoint {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || OracleError::InvalidEndpoint(s.to_string());
        let (scheme, rest) = s.split_once(':').ok_or_else(bad)?;
        let rest = rest.trim();
        if rest.is_empty() {
            return Err(bad());
        }
        match scheme {
            "stdio" => Ok(Endpoint::Stdio(rest.split_whitespace().map(str::to_string).collect())),
            "tcp" if rest.contains(':') => Ok(Endpoint::Tcp(rest.to_string())),
            "unix" => Ok(Endpoint::Unix(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stdio(cmd) => write!(f, "stdio:{}", cmd.join(" ")),
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
        }
    }
}

/// Endpoint named by `BRAIDFORGE_ORACLE`, if set.
pub fn endpoint_from_env() -> Option<Result<Endpoint, OracleError>> {
    std::env::var(ORACLE_ENV).ok().filter(|s| !s.trim().is_empty()).map(|s| s.parse())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeStatus {
    Hyperbolic,
    NotHyperbolic,
    Error,
}

impl fmt::Display for VolumeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VolumeStatus::Hyperbolic => "hyperbolic",
            VolumeStatus::NotHyperbolic => "not-hyperbolic",
            VolumeStatus::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeResult {
    pub volume: Option<f64>,
    pub status: VolumeStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub letters: Vec<i32>,
    pub strands: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub volume: Option<f64>,
    pub status: VolumeStatus,
    #[serde(default)]
    pub message: String,
}

impl Response {
    fn into_result(self) -> Result<VolumeResult, OracleError> {
        let hyperbolic = self.status == VolumeStatus::Hyperbolic;
        match self.volume {
            Some(v) if hyperbolic && !(v >= 0.0 && v.is_finite()) => {
                Err(OracleError::Protocol(format!("invalid volume {v}")))
            }
            Some(_) if !hyperbolic => Err(OracleError::Protocol(format!("volume sent with status {}", self.status))),
            None if hyperbolic => Err(OracleError::Protocol("hyperbolic response without volume".into())),
            volume => Ok(VolumeResult { volume, status: self.status, message: self.message }),
        }
    }
}

/// `|vol(a) - vol(b)| <= tol`; both must be hyperbolic.
pub fn volumes_equal_within(a: &VolumeResult, b: &VolumeResult, tol: f64) -> Result<bool, OracleError> {
    match (a.volume, b.volume) {
        (Some(x), Some(y)) if a.status == VolumeStatus::Hyperbolic && b.status == VolumeStatus::Hyperbolic => {
            Ok((x - y).abs() <= tol)
        }
        _ => Err(OracleError::StatusMismatch(a.status, b.status)),
    }
}

pub fn volumes_equal(a: &VolumeResult, b: &VolumeResult) -> Result<bool, OracleError> {
    volumes_equal_within(a, b, VOLUME_TOLERANCE)
}

/// One connection to a sidecar; requests are answered in order.
pub struct OracleClient {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    next_id: u64,
    broken: bool,
}

fn spawn_reader<R: Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(r);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl OracleClient {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self, OracleError> {
        let unavailable = |e: std::io::Error| OracleError::BridgeUnavailable(format!("{endpoint}: {e}"));
        let (writer, lines, child): (Box<dyn Write + Send>, _, _) = match endpoint {
            Endpoint::Stdio(cmd) => {
                let (prog, args) = cmd.split_first().ok_or_else(|| OracleError::InvalidEndpoint(endpoint.to_string()))?;
                let mut child = Command::new(prog)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unavailable)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(stdout), Some(child))
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(unavailable)?;
                let read = stream.try_clone().map_err(unavailable)?;
                (Box::new(stream), spawn_reader(read), None)
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let stream = std::os::unix::net::UnixStream::connect(path).map_err(unavailable)?;
                let read = stream.try_clone().map_err(unavailable)?;
                (Box::new(stream), spawn_reader(read), None)
            }
            #[cfg(not(unix))]
            Endpoint::Unix(_) => {
                return Err(OracleError::BridgeUnavailable("unix sockets unsupported on this platform".into()))
            }
        };
        Ok(Self { writer, lines, child, timeout, next_id: 0, broken: false })
    }

    pub fn query(&mut self, w: &BraidWord) -> Result<VolumeResult, OracleError> {
        if self.broken {
            return Err(OracleError::BridgeUnavailable("connection unusable after an earlier failure".into()));
        }
        let result = self.exchange(w);
        if matches!(result, Err(OracleError::Timeout(_) | OracleError::BridgeUnavailable(_) | OracleError::Protocol(_))) {
            self.broken = true;
        }
        result
    }

    fn exchange(&mut self, w: &BraidWord) -> Result<VolumeResult, OracleError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request { id, letters: w.letters().to_vec(), strands: w.strands() };
        let mut line = serde_json::to_string(&req).map_err(|e| OracleError::Protocol(e.to_string()))?;
        line.push('\n');
        let io = |e: std::io::Error| OracleError::BridgeUnavailable(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.flush().map_err(io)?;

        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(r) => r.map_err(io)?,
            Err(RecvTimeoutError::Timeout) => return Err(OracleError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(OracleError::BridgeUnavailable("sidecar closed the connection".into()))
            }
        };
        let resp: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| OracleError::Protocol(format!("{e} in {:?}", reply.trim_end())))?;
        if resp.id != id {
            return Err(OracleError::Protocol(format!("response id {} for request {id}", resp.id)));
        }
        resp.into_result()
    }
}

impl Drop for OracleClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin ends the sidecar loop.
            self.writer = Box::new(std::io::sink());
            let _ = child.wait();
        }
    }
}

/// Connects, sends one request and returns its answer.
pub fn query_volume(w: &BraidWord, endpoint: &Endpoint) -> Result<VolumeResult, OracleError> {
    OracleClient::connect(endpoint, DEFAULT_TIMEOUT)?.query(w)
}
