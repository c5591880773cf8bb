use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde_json::Value;

use super::frame::FrameDecoder;
use super::message::{Body, ConfigAck, ErrorCode, Message, Obs, StepReply};
use super::{encode, ProtocolError};
use crate::env::{Env, EnvConfig, EnvError, OBS_DIM};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30);

/// Builds the session environment from the negotiated config.
pub type EnvFactory = Box<dyn Fn(EnvConfig) -> Result<Env, EnvError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Starting point that `hello.config` fields override.
    pub env: EnvConfig,
    pub idle_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { env: EnvConfig::default(), idle_timeout: DEFAULT_IDLE_TIMEOUT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    AwaitingHello,
    Idle,
    InEpisode,
    Closed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub episodes: u64,
    pub steps: u64,
    pub requests: u64,
    pub errors: u64,
}

/// Transport-free session state machine: frames in, frames out.
pub struct Session<'a> {
    factory: &'a EnvFactory,
    defaults: EnvConfig,
    phase: Phase,
    env: Option<Env>,
    decoder: FrameDecoder,
    last_seq: Option<u64>,
    stats: SessionStats,
}

impl<'a> Session<'a> {
    pub fn new(factory: &'a EnvFactory, defaults: EnvConfig) -> Self {
        Self {
            factory,
            defaults,
            phase: Phase::AwaitingHello,
            env: None,
            decoder: FrameDecoder::new(),
            last_seq: None,
            stats: SessionStats::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn env(&self) -> Option<&Env> {
        self.env.as_ref()
    }

    /// Feeds raw stream bytes and returns the encoded replies to send.
    /// After a framing or JSON error the session is closed and further input is ignored.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        if self.phase == Phase::Closed {
            return out;
        }
        self.decoder.push(bytes);
        loop {
            let payload = match self.decoder.next_frame() {
                Ok(Some(p)) => p,
                Ok(None) => break,
                Err(e) => {
                    self.fatal(&mut out, 0, e);
                    break;
                }
            };
            let reply = match Message::from_json(&payload) {
                Ok(msg) => self.handle(msg),
                Err(ProtocolError::UnknownType { seq, ty }) => {
                    Message::error(seq, ErrorCode::ParseError, format!("unknown message type {ty:?}"))
                }
                Err(ProtocolError::BadBody { seq, reason }) => Message::error(seq, ErrorCode::ParseError, reason),
                Err(e) => {
                    self.fatal(&mut out, 0, e);
                    break;
                }
            };
            self.stats.requests += 1;
            if matches!(reply.body, Body::Error(_)) {
                self.stats.errors += 1;
            }
            out.extend(encode(&reply).expect("replies fit in a frame"));
            if self.phase == Phase::Closed {
                break;
            }
        }
        out
    }

    fn fatal(&mut self, out: &mut Vec<u8>, seq: u64, e: ProtocolError) {
        self.stats.errors += 1;
        out.extend(encode(&Message::error(seq, ErrorCode::ParseError, e.to_string())).expect("small frame"));
        self.phase = Phase::Closed;
    }

    /// Answers one decoded request.
    pub fn handle(&mut self, msg: Message) -> Message {
        let seq = msg.seq;
        if self.last_seq.is_some_and(|last| seq <= last) {
            return Message::error(seq, ErrorCode::ParseError, "seq must increase");
        }
        self.last_seq = Some(seq);
        let bad_phase = |what: &str, phase: Phase| {
            Message::error(seq, ErrorCode::BadPhase, format!("{what} not allowed in phase {phase:?}"))
        };
        match (msg.body, self.phase) {
            (Body::Bye, _) => {
                self.phase = Phase::Closed;
                Message::new(seq, Body::Bye)
            }
            (Body::Hello(h), Phase::AwaitingHello) => match self.open(h.config) {
                Ok(ack) => {
                    self.phase = Phase::Idle;
                    Message::new(seq, Body::ConfigAck(ack))
                }
                Err(m) => Message::error(seq, ErrorCode::ParseError, m),
            },
            (Body::Reset(r), Phase::Idle | Phase::InEpisode) => {
                let env = self.env.as_mut().expect("env exists after hello");
                let obs = match r.seed {
                    Some(seed) => env.reset_with_seed(seed),
                    None => env.reset(),
                };
                self.phase = Phase::InEpisode;
                self.stats.episodes += 1;
                Message::new(seq, Body::Obs(Obs { obs: obs.to_array().to_vec() }))
            }
            (Body::Step(s), Phase::InEpisode) => {
                let env = self.env.as_mut().expect("env exists after hello");
                if env.is_done() {
                    return Message::error(seq, ErrorCode::EpisodeDone, "episode finished; reset first");
                }
                let a = match s.action.as_slice() {
                    [a] if a.is_finite() && a.abs() <= 1.0 => *a,
                    _ => {
                        return Message::error(
                            seq,
                            ErrorCode::ActionRange,
                            format!("action must be one finite value in [-1, 1], got {:?}", s.action),
                        )
                    }
                };
                match env.step(a) {
                    Ok(r) => {
                        self.stats.steps += 1;
                        Message::new(
                            seq,
                            Body::Result(StepReply {
                                obs: r.obs.to_array().to_vec(),
                                reward: r.reward,
                                done: r.done,
                                info: r.info,
                            }),
                        )
                    }
                    Err(EnvError::EpisodeDone) => Message::error(seq, ErrorCode::EpisodeDone, "episode finished"),
                    Err(e) => Message::error(seq, ErrorCode::ActionRange, e.to_string()),
                }
            }
            (body, phase) => bad_phase(body.type_name(), phase),
        }
    }

    fn open(&mut self, overrides: Option<serde_json::Map<String, Value>>) -> Result<ConfigAck, String> {
        let mut config = self.defaults;
        if let Some(o) = overrides {
            let Value::Object(mut base) = serde_json::to_value(config).map_err(|e| e.to_string())? else {
                unreachable!("config serializes as an object")
            };
            base.extend(o);
            config = serde_json::from_value(Value::Object(base)).map_err(|e| format!("config: {e}"))?;
        }
        let env = (self.factory)(config).map_err(|e| e.to_string())?;
        let ack = ConfigAck { config: *env.config(), track: env.track().name().to_string(), obs_dim: OBS_DIM, action_dim: 1 };
        self.env = Some(env);
        Ok(ack)
    }
}

/// Single-client TCP server; sessions are served one after another.
pub struct Server {
    listener: TcpListener,
    factory: EnvFactory,
    config: ServerConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, factory: EnvFactory, config: ServerConfig) -> std::io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, factory, config })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts one client and serves it until bye, disconnect, timeout or a fatal frame.
    pub fn serve_one(&self) -> std::io::Result<SessionStats> {
        let (stream, _) = self.listener.accept()?;
        Ok(self.run(stream))
    }

    /// Serves sessions forever, reporting each one's stats.
    pub fn serve_forever(&self, mut on_session: impl FnMut(&SessionStats)) -> std::io::Result<()> {
        loop {
            let stats = self.serve_one()?;
            on_session(&stats);
        }
    }

    fn run(&self, mut stream: TcpStream) -> SessionStats {
        let mut session = Session::new(&self.factory, self.config.env);
        if stream.set_read_timeout(Some(self.config.idle_timeout)).is_err() {
            return session.stats();
        }
        let _ = stream.set_nodelay(true);
        let mut buf = [0u8; 8192];
        loop {
            let n = match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(_) => break,
            };
            let out = session.feed(&buf[..n]);
            if !out.is_empty() && stream.write_all(&out).is_err() {
                break;
            }
            if session.phase() == Phase::Closed {
                break;
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
        session.stats()
    }
}
