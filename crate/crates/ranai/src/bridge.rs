//! Newline-delimited JSON protocol for running the agent in another process.
//!
//! The controller side is [`RemoteAgent`], which implements [`Agent`] by
//! sending one request per call and blocking on exactly one reply.
//! [`serve_agent`] is the matching agent-side loop.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use ranai_core::agent::{Action, Agent, AgentError, LossReport, StateVector, Transition, STATE_DIM};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireTransition {
    pub ue: u32,
    pub s: [f64; STATE_DIM],
    pub a: u8,
    pub s_next: [f64; STATE_DIM],
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        version: u32,
        run_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    StateBatch {
        run_id: String,
        step_idx: u64,
        explore: bool,
        ues: Vec<u32>,
        states: Vec<[f64; STATE_DIM]>,
    },
    ActionBatch {
        run_id: String,
        step_idx: u64,
        ues: Vec<u32>,
        actions: Vec<u8>,
    },
    TransitionBatch {
        run_id: String,
        step_idx: u64,
        transitions: Vec<WireTransition>,
    },
    Ack {
        run_id: String,
        step_idx: u64,
        #[serde(default)]
        update_idx: Option<u64>,
        #[serde(default)]
        loss: Option<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        mean_q: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Save {
        run_id: String,
        step_idx: u64,
        path: String,
    },
    Shutdown {
        run_id: String,
        step_idx: u64,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::StateBatch { .. } => "state_batch",
            Message::ActionBatch { .. } => "action_batch",
            Message::TransitionBatch { .. } => "transition_batch",
            Message::Ack { .. } => "ack",
            Message::Save { .. } => "save",
            Message::Shutdown { .. } => "shutdown",
        }
    }

    fn step_idx(&self) -> Option<u64> {
        match self {
            Message::Hello { .. } => None,
            Message::StateBatch { step_idx, .. }
            | Message::ActionBatch { step_idx, .. }
            | Message::TransitionBatch { step_idx, .. }
            | Message::Ack { step_idx, .. }
            | Message::Save { step_idx, .. }
            | Message::Shutdown { step_idx, .. } => Some(*step_idx),
        }
    }

    fn ack(run_id: &str, step_idx: u64, report: Option<&LossReport>, error: Option<String>) -> Self {
        Message::Ack {
            run_id: run_id.into(),
            step_idx,
            update_idx: report.map(|r| r.update_idx),
            loss: report.and_then(|r| r.loss),
            epsilon: report.map(|r| r.epsilon),
            mean_q: report.and_then(|r| r.mean_q),
            error,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("peer speaks protocol version {found}, expected {PROTOCOL_VERSION}")]
    Version { found: u32 },
    #[error("peer refused the session: {0}")]
    Refused(String),
    #[error("protocol error at step {step}: {message}")]
    Protocol { step: u64, message: String },
    #[error("connection closed at step {step}")]
    Disconnected { step: u64 },
    #[error("no reply within {timeout:?} at step {step}")]
    Timeout { step: u64, timeout: Duration },
    #[error("i/o error at step {step}: {source}")]
    Io { step: u64, source: std::io::Error },
}

impl BridgeError {
    fn step(&self) -> u64 {
        match self {
            BridgeError::Protocol { step, .. }
            | BridgeError::Disconnected { step }
            | BridgeError::Timeout { step, .. }
            | BridgeError::Io { step, .. } => *step,
            _ => 0,
        }
    }
}

impl From<BridgeError> for AgentError {
    fn from(e: BridgeError) -> Self {
        AgentError {
            step: e.step(),
            message: e.to_string(),
        }
    }
}

/// One NDJSON connection: writes a message per line, reads one per line.
pub struct Channel<R, W> {
    reader: R,
    writer: W,
    line: String,
    timeout: Option<Duration>,
}

impl<R: BufRead, W: Write> Channel<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Channel {
            reader,
            writer,
            line: String::new(),
            timeout: None,
        }
    }

    pub fn send(&mut self, msg: &Message, step: u64) -> Result<(), BridgeError> {
        let io = |source| BridgeError::Io { step, source };
        let mut line = serde_json::to_vec(msg).map_err(|e| io(e.into()))?;
        line.push(b'\n');
        self.writer.write_all(&line).map_err(io)?;
        self.writer.flush().map_err(io)
    }

    /// Next message, or `None` at a clean end of stream.
    pub fn recv(&mut self, step: u64) -> Result<Option<Message>, BridgeError> {
        self.line.clear();
        match self.reader.read_line(&mut self.line) {
            Ok(0) => Ok(None),
            Ok(_) => serde_json::from_str(self.line.trim_end())
                .map(Some)
                .map_err(|e| BridgeError::Protocol {
                    step,
                    message: format!("malformed message: {e}"),
                }),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(BridgeError::Timeout {
                    step,
                    timeout: self.timeout.unwrap_or_default(),
                })
            }
            Err(source) => Err(BridgeError::Io { step, source }),
        }
    }
}

/// Controller-side agent whose decisions come from a remote process.
pub struct RemoteAgent<R, W> {
    chan: Channel<R, W>,
    run_id: String,
    step: u64,
}

impl RemoteAgent<BufReader<TcpStream>, TcpStream> {
    /// Connects over TCP; every reply must arrive within `timeout`.
    pub fn connect_tcp(addr: impl ToSocketAddrs, run_id: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let io = |source| BridgeError::Io { step: 0, source };
        let stream = TcpStream::connect(addr).map_err(io)?;
        stream.set_read_timeout(Some(timeout)).map_err(io)?;
        stream.set_nodelay(true).map_err(io)?;
        let reader = BufReader::new(stream.try_clone().map_err(io)?);
        let mut chan = Channel::new(reader, stream);
        chan.timeout = Some(timeout);
        Self::handshake(chan, run_id)
    }
}

impl<R: BufRead, W: Write> RemoteAgent<R, W> {
    pub fn new(reader: R, writer: W, run_id: &str) -> Result<Self, BridgeError> {
        Self::handshake(Channel::new(reader, writer), run_id)
    }

    fn handshake(mut chan: Channel<R, W>, run_id: &str) -> Result<Self, BridgeError> {
        chan.send(
            &Message::Hello {
                version: PROTOCOL_VERSION,
                run_id: run_id.into(),
                error: None,
            },
            0,
        )?;
        match chan.recv(0)? {
            Some(Message::Hello { error: Some(e), .. }) => Err(BridgeError::Refused(e)),
            Some(Message::Hello { version, .. }) if version != PROTOCOL_VERSION => {
                Err(BridgeError::Version { found: version })
            }
            Some(Message::Hello { .. }) => Ok(RemoteAgent {
                chan,
                run_id: run_id.into(),
                step: 0,
            }),
            Some(other) => Err(BridgeError::Protocol {
                step: 0,
                message: format!("expected hello, got {}", other.kind()),
            }),
            None => Err(BridgeError::Disconnected { step: 0 }),
        }
    }

    /// Index of the last request sent.
    pub fn step(&self) -> u64 {
        self.step
    }

    fn request(&mut self, msg: Message) -> Result<Message, BridgeError> {
        let step = self.step;
        self.chan.send(&msg, step)?;
        let reply = self.chan.recv(step)?.ok_or(BridgeError::Disconnected { step })?;
        if reply.step_idx() != Some(step) {
            return Err(BridgeError::Protocol {
                step,
                message: format!("reply {} carries step {:?}", reply.kind(), reply.step_idx()),
            });
        }
        if let Message::Ack { error: Some(e), .. } = &reply {
            return Err(BridgeError::Protocol {
                step,
                message: format!("agent error: {e}"),
            });
        }
        Ok(reply)
    }

    fn next_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    fn expect_ack(&mut self, msg: Message) -> Result<Message, BridgeError> {
        let step = self.step;
        match self.request(msg)? {
            ack @ Message::Ack { .. } => Ok(ack),
            other => Err(BridgeError::Protocol {
                step,
                message: format!("expected ack, got {}", other.kind()),
            }),
        }
    }

    /// Asks the remote agent to write its model to `path`.
    pub fn save(&mut self, path: &str) -> Result<(), BridgeError> {
        let step_idx = self.next_step();
        let run_id = self.run_id.clone();
        self.expect_ack(Message::Save {
            run_id,
            step_idx,
            path: path.into(),
        })
        .map(drop)
    }

    pub fn shutdown(mut self) -> Result<(), BridgeError> {
        let step_idx = self.next_step();
        let run_id = self.run_id.clone();
        self.expect_ack(Message::Shutdown { run_id, step_idx }).map(drop)
    }
}

impl<R: BufRead, W: Write> Agent for RemoteAgent<R, W> {
    fn get_action(&mut self, states: &[StateVector], explore: bool) -> Result<Vec<Action>, AgentError> {
        let step_idx = self.next_step();
        let ues: Vec<u32> = (0..states.len() as u32).collect();
        let reply = self.request(Message::StateBatch {
            run_id: self.run_id.clone(),
            step_idx,
            explore,
            ues: ues.clone(),
            states: states.iter().map(|s| s.0).collect(),
        })?;
        match reply {
            Message::ActionBatch { ues: got, actions, .. } if got == ues && actions.len() == ues.len() => {
                Ok(actions.into_iter().map(Action).collect())
            }
            Message::ActionBatch { .. } => Err(BridgeError::Protocol {
                step: step_idx,
                message: "action_batch does not match the requested UE ordering".into(),
            }
            .into()),
            other => Err(BridgeError::Protocol {
                step: step_idx,
                message: format!("expected action_batch, got {}", other.kind()),
            }
            .into()),
        }
    }

    fn update(&mut self, transitions: &[Transition]) -> Result<LossReport, AgentError> {
        let step_idx = self.next_step();
        let wire = transitions
            .iter()
            .map(|t| WireTransition {
                ue: t.ue as u32,
                s: t.state.0,
                a: t.action.0,
                s_next: t.next_state.0,
                r: t.reward,
            })
            .collect();
        let run_id = self.run_id.clone();
        match self.expect_ack(Message::TransitionBatch {
            run_id,
            step_idx,
            transitions: wire,
        })? {
            Message::Ack {
                update_idx,
                loss,
                epsilon,
                mean_q,
                ..
            } => Ok(LossReport {
                update_idx: update_idx.unwrap_or(step_idx),
                loss,
                epsilon: epsilon.unwrap_or(f64::NAN),
                mean_q,
            }),
            _ => unreachable!("expect_ack returns acks"),
        }
    }
}

/// Agent-side loop: answers requests with `agent` until shutdown or end of
/// stream. `on_save` receives the path of every save request.
pub fn serve_agent<R: BufRead, W: Write>(
    reader: R,
    writer: W,
    agent: &mut dyn Agent,
    on_save: &mut dyn FnMut(&str) -> Result<(), String>,
) -> Result<(), BridgeError> {
    let mut chan = Channel::new(reader, writer);
    let run_id = match chan.recv(0)? {
        Some(Message::Hello { version, run_id, .. }) => {
            if version != PROTOCOL_VERSION {
                let error = format!("unsupported protocol version {version}, expected {PROTOCOL_VERSION}");
                chan.send(
                    &Message::Hello {
                        version: PROTOCOL_VERSION,
                        run_id,
                        error: Some(error),
                    },
                    0,
                )?;
                return Err(BridgeError::Version { found: version });
            }
            chan.send(
                &Message::Hello {
                    version: PROTOCOL_VERSION,
                    run_id: run_id.clone(),
                    error: None,
                },
                0,
            )?;
            run_id
        }
        Some(other) => {
            return Err(BridgeError::Protocol {
                step: 0,
                message: format!("expected hello, got {}", other.kind()),
            })
        }
        None => return Err(BridgeError::Disconnected { step: 0 }),
    };
    let mut last = 0u64;
    loop {
        let Some(msg) = chan.recv(last)? else { return Ok(()) };
        let step = msg.step_idx().unwrap_or(0);
        if step <= last {
            return Err(BridgeError::Protocol {
                step,
                message: format!("step_idx {step} does not follow {last}"),
            });
        }
        last = step;
        let reply = match msg {
            Message::StateBatch {
                explore, ues, states, ..
            } => {
                let states: Vec<StateVector> = states.into_iter().map(StateVector).collect();
                match agent.get_action(&states, explore) {
                    Ok(a) => Message::ActionBatch {
                        run_id: run_id.clone(),
                        step_idx: step,
                        ues,
                        actions: a.into_iter().map(|a| a.0).collect(),
                    },
                    Err(e) => Message::ack(&run_id, step, None, Some(e.message)),
                }
            }
            Message::TransitionBatch { transitions, .. } => {
                let ts: Vec<Transition> = transitions
                    .into_iter()
                    .map(|t| Transition {
                        ue: t.ue as usize,
                        state: StateVector(t.s),
                        action: Action(t.a),
                        next_state: StateVector(t.s_next),
                        reward: t.r,
                    })
                    .collect();
                match agent.update(&ts) {
                    Ok(r) => Message::ack(&run_id, step, Some(&r), None),
                    Err(e) => Message::ack(&run_id, step, None, Some(e.message)),
                }
            }
            Message::Save { path, .. } => Message::ack(&run_id, step, None, on_save(&path).err()),
            Message::Shutdown { .. } => {
                chan.send(&Message::ack(&run_id, step, None, None), step)?;
                return Ok(());
            }
            other => {
                return Err(BridgeError::Protocol {
                    step,
                    message: format!("unexpected {} from controller", other.kind()),
                })
            }
        };
        chan.send(&reply, step)?;
    }
}
