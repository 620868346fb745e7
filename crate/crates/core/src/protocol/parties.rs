//! The three roles of a delegated session.
//!
//! The referee stands in for quantum hardware and the quantum channel: it
//! receives the client's qubits and performs the measurements the server asks
//! for. The server sees the graph, the announced angles and the bits, and
//! nothing else. Both are plain request/response state machines so the same
//! code runs in process and behind TCP.

use rand::Rng;

use super::wire::WireMessage;
use crate::attacks::{deviate_measurement, AttackSpec, VertexRole};
use crate::error::{Error, Result};
use crate::mbqc::{vertex_roles, GraphSim, OpenGraph, ALPHABET_SIZE};
use crate::rng::{stream, Domain, SimRng};

/// Something that answers one message with one message.
pub trait Link {
    fn call(&mut self, msg: &WireMessage) -> Result<WireMessage>;
}

fn session_error(msg: impl Into<String>) -> WireMessage {
    WireMessage::Error { message: msg.into() }
}

struct RefereeRound {
    id: u64,
    sim: GraphSim,
    rng: SimRng,
}

/// Holds the quantum state of the round in flight.
pub struct Referee {
    seed: u64,
    graph: Option<OpenGraph>,
    round: Option<RefereeRound>,
}

impl Referee {
    pub fn new(seed: u64) -> Self {
        Referee { seed, graph: None, round: None }
    }

    pub fn handle(&mut self, msg: &WireMessage) -> WireMessage {
        match msg {
            WireMessage::SessionInit { graph, .. } => match graph.validate() {
                Ok(()) => {
                    self.graph = Some(graph.clone());
                    self.round = None;
                    WireMessage::Ack
                }
                Err(e) => session_error(e.to_string()),
            },
            WireMessage::PrepareBatch { round_id, vertex_count, preps } => {
                let Some(graph) = &self.graph else {
                    return session_error("no session");
                };
                if *vertex_count != graph.num_vertices || preps.len() != graph.num_vertices {
                    return session_error("batch does not match the session graph");
                }
                match GraphSim::from_preps(graph, preps) {
                    Ok(sim) => {
                        self.round = Some(RefereeRound {
                            id: *round_id,
                            sim,
                            rng: stream(self.seed, Domain::Referee, *round_id),
                        });
                        WireMessage::Ack
                    }
                    Err(e) => session_error(e.to_string()),
                }
            }
            WireMessage::MeasureRequest { round_id, vertex, angle } => {
                let Some(round) = self.round.as_mut().filter(|r| r.id == *round_id) else {
                    return session_error(format!("round {round_id} is not prepared"));
                };
                if *vertex >= self.graph.as_ref().map_or(0, |g| g.num_vertices) || !angle.is_finite() {
                    return session_error("bad measurement request");
                }
                match round.sim.measure(*vertex, *angle, &mut round.rng) {
                    Ok(bit) => WireMessage::MeasureResult { round_id: *round_id, vertex: *vertex, bit },
                    Err(e) => session_error(e.to_string()),
                }
            }
            other => session_error(format!("referee does not accept {}", other.name())),
        }
    }
}

impl Link for Referee {
    fn call(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        Ok(self.handle(msg))
    }
}

struct ServerRound {
    id: u64,
    attacked: bool,
    bits: Vec<Option<u8>>,
}

/// Executes measurements at the announced angles, or deviates from them
/// according to its attack model.
pub struct Server {
    seed: u64,
    attack: AttackSpec,
    graph: Option<OpenGraph>,
    roles: Vec<VertexRole>,
    round: Option<ServerRound>,
    keep_log: bool,
    log: Vec<String>,
}

impl Server {
    pub fn new(seed: u64, attack: AttackSpec) -> Self {
        Server { seed, attack, graph: None, roles: Vec::new(), round: None, keep_log: false, log: Vec::new() }
    }

    /// Record every message the server sends or receives.
    pub fn with_log(mut self) -> Self {
        self.keep_log = true;
        self
    }

    /// Session log, one JSON message per entry.
    pub fn log(&self) -> &[String] {
        &self.log
    }

    fn note(&mut self, msg: &WireMessage) {
        if self.keep_log {
            self.log.push(msg.to_json());
        }
    }

    /// Handle one client message, consulting the referee as needed.
    pub fn handle(&mut self, msg: &WireMessage, referee: &mut dyn Link) -> Result<WireMessage> {
        self.note(msg);
        let reply = self.dispatch(msg, referee)?;
        self.note(&reply);
        Ok(reply)
    }

    fn dispatch(&mut self, msg: &WireMessage, referee: &mut dyn Link) -> Result<WireMessage> {
        Ok(match msg {
            WireMessage::SessionInit { graph, alphabet } => {
                if *alphabet != ALPHABET_SIZE {
                    return Ok(session_error("unsupported angle alphabet"));
                }
                self.roles = vertex_roles(graph);
                self.graph = Some(graph.clone());
                self.round = None;
                WireMessage::Ack
            }
            WireMessage::MeasureAngle { round_id, vertex, angle } => {
                let Some(graph) = &self.graph else {
                    return Ok(session_error("no session"));
                };
                if *vertex >= graph.num_vertices {
                    return Ok(session_error("vertex out of range"));
                }
                if self.round.as_ref().is_none_or(|r| r.id != *round_id) {
                    let attacked = stream(self.seed, Domain::Attack, *round_id).random::<f64>()
                        < self.attack.round_probability();
                    self.round = Some(ServerRound { id: *round_id, attacked, bits: vec![None; graph.num_vertices] });
                }
                let round = self.round.as_ref().expect("round just set");
                let measured = deviate_measurement(*angle, &self.attack, self.roles[*vertex], round.attacked);
                let request = WireMessage::MeasureRequest { round_id: *round_id, vertex: *vertex, angle: measured };
                self.note(&request);
                let result = referee.call(&request)?;
                self.note(&result);
                match result {
                    WireMessage::MeasureResult { round_id: rid, vertex: v, bit } if rid == *round_id && v == *vertex => {
                        self.round.as_mut().expect("round in flight").bits[v] = Some(bit);
                        WireMessage::MeasureResult { round_id: rid, vertex: v, bit }
                    }
                    WireMessage::Error { message } => return Err(Error::Session(message)),
                    other => return Err(Error::Session(format!("unexpected referee reply {}", other.name()))),
                }
            }
            WireMessage::RoundEnd { round_id } => match self.round.take() {
                Some(r) if r.id == *round_id && r.bits.iter().all(Option::is_some) => WireMessage::RoundReport {
                    round_id: *round_id,
                    bits: r.bits.into_iter().map(|b| b.expect("checked")).collect(),
                },
                _ => session_error(format!("round {round_id} is not complete")),
            },
            WireMessage::StepVerdict { .. } => WireMessage::Ack,
            other => session_error(format!("server does not accept {}", other.name())),
        })
    }
}

/// The client's view of the other two parties.
pub trait ClientTransport {
    fn to_referee(&mut self, msg: &WireMessage) -> Result<WireMessage>;
    fn to_server(&mut self, msg: &WireMessage) -> Result<WireMessage>;
}

/// All three parties in one process, exchanging typed messages directly.
pub struct InProcess {
    pub referee: Referee,
    pub server: Server,
}

impl InProcess {
    pub fn new(seed: u64, attack: AttackSpec) -> Self {
        InProcess { referee: Referee::new(seed), server: Server::new(seed, attack) }
    }
}

impl ClientTransport for InProcess {
    fn to_referee(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        Ok(self.referee.handle(msg))
    }

    fn to_server(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        self.server.handle(msg, &mut self.referee)
    }
}
