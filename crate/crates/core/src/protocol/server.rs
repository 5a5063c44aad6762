use std::sync::Arc;

use super::message::{Direction, Particle, Payload};
use super::session::{Envelope, Outbox};
use super::{EntanglePolicy, Protocol, ProtocolError};
use crate::angle::Angle;
use crate::mbqc::GraphLayout;
use crate::qsim::{Owner, QubitHandle, QuantumRegister, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    AwaitingGraph,
    /// Collecting graph qubits (baseline/P1 vertices, P2 slots).
    AwaitingQubits,
    AwaitingAngles,
    Interactive,
    Done,
}

impl Phase {
    fn expects(self) -> &'static str {
        match self {
            Phase::AwaitingGraph => "graph_request",
            Phase::AwaitingQubits => "qubit_transfer",
            Phase::AwaitingAngles => "angle_list",
            Phase::Interactive => "delta",
            Phase::Done => "nothing",
        }
    }
}

/// A measurement the server has committed to but not yet performed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PendingMeasurement {
    Vertex { vertex: usize, delta: Angle },
    Bell { pair: usize, angle: Angle },
}

#[derive(Clone, Debug)]
pub(crate) struct Server {
    protocol: Protocol,
    policy: EntanglePolicy,
    phase: Phase,
    layout: Option<Arc<GraphLayout>>,
    sequence: Vec<usize>,
    cursor: usize,
    vertices: Vec<Option<QubitHandle>>,
    received: usize,
    applied: Vec<bool>,
    b_halves: Vec<QubitHandle>,
    bell_angles: Vec<Angle>,
    bell_bits: Vec<u8>,
    pending: Option<PendingMeasurement>,
}

impl Server {
    pub(crate) fn new(protocol: Protocol, policy: EntanglePolicy) -> Self {
        Server {
            protocol,
            policy,
            phase: Phase::AwaitingGraph,
            layout: None,
            sequence: Vec::new(),
            cursor: 0,
            vertices: Vec::new(),
            received: 0,
            applied: Vec::new(),
            b_halves: Vec::new(),
            bell_angles: Vec::new(),
            bell_bits: Vec::new(),
            pending: None,
        }
    }

    pub(crate) fn pending(&self) -> Option<PendingMeasurement> {
        self.pending
    }

    pub(crate) fn vertex_handle(&self, v: usize) -> Option<QubitHandle> {
        self.vertices.get(v).copied().flatten()
    }

    /// The qubit to measure for the pending measurement.
    pub(crate) fn pending_target(&self) -> Option<(QubitHandle, Angle)> {
        match self.pending? {
            PendingMeasurement::Vertex { vertex, delta } => Some((self.vertices[vertex]?, delta)),
            PendingMeasurement::Bell { pair, angle } => Some((self.b_halves[pair], angle)),
        }
    }

    pub(crate) fn receive(
        &mut self,
        env: Envelope,
        reg: &mut QuantumRegister,
        out: &mut Outbox<'_>,
    ) -> Result<(), ProtocolError> {
        if self.pending.is_some() {
            return Err(ProtocolError::OutcomePending);
        }
        let got = env.message.payload.kind();
        let unexpected = |phase: Phase| ProtocolError::OutOfOrder { party: "server", expected: phase.expects(), got };
        match (self.phase, env.message.payload) {
            (Phase::AwaitingGraph, Payload::GraphRequest { layout }) => {
                layout.validate()?;
                let m = layout.vertex_count;
                self.sequence = layout.measurement_sequence();
                self.vertices = vec![None; m];
                self.applied = vec![false; layout.edges.len()];
                self.layout = Some(layout);
                self.phase = Phase::AwaitingQubits;
                match self.protocol {
                    Protocol::Baseline => Ok(()),
                    Protocol::P1 => self.send_plus(0, reg, out),
                    Protocol::P2 => {
                        for k in 0..m {
                            let (b, a) = reg.alloc_bell_pair(Owner::Server, k)?;
                            self.b_halves.push(b);
                            reg.transfer(a, Owner::Client)?;
                            let payload =
                                Payload::QubitTransfer { particle: Particle::Pair(k), direction: Direction::ServerToClient };
                            out.send(Owner::Server, payload, Some(a));
                        }
                        Ok(())
                    }
                }
            }
            (Phase::AwaitingQubits, Payload::QubitTransfer { particle, direction: Direction::ClientToServer }) => {
                let q = env.particle.ok_or_else(|| ProtocolError::Custody("transfer message without a qubit".into()))?;
                if reg.custody(q)? != Owner::Server {
                    return Err(ProtocolError::Custody(format!("{q} announced to the server but held by the client")));
                }
                let v = match (self.protocol, particle) {
                    (Protocol::Baseline | Protocol::P1, Particle::Vertex(v)) => v,
                    (Protocol::P2, Particle::Slot(i)) => i,
                    _ => return Err(unexpected(self.phase)),
                };
                if v != self.received {
                    return Err(ProtocolError::UnexpectedVertex { expected: self.received, got: v });
                }
                self.vertices[v] = Some(q);
                self.received += 1;
                let m = self.vertices.len();
                match self.protocol {
                    Protocol::P1 if self.received < m => self.send_plus(self.received, reg, out),
                    Protocol::P2 if self.received == m => {
                        self.phase = Phase::AwaitingAngles;
                        Ok(())
                    }
                    _ if self.received == m => self.graph_ready(reg),
                    _ => Ok(()),
                }
            }
            (Phase::AwaitingAngles, Payload::AngleList { angles }) => {
                if angles.len() != self.b_halves.len() {
                    return Err(ProtocolError::PairBookkeeping(format!(
                        "{} angles for {} pairs",
                        angles.len(),
                        self.b_halves.len()
                    )));
                }
                self.bell_angles = angles;
                self.queue_bell(reg)
            }
            (Phase::Interactive, Payload::Delta { vertex, delta }) => {
                let expected = self.sequence[self.cursor];
                if vertex != expected {
                    return Err(ProtocolError::UnexpectedVertex { expected, got: vertex });
                }
                let q = self.vertices[vertex].ok_or(ProtocolError::Incomplete)?;
                if reg.custody(q)? != Owner::Server {
                    return Err(ProtocolError::Custody(format!("{q} is not in the server's hands")));
                }
                self.entangle_around(vertex, reg)?;
                self.pending = Some(PendingMeasurement::Vertex { vertex, delta });
                Ok(())
            }
            (phase, _) => Err(unexpected(phase)),
        }
    }

    fn send_plus(&mut self, v: usize, reg: &mut QuantumRegister, out: &mut Outbox<'_>) -> Result<(), ProtocolError> {
        let q = reg.alloc_plus(Owner::Server)?;
        reg.transfer(q, Owner::Client)?;
        let payload = Payload::QubitTransfer { particle: Particle::Vertex(v), direction: Direction::ServerToClient };
        out.send(Owner::Server, payload, Some(q));
        Ok(())
    }

    fn queue_bell(&mut self, reg: &QuantumRegister) -> Result<(), ProtocolError> {
        let pair = self.bell_bits.len();
        let b = self.b_halves[pair];
        if reg.custody(b)? != Owner::Server || reg.role(b)? != Role::PairB(pair) {
            return Err(ProtocolError::PairBookkeeping(format!("pair {pair}'s kept half is not the server's B qubit")));
        }
        self.pending = Some(PendingMeasurement::Bell { pair, angle: self.bell_angles[pair] });
        Ok(())
    }

    fn graph_ready(&mut self, reg: &mut QuantumRegister) -> Result<(), ProtocolError> {
        if self.policy == EntanglePolicy::Eager {
            for i in 0..self.applied.len() {
                self.apply_edge(i, reg)?;
            }
        }
        self.phase = if self.sequence.is_empty() { Phase::Done } else { Phase::Interactive };
        Ok(())
    }

    fn apply_edge(&mut self, i: usize, reg: &mut QuantumRegister) -> Result<(), ProtocolError> {
        if self.applied[i] {
            return Ok(());
        }
        let layout = self.layout.as_ref().ok_or(ProtocolError::Incomplete)?;
        let (a, b) = layout.edges[i];
        let (qa, qb) = (self.vertices[a], self.vertices[b]);
        reg.apply_cz(qa.ok_or(ProtocolError::Incomplete)?, qb.ok_or(ProtocolError::Incomplete)?)?;
        self.applied[i] = true;
        Ok(())
    }

    fn entangle_around(&mut self, v: usize, reg: &mut QuantumRegister) -> Result<(), ProtocolError> {
        let layout = Arc::clone(self.layout.as_ref().ok_or(ProtocolError::Incomplete)?);
        for (i, &(a, b)) in layout.edges.iter().enumerate() {
            if a == v || b == v {
                self.apply_edge(i, reg)?;
            }
        }
        Ok(())
    }

    /// Applies every edge not yet applied. Used before inspecting the state.
    pub(crate) fn entangle_all(&mut self, reg: &mut QuantumRegister) -> Result<(), ProtocolError> {
        for i in 0..self.applied.len() {
            self.apply_edge(i, reg)?;
        }
        Ok(())
    }

    /// Records the outcome of the pending measurement, which the session has
    /// already performed on the register.
    pub(crate) fn complete(
        &mut self,
        bit: u8,
        reg: &mut QuantumRegister,
        out: &mut Outbox<'_>,
    ) -> Result<(), ProtocolError> {
        match self.pending.take().ok_or(ProtocolError::NothingPending)? {
            PendingMeasurement::Vertex { vertex, .. } => {
                out.send(Owner::Server, Payload::Result { vertex, bit }, None);
                self.cursor += 1;
                if self.cursor == self.sequence.len() {
                    self.phase = Phase::Done;
                }
                Ok(())
            }
            PendingMeasurement::Bell { .. } => {
                self.bell_bits.push(bit);
                if self.bell_bits.len() < self.b_halves.len() {
                    return self.queue_bell(reg);
                }
                out.send(Owner::Server, Payload::BellResults { bits: self.bell_bits.clone() }, None);
                self.graph_ready(reg)
            }
        }
    }
}
