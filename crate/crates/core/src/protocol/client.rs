use std::sync::Arc;

use super::message::{Direction, Particle, Payload};
use super::session::{Envelope, Outbox};
use super::{steered_angle, ClientSecrets, Protocol, ProtocolError};
use crate::angle::Angle;
use crate::mbqc::{adapt_phi, collect_deps, MeasurementPattern};
use crate::qsim::{Owner, QubitHandle, QuantumRegister};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    AwaitingQubits,
    AwaitingPairs,
    AwaitingBells,
    Interactive,
    Done,
}

impl Phase {
    fn expects(self) -> &'static str {
        match self {
            Phase::Idle => "nothing",
            Phase::AwaitingQubits => "a qubit to rotate",
            Phase::AwaitingPairs => "Bell-pair halves",
            Phase::AwaitingBells => "bell_results",
            Phase::Interactive => "result",
            Phase::Done => "nothing",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Client {
    protocol: Protocol,
    pattern: Arc<MeasurementPattern>,
    sequence: Vec<usize>,
    secrets: ClientSecrets,
    phase: Phase,
    cursor: usize,
    corrected: Vec<Option<u8>>,
    held: Vec<Option<QubitHandle>>,
    stop_before_outputs: bool,
}

impl Client {
    pub(crate) fn new(
        protocol: Protocol,
        pattern: Arc<MeasurementPattern>,
        secrets: ClientSecrets,
        stop_before_outputs: bool,
    ) -> Self {
        let m = pattern.vertex_count();
        Client {
            protocol,
            sequence: pattern.layout.measurement_sequence(),
            pattern,
            secrets,
            phase: Phase::Idle,
            cursor: 0,
            corrected: vec![None; m],
            held: vec![None; m],
            stop_before_outputs,
        }
    }

    pub(crate) fn secrets(&self) -> &ClientSecrets {
        &self.secrets
    }

    pub(crate) fn corrected(&self) -> &[Option<u8>] {
        &self.corrected
    }

    pub(crate) fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub(crate) fn start(&mut self, reg: &mut QuantumRegister, out: &mut Outbox<'_>) -> Result<(), ProtocolError> {
        out.send(Owner::Client, Payload::GraphRequest { layout: Arc::new(self.pattern.layout.clone()) }, None);
        match self.protocol {
            Protocol::Baseline => {
                for v in 0..self.pattern.vertex_count() {
                    let q = reg.alloc_plus(Owner::Client)?;
                    reg.apply_rz(q, self.secrets.theta[v])?;
                    reg.transfer(q, Owner::Server)?;
                    let payload = Payload::QubitTransfer {
                        particle: Particle::Vertex(v),
                        direction: Direction::ClientToServer,
                    };
                    out.send(Owner::Client, payload, Some(q));
                }
                self.begin_interactive(out)
            }
            Protocol::P1 => {
                self.phase = Phase::AwaitingQubits;
                Ok(())
            }
            Protocol::P2 => {
                self.phase = Phase::AwaitingPairs;
                Ok(())
            }
        }
    }

    pub(crate) fn receive(
        &mut self,
        env: Envelope,
        reg: &mut QuantumRegister,
        out: &mut Outbox<'_>,
    ) -> Result<(), ProtocolError> {
        let got = env.message.payload.kind();
        let unexpected = |phase: Phase| ProtocolError::OutOfOrder { party: "client", expected: phase.expects(), got };
        match (self.phase, env.message.payload) {
            (
                Phase::AwaitingQubits,
                Payload::QubitTransfer { particle: Particle::Vertex(v), direction: Direction::ServerToClient },
            ) => {
                let q = self.take_custody(env.particle, reg)?;
                reg.apply_rz(q, self.secrets.theta[v])?;
                reg.transfer(q, Owner::Server)?;
                let payload =
                    Payload::QubitTransfer { particle: Particle::Vertex(v), direction: Direction::ClientToServer };
                out.send(Owner::Client, payload, Some(q));
                if v + 1 == self.pattern.vertex_count() {
                    self.begin_interactive(out)?;
                }
                Ok(())
            }
            (
                Phase::AwaitingPairs,
                Payload::QubitTransfer { particle: Particle::Pair(k), direction: Direction::ServerToClient },
            ) => {
                let q = self.take_custody(env.particle, reg)?;
                match self.held.get_mut(k) {
                    Some(slot @ None) => *slot = Some(q),
                    _ => return Err(ProtocolError::PairBookkeeping(format!("pair {k} delivered twice or out of range"))),
                }
                if self.held.iter().all(Option::is_some) {
                    self.return_reordered(reg, out)?;
                }
                Ok(())
            }
            (Phase::AwaitingBells, Payload::BellResults { bits }) => {
                let m = self.pattern.vertex_count();
                if bits.len() != m {
                    return Err(ProtocolError::PairBookkeeping(format!("{} Bell results for {m} pairs", bits.len())));
                }
                for slot in 0..m {
                    let k = self.secrets.perm[slot];
                    self.secrets.effective_theta[slot] = steered_angle(self.secrets.theta[k], bits[k]);
                }
                self.begin_interactive(out)
            }
            (Phase::Interactive, Payload::Result { vertex, bit }) => {
                let expected = self.sequence[self.cursor];
                if vertex != expected {
                    return Err(ProtocolError::UnexpectedVertex { expected, got: vertex });
                }
                self.corrected[vertex] = Some((bit & 1) ^ self.secrets.r[vertex]);
                self.cursor += 1;
                self.next_delta(out)
            }
            (phase, _) => Err(unexpected(phase)),
        }
    }

    fn take_custody(&self, particle: Option<QubitHandle>, reg: &QuantumRegister) -> Result<QubitHandle, ProtocolError> {
        let q = particle.ok_or_else(|| ProtocolError::Custody("transfer message without a qubit".into()))?;
        if reg.custody(q)? != Owner::Client {
            return Err(ProtocolError::Custody(format!("{q} announced to the client but held by the server")));
        }
        Ok(q)
    }

    fn return_reordered(&mut self, reg: &mut QuantumRegister, out: &mut Outbox<'_>) -> Result<(), ProtocolError> {
        for slot in 0..self.pattern.vertex_count() {
            let k = self.secrets.perm[slot];
            let q = self.held[k].take().ok_or_else(|| ProtocolError::PairBookkeeping(format!("pair {k} missing")))?;
            reg.transfer(q, Owner::Server)?;
            let payload = Payload::QubitTransfer { particle: Particle::Slot(slot), direction: Direction::ClientToServer };
            out.send(Owner::Client, payload, Some(q));
        }
        out.send(Owner::Client, Payload::AngleList { angles: self.secrets.theta.clone() }, None);
        self.phase = Phase::AwaitingBells;
        Ok(())
    }

    fn begin_interactive(&mut self, out: &mut Outbox<'_>) -> Result<(), ProtocolError> {
        self.phase = Phase::Interactive;
        self.next_delta(out)
    }

    fn next_delta(&mut self, out: &mut Outbox<'_>) -> Result<(), ProtocolError> {
        let Some(&v) = self.sequence.get(self.cursor) else {
            self.phase = Phase::Done;
            return Ok(());
        };
        if self.stop_before_outputs && self.pattern.layout.is_output(v) {
            self.phase = Phase::Done;
            return Ok(());
        }
        let delta = self.delta_for(v)?;
        out.send(Owner::Client, Payload::Delta { vertex: v, delta }, None);
        Ok(())
    }

    /// `δ = φ' + θ̃ + rπ`.
    fn delta_for(&self, v: usize) -> Result<Angle, ProtocolError> {
        let (sx, sz) = collect_deps(&self.pattern, v, &self.corrected)?;
        let phi_prime = adapt_phi(self.pattern.phi[v], sx, sz);
        Ok(phi_prime + self.secrets.effective_theta[v] + Angle::pi_times(self.secrets.r[v]))
    }
}
