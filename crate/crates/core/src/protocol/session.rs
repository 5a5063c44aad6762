use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::client::Client;
use super::message::{Message, Payload, Transcript};
use super::server::{PendingMeasurement, Server};
use super::{ClientSecrets, Protocol, ProtocolError, RunMetrics, RunOptions, RunResult};
use crate::angle::Angle;
use crate::mbqc::MeasurementPattern;
use crate::qsim::{Owner, QubitHandle, QuantumRegister, C64, MAX_LIVE};

const CLIENT_STREAM: u64 = 1;
const SERVER_STREAM: u64 = 2;

/// A message in flight, together with the qubit it hands over, if any.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub message: Message,
    pub particle: Option<QubitHandle>,
}

pub(crate) struct Outbox<'a> {
    transcript: &'a mut Transcript,
    queue: &'a mut VecDeque<Envelope>,
}

impl Outbox<'_> {
    pub(crate) fn send(&mut self, sender: Owner, payload: Payload, particle: Option<QubitHandle>) {
        let message = self.transcript.push(sender, payload);
        self.queue.push_back(Envelope { message, particle });
    }
}

/// What a session needs before it can make progress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Advance {
    /// The server is about to measure; outcome probabilities `[p0, p1]`.
    Outcome { probabilities: [f64; 2], bell: bool },
    Finished,
}

/// One protocol run: both parties, the shared register and the channel.
///
/// Parties are stepped by a FIFO scheduler. Measurements are either sampled
/// from the register's stream ([`Session::run_sampled`]) or supplied from
/// outside ([`Session::advance`] / [`Session::resolve`]), which is how the
/// exact enumerator walks every history.
#[derive(Clone, Debug)]
pub struct Session {
    protocol: Protocol,
    pattern: Arc<MeasurementPattern>,
    seed: u64,
    reg: QuantumRegister,
    client: Client,
    server: Server,
    queue: VecDeque<Envelope>,
    transcript: Transcript,
    forced_bells: Option<Vec<u8>>,
    started: bool,
}

fn chacha(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Client randomness for a run, drawn from the client's stream.
pub(crate) fn sample_secrets(protocol: Protocol, m: usize, rng: &mut ChaCha8Rng) -> ClientSecrets {
    match protocol {
        Protocol::Baseline | Protocol::P1 => {
            let theta = (0..m).map(|_| Angle::random(rng)).collect();
            let r = (0..m).map(|_| rng.gen_range(0..2u8)).collect();
            ClientSecrets::rotations(theta, r)
        }
        Protocol::P2 => {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(rng);
            let announced = (0..m).map(|_| Angle::random(rng)).collect();
            let r = (0..m).map(|_| rng.gen_range(0..2u8)).collect();
            ClientSecrets::reordering(announced, r, perm)
        }
    }
}

impl Session {
    pub fn new(
        protocol: Protocol,
        pattern: MeasurementPattern,
        seed: u64,
        opts: RunOptions,
    ) -> Result<Self, ProtocolError> {
        pattern.validate()?;
        let m = pattern.vertex_count();
        let live = if protocol == Protocol::P2 { 2 * m } else { m };
        if m > opts.capacity || live > MAX_LIVE {
            return Err(ProtocolError::Capacity { requested: m, max: opts.capacity.min(MAX_LIVE) });
        }
        let secrets = match opts.secrets {
            Some(s) => {
                s.check(protocol, m)?;
                s
            }
            None => sample_secrets(protocol, m, &mut chacha(seed, CLIENT_STREAM)),
        };
        if let Some(bells) = &opts.forced_bells {
            if bells.len() != m || bells.iter().any(|&b| b > 1) {
                return Err(ProtocolError::BadSecrets("forced_bells needs one bit per pair".into()));
            }
        }
        let pattern = Arc::new(pattern);
        Ok(Session {
            protocol,
            client: Client::new(protocol, Arc::clone(&pattern), secrets, opts.stop_before_outputs),
            server: Server::new(protocol, opts.policy),
            pattern,
            seed,
            reg: QuantumRegister::with_rng(chacha(seed, SERVER_STREAM), opts.capacity),
            queue: VecDeque::new(),
            transcript: if opts.record { Transcript::new() } else { Transcript::counting_only() },
            forced_bells: opts.forced_bells,
            started: false,
        })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn pattern(&self) -> &MeasurementPattern {
        &self.pattern
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn register(&self) -> &QuantumRegister {
        &self.reg
    }

    /// The client's private randomness. Exposed for tests and analysis only;
    /// nothing here reaches the channel.
    pub fn secrets(&self) -> &ClientSecrets {
        self.client.secrets()
    }

    /// Server-side handle of a graph vertex, once it has arrived.
    pub fn vertex_handle(&self, v: usize) -> Option<QubitHandle> {
        self.server.vertex_handle(v)
    }

    pub fn is_finished(&self) -> bool {
        self.client.is_done() && self.queue.is_empty() && self.server.pending().is_none()
    }

    /// Delivers messages until a measurement outcome is needed or the run
    /// ends. Bell outcomes that are forced are applied without stopping.
    pub fn advance(&mut self) -> Result<Advance, ProtocolError> {
        if !self.started {
            self.started = true;
            let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
            self.client.start(&mut self.reg, &mut out)?;
        }
        loop {
            if let Some(p) = self.server.pending() {
                if let (PendingMeasurement::Bell { pair, .. }, Some(bells)) = (p, &self.forced_bells) {
                    let bit = bells[pair];
                    self.resolve(bit)?;
                    continue;
                }
                let (q, delta) = self.server.pending_target().ok_or(ProtocolError::NothingPending)?;
                let probabilities = self.reg.outcome_probabilities(q, delta)?;
                let bell = matches!(p, PendingMeasurement::Bell { .. });
                return Ok(Advance::Outcome { probabilities, bell });
            }
            let Some(env) = self.queue.pop_front() else {
                return Ok(Advance::Finished);
            };
            self.deliver(env)?;
        }
    }

    fn deliver(&mut self, env: Envelope) -> Result<(), ProtocolError> {
        let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
        match env.message.sender {
            Owner::Client => self.server.receive(env, &mut self.reg, &mut out),
            Owner::Server => self.client.receive(env, &mut self.reg, &mut out),
        }
    }

    /// Performs the pending measurement with outcome `bit`.
    pub fn resolve(&mut self, bit: u8) -> Result<(), ProtocolError> {
        let (q, delta) = self.server.pending_target().ok_or(ProtocolError::NothingPending)?;
        self.reg.measure_angle_forced(q, delta, bit)?;
        let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
        self.server.complete(bit & 1, &mut self.reg, &mut out)
    }

    /// Performs the pending measurement, sampling from the register's stream.
    pub fn resolve_sampled(&mut self) -> Result<u8, ProtocolError> {
        let (q, delta) = self.server.pending_target().ok_or(ProtocolError::NothingPending)?;
        let bit = self.reg.measure_angle(q, delta)?.bit;
        let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
        self.server.complete(bit, &mut self.reg, &mut out)?;
        Ok(bit)
    }

    pub fn run_sampled(&mut self) -> Result<(), ProtocolError> {
        while let Advance::Outcome { .. } = self.advance()? {
            self.resolve_sampled()?;
        }
        Ok(())
    }

    /// Runs the setup phase only: stops when the first `Delta` is next on the
    /// channel (or the run ends). Bell outcomes are forced or sampled. Under
    /// the lazy policy no edge has been applied yet.
    pub fn run_setup(&mut self) -> Result<(), ProtocolError> {
        if !self.started {
            self.started = true;
            let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
            self.client.start(&mut self.reg, &mut out)?;
        }
        loop {
            match self.server.pending() {
                Some(PendingMeasurement::Bell { pair, .. }) => {
                    match self.forced_bells.as_ref().map(|b| b[pair]) {
                        Some(bit) => self.resolve(bit)?,
                        None => {
                            self.resolve_sampled()?;
                        }
                    }
                    continue;
                }
                Some(PendingMeasurement::Vertex { .. }) => return Ok(()),
                None => {}
            }
            match self.queue.front() {
                None => return Ok(()),
                Some(env) if matches!(env.message.payload, Payload::Delta { .. }) => return Ok(()),
                Some(_) => {
                    let env = self.queue.pop_front().ok_or(ProtocolError::Incomplete)?;
                    self.deliver(env)?;
                }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn register_mut(&mut self) -> &mut QuantumRegister {
        &mut self.reg
    }

    /// Test hook: puts a raw message on the channel as if `sender` had sent it.
    pub fn inject(&mut self, sender: Owner, payload: Payload, particle: Option<QubitHandle>) {
        let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
        out.send(sender, payload, particle);
    }

    /// Test hook: executes exactly one queued delivery.
    pub fn step(&mut self) -> Result<bool, ProtocolError> {
        if !self.started {
            self.started = true;
            let mut out = Outbox { transcript: &mut self.transcript, queue: &mut self.queue };
            self.client.start(&mut self.reg, &mut out)?;
            return Ok(true);
        }
        match self.queue.pop_front() {
            Some(env) => self.deliver(env).map(|()| true),
            None => Ok(false),
        }
    }

    pub fn decode_output(&self) -> Result<Vec<u8>, ProtocolError> {
        if !self.is_finished() {
            return Err(ProtocolError::Incomplete);
        }
        Ok(self.pattern.decode(self.client.corrected())?)
    }

    /// The logical output state, for a run stopped before its outputs.
    ///
    /// Applies the remaining edges, removes each output's hidden rotation and
    /// then its Pauli frame. Amplitude index bit `w` is wire `w`. Consumes the
    /// session because it alters the register.
    pub fn logical_output_state(mut self) -> Result<Vec<C64>, ProtocolError> {
        if !self.is_finished() {
            return Err(ProtocolError::Incomplete);
        }
        let layout = &self.pattern.layout;
        let corrected = self.client.corrected();
        let mut handles = Vec::new();
        for (r, &o) in layout.outputs.iter().enumerate() {
            if corrected[o].is_some() {
                return Err(ProtocolError::Incomplete);
            }
            let q = self.server.vertex_handle(o).ok_or(ProtocolError::Incomplete)?;
            let parity = |set: &std::collections::BTreeSet<usize>| {
                set.iter().try_fold(0u8, |acc, &u| corrected[u].map(|b| acc ^ b).ok_or(ProtocolError::Incomplete))
            };
            let sx = parity(&self.pattern.x_deps[o])?;
            let sz = parity(&self.pattern.output_flips[r])?;
            handles.push((q, sx, sz, self.client.secrets().effective_theta[o]));
        }
        self.server.entangle_all(&mut self.reg)?;
        for &(q, sx, sz, theta) in &handles {
            self.reg.apply_rz(q, -theta)?;
            if sx == 1 {
                self.reg.apply_x(q)?;
            }
            self.reg.apply_rz(q, Angle::pi_times(sz))?;
        }
        let order: Vec<_> = handles.iter().map(|h| h.0).collect();
        Ok(self.reg.state_of(&order)?)
    }

    pub fn into_result(self) -> Result<RunResult, ProtocolError> {
        let output_bits = self.decode_output()?;
        let qubit_efficiency = self.transcript.qubit_efficiency().ok_or(ProtocolError::Incomplete)?;
        let metrics = RunMetrics { qubit_efficiency, messages: self.transcript.message_counts() };
        Ok(RunResult { protocol: self.protocol, output_bits, transcript: self.transcript, metrics, seed: self.seed })
    }
}
