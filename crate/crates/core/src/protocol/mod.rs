//! Client/server delegation protocols over a recorded, in-process channel.
//!
//! * [`Protocol::Baseline`]: the client prepares each rotated qubit `|θ_v⟩`.
//! * [`Protocol::P1`]: the server prepares `|+⟩` qubits, the client only
//!   rotates them by a private `Z(θ_v)` and hands them back one at a time.
//! * [`Protocol::P2`]: the server prepares Bell pairs, the client returns
//!   the halves in a private order and announces measurement angles; the
//!   server's Bell outcomes steer each returned half to a hidden angle.
//!
//! After setup all three run the same interactive phase: one `Delta` from the
//! client, one `Result` from the server, per vertex in measurement order.

mod client;
mod exact;
mod message;
mod server;
mod session;

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle;
use crate::mbqc::MbqcError;
use crate::qsim::{QsimError, DEFAULT_CAPACITY};

pub use exact::{
    exact_output_distribution, exact_output_distribution_with, ExactOptions, DEFAULT_BELL_ENUMERATION_LIMIT,
};
pub use message::{Direction, Message, Particle, Payload, Transcript};
pub use session::{Advance, Envelope, Session};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Baseline,
    P1,
    P2,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Baseline, Protocol::P1, Protocol::P2];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Baseline => "baseline",
            Protocol::P1 => "p1",
            Protocol::P2 => "p2",
        }
    }

    /// The quantum capability the client needs.
    pub fn client_ability(self) -> &'static str {
        match self {
            Protocol::Baseline => "generate qubits",
            Protocol::P1 => "rotation operation",
            Protocol::P2 => "reorder",
        }
    }

    /// Static note on probe-photon attacks against returned qubits. Not
    /// modelled by the simulator.
    pub fn trojan_horse_note(self) -> &'static str {
        match self {
            Protocol::Baseline | Protocol::P1 => "automatically prevented",
            Protocol::P2 => "needs device to prevent Trojan-horse",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Protocol::Baseline),
            "p1" => Ok(Protocol::P1),
            "p2" => Ok(Protocol::P2),
            other => Err(format!("unknown protocol {other:?} (expected baseline, p1 or p2)")),
        }
    }
}

/// The client's private randomness. Deliberately not serializable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientSecrets {
    /// Baseline/P1: rotation per vertex. P2: announced angle per Bell pair.
    pub theta: Vec<Angle>,
    /// Basis-flip bit per vertex.
    pub r: Vec<u8>,
    /// P2 only: `perm[slot]` is the pair whose `A` half is returned in that
    /// slot. Empty for the other protocols.
    pub perm: Vec<usize>,
    /// Hidden angle of the qubit sitting at each vertex. Equal to `theta` for
    /// baseline and P1; derived after the Bell outcomes for P2.
    pub effective_theta: Vec<Angle>,
}

impl ClientSecrets {
    /// Secrets for a non-reordering protocol.
    pub fn rotations(theta: Vec<Angle>, r: Vec<u8>) -> Self {
        ClientSecrets { effective_theta: theta.clone(), theta, r, perm: Vec::new() }
    }

    /// Secrets for P2. `effective_theta` is filled in during the run.
    pub fn reordering(announced: Vec<Angle>, r: Vec<u8>, perm: Vec<usize>) -> Self {
        let m = announced.len();
        ClientSecrets { theta: announced, r, perm, effective_theta: vec![Angle::ZERO; m] }
    }

    pub(crate) fn check(&self, protocol: Protocol, m: usize) -> Result<(), ProtocolError> {
        let bad = |what: &str| Err(ProtocolError::BadSecrets(what.to_string()));
        if self.theta.len() != m || self.r.len() != m {
            return bad("theta and r need one entry per vertex");
        }
        if self.r.iter().any(|&b| b > 1) {
            return bad("r entries must be bits");
        }
        if protocol == Protocol::P2 && !is_permutation(&self.perm, m) {
            return bad("perm must be a permutation of the pairs");
        }
        Ok(())
    }
}

pub fn is_permutation(p: &[usize], m: usize) -> bool {
    let mut seen = vec![false; m];
    p.len() == m && p.iter().all(|&k| k < m && !std::mem::replace(&mut seen[k], true))
}

/// Steered angle of a Bell half after its partner was measured at `theta`
/// with outcome `b`: `−θ + bπ`.
pub fn steered_angle(theta: Angle, b: u8) -> Angle {
    -theta + Angle::pi_times(b)
}

/// When the server applies the graph's CZ edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EntanglePolicy {
    /// All edges as soon as the graph qubits are in place.
    Eager,
    /// Each edge just before the first of its endpoints is measured. CZ
    /// commutes with everything else the server does, so the statistics and
    /// the transcript are unchanged; the simulated blocks stay small.
    #[default]
    Lazy,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub policy: EntanglePolicy,
    /// Inject the client's randomness instead of sampling it.
    pub secrets: Option<ClientSecrets>,
    /// P2: post-select the server's Bell outcomes.
    pub forced_bells: Option<Vec<u8>>,
    /// Largest pattern accepted, and largest entangled block simulated.
    pub capacity: usize,
    /// Keep message bodies in the transcript.
    pub record: bool,
    /// Leave the output qubits unmeasured, for state inspection.
    pub stop_before_outputs: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: EntanglePolicy::default(),
            secrets: None,
            forced_bells: None,
            capacity: DEFAULT_CAPACITY,
            record: true,
            stop_before_outputs: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Mbqc(#[from] MbqcError),
    #[error("pattern needs {requested} qubits but capacity is {max}")]
    Capacity { requested: usize, max: usize },
    #[error("{party} received {got} while expecting {expected}")]
    OutOfOrder { party: &'static str, expected: &'static str, got: &'static str },
    #[error("message for vertex {got} arrived while vertex {expected} is due")]
    UnexpectedVertex { expected: usize, got: usize },
    #[error("qubit custody violated: {0}")]
    Custody(String),
    #[error("pair bookkeeping violated: {0}")]
    PairBookkeeping(String),
    #[error("invalid client secrets: {0}")]
    BadSecrets(String),
    #[error("run is not finished")]
    Incomplete,
    #[error("an outcome is pending")]
    OutcomePending,
    #[error("no outcome is pending")]
    NothingPending,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub qubit_efficiency: Ratio<u64>,
    pub messages: std::collections::BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub protocol: Protocol,
    /// One bit per wire, byproducts removed.
    pub output_bits: Vec<u8>,
    pub transcript: Transcript,
    pub metrics: RunMetrics,
    pub seed: u64,
}

impl RunResult {
    /// `{output, efficiency: {num, den}, seed, transcript_path}`.
    pub fn export_json(&self, transcript_path: Option<&str>) -> serde_json::Value {
        serde_json::json!({
            "output": self.output_bits,
            "efficiency": {
                "num": self.metrics.qubit_efficiency.numer(),
                "den": self.metrics.qubit_efficiency.denom(),
            },
            "seed": self.seed,
            "transcript_path": transcript_path,
        })
    }
}

use crate::mbqc::MeasurementPattern;

pub fn run_baseline(pattern: &MeasurementPattern, seed: u64) -> Result<RunResult, ProtocolError> {
    run(Protocol::Baseline, pattern, seed)
}

pub fn run_protocol1(pattern: &MeasurementPattern, seed: u64) -> Result<RunResult, ProtocolError> {
    run(Protocol::P1, pattern, seed)
}

pub fn run_protocol2(pattern: &MeasurementPattern, seed: u64) -> Result<RunResult, ProtocolError> {
    run(Protocol::P2, pattern, seed)
}

pub fn run(protocol: Protocol, pattern: &MeasurementPattern, seed: u64) -> Result<RunResult, ProtocolError> {
    run_with(protocol, pattern, seed, RunOptions::default())
}

pub fn run_with(
    protocol: Protocol,
    pattern: &MeasurementPattern,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult, ProtocolError> {
    let mut session = Session::new(protocol, pattern.clone(), seed, opts)?;
    session.run_sampled()?;
    session.into_result()
}

/// Output bits of a finished session.
pub fn decode_output(session: &Session) -> Result<Vec<u8>, ProtocolError> {
    session.decode_output()
}

#[cfg(test)]
mod tests;
