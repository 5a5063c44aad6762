use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::mbqc::GraphLayout;
use crate::qsim::Owner;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

/// How a transmitted particle is identified on the channel. This is what the
/// server can name; it never carries the client's private ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Particle {
    /// The qubit destined for graph vertex `v`.
    Vertex(usize),
    /// The `A` half of Bell pair `k`.
    Pair(usize),
    /// The `i`-th particle of the client's reordered return stream.
    Slot(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    QubitTransfer { particle: Particle, direction: Direction },
    GraphRequest { layout: Arc<GraphLayout> },
    Delta { vertex: usize, delta: Angle },
    Result { vertex: usize, bit: u8 },
    AngleList { angles: Vec<Angle> },
    BellResults { bits: Vec<u8> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::QubitTransfer { .. } => "qubit_transfer",
            Payload::GraphRequest { .. } => "graph_request",
            Payload::Delta { .. } => "delta",
            Payload::Result { .. } => "result",
            Payload::AngleList { .. } => "angle_list",
            Payload::BellResults { .. } => "bell_results",
        }
    }
}

/// One classical message or qubit-custody transfer, as seen on the channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub sender: Owner,
    #[serde(flatten)]
    pub payload: Payload,
}

/// Append-only record of everything that crossed the channel: the server's
/// entire view of a run.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    messages: Vec<Message>,
    recording: bool,
    next_seq: u64,
    kinds: BTreeMap<&'static str, usize>,
    server_to_client: usize,
    client_to_server: usize,
    physical: BTreeSet<Particle>,
    graph_qubits: usize,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript { recording: true, ..Default::default() }
    }

    /// Counts and sequence numbers are kept but message bodies are dropped.
    pub fn counting_only() -> Self {
        Transcript { recording: false, ..Default::default() }
    }

    pub(crate) fn push(&mut self, sender: Owner, payload: Payload) -> Message {
        let msg = Message { seq: self.next_seq, sender, payload };
        self.next_seq += 1;
        *self.kinds.entry(msg.payload.kind()).or_insert(0) += 1;
        match &msg.payload {
            Payload::QubitTransfer { particle, direction } => {
                match direction {
                    Direction::ServerToClient => self.server_to_client += 1,
                    Direction::ClientToServer => self.client_to_server += 1,
                }
                if !matches!(particle, Particle::Slot(_)) {
                    self.physical.insert(*particle);
                }
            }
            Payload::GraphRequest { layout } => self.graph_qubits = layout.vertex_count,
            _ => {}
        }
        if self.recording {
            self.messages.push(msg.clone());
        }
        msg
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn qubits_sent_server_to_client(&self) -> usize {
        self.server_to_client
    }

    pub fn qubits_sent_client_to_server(&self) -> usize {
        self.client_to_server
    }

    pub fn graph_qubit_count(&self) -> usize {
        self.graph_qubits
    }

    pub fn message_counts(&self) -> BTreeMap<String, usize> {
        self.kinds.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Distinct physical qubits spent on the exchange. A qubit that crosses
    /// the channel twice counts once; a Bell pair whose `A` half is sent
    /// counts as two.
    pub fn physical_qubits(&self) -> usize {
        self.physical
            .iter()
            .map(|p| match p {
                Particle::Pair(_) => 2,
                _ => 1,
            })
            .sum()
    }

    /// Graph qubits per physical qubit spent.
    pub fn qubit_efficiency(&self) -> Option<Ratio<u64>> {
        let spent = self.physical_qubits() as u64;
        if spent == 0 || self.graph_qubits == 0 {
            return None;
        }
        Some(Ratio::new(self.graph_qubits as u64, spent))
    }

    /// JSON lines, one message per line: `{seq, sender, kind, payload}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<Message>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbqc::build_linear_cluster;

    #[test]
    fn jsonl_has_documented_fields() {
        let mut t = Transcript::new();
        t.push(Owner::Client, Payload::Delta { vertex: 3, delta: Angle::new(7) });
        let line = t.to_jsonl();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["seq"], 0);
        assert_eq!(v["sender"], "client");
        assert_eq!(v["kind"], "delta");
        assert_eq!(v["payload"]["delta"], 7);
        assert_eq!(v["payload"]["vertex"], 3);
    }

    #[test]
    fn sequence_numbers_increase() {
        let mut t = Transcript::new();
        for k in 0..5 {
            t.push(Owner::Server, Payload::Result { vertex: k, bit: 0 });
        }
        let seqs: Vec<_> = t.messages().iter().map(|m| m.seq).collect();
        assert!(seqs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn every_variant_round_trips_without_secret_fields() {
        let layout = Arc::new(build_linear_cluster(2).unwrap());
        let payloads = vec![
            Payload::QubitTransfer { particle: Particle::Vertex(0), direction: Direction::ClientToServer },
            Payload::QubitTransfer { particle: Particle::Pair(1), direction: Direction::ServerToClient },
            Payload::QubitTransfer { particle: Particle::Slot(1), direction: Direction::ClientToServer },
            Payload::GraphRequest { layout },
            Payload::Delta { vertex: 0, delta: Angle::new(3) },
            Payload::Result { vertex: 0, bit: 1 },
            Payload::AngleList { angles: vec![Angle::new(1), Angle::new(2)] },
            Payload::BellResults { bits: vec![0, 1] },
        ];
        let mut t = Transcript::new();
        for p in payloads.iter().cloned() {
            t.push(Owner::Client, p);
        }
        let text = t.to_jsonl();
        for forbidden in ["theta", "\"r\"", "perm", "secret", "effective", "slot_to_pair"] {
            assert!(!text.contains(forbidden), "{forbidden} leaked into {text}");
        }
        let back = Transcript::from_jsonl(&text).unwrap();
        assert_eq!(back.iter().map(|m| m.payload.clone()).collect::<Vec<_>>(), payloads);
    }
}
