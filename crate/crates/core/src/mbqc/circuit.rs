use serde::{Deserialize, Serialize};

use super::MbqcError;
use crate::angle::Angle;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// `diag(1, e^{ikπ/4})`.
    Rz { wire: usize, angle: Angle },
    /// `H · Rz(k) · H`.
    Rx { wire: usize, angle: Angle },
    H { wire: usize },
    T { wire: usize },
    Cnot { control: usize, target: usize },
}

/// A one- or two-wire circuit acting on `|+⟩` per wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub wires: usize,
    pub gates: Vec<Gate>,
}

/// On-disk gate record: `{"g": "rz", "wire": 0, "k": 1}` or
/// `{"g": "cnot", "wires": [0, 1]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GateRecord {
    g: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    wire: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wires: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CircuitRecord {
    wires: usize,
    gates: Vec<GateRecord>,
}

impl GateRecord {
    fn into_gate(self) -> Result<Gate, MbqcError> {
        let wire = || self.wire.ok_or_else(|| MbqcError::UnsupportedGate(format!("{} needs \"wire\"", self.g)));
        let k = || self.k.ok_or_else(|| MbqcError::UnsupportedGate(format!("{} needs \"k\"", self.g)));
        match self.g.as_str() {
            "rz" => Ok(Gate::Rz { wire: wire()?, angle: Angle::new(k()?) }),
            "rx" => Ok(Gate::Rx { wire: wire()?, angle: Angle::new(k()?) }),
            "h" => Ok(Gate::H { wire: wire()? }),
            "t" => Ok(Gate::T { wire: wire()? }),
            "cnot" => {
                let [control, target] = self
                    .wires
                    .ok_or_else(|| MbqcError::UnsupportedGate("cnot needs \"wires\"".into()))?;
                Ok(Gate::Cnot { control, target })
            }
            other => Err(MbqcError::UnsupportedGate(other.to_string())),
        }
    }

    fn from_gate(g: &Gate) -> Self {
        let rec = |name: &str, wire, k| GateRecord { g: name.into(), wire: Some(wire), wires: None, k };
        match *g {
            Gate::Rz { wire, angle } => rec("rz", wire, Some(i64::from(angle.k()))),
            Gate::Rx { wire, angle } => rec("rx", wire, Some(i64::from(angle.k()))),
            Gate::H { wire } => rec("h", wire, None),
            Gate::T { wire } => rec("t", wire, None),
            Gate::Cnot { control, target } => {
                GateRecord { g: "cnot".into(), wire: None, wires: Some([control, target]), k: None }
            }
        }
    }
}

impl Circuit {
    pub fn new(wires: usize, gates: Vec<Gate>) -> Result<Self, MbqcError> {
        let c = Circuit { wires, gates };
        c.validate()?;
        Ok(c)
    }

    pub fn identity(wires: usize) -> Self {
        Circuit { wires, gates: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), MbqcError> {
        if !(1..=2).contains(&self.wires) {
            return Err(MbqcError::UnsupportedRows(self.wires));
        }
        for g in &self.gates {
            match *g {
                Gate::Rz { wire, .. } | Gate::Rx { wire, .. } | Gate::H { wire } | Gate::T { wire } => {
                    if wire >= self.wires {
                        return Err(MbqcError::WireOutOfRange { wire, wires: self.wires });
                    }
                }
                Gate::Cnot { control, target } => {
                    if self.wires != 2 {
                        return Err(MbqcError::UnsupportedGate("cnot needs two wires".into()));
                    }
                    if control >= 2 || target >= 2 || control == target {
                        return Err(MbqcError::UnsupportedGate(format!(
                            "cnot wires [{control}, {target}] are invalid"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MbqcError> {
        let rec: CircuitRecord =
            serde_json::from_str(text).map_err(|e| MbqcError::Parse(e.to_string()))?;
        let gates = rec.gates.into_iter().map(GateRecord::into_gate).collect::<Result<_, _>>()?;
        Circuit::new(rec.wires, gates)
    }

    pub fn to_json(&self) -> String {
        let rec = CircuitRecord {
            wires: self.wires,
            gates: self.gates.iter().map(GateRecord::from_gate).collect(),
        };
        serde_json::to_string(&rec).unwrap_or_default()
    }
}
