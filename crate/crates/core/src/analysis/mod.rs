//! What the server can learn: exact view distributions, quantum marginals,
//! permutation posteriors and a likelihood-maximising adversary.

mod adversary;
mod posterior;

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::angle::Angle;
use crate::mbqc::{compile_circuit, Circuit, Gate, MbqcError};
use crate::protocol::{self, ClientSecrets, Protocol, ProtocolError, RunOptions, Session};
use crate::qsim::{Matrix2, QsimError, C64};

pub use adversary::{
    curious_server_guess, curious_server_guess_with_secrets, one_vertex_candidates, GuessOutcome, MAX_CANDIDATES,
    MAX_GUESS_VERTICES,
};
pub use posterior::{permutation_posterior, MAX_PERMUTATION_M};

pub type Prob = Ratio<u64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{what} = {value} exceeds the enumeration cap {max}")]
    TooLarge { what: &'static str, value: usize, max: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Mbqc(#[from] MbqcError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// A distribution over one classical value the server sees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewDistribution {
    pub support: Vec<(Angle, Prob)>,
    pub conditioned_on: String,
}

impl ViewDistribution {
    pub fn total(&self) -> Prob {
        self.support.iter().map(|(_, p)| *p).sum()
    }

    pub fn probability(&self, a: Angle) -> Prob {
        self.support.iter().filter(|(x, _)| *x == a).map(|(_, p)| *p).sum()
    }

    /// Exactly `1/8` on each of the eight angles.
    pub fn is_uniform(&self) -> bool {
        Angle::ALL.iter().all(|&a| self.probability(a) == Prob::new(1, 8))
    }

    /// `½ Σ |p − q|`, exact.
    pub fn statistical_distance(&self, other: &ViewDistribution) -> Prob {
        let twice = Angle::ALL.iter().fold(Prob::zero(), |acc, &a| {
            let (p, q) = (self.probability(a), other.probability(a));
            acc + if p > q { p - q } else { q - p }
        });
        twice / 2
    }
}

/// Exact distribution of `δ = φ' + θ + rπ` over uniform `θ ∈ S`, `r ∈ {0,1}`.
pub fn delta_view(phi_prime: Angle) -> ViewDistribution {
    let mut counts: BTreeMap<Angle, u64> = BTreeMap::new();
    for theta in Angle::ALL {
        for r in 0..2u8 {
            *counts.entry(phi_prime + theta + Angle::pi_times(r)).or_insert(0) += 1;
        }
    }
    let total: u64 = counts.values().sum();
    ViewDistribution {
        support: counts.into_iter().map(|(a, c)| (a, Prob::new(c, total))).collect(),
        conditioned_on: format!("phi' = {} pi/4; theta uniform on S, r uniform on {{0,1}}", phi_prime.k()),
    }
}

/// True when `delta_view(φ')` is uniform for all eight `φ'`.
pub fn delta_view_uniform_for_all() -> bool {
    Angle::ALL.iter().all(|&a| delta_view(a).is_uniform())
}

/// The server's qubit after P1 setup with the client's rotation fixed.
pub fn p1_received_state(theta: Angle) -> Result<Matrix2, AnalysisError> {
    let pattern = single_vertex_pattern()?;
    let secrets = ClientSecrets::rotations(vec![theta], vec![0]);
    let mut s = Session::new(Protocol::P1, pattern, 0, RunOptions { secrets: Some(secrets), ..Default::default() })?;
    s.run_setup()?;
    let q = s.vertex_handle(0).ok_or(ProtocolError::Incomplete)?;
    Ok(s.register().reduced_density(q)?)
}

/// Average of [`p1_received_state`] over `thetas`, uniformly weighted.
pub fn server_marginal_p1_over(thetas: &[Angle]) -> Result<Matrix2, AnalysisError> {
    if thetas.is_empty() {
        return Err(AnalysisError::Invalid("no angles to average over".into()));
    }
    let mut acc = [[C64::new(0.0, 0.0); 2]; 2];
    let w = 1.0 / thetas.len() as f64;
    for &t in thetas {
        let rho = p1_received_state(t)?;
        for i in 0..2 {
            for j in 0..2 {
                acc[i][j] += rho[i][j] * w;
            }
        }
    }
    Ok(acc)
}

/// The server's single-qubit state after P1 setup, averaged over `θ ∈ S`.
pub fn server_marginal_p1() -> Result<Matrix2, AnalysisError> {
    server_marginal_p1_over(&Angle::ALL)
}

fn single_vertex_pattern() -> Result<crate::mbqc::MeasurementPattern, MbqcError> {
    compile_circuit(&Circuit::identity(1))
}

/// Entropy in bits of a list of probabilities.
pub(crate) fn entropy_bits<I: IntoIterator<Item = f64>>(ps: I) -> f64 {
    ps.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

pub(crate) fn to_f64(p: Prob) -> f64 {
    *p.numer() as f64 / *p.denom() as f64
}

/// What an analysis found about the server's knowledge.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageReport {
    pub protocol: Protocol,
    pub m: usize,
    pub hypotheses: usize,
    pub prior_entropy_bits: f64,
    pub mutual_information_bits: f64,
    pub posterior_entropy_bits: f64,
    pub max_guess_probability: f64,
    /// Set when the guess probability was computed exactly.
    pub exact_guess_probability: Option<Prob>,
    /// Set when independence of view and hypothesis was decided exactly.
    pub exactly_independent: Option<bool>,
    /// Monte Carlo trials; zero for exact enumerations.
    pub trials: u64,
    pub ci95: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct LeakageJson {
    protocol: Protocol,
    m: usize,
    entropy_bits: f64,
    mi_bits: f64,
    guess_prob: f64,
    trials: u64,
    ci95: Option<[f64; 2]>,
}

impl LeakageReport {
    /// `{protocol, m, entropy_bits, mi_bits, guess_prob, trials, ci95}`.
    pub fn to_json(&self) -> serde_json::Value {
        let j = LeakageJson {
            protocol: self.protocol,
            m: self.m,
            entropy_bits: self.posterior_entropy_bits,
            mi_bits: self.mutual_information_bits,
            guess_prob: self.max_guess_probability,
            trials: self.trials,
            ci95: self.ci95.map(|(a, b)| [a, b]),
        };
        serde_json::to_value(j).unwrap_or_default()
    }

    /// Chance level `1/hypotheses`.
    pub fn chance(&self) -> f64 {
        1.0 / self.hypotheses as f64
    }

    /// True if the success rate lies within `k` binomial standard deviations
    /// of chance.
    pub fn within_sigma_of_chance(&self, k: f64) -> bool {
        let q = self.chance();
        let sigma = (q * (1.0 - q) / self.trials.max(1) as f64).sqrt();
        (self.max_guess_probability - q).abs() <= k * sigma
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EfficiencyRow {
    pub protocol: Protocol,
    pub client_ability: &'static str,
    #[serde(serialize_with = "ratio_string")]
    pub qubit_efficiency: Ratio<u64>,
    pub trojan_horse: &'static str,
}

fn ratio_string<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

impl EfficiencyRow {
    /// `p1, rotation operation, 1/1`.
    pub fn line(&self) -> String {
        format!(
            "{}, {}, {}/{}, {}",
            self.protocol,
            self.client_ability,
            self.qubit_efficiency.numer(),
            self.qubit_efficiency.denom(),
            self.trojan_horse
        )
    }
}

/// Runs every protocol on a fixed two-wire pattern and reads the measured
/// qubit efficiency off each transcript.
pub fn efficiency_table() -> Result<Vec<EfficiencyRow>, AnalysisError> {
    let circuit = Circuit::new(2, vec![Gate::Cnot { control: 0, target: 1 }])?;
    let pattern = compile_circuit(&circuit)?;
    Protocol::ALL
        .iter()
        .map(|&p| {
            let res = protocol::run(p, &pattern, 0)?;
            Ok(EfficiencyRow {
                protocol: p,
                client_ability: p.client_ability(),
                qubit_efficiency: res.metrics.qubit_efficiency,
                trojan_horse: p.trojan_horse_note(),
            })
        })
        .collect()
}
