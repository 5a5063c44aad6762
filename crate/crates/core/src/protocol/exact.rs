//! Exact output distributions by walking every measurement history.

use super::session::{Advance, Session};
use super::{Protocol, ProtocolError, RunOptions};
use crate::mbqc::MeasurementPattern;
use crate::qsim::NORM_TOL;

/// Branch points below this depth are explored in parallel.
const PARALLEL_DEPTH: usize = 6;

#[derive(Clone, Debug)]
pub struct ExactOptions {
    pub run: RunOptions,
    /// P2: branch on the server's Bell outcomes too when the pattern has at
    /// most this many vertices. Otherwise they are sampled from the run's
    /// seed (or taken from `run.forced_bells`) and only the graph outcomes
    /// are enumerated.
    pub bell_enumeration_limit: usize,
}

/// Up to `2^10 · 2^10` histories.
pub const DEFAULT_BELL_ENUMERATION_LIMIT: usize = 10;

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { run: RunOptions { record: false, ..RunOptions::default() }, bell_enumeration_limit: DEFAULT_BELL_ENUMERATION_LIMIT }
    }
}

/// Output distribution (index bit `w` = wire `w`) of one protocol run with
/// the client's randomness drawn from `seed`, summed over every server
/// outcome history.
pub fn exact_output_distribution(
    protocol: Protocol,
    pattern: &MeasurementPattern,
    seed: u64,
) -> Result<Vec<f64>, ProtocolError> {
    exact_output_distribution_with(protocol, pattern, seed, &ExactOptions::default())
}

pub fn exact_output_distribution_with(
    protocol: Protocol,
    pattern: &MeasurementPattern,
    seed: u64,
    opts: &ExactOptions,
) -> Result<Vec<f64>, ProtocolError> {
    let mut run = opts.run.clone();
    run.stop_before_outputs = false;
    let session = Session::new(protocol, pattern.clone(), seed, run)?;
    let dim = 1usize << pattern.wires();
    walk(session, 1.0, 0, pattern.vertex_count() <= opts.bell_enumeration_limit, dim)
}

fn walk(mut s: Session, weight: f64, depth: usize, bells: bool, dim: usize) -> Result<Vec<f64>, ProtocolError> {
    loop {
        match s.advance()? {
            Advance::Finished => {
                let bits = s.decode_output()?;
                let index = bits.iter().enumerate().fold(0, |acc, (w, &b)| acc | (usize::from(b) << w));
                let mut dist = vec![0.0; dim];
                dist[index] = weight;
                return Ok(dist);
            }
            Advance::Outcome { bell: true, .. } if !bells => {
                s.resolve_sampled()?;
            }
            Advance::Outcome { probabilities: [p0, p1], .. } => {
                let branch = |mut s: Session, bit: u8, p: f64| -> Result<Vec<f64>, ProtocolError> {
                    if p < NORM_TOL {
                        return Ok(vec![0.0; dim]);
                    }
                    s.resolve(bit)?;
                    walk(s, weight * p, depth + 1, bells, dim)
                };
                let other = s.clone();
                let (a, b) = if depth < PARALLEL_DEPTH {
                    rayon::join(|| branch(s, 0, p0), || branch(other, 1, p1))
                } else {
                    (branch(s, 0, p0), branch(other, 1, p1))
                };
                let (mut a, b) = (a?, b?);
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                return Ok(a);
            }
        }
    }
}
