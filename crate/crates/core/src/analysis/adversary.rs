use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{entropy_bits, AnalysisError, LeakageReport};
use crate::angle::Angle;
use crate::mbqc::{adapt_phi, collect_deps, MeasurementPattern};
use crate::protocol::{exact_output_distribution, steered_angle, ClientSecrets, Payload, Protocol, RunOptions, Session};

pub const MAX_CANDIDATES: usize = 16;
/// The likelihood sums over `2^m` basis-flip vectors.
pub const MAX_GUESS_VERTICES: usize = 12;

const TIE_TOL: f64 = 1e-12;

/// Per-trial result, kept for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessOutcome {
    pub truth: usize,
    pub guess: usize,
    pub posterior_entropy_bits: f64,
}

/// Copies of `base` with vertex `v`'s angle replaced by each of `angles`.
pub fn one_vertex_candidates(base: &MeasurementPattern, v: usize, angles: &[Angle]) -> Vec<MeasurementPattern> {
    angles
        .iter()
        .map(|&a| {
            let mut p = base.clone();
            p.phi[v] = a;
            p
        })
        .collect()
}

/// Everything the server saw, read back from the transcript.
struct View {
    delta: Vec<Angle>,
    bit: Vec<u8>,
    /// P2: steered angles of the pairs, available from the announced angles
    /// and the server's own Bell outcomes.
    labels: Option<BTreeMap<Angle, usize>>,
}

fn read_view(session: &Session, m: usize) -> View {
    let mut delta = vec![Angle::ZERO; m];
    let mut bit = vec![0; m];
    let mut announced = None;
    let mut bells = None;
    for msg in session.transcript().messages() {
        match &msg.payload {
            Payload::Delta { vertex, delta: d } => delta[*vertex] = *d,
            Payload::Result { vertex, bit: b } => bit[*vertex] = *b,
            Payload::AngleList { angles } => announced = Some(angles.clone()),
            Payload::BellResults { bits } => bells = Some(bits.clone()),
            _ => {}
        }
    }
    let labels = match (announced, bells) {
        (Some(a), Some(b)) => {
            let mut counts = BTreeMap::new();
            for (t, bb) in a.iter().zip(&b) {
                *counts.entry(steered_angle(*t, *bb)).or_insert(0) += 1;
            }
            Some(counts)
        }
        _ => None,
    };
    View { delta, bit, labels }
}

fn output_index(bits: &[u8]) -> usize {
    bits.iter().enumerate().fold(0, |acc, (w, &b)| acc | (usize::from(b) << w))
}

/// `P(view | candidate)` up to factors shared by all candidates: a sum over
/// the hidden flips `r`, each of which fixes the hidden angles. Under P2 those
/// angles must be an arrangement of the known steered angles.
fn likelihood(c: &MeasurementPattern, dist: &[f64], view: &View) -> f64 {
    let seq = c.layout.measurement_sequence();
    let mut corrected = vec![None; c.vertex_count()];
    let mut labels = view.labels.clone();
    sum_over_flips(c, dist, view, &seq, 0, &mut corrected, &mut labels)
}

fn sum_over_flips(
    c: &MeasurementPattern,
    dist: &[f64],
    view: &View,
    seq: &[usize],
    i: usize,
    corrected: &mut Vec<Option<u8>>,
    labels: &mut Option<BTreeMap<Angle, usize>>,
) -> f64 {
    let Some(&v) = seq.get(i) else {
        return c.decode(corrected).map(|bits| dist[output_index(&bits)]).unwrap_or(0.0);
    };
    let Ok((sx, sz)) = collect_deps(c, v, corrected) else {
        return 0.0;
    };
    let phi_prime = adapt_phi(c.phi[v], sx, sz);
    let mut total = 0.0;
    for r in 0..2u8 {
        let theta = view.delta[v] - phi_prime - Angle::pi_times(r);
        if let Some(l) = labels.as_mut() {
            match l.get_mut(&theta) {
                Some(n) if *n > 0 => *n -= 1,
                _ => continue,
            }
        }
        corrected[v] = Some(view.bit[v] ^ r);
        total += sum_over_flips(c, dist, view, seq, i + 1, corrected, labels);
        corrected[v] = None;
        if let Some(l) = labels.as_mut() {
            if let Some(n) = l.get_mut(&theta) {
                *n += 1;
            }
        }
    }
    total
}

/// Likelihood for an adversary that also knows the client's secrets: the
/// candidate either reproduces every `δ` or is ruled out.
fn likelihood_with_secrets(c: &MeasurementPattern, dist: &[f64], view: &View, secrets: &ClientSecrets) -> f64 {
    let mut corrected = vec![None; c.vertex_count()];
    for v in c.layout.measurement_sequence() {
        let Ok((sx, sz)) = collect_deps(c, v, &corrected) else {
            return 0.0;
        };
        let expected = adapt_phi(c.phi[v], sx, sz) + secrets.effective_theta[v] + Angle::pi_times(secrets.r[v]);
        if expected != view.delta[v] {
            return 0.0;
        }
        corrected[v] = Some(view.bit[v] ^ secrets.r[v]);
    }
    c.decode(&corrected).map(|bits| dist[output_index(&bits)]).unwrap_or(0.0)
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn check_candidates(candidates: &[MeasurementPattern]) -> Result<(), AnalysisError> {
    if candidates.len() < 2 {
        return Err(AnalysisError::Invalid("at least two candidate patterns are needed".into()));
    }
    if candidates.len() > MAX_CANDIDATES {
        return Err(AnalysisError::TooLarge { what: "candidates", value: candidates.len(), max: MAX_CANDIDATES });
    }
    let m = candidates[0].vertex_count();
    if m > MAX_GUESS_VERTICES {
        return Err(AnalysisError::TooLarge { what: "vertices", value: m, max: MAX_GUESS_VERTICES });
    }
    if candidates.iter().any(|c| c.layout != candidates[0].layout) {
        return Err(AnalysisError::Invalid("candidates must share one public layout".into()));
    }
    Ok(())
}

fn play(
    protocol: Protocol,
    candidates: &[MeasurementPattern],
    trials: u64,
    seed: u64,
    informed: bool,
) -> Result<(LeakageReport, Vec<GuessOutcome>), AnalysisError> {
    check_candidates(candidates)?;
    if trials == 0 {
        return Err(AnalysisError::Invalid("trials must be positive".into()));
    }
    let m = candidates[0].vertex_count();
    let dists = candidates
        .iter()
        .map(|c| exact_output_distribution(Protocol::Baseline, c, 0))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let truth = rng.gen_range(0..candidates.len());
            let run_seed: u64 = rng.gen();
            let mut session = Session::new(protocol, candidates[truth].clone(), run_seed, RunOptions::default())?;
            session.run_sampled()?;
            let view = read_view(&session, m);
            let scores: Vec<f64> = candidates
                .iter()
                .zip(&dists)
                .map(|(c, d)| {
                    if informed {
                        likelihood_with_secrets(c, d, &view, session.secrets())
                    } else {
                        likelihood(c, d, &view)
                    }
                })
                .collect();
            let best = scores.iter().copied().fold(0.0, f64::max);
            let total: f64 = scores.iter().sum();
            let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= best * (1.0 - TIE_TOL)).collect();
            let guess = tied[rng.gen_range(0..tied.len())];
            let posterior = if total > 0.0 { entropy_bits(scores.iter().map(|s| s / total)) } else { 0.0 };
            Ok(GuessOutcome { truth, guess, posterior_entropy_bits: posterior })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let n = trials as f64;
    let wins = outcomes.iter().filter(|o| o.truth == o.guess).count() as f64;
    let rate = wins / n;
    let prior = (candidates.len() as f64).log2();
    let posterior = outcomes.iter().map(|o| o.posterior_entropy_bits).sum::<f64>() / n;
    let report = LeakageReport {
        protocol,
        m,
        hypotheses: candidates.len(),
        prior_entropy_bits: prior,
        mutual_information_bits: (prior - posterior).max(0.0),
        posterior_entropy_bits: posterior,
        max_guess_probability: rate,
        exact_guess_probability: None,
        exactly_independent: None,
        trials,
        ci95: Some(wilson(wins, n)),
    };
    Ok((report, outcomes))
}

/// Wilson score interval at 95%.
fn wilson(wins: f64, n: f64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let p = wins / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// A curious server that follows the protocol and then guesses which
/// candidate pattern was delegated, by maximum likelihood over its view.
/// The true candidate is drawn uniformly per trial; ties break uniformly.
pub fn curious_server_guess(
    protocol: Protocol,
    candidates: &[MeasurementPattern],
    trials: u64,
    seed: u64,
) -> Result<LeakageReport, AnalysisError> {
    play(protocol, candidates, trials, seed, false).map(|(r, _)| r)
}

/// Same game, but the adversary is handed the client's secrets. Success
/// should be perfect whenever the candidates differ on a measured vertex.
pub fn curious_server_guess_with_secrets(
    protocol: Protocol,
    candidates: &[MeasurementPattern],
    trials: u64,
    seed: u64,
) -> Result<LeakageReport, AnalysisError> {
    play(protocol, candidates, trials, seed, true).map(|(r, _)| r)
}
