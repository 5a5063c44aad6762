use std::collections::{BTreeMap, BTreeSet};

use super::{entropy_bits, to_f64, AnalysisError, LeakageReport, Prob};
use crate::angle::Angle;
use crate::mbqc::{build_linear_cluster, MeasurementPattern};
use crate::protocol::{steered_angle, ClientSecrets, Payload, Protocol, RunOptions, Session};

/// `m!` enumeration stops here.
pub const MAX_PERMUTATION_M: usize = 6;

pub(crate) fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, m - 1);
            out.push(q);
        }
    }
    out
}

/// The server's posterior over which steered angle sits in which returned
/// slot, after P2 setup with the given announced angles and Bell outcomes.
///
/// Every client permutation is run through the real protocol; the view is
/// the serialized setup transcript. Hypotheses are slot → angle assignments,
/// so permutations that swap equal angles collapse into one.
pub fn permutation_posterior(m: usize, announced: &[Angle], bells: &[u8]) -> Result<LeakageReport, AnalysisError> {
    if m == 0 {
        return Err(AnalysisError::Invalid("m must be at least 1".into()));
    }
    if m > MAX_PERMUTATION_M {
        return Err(AnalysisError::TooLarge { what: "m", value: m, max: MAX_PERMUTATION_M });
    }
    if announced.len() != m || bells.len() != m || bells.iter().any(|&b| b > 1) {
        return Err(AnalysisError::Invalid(format!("need {m} announced angles and {m} Bell bits")));
    }
    let layout = build_linear_cluster(m)?;
    let pattern = MeasurementPattern::on_grid(layout, vec![Angle::ZERO; m])?;
    let perms = permutations(m);
    let mut joint: BTreeMap<(String, Vec<Angle>), u64> = BTreeMap::new();
    for perm in &perms {
        let secrets = ClientSecrets::reordering(announced.to_vec(), vec![0; m], perm.clone());
        let opts = RunOptions { secrets: Some(secrets), forced_bells: Some(bells.to_vec()), ..Default::default() };
        let mut session = Session::new(Protocol::P2, pattern.clone(), 0, opts)?;
        session.run_setup()?;
        // The first δ is already queued once setup ends; it belongs to the
        // interactive phase.
        let view = session
            .transcript()
            .messages()
            .iter()
            .take_while(|msg| !matches!(msg.payload, Payload::Delta { .. }))
            .map(|msg| serde_json::to_string(msg).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n");
        let assignment: Vec<Angle> = perm.iter().map(|&k| steered_angle(announced[k], bells[k])).collect();
        *joint.entry((view, assignment)).or_insert(0) += 1;
    }
    let total = perms.len() as u64;
    let p = |c: u64| Prob::new(c, total);

    let mut p_a: BTreeMap<&Vec<Angle>, u64> = BTreeMap::new();
    let mut p_v: BTreeMap<&String, u64> = BTreeMap::new();
    for ((v, a), &c) in &joint {
        *p_a.entry(a).or_insert(0) += c;
        *p_v.entry(v).or_insert(0) += c;
    }

    let prior = entropy_bits(p_a.values().map(|&c| to_f64(p(c))));
    let mut mi = 0.0;
    for ((v, a), &c) in &joint {
        let ratio = p(c) / (p(p_a[a]) * p(p_v[v]));
        mi += to_f64(p(c)) * to_f64(ratio).log2();
    }
    let mut posterior = 0.0;
    let mut guess = Prob::new(0, 1);
    for (v, &cv) in &p_v {
        let row: Vec<u64> = joint.iter().filter(|((w, _), _)| w == *v).map(|(_, &c)| c).collect();
        posterior += to_f64(p(cv)) * entropy_bits(row.iter().map(|&c| c as f64 / cv as f64));
        guess += p(row.iter().copied().max().unwrap_or(0));
    }
    let views: BTreeSet<_> = p_v.keys().collect();
    let independent = views.iter().all(|v| {
        p_a.iter().all(|(a, &ca)| {
            let c = joint.get(&((**v).clone(), (*a).clone())).copied().unwrap_or(0);
            p(c) == p(ca) * p(p_v[*v])
        })
    });
    Ok(LeakageReport {
        protocol: Protocol::P2,
        m,
        hypotheses: p_a.len(),
        prior_entropy_bits: prior,
        mutual_information_bits: mi.max(0.0),
        posterior_entropy_bits: posterior,
        max_guess_probability: to_f64(guess),
        exact_guess_probability: Some(guess),
        exactly_independent: Some(independent),
        trials: 0,
        ci95: None,
    })
}
