//! Command-line front end. Reports are JSON files; a short summary goes to
//! stdout. Exit codes: 0 ok, 1 mismatch, 2 usage or I/O error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analysis::{
    self, curious_server_guess, delta_view, one_vertex_candidates, permutation_posterior, AnalysisError,
    MAX_GUESS_VERTICES, MAX_PERMUTATION_M,
};
use crate::mbqc::oracle::{output_distribution, total_variation};
use crate::mbqc::{
    build_linear_cluster, compile_circuit_with, Circuit, CompileOptions, MeasurementPattern, DEFAULT_MAX_VERTICES,
};
use crate::protocol::{self, exact_output_distribution_with, ExactOptions, Protocol, RunOptions};
use crate::qsim::{trace_distance, C64, DEFAULT_CAPACITY};
use crate::Angle;

/// Largest allowed `|exact − oracle|` in total variation.
pub const EXACT_TV_TOL: f64 = 1e-9;
pub const MAX_QUBITS_ENV: &str = "BQC_MAX_QUBITS";

#[derive(Parser, Debug)]
#[command(name = "bqc", about = "Blind quantum computation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Delegate a circuit and compare the outputs with direct simulation.
    Run {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        rows: usize,
        /// Pad the brickwork to this many columns.
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        shots: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure what the server learns.
    Blindness {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// P2 announced angles in units of π/4, comma separated.
        #[arg(long, value_delimiter = ',')]
        angles: Option<Vec<i64>>,
        /// P2 Bell outcomes, comma separated.
        #[arg(long, value_delimiter = ',')]
        bells: Option<Vec<u8>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the measured protocol comparison.
    Table,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Mismatch(m) => write!(f, "MISMATCH: {m}"),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<protocol::ProtocolError> for CliError {
    fn from(e: protocol::ProtocolError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<crate::mbqc::MbqcError> for CliError {
    fn from(e: crate::mbqc::MbqcError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Capacity override from the environment.
fn capacity_override() -> Result<Option<usize>, CliError> {
    match std::env::var(MAX_QUBITS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{MAX_QUBITS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Parses `args` (program name first), runs the command, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Run { protocol, circuit, rows, cols, seed, shots, out } => {
            let config = RunConfig { protocol, circuit_path: circuit, rows, cols, seed, shots, output_path: out };
            cmd_run(&config)
        }
        Command::Blindness { protocol, m, trials, seed, angles, bells, out } => {
            let config = BlindnessConfig { protocol, m, trials, seed, angles, bells, output_path: out };
            cmd_blindness(&config)
        }
        Command::Table => cmd_table(),
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub circuit_path: PathBuf,
    pub rows: usize,
    pub cols: Option<usize>,
    pub seed: u64,
    pub shots: u64,
    pub output_path: PathBuf,
}

impl RunConfig {
    fn to_json(&self) -> Value {
        json!({
            "protocol": self.protocol,
            "circuit_path": self.circuit_path.display().to_string(),
            "rows": self.rows,
            "cols": self.cols,
            "seed": self.seed,
            "shots": self.shots,
            "output_path": self.output_path.display().to_string(),
        })
    }
}

fn transcript_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.transcript.jsonl"))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn shot_seeds(seed: u64, shots: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    (0..shots).map(|_| rng.gen()).collect()
}

fn index_of(bits: &[u8]) -> usize {
    bits.iter().enumerate().fold(0, |acc, (w, &b)| acc | (usize::from(b) << w))
}

pub fn cmd_run(config: &RunConfig) -> Result<String, CliError> {
    if config.shots == 0 {
        return Err(CliError::Usage("shots must be at least 1".into()));
    }
    let text = std::fs::read_to_string(&config.circuit_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config.circuit_path.display())))?;
    let circuit = Circuit::from_json(&text)?;
    if circuit.wires != config.rows {
        return Err(CliError::Usage(format!("--rows {} but the circuit has {} wires", config.rows, circuit.wires)));
    }
    let cap = capacity_override()?;
    let compile = CompileOptions { max_vertices: cap.unwrap_or(DEFAULT_MAX_VERTICES), cols: config.cols };
    let pattern = compile_circuit_with(&circuit, compile)?;
    let run_opts = RunOptions { capacity: cap.unwrap_or(DEFAULT_CAPACITY), ..RunOptions::default() };

    let seeds = shot_seeds(config.seed, config.shots);
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let opts = RunOptions { record: i == 0, ..run_opts.clone() };
            protocol::run_with(config.protocol, &pattern, s, opts)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let dim = 1usize << circuit.wires;
    let mut counts = vec![0u64; dim];
    for r in &results {
        counts[index_of(&r.output_bits)] += 1;
    }
    let histogram: BTreeMap<String, u64> =
        counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i.to_string(), c)).collect();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / config.shots as f64).collect();
    let oracle = output_distribution(&circuit);
    let exact_opts = ExactOptions { run: RunOptions { record: false, ..run_opts.clone() }, ..ExactOptions::default() };
    let exact = exact_output_distribution_with(config.protocol, &pattern, config.seed, &exact_opts)?;
    let tv_exact = total_variation(&exact, &oracle);
    let tv_empirical = total_variation(&empirical, &oracle);
    let mismatch = tv_exact.is_nan() || tv_exact > EXACT_TV_TOL;

    let first = &results[0];
    let transcript_path = transcript_path_for(&config.output_path);
    std::fs::write(&transcript_path, first.transcript.to_jsonl())
        .map_err(|e| CliError::Io(format!("{}: {e}", transcript_path.display())))?;
    let eff = first.metrics.qubit_efficiency;
    let report = json!({
        "config": config.to_json(),
        "circuit": serde_json::from_str::<Value>(&circuit.to_json()).unwrap_or(Value::Null),
        "pattern": { "rows": pattern.layout.rows, "cols": pattern.layout.cols, "vertices": pattern.vertex_count() },
        "histogram": histogram,
        "oracle_distribution": oracle,
        "exact_distribution": exact,
        "tv_exact": tv_exact,
        "tv_empirical": tv_empirical,
        "tolerance": EXACT_TV_TOL,
        "efficiency": { "num": eff.numer(), "den": eff.denom(), "ratio": format!("{}/{}", eff.numer(), eff.denom()) },
        "messages": first.metrics.messages,
        "transcript_path": transcript_path.display().to_string(),
        "status": if mismatch { "MISMATCH" } else { "OK" },
    });
    write_json(&config.output_path, &report)?;
    let summary = format!(
        "{}: {} shots, tv_exact {:.3e}, tv_empirical {:.4}, efficiency {}/{}",
        config.protocol,
        config.shots,
        tv_exact,
        tv_empirical,
        eff.numer(),
        eff.denom()
    );
    if mismatch {
        return Err(CliError::Mismatch(format!("{summary}; exact TV exceeds {EXACT_TV_TOL:e}")));
    }
    Ok(summary)
}

#[derive(Clone, Debug)]
pub struct BlindnessConfig {
    pub protocol: Protocol,
    pub m: usize,
    pub trials: u64,
    pub seed: u64,
    pub angles: Option<Vec<i64>>,
    pub bells: Option<Vec<u8>>,
    pub output_path: PathBuf,
}

impl BlindnessConfig {
    fn to_json(&self) -> Value {
        json!({
            "protocol": self.protocol,
            "m": self.m,
            "trials": self.trials,
            "seed": self.seed,
            "angles": self.angles,
            "bells": self.bells,
            "output_path": self.output_path.display().to_string(),
        })
    }
}

fn ratio_str(p: analysis::Prob) -> String {
    format!("{}/{}", p.numer(), p.denom())
}

fn matrix_json(rho: &[[C64; 2]; 2]) -> Value {
    json!(rho.iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn cmd_blindness(config: &BlindnessConfig) -> Result<String, CliError> {
    let m = config.m;
    if m == 0 {
        return Err(CliError::Usage("m must be at least 1".into()));
    }
    if config.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    if config.protocol == Protocol::P2 && m > MAX_PERMUTATION_M {
        return Err(AnalysisError::TooLarge { what: "m", value: m, max: MAX_PERMUTATION_M }.into());
    }
    let mut lines = Vec::new();

    let views: Vec<Value> = Angle::ALL
        .iter()
        .map(|&phi| {
            let d = delta_view(phi);
            json!({
                "phi": phi.k(),
                "probabilities": d.support.iter().map(|(a, p)| (a.k().to_string(), ratio_str(*p))).collect::<BTreeMap<_, _>>(),
                "uniform": d.is_uniform(),
            })
        })
        .collect();
    let uniform = analysis::delta_view_uniform_for_all();
    lines.push(format!("delta view uniform: {uniform}"));
    let mut report = json!({
        "config": config.to_json(),
        "delta_view": { "uniform": uniform, "by_phi": views },
    });

    if config.protocol == Protocol::P1 {
        let rho = analysis::server_marginal_p1()?;
        let half = [[C64::new(0.5, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(0.5, 0.0)]];
        let d = trace_distance(&rho, &half);
        lines.push(format!("p1 marginal distance to I/2: {d:.3e}"));
        report["p1_marginal"] = json!({ "density": matrix_json(&rho), "trace_distance_to_mixed": d });
    }

    if config.protocol == Protocol::P2 {
        let announced: Vec<Angle> = match &config.angles {
            Some(a) => a.iter().map(|&k| Angle::new(k)).collect(),
            None => (0..m).map(|k| Angle::new(k as i64)).collect(),
        };
        let bells = config.bells.clone().unwrap_or_else(|| vec![0; m]);
        let r = permutation_posterior(m, &announced, &bells)?;
        lines.push(format!(
            "p2 permutation posterior: {} hypotheses, entropy {:.3} bits, mi {:.3} bits",
            r.hypotheses, r.posterior_entropy_bits, r.mutual_information_bits
        ));
        let mut j = r.to_json();
        j["hypotheses"] = json!(r.hypotheses);
        j["exact_guess_prob"] = json!(r.exact_guess_probability.map(ratio_str));
        j["exactly_independent"] = json!(r.exactly_independent);
        report["permutation_posterior"] = j;
    }

    report["curious_guess"] = if m < 2 {
        json!({ "skipped": "needs a measured non-output vertex (m >= 2)" })
    } else if m > MAX_GUESS_VERTICES {
        json!({ "skipped": format!("m = {m} exceeds the likelihood cap {MAX_GUESS_VERTICES}") })
    } else {
        let base = chain_pattern(m)?;
        let candidates = one_vertex_candidates(&base, 0, &[Angle::ZERO, Angle::QUARTER]);
        let r = curious_server_guess(config.protocol, &candidates, config.trials, config.seed)?;
        lines.push(format!(
            "curious guess: {:.4} (chance {:.4}, within 3 sigma: {})",
            r.max_guess_probability,
            r.chance(),
            r.within_sigma_of_chance(3.0)
        ));
        let mut j = r.to_json();
        j["chance"] = json!(r.chance());
        j["within_3_sigma"] = json!(r.within_sigma_of_chance(3.0));
        j["candidates"] = json!(["phi_0 = 0", "phi_0 = pi/4"]);
        j
    };
    write_json(&config.output_path, &report)?;
    Ok(lines.join("\n"))
}

fn chain_pattern(m: usize) -> Result<MeasurementPattern, CliError> {
    Ok(MeasurementPattern::on_grid(build_linear_cluster(m)?, vec![Angle::ZERO; m])?)
}

pub fn cmd_table() -> Result<String, CliError> {
    let rows = analysis::efficiency_table()?;
    Ok(rows.iter().map(analysis::EfficiencyRow::line).collect::<Vec<_>>().join("\n"))
}
