use num_complex::Complex64 as C64;
use proptest::prelude::*;

use super::*;
use crate::mbqc::oracle::{self, kron, Dense};
use crate::mbqc::{build_linear_cluster, compile_circuit, compile_circuit_with, Circuit, CompileOptions, Gate};
use crate::qsim::{Owner, Role};

fn pattern(c: &Circuit) -> MeasurementPattern {
    compile_circuit(c).unwrap()
}

fn single(gates: Vec<Gate>) -> Circuit {
    Circuit::new(1, gates).unwrap()
}

fn double(gates: Vec<Gate>) -> Circuit {
    Circuit::new(2, gates).unwrap()
}

fn chain_identity(m: usize) -> MeasurementPattern {
    MeasurementPattern::on_grid(build_linear_cluster(m).unwrap(), vec![Angle::ZERO; m]).unwrap()
}

fn deltas(t: &Transcript) -> Vec<(usize, Angle)> {
    t.messages()
        .iter()
        .filter_map(|m| match m.payload {
            Payload::Delta { vertex, delta } => Some((vertex, delta)),
            _ => None,
        })
        .collect()
}

fn logical_state(protocol: Protocol, p: &MeasurementPattern, seed: u64) -> Vec<C64> {
    let opts = RunOptions { stop_before_outputs: true, ..RunOptions::default() };
    let mut s = Session::new(protocol, p.clone(), seed, opts).unwrap();
    s.run_sampled().unwrap();
    s.logical_output_state().unwrap()
}

#[test]
fn delta_formula_on_the_wire() {
    let mut phi = vec![Angle::ZERO; 2];
    phi[0] = Angle::HALF_PI;
    let p = MeasurementPattern::on_grid(build_linear_cluster(2).unwrap(), phi).unwrap();
    let secrets = ClientSecrets::rotations(vec![Angle::QUARTER, Angle::ZERO], vec![1, 0]);
    let res = run_with(Protocol::Baseline, &p, 0, RunOptions { secrets: Some(secrets), ..Default::default() }).unwrap();
    assert_eq!(deltas(&res.transcript)[0], (0, Angle::new(7)));
}

#[test]
fn r_flip_is_undone_by_the_client() {
    // |+⟩ read at δ = π always gives b = 1; with r = 1 the corrected bit is 0.
    let p = chain_identity(1);
    let secrets = ClientSecrets::rotations(vec![Angle::ZERO], vec![1]);
    let res = run_with(Protocol::Baseline, &p, 9, RunOptions { secrets: Some(secrets), ..Default::default() }).unwrap();
    let results: Vec<_> = res
        .transcript
        .messages()
        .iter()
        .filter_map(|m| match m.payload {
            Payload::Result { bit, .. } => Some(bit),
            _ => None,
        })
        .collect();
    assert_eq!(results, vec![1]);
    assert_eq!(res.output_bits, vec![0]);
}

#[test]
fn identity_chain_always_outputs_zero() {
    let p = chain_identity(3);
    for protocol in Protocol::ALL {
        for seed in 0..40 {
            assert_eq!(run(protocol, &p, seed).unwrap().output_bits, vec![0], "{protocol} seed {seed}");
        }
    }
}

#[test]
fn p1_setup_leaves_rotated_plus() {
    let p = chain_identity(1);
    let secrets = ClientSecrets::rotations(vec![Angle::QUARTER], vec![0]);
    let opts = RunOptions { secrets: Some(secrets), ..Default::default() };
    let mut s = Session::new(Protocol::P1, p, 3, opts).unwrap();
    s.run_setup().unwrap();
    let q = s.vertex_handle(0).unwrap();
    assert_eq!(s.register().custody(q).unwrap(), Owner::Server);
    let got = s.register().state_of(&[q]).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let want = [C64::new(h, 0.0), Angle::QUARTER.phase() * h];
    assert!(got.iter().zip(want).all(|(a, b)| (a - b).norm() < 1e-12));
}

#[test]
fn p2_single_pair_effective_angle() {
    let p = chain_identity(1);
    let secrets = ClientSecrets::reordering(vec![Angle::QUARTER], vec![0], vec![0]);
    let opts = RunOptions { secrets: Some(secrets), forced_bells: Some(vec![0]), ..Default::default() };
    let mut s = Session::new(Protocol::P2, p.clone(), 5, opts.clone()).unwrap();
    s.run_sampled().unwrap();
    assert_eq!(s.secrets().effective_theta, vec![Angle::new(7)]);
    assert_eq!(s.decode_output().unwrap(), vec![0]);
    let exact = exact_output_distribution_with(Protocol::P2, &p, 5, &ExactOptions { run: opts, bell_enumeration_limit: 0 }).unwrap();
    assert!((exact[0] - 1.0).abs() < 1e-12);
}

#[test]
fn steering_rule_matches_the_register() {
    for theta in Angle::ALL {
        for b in 0..2u8 {
            let mut reg = crate::qsim::QuantumRegister::new(0);
            let (qb, qa) = reg.alloc_bell_pair(Owner::Server, 0).unwrap();
            reg.measure_angle_forced(qb, theta, b).unwrap();
            let got = reg.state_of(&[qa]).unwrap();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let want = [C64::new(h, 0.0), steered_angle(theta, b).phase() * h];
            assert!(oracle::fidelity(&got, &want) > 1.0 - 1e-12);
        }
    }
}

fn corpus_small() -> Vec<Circuit> {
    vec![
        single(vec![Gate::T { wire: 0 }]),
        single(vec![Gate::H { wire: 0 }]),
        single(vec![Gate::Rx { wire: 0, angle: Angle::HALF_PI }, Gate::T { wire: 0 }]),
        double(vec![Gate::T { wire: 1 }, Gate::Cnot { control: 1, target: 0 }, Gate::H { wire: 0 }]),
    ]
}

#[test]
fn exact_distributions_match_oracle() {
    for c in corpus_small() {
        let p = pattern(&c);
        let want = oracle::output_distribution(&c);
        for protocol in Protocol::ALL {
            for seed in [1, 2] {
                let got = exact_output_distribution(protocol, &p, seed).unwrap();
                let tv = oracle::total_variation(&got, &want);
                assert!(tv <= 1e-9, "{protocol} {c:?}: tv {tv}");
            }
        }
    }
}

#[test]
fn p2_exact_with_sampled_bells_matches_enumerated() {
    let c = single(vec![Gate::T { wire: 0 }, Gate::H { wire: 0 }]);
    let p = compile_circuit_with(&c, CompileOptions { max_vertices: 20, cols: None }).unwrap();
    let full = exact_output_distribution(Protocol::P2, &p, 4).unwrap();
    let opts = ExactOptions { bell_enumeration_limit: 0, ..Default::default() };
    let sampled = exact_output_distribution_with(Protocol::P2, &p, 4, &opts).unwrap();
    assert!(oracle::total_variation(&full, &sampled) < 1e-12);
}

#[test]
fn logical_state_matches_oracle_state() {
    let circuits = vec![
        single(vec![Gate::T { wire: 0 }]),
        single(vec![Gate::H { wire: 0 }, Gate::T { wire: 0 }]),
        single(vec![Gate::Rx { wire: 0, angle: Angle::new(3) }]),
        double(vec![Gate::Cnot { control: 0, target: 1 }]),
        double(vec![Gate::T { wire: 0 }, Gate::Cnot { control: 1, target: 0 }, Gate::Rx { wire: 1, angle: Angle::QUARTER }, Gate::H { wire: 0 }]),
    ];
    for c in circuits {
        let p = pattern(&c);
        let want = oracle::output_state(&c);
        for protocol in Protocol::ALL {
            for seed in 0..6 {
                let f = oracle::fidelity(&logical_state(protocol, &p, seed), &want);
                assert!(f > 1.0 - 1e-10, "{protocol} seed {seed} {c:?}: fidelity {f}");
            }
        }
    }
}

#[test]
fn t_gate_fidelity_through_every_protocol() {
    let c = single(vec![Gate::T { wire: 0 }]);
    let p = pattern(&c);
    let want = oracle::output_state(&c);
    for protocol in Protocol::ALL {
        let f = oracle::fidelity(&logical_state(protocol, &p, 77), &want);
        assert!((f - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cnot_truth_table() {
    // X-basis inputs: Rz(π) turns |+⟩ into |−⟩ (logical 1).
    let rz4 = |wire| Gate::Rz { wire, angle: Angle::PI };
    let cases = [
        (vec![], [0u8, 0]),
        (vec![rz4(0)], [1, 1]),
        (vec![rz4(1)], [0, 1]),
        (vec![rz4(0), rz4(1)], [1, 0]),
    ];
    for (prefix, want) in cases {
        // CNOT(1→0) in the X basis acts as CNOT(0→1) on the bit labels.
        let mut gates = prefix;
        gates.push(Gate::Cnot { control: 1, target: 0 });
        let c = double(gates);
        let p = pattern(&c);
        let d = oracle::output_distribution(&c);
        let idx = usize::from(want[0] | (want[1] << 1));
        assert!((d[idx] - 1.0).abs() < 1e-12, "oracle disagrees for {want:?}");
        for protocol in Protocol::ALL {
            for seed in 0..10 {
                let bits = run(protocol, &p, seed).unwrap().output_bits;
                assert_eq!(bits, want.to_vec(), "{protocol} seed {seed}");
            }
        }
    }
}

#[test]
fn eleven_equivalent_prefix_reads_one_zero() {
    let rz4 = |wire| Gate::Rz { wire, angle: Angle::PI };
    let c = double(vec![rz4(0), rz4(1), Gate::Cnot { control: 1, target: 0 }]);
    let p = pattern(&c);
    for protocol in Protocol::ALL {
        assert_eq!(run(protocol, &p, 11).unwrap().output_bits, vec![1, 0]);
    }
}

#[test]
fn decode_applies_byproduct_frame() {
    let p = chain_identity(3);
    let mut s = Session::new(Protocol::Baseline, p, 0, RunOptions::default()).unwrap();
    s.run_sampled().unwrap();
    assert_eq!(decode_output(&s).unwrap(), vec![0]);
    let fresh = Session::new(Protocol::Baseline, chain_identity(3), 0, RunOptions::default()).unwrap();
    assert_eq!(decode_output(&fresh), Err(ProtocolError::Incomplete));
}

#[test]
fn eager_and_lazy_policies_agree() {
    let c = double(vec![Gate::Rz { wire: 0, angle: Angle::new(3) }, Gate::Cnot { control: 0, target: 1 }, Gate::H { wire: 1 }]);
    let p = pattern(&c);
    for protocol in Protocol::ALL {
        for seed in 0..8 {
            let lazy = run_with(protocol, &p, seed, RunOptions { policy: EntanglePolicy::Lazy, ..Default::default() }).unwrap();
            let eager = run_with(protocol, &p, seed, RunOptions { policy: EntanglePolicy::Eager, ..Default::default() }).unwrap();
            assert_eq!(lazy.transcript.to_jsonl(), eager.transcript.to_jsonl());
            assert_eq!(lazy.output_bits, eager.output_bits);
        }
    }
}

fn peak_block(protocol: Protocol, p: &MeasurementPattern, policy: EntanglePolicy) -> usize {
    let mut s = Session::new(protocol, p.clone(), 1, RunOptions { policy, ..Default::default() }).unwrap();
    let mut peak = 0;
    while let Advance::Outcome { .. } = s.advance().unwrap() {
        peak = peak.max(s.register().largest_block());
        s.resolve_sampled().unwrap();
    }
    peak
}

#[test]
fn lazy_policy_keeps_blocks_small() {
    let p = pattern(&double(vec![Gate::Cnot { control: 0, target: 1 }]));
    for protocol in Protocol::ALL {
        assert!(peak_block(protocol, &p, EntanglePolicy::Lazy) <= 3);
        assert_eq!(peak_block(protocol, &p, EntanglePolicy::Eager), p.vertex_count());
    }
}

#[test]
fn transcripts_carry_no_secrets() {
    let p = pattern(&double(vec![Gate::T { wire: 0 }, Gate::Cnot { control: 0, target: 1 }]));
    for protocol in Protocol::ALL {
        let text = run(protocol, &p, 21).unwrap().transcript.to_jsonl();
        for forbidden in ["theta", "\"r\"", "perm", "secret", "effective"] {
            assert!(!text.contains(forbidden));
        }
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
            assert_eq!(keys, vec!["kind", "payload", "sender", "seq"]);
        }
    }
}

#[test]
fn deltas_and_results_alternate_in_order() {
    let p = pattern(&double(vec![Gate::Cnot { control: 0, target: 1 }]));
    let seq = p.layout.measurement_sequence();
    for protocol in Protocol::ALL {
        let res = run(protocol, &p, 8).unwrap();
        let interactive: Vec<_> = res
            .transcript
            .messages()
            .iter()
            .filter_map(|m| match m.payload {
                Payload::Delta { vertex, .. } => Some(('d', vertex)),
                Payload::Result { vertex, .. } => Some(('r', vertex)),
                _ => None,
            })
            .collect();
        let want: Vec<_> = seq.iter().flat_map(|&v| [('d', v), ('r', v)]).collect();
        assert_eq!(interactive, want);
        let seqs: Vec<_> = res.transcript.messages().iter().map(|m| m.seq).collect();
        assert!(seqs.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn p1_hands_qubits_over_one_by_one() {
    let p = chain_identity(3);
    let res = run(Protocol::P1, &p, 2).unwrap();
    let transfers: Vec<_> = res
        .transcript
        .messages()
        .iter()
        .filter_map(|m| match m.payload {
            Payload::QubitTransfer { particle: Particle::Vertex(v), direction } => Some((v, direction)),
            _ => None,
        })
        .collect();
    use Direction::*;
    assert_eq!(
        transfers,
        vec![(0, ServerToClient), (0, ClientToServer), (1, ServerToClient), (1, ClientToServer), (2, ServerToClient), (2, ClientToServer)]
    );
}

#[test]
fn replay_is_byte_identical() {
    let p = pattern(&single(vec![Gate::H { wire: 0 }, Gate::T { wire: 0 }]));
    for protocol in Protocol::ALL {
        let a = run(protocol, &p, 1234).unwrap();
        let b = run(protocol, &p, 1234).unwrap();
        assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
        assert_eq!(a.output_bits, b.output_bits);
        let c = run(protocol, &p, 1235).unwrap();
        assert_ne!(a.transcript.to_jsonl(), c.transcript.to_jsonl());
    }
}

#[test]
fn qubit_efficiency_per_protocol() {
    let p = pattern(&double(vec![Gate::Cnot { control: 0, target: 1 }]));
    let expect = [(Protocol::Baseline, (1, 1)), (Protocol::P1, (1, 1)), (Protocol::P2, (1, 2))];
    for (protocol, (n, d)) in expect {
        let res = run(protocol, &p, 0).unwrap();
        assert_eq!(res.metrics.qubit_efficiency, Ratio::new(n, d));
        let m = p.vertex_count();
        assert_eq!(res.transcript.graph_qubit_count(), m);
        let (s2c, c2s) = (res.transcript.qubits_sent_server_to_client(), res.transcript.qubits_sent_client_to_server());
        match protocol {
            Protocol::Baseline => assert_eq!((s2c, c2s), (0, m)),
            Protocol::P1 | Protocol::P2 => assert_eq!((s2c, c2s), (m, m)),
        }
        let json = res.export_json(Some("t.jsonl"));
        assert_eq!(json["efficiency"]["num"], n);
        assert_eq!(json["efficiency"]["den"], d);
        assert_eq!(json["transcript_path"], "t.jsonl");
    }
}

fn projector(a: Angle) -> Dense {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = [C64::new(h, 0.0), a.phase() * h];
    (0..2).map(|i| (0..2).map(|j| v[i] * v[j].conj()).collect()).collect()
}

fn outer(v: &[C64]) -> Dense {
    v.iter().map(|a| v.iter().map(|b| a * b.conj()).collect()).collect()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
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

#[test]
fn p2_returned_register_is_the_permutation_average() {
    for m in 1..=5usize {
        let announced: Vec<Angle> = (0..m).map(|k| Angle::new(3 * k as i64 + 1)).collect();
        let bells: Vec<u8> = (0..m).map(|k| (k % 2) as u8).collect();
        let perms = permutations(m);
        let dim = 1 << m;
        let mut sim = vec![vec![C64::new(0.0, 0.0); dim]; dim];
        let mut closed = sim.clone();
        let w = 1.0 / perms.len() as f64;
        for perm in &perms {
            let secrets = ClientSecrets::reordering(announced.clone(), vec![0; m], perm.clone());
            let opts = RunOptions { secrets: Some(secrets), forced_bells: Some(bells.clone()), ..Default::default() };
            let mut s = Session::new(Protocol::P2, chain_identity(m), 0, opts).unwrap();
            s.run_setup().unwrap();
            let handles: Vec<_> = (0..m).map(|v| s.vertex_handle(v).unwrap()).collect();
            let rho = outer(&s.register().state_of(&handles).unwrap());
            // Slot i holds pair perm[i]; bit i is the most significant factor last.
            let term = (0..m).fold(vec![vec![C64::new(1.0, 0.0)]], |acc, i| {
                let k = perm[i];
                kron(&projector(steered_angle(announced[k], bells[k])), &acc)
            });
            for i in 0..dim {
                for j in 0..dim {
                    sim[i][j] += rho[i][j] * w;
                    closed[i][j] += term[i][j] * w;
                }
            }
        }
        let diff = sim.iter().flatten().zip(closed.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "m = {m}: {diff}");
    }
}

#[test]
fn out_of_order_messages_are_rejected() {
    let p = chain_identity(2);
    let mut s = Session::new(Protocol::Baseline, p.clone(), 0, RunOptions::default()).unwrap();
    s.inject(Owner::Client, Payload::Delta { vertex: 0, delta: Angle::ZERO }, None);
    s.step().unwrap();
    assert!(matches!(s.step(), Err(ProtocolError::OutOfOrder { party: "server", .. })));

    let mut s = Session::new(Protocol::P1, p.clone(), 0, RunOptions::default()).unwrap();
    s.inject(Owner::Server, Payload::Result { vertex: 0, bit: 0 }, None);
    s.step().unwrap();
    assert!(matches!(s.step(), Err(ProtocolError::OutOfOrder { party: "client", .. })));
}

#[test]
fn misaddressed_result_is_rejected() {
    let mut s = Session::new(Protocol::Baseline, chain_identity(3), 0, RunOptions::default()).unwrap();
    assert!(matches!(s.advance().unwrap(), Advance::Outcome { .. }));
    s.inject(Owner::Server, Payload::Result { vertex: 2, bit: 0 }, None);
    s.resolve(0).unwrap();
    assert_eq!(s.advance(), Err(ProtocolError::UnexpectedVertex { expected: 0, got: 2 }));
}

#[test]
fn transfer_without_qubit_breaks_custody() {
    let mut s = Session::new(Protocol::P1, chain_identity(2), 0, RunOptions::default()).unwrap();
    s.step().unwrap();
    s.step().unwrap();
    s.inject(
        Owner::Client,
        Payload::QubitTransfer { particle: Particle::Vertex(0), direction: Direction::ClientToServer },
        None,
    );
    s.step().unwrap();
    assert!(matches!(s.step(), Err(ProtocolError::Custody(_))));
}

#[test]
fn stolen_b_half_breaks_pair_bookkeeping() {
    let mut s = Session::new(Protocol::P2, chain_identity(2), 0, RunOptions::default()).unwrap();
    for _ in 0..4 {
        s.step().unwrap();
    }
    let reg = s.register_mut();
    let b0 = reg.live_handles().into_iter().find(|&q| reg.role(q).unwrap() == Role::PairB(0)).unwrap();
    reg.transfer(b0, Owner::Client).unwrap();
    let err = s.run_sampled().unwrap_err();
    assert!(matches!(err, ProtocolError::PairBookkeeping(_)), "{err}");
}

#[test]
fn capacity_is_enforced() {
    let p = chain_identity(5);
    let opts = RunOptions { capacity: 4, ..Default::default() };
    assert_eq!(
        Session::new(Protocol::P1, p, 0, opts).unwrap_err(),
        ProtocolError::Capacity { requested: 5, max: 4 }
    );
}

#[test]
fn injected_secrets_are_validated() {
    let p = chain_identity(2);
    let bad_perm = ClientSecrets::reordering(vec![Angle::ZERO; 2], vec![0; 2], vec![1, 1]);
    let opts = RunOptions { secrets: Some(bad_perm), ..Default::default() };
    assert!(matches!(Session::new(Protocol::P2, p, 0, opts), Err(ProtocolError::BadSecrets(_))));
}

#[test]
fn protocol_names_round_trip() {
    for p in Protocol::ALL {
        assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
    }
    assert!("p3".parse::<Protocol>().is_err());
    assert_eq!(Protocol::P1.client_ability(), "rotation operation");
    assert_eq!(Protocol::P2.client_ability(), "reorder");
}

fn gate_strategy(wires: usize) -> impl Strategy<Value = Gate> {
    let w = 0..wires;
    let one = prop_oneof![
        (w.clone(), 0..8i64).prop_map(|(wire, k)| Gate::Rz { wire, angle: Angle::new(k) }),
        (w.clone(), 0..8i64).prop_map(|(wire, k)| Gate::Rx { wire, angle: Angle::new(k) }),
        w.clone().prop_map(|wire| Gate::H { wire }),
        w.prop_map(|wire| Gate::T { wire }),
    ];
    if wires == 2 {
        prop_oneof![3 => one, 1 => (0..2usize).prop_map(|c| Gate::Cnot { control: c, target: 1 - c })].boxed()
    } else {
        one.boxed()
    }
}

fn circuit_strategy() -> impl Strategy<Value = Circuit> {
    (1..=2usize).prop_flat_map(|w| prop::collection::vec(gate_strategy(w), 0..=4).prop_map(move |g| Circuit::new(w, g).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_patterns_realise_their_circuit(c in circuit_strategy(), seed in 0u64..1000, proto in 0usize..3) {
        let p = compile_circuit_with(&c, CompileOptions { max_vertices: 64, cols: None }).unwrap();
        let opts = RunOptions { stop_before_outputs: true, capacity: 64, ..RunOptions::default() };
        let mut s = Session::new(Protocol::ALL[proto], p, seed, opts).unwrap();
        s.run_sampled().unwrap();
        let f = oracle::fidelity(&s.logical_output_state().unwrap(), &oracle::output_state(&c));
        prop_assert!(f > 1.0 - 1e-9, "fidelity {}", f);
    }

    #[test]
    fn small_patterns_exact_distribution(c in circuit_strategy(), seed in 0u64..1000) {
        let p = compile_circuit_with(&c, CompileOptions { max_vertices: 64, cols: None }).unwrap();
        prop_assume!(p.vertex_count() <= 10);
        let got = exact_output_distribution(Protocol::Baseline, &p, seed).unwrap();
        prop_assert!(oracle::total_variation(&got, &oracle::output_distribution(&c)) <= 1e-9);
    }
}
