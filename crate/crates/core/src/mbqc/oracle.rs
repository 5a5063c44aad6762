//! Dense-matrix reference for circuits: Kronecker-embedded gate matrices
//! applied to `|+⟩^{⊗w}`, read out in the `{|+⟩, |−⟩}` basis per wire.
//!
//! Index convention everywhere: bit `w` of a basis index is wire `w`.

use num_complex::Complex64 as C64;

use super::circuit::{Circuit, Gate};
use crate::angle::Angle;

pub type Dense = Vec<Vec<C64>>;

fn zero(n: usize) -> Dense {
    vec![vec![C64::new(0.0, 0.0); n]; n]
}

fn eye(n: usize) -> Dense {
    let mut m = zero(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = zero(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `a ⊗ b`, with `b` on the low-order index bits.
pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (na, nb) = (a.len(), b.len());
    let mut out = zero(na * nb);
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    out[i * nb + k][j * nb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn apply(m: &Dense, v: &[C64]) -> Vec<C64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn hadamard() -> Dense {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![vec![C64::new(h, 0.0), C64::new(h, 0.0)], vec![C64::new(h, 0.0), C64::new(-h, 0.0)]]
}

pub fn rz(angle: Angle) -> Dense {
    vec![vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], vec![C64::new(0.0, 0.0), angle.phase()]]
}

pub fn rx(angle: Angle) -> Dense {
    matmul(&hadamard(), &matmul(&rz(angle), &hadamard()))
}

fn embed(single: &Dense, wire: usize, wires: usize) -> Dense {
    match (wires, wire) {
        (1, _) => single.clone(),
        (_, 0) => kron(&eye(2), single),
        _ => kron(single, &eye(2)),
    }
}

fn cnot(control: usize, target: usize) -> Dense {
    let mut m = zero(4);
    for i in 0..4 {
        let j = i ^ (((i >> control) & 1) << target);
        m[j][i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn gate_matrix(g: &Gate, wires: usize) -> Dense {
    match *g {
        Gate::Rz { wire, angle } => embed(&rz(angle), wire, wires),
        Gate::T { wire } => embed(&rz(Angle::QUARTER), wire, wires),
        Gate::Rx { wire, angle } => embed(&rx(angle), wire, wires),
        Gate::H { wire } => embed(&hadamard(), wire, wires),
        Gate::Cnot { control, target } => cnot(control, target),
    }
}

pub fn circuit_unitary(c: &Circuit) -> Dense {
    c.gates
        .iter()
        .fold(eye(1 << c.wires), |acc, g| matmul(&gate_matrix(g, c.wires), &acc))
}

/// `U|+⟩^{⊗w}`.
pub fn output_state(c: &Circuit) -> Vec<C64> {
    let dim = 1usize << c.wires;
    let plus = vec![C64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    apply(&circuit_unitary(c), &plus)
}

/// Probabilities of each output bit string when every wire is measured in
/// `{|+⟩, |−⟩}` (bit 0 ↔ `|+⟩`).
pub fn output_distribution(c: &Circuit) -> Vec<f64> {
    let hh = (1..c.wires).fold(hadamard(), |acc, _| kron(&hadamard(), &acc));
    apply(&hh, &output_state(c)).iter().map(|a| a.norm_sqr()).collect()
}

/// `|⟨a|b⟩|²` for normalized vectors.
pub fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_distributions() {
        let id = output_distribution(&Circuit::identity(1));
        assert!((id[0] - 1.0).abs() < 1e-15);
        let h = output_distribution(&Circuit::new(1, vec![Gate::H { wire: 0 }]).unwrap());
        assert!((h[0] - 0.5).abs() < 1e-12);
        let t = output_distribution(&Circuit::new(1, vec![Gate::T { wire: 0 }]).unwrap());
        assert!((t[0] - (std::f64::consts::PI / 8.0).cos().powi(2)).abs() < 1e-12);
        let z = output_distribution(&Circuit::new(1, vec![Gate::Rz { wire: 0, angle: Angle::PI }]).unwrap());
        assert!((z[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cnot_in_the_x_basis_runs_backwards() {
        // |−⟩|−⟩ → CNOT(0→1) → |+⟩|−⟩ : wire 0 reads 0, wire 1 reads 1.
        let c = Circuit::new(
            2,
            vec![
                Gate::Rz { wire: 0, angle: Angle::PI },
                Gate::Rz { wire: 1, angle: Angle::PI },
                Gate::Cnot { control: 0, target: 1 },
            ],
        )
        .unwrap();
        let d = output_distribution(&c);
        assert!((d[0b10] - 1.0).abs() < 1e-12);
    }
}
