//! Exact state-vector simulation of the handful of operations the delegation
//! protocols use: `|+⟩` and Bell-pair preparation, `Z`-rotations by multiples
//! of π/4, CZ entangling and destructive measurement in the rotated basis
//! `|±_δ⟩ = (|0⟩ ± e^{iδ}|1⟩)/√2`.
//!
//! The register keeps its state as a tensor product of dense blocks. Each
//! block holds the amplitudes of one group of qubits that may be entangled
//! with each other; freshly allocated qubits start in their own block and
//! blocks merge only when a CZ couples them. The composite state vector over
//! all live qubits is available through [`QuantumRegister::amplitudes`].
//!
//! Every qubit carries a custody tag. Custody changes only through
//! [`QuantumRegister::transfer`], which is how the in-process quantum channel
//! is modelled.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle;

pub type C64 = Complex64;

/// A 2×2 complex matrix, row-major.
pub type Matrix2 = [[C64; 2]; 2];

/// Default cap on the number of qubits held in one dense block.
pub const DEFAULT_CAPACITY: usize = 22;

/// Hard cap on simultaneously live qubits across all blocks.
pub const MAX_LIVE: usize = 63;

/// Tolerance for algebraic identities (norms, probabilities, traces).
pub const NORM_TOL: f64 = 1e-12;

/// Eigenvalue floor accepted for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("capacity exceeded: {requested} qubits requested, at most {max} allowed")]
    CapacityExceeded { requested: usize, max: usize },
    #[error("unknown qubit handle {0}")]
    UnknownHandle(QubitHandle),
    #[error("qubit {0} was already measured")]
    AlreadyMeasured(QubitHandle),
    #[error("two-qubit gate needs distinct qubits, got {0} twice")]
    SameHandle(QubitHandle),
    #[error("projection onto the sampled branch has probability {probability:e}")]
    NormCollapse { probability: f64 },
    #[error("requested qubits are entangled with qubits outside the selection")]
    NotSeparable,
}

/// Opaque qubit identifier, never reused within one register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QubitHandle(u64);

impl QubitHandle {
    pub fn id(self) -> u64 {
        self.0
    }
}

impl fmt::Display for QubitHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Client,
    Server,
}

impl Owner {
    pub fn other(self) -> Owner {
        match self {
            Owner::Client => Owner::Server,
            Owner::Server => Owner::Client,
        }
    }
}

/// Pair-role tag: which half of Bell pair `k` a qubit is, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Plain,
    PairB(usize),
    PairA(usize),
}

/// A single measurement result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub bit: u8,
    /// Pre-measurement probability of the realized bit.
    pub probability: f64,
}

#[derive(Clone, Copy, Debug)]
struct Meta {
    owner: Owner,
    role: Role,
}

#[derive(Clone, Debug)]
struct Block {
    /// Bit `p` of an amplitude index belongs to `members[p]`.
    members: Vec<QubitHandle>,
    amps: Vec<C64>,
}

impl Block {
    fn position(&self, q: QubitHandle) -> Option<usize> {
        self.members.iter().position(|&m| m == q)
    }
}

#[derive(Clone, Debug)]
pub struct QuantumRegister {
    blocks: Vec<Block>,
    meta: BTreeMap<QubitHandle, Meta>,
    measured: BTreeSet<QubitHandle>,
    next_id: u64,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl QuantumRegister {
    pub fn new(seed: u64) -> Self {
        Self::with_rng(ChaCha8Rng::seed_from_u64(seed), DEFAULT_CAPACITY)
    }

    pub fn with_capacity(seed: u64, capacity: usize) -> Self {
        Self::with_rng(ChaCha8Rng::seed_from_u64(seed), capacity)
    }

    pub fn with_rng(rng: ChaCha8Rng, capacity: usize) -> Self {
        QuantumRegister {
            blocks: Vec::new(),
            meta: BTreeMap::new(),
            measured: BTreeSet::new(),
            next_id: 0,
            capacity,
            rng,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn live_count(&self) -> usize {
        self.meta.len()
    }

    /// Live handles in allocation order.
    pub fn live_handles(&self) -> Vec<QubitHandle> {
        self.meta.keys().copied().collect()
    }

    /// Size of the largest entangled block.
    pub fn largest_block(&self) -> usize {
        self.blocks.iter().map(|b| b.members.len()).max().unwrap_or(0)
    }

    pub fn is_live(&self, q: QubitHandle) -> bool {
        self.meta.contains_key(&q)
    }

    fn check(&self, q: QubitHandle) -> Result<&Meta, QsimError> {
        match self.meta.get(&q) {
            Some(m) => Ok(m),
            None if self.measured.contains(&q) => Err(QsimError::AlreadyMeasured(q)),
            None => Err(QsimError::UnknownHandle(q)),
        }
    }

    fn locate(&self, q: QubitHandle) -> Result<(usize, usize), QsimError> {
        self.check(q)?;
        self.blocks
            .iter()
            .enumerate()
            .find_map(|(i, b)| b.position(q).map(|p| (i, p)))
            .ok_or(QsimError::UnknownHandle(q))
    }

    pub fn custody(&self, q: QubitHandle) -> Result<Owner, QsimError> {
        self.check(q).map(|m| m.owner)
    }

    pub fn role(&self, q: QubitHandle) -> Result<Role, QsimError> {
        self.check(q).map(|m| m.role)
    }

    /// Hands custody of `q` to `to`.
    pub fn transfer(&mut self, q: QubitHandle, to: Owner) -> Result<(), QsimError> {
        self.check(q)?;
        if let Some(m) = self.meta.get_mut(&q) {
            m.owner = to;
        }
        Ok(())
    }

    fn fresh(&mut self, owner: Owner, role: Role) -> QubitHandle {
        let q = QubitHandle(self.next_id);
        self.next_id += 1;
        self.meta.insert(q, Meta { owner, role });
        q
    }

    fn ensure_room(&self, extra: usize) -> Result<(), QsimError> {
        let requested = self.live_count() + extra;
        if requested > MAX_LIVE {
            return Err(QsimError::CapacityExceeded { requested, max: MAX_LIVE });
        }
        Ok(())
    }

    /// Allocates a qubit in `|+⟩` under `owner`'s custody.
    pub fn alloc_plus(&mut self, owner: Owner) -> Result<QubitHandle, QsimError> {
        self.ensure_room(1)?;
        let q = self.fresh(owner, Role::Plain);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        self.blocks.push(Block { members: vec![q], amps: vec![h, h] });
        Ok(q)
    }

    /// Allocates Bell pair `index` in `(|00⟩+|11⟩)/√2`, returning `(B, A)`.
    pub fn alloc_bell_pair(
        &mut self,
        owner: Owner,
        index: usize,
    ) -> Result<(QubitHandle, QubitHandle), QsimError> {
        self.ensure_room(2)?;
        if self.capacity < 2 {
            return Err(QsimError::CapacityExceeded { requested: 2, max: self.capacity });
        }
        let b = self.fresh(owner, Role::PairB(index));
        let a = self.fresh(owner, Role::PairA(index));
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        self.blocks.push(Block { members: vec![b, a], amps: vec![h, z, z, h] });
        Ok((b, a))
    }

    /// Multiplies every amplitude with `q = 1` by `e^{iθ}`.
    pub fn apply_rz(&mut self, q: QubitHandle, theta: Angle) -> Result<(), QsimError> {
        let (bi, pos) = self.locate(q)?;
        if theta == Angle::ZERO {
            return Ok(());
        }
        let phase = theta.phase();
        let mask = 1usize << pos;
        for (i, a) in self.blocks[bi].amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a *= phase;
            }
        }
        Ok(())
    }

    /// Pauli X (bit flip).
    pub fn apply_x(&mut self, q: QubitHandle) -> Result<(), QsimError> {
        let (bi, pos) = self.locate(q)?;
        let mask = 1usize << pos;
        let amps = &mut self.blocks[bi].amps;
        for i in 0..amps.len() {
            if i & mask == 0 {
                amps.swap(i, i | mask);
            }
        }
        Ok(())
    }

    /// Controlled-Z between two distinct qubits.
    pub fn apply_cz(&mut self, q1: QubitHandle, q2: QubitHandle) -> Result<(), QsimError> {
        if q1 == q2 {
            self.check(q1)?;
            return Err(QsimError::SameHandle(q1));
        }
        let (b1, _) = self.locate(q1)?;
        let (b2, _) = self.locate(q2)?;
        let bi = if b1 == b2 { b1 } else { self.merge(b1, b2)? };
        let block = &mut self.blocks[bi];
        let mask = (1usize << block.position(q1).unwrap_or(0)) | (1usize << block.position(q2).unwrap_or(0));
        for (i, a) in block.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *a = -*a;
            }
        }
        Ok(())
    }

    fn merge(&mut self, b1: usize, b2: usize) -> Result<usize, QsimError> {
        let requested = self.blocks[b1].members.len() + self.blocks[b2].members.len();
        if requested > self.capacity {
            return Err(QsimError::CapacityExceeded { requested, max: self.capacity });
        }
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        let second = self.blocks.swap_remove(hi);
        let first = &mut self.blocks[lo];
        let n_first = first.members.len();
        let mut amps = vec![C64::new(0.0, 0.0); first.amps.len() * second.amps.len()];
        for (j, &bj) in second.amps.iter().enumerate() {
            for (i, &ai) in first.amps.iter().enumerate() {
                amps[i | (j << n_first)] = ai * bj;
            }
        }
        first.members.extend(second.members);
        first.amps = amps;
        Ok(lo)
    }

    /// Probabilities of outcomes 0 and 1 when measuring `q` in `{|±_δ⟩}`.
    pub fn outcome_probabilities(&self, q: QubitHandle, delta: Angle) -> Result<[f64; 2], QsimError> {
        let (bi, pos) = self.locate(q)?;
        let block = &self.blocks[bi];
        let mut p = [0.0; 2];
        for (bit, slot) in p.iter_mut().enumerate() {
            let bra = basis_bra(delta, bit as u8);
            *slot = branch_norm_sq(block, pos, bra);
        }
        Ok(p)
    }

    /// Measures `q` in `{|±_δ⟩}`, sampling the outcome from the register's
    /// random stream. The qubit is removed from the register.
    pub fn measure_angle(&mut self, q: QubitHandle, delta: Angle) -> Result<Outcome, QsimError> {
        let p = self.outcome_probabilities(q, delta)?;
        let u: f64 = self.rng.gen();
        let bit = if u < p[0] { 0 } else { 1 };
        self.project(q, basis_bra(delta, bit), bit)
    }

    /// Measures `q` in `{|±_δ⟩}` and post-selects `bit`.
    pub fn measure_angle_forced(
        &mut self,
        q: QubitHandle,
        delta: Angle,
        bit: u8,
    ) -> Result<Outcome, QsimError> {
        self.check(q)?;
        self.project(q, basis_bra(delta, bit & 1), bit & 1)
    }

    /// Computational-basis measurement, sampled.
    pub fn measure_computational(&mut self, q: QubitHandle) -> Result<Outcome, QsimError> {
        let (bi, pos) = self.locate(q)?;
        let p0 = branch_norm_sq(&self.blocks[bi], pos, computational_bra(0));
        let u: f64 = self.rng.gen();
        let bit = if u < p0 { 0 } else { 1 };
        self.project(q, computational_bra(bit), bit)
    }

    fn project(&mut self, q: QubitHandle, bra: [C64; 2], bit: u8) -> Result<Outcome, QsimError> {
        let (bi, pos) = self.locate(q)?;
        let block = &self.blocks[bi];
        let probability = branch_norm_sq(block, pos, bra);
        if probability < NORM_TOL {
            return Err(QsimError::NormCollapse { probability });
        }
        let scale = 1.0 / probability.sqrt();
        let low = (1usize << pos) - 1;
        let half = block.amps.len() / 2;
        let mut amps = Vec::with_capacity(half);
        for j in 0..half {
            let i0 = (j & low) | ((j & !low) << 1);
            let i1 = i0 | (1 << pos);
            amps.push((bra[0] * block.amps[i0] + bra[1] * block.amps[i1]) * scale);
        }
        let block = &mut self.blocks[bi];
        block.members.remove(pos);
        block.amps = amps;
        if block.members.is_empty() {
            self.blocks.swap_remove(bi);
        }
        self.meta.remove(&q);
        self.measured.insert(q);
        Ok(Outcome { bit, probability })
    }

    /// Single-qubit reduced density matrix of `q`.
    pub fn reduced_density(&self, q: QubitHandle) -> Result<Matrix2, QsimError> {
        let (bi, pos) = self.locate(q)?;
        let block = &self.blocks[bi];
        let mask = 1usize << pos;
        let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
        for (i0, &a0) in block.amps.iter().enumerate() {
            if i0 & mask != 0 {
                continue;
            }
            let a1 = block.amps[i0 | mask];
            rho[0][0] += a0 * a0.conj();
            rho[0][1] += a0 * a1.conj();
            rho[1][0] += a1 * a0.conj();
            rho[1][1] += a1 * a1.conj();
        }
        Ok(rho)
    }

    /// Squared norm of the composite state.
    pub fn norm_sq(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.amps.iter().map(|a| a.norm_sqr()).sum::<f64>())
            .product()
    }

    /// Composite state vector over all live qubits; bit `p` of the index
    /// belongs to the `p`-th handle of [`live_handles`](Self::live_handles).
    pub fn amplitudes(&self) -> Result<Vec<C64>, QsimError> {
        let order = self.live_handles();
        self.state_of(&order)
    }

    /// State vector over `order` (bit `p` ↔ `order[p]`). The selection must
    /// not be entangled with any live qubit outside it.
    pub fn state_of(&self, order: &[QubitHandle]) -> Result<Vec<C64>, QsimError> {
        if order.len() > self.capacity {
            return Err(QsimError::CapacityExceeded { requested: order.len(), max: self.capacity });
        }
        let mut wanted = BTreeSet::new();
        for &q in order {
            self.check(q)?;
            wanted.insert(q);
        }
        let mut out = vec![C64::new(1.0, 0.0)];
        let mut placed: Vec<QubitHandle> = Vec::new();
        for block in &self.blocks {
            let inside = block.members.iter().filter(|m| wanted.contains(m)).count();
            if inside == 0 {
                continue;
            }
            if inside != block.members.len() {
                return Err(QsimError::NotSeparable);
            }
            let n = placed.len();
            let mut next = vec![C64::new(0.0, 0.0); out.len() * block.amps.len()];
            for (j, &bj) in block.amps.iter().enumerate() {
                for (i, &ai) in out.iter().enumerate() {
                    next[i | (j << n)] = ai * bj;
                }
            }
            out = next;
            placed.extend(block.members.iter().copied());
        }
        // Permute from `placed` bit order to the requested `order`.
        let target: Vec<usize> = placed
            .iter()
            .map(|q| order.iter().position(|o| o == q).unwrap_or(0))
            .collect();
        let mut permuted = vec![C64::new(0.0, 0.0); out.len()];
        for (i, &a) in out.iter().enumerate() {
            let mut j = 0usize;
            for (src, &dst) in target.iter().enumerate() {
                if i >> src & 1 == 1 {
                    j |= 1 << dst;
                }
            }
            permuted[j] = a;
        }
        Ok(permuted)
    }
}

fn basis_bra(delta: Angle, bit: u8) -> [C64; 2] {
    // ⟨±_δ| = (⟨0| ± e^{-iδ}⟨1|)/√2
    let sign = if bit & 1 == 1 { -1.0 } else { 1.0 };
    [
        C64::new(FRAC_1_SQRT_2, 0.0),
        delta.phase().conj() * (sign * FRAC_1_SQRT_2),
    ]
}

fn computational_bra(bit: u8) -> [C64; 2] {
    if bit & 1 == 0 {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    } else {
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
    }
}

fn branch_norm_sq(block: &Block, pos: usize, bra: [C64; 2]) -> f64 {
    let mask = 1usize << pos;
    block
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| i & mask == 0)
        .map(|(i0, &a0)| (bra[0] * a0 + bra[1] * block.amps[i0 | mask]).norm_sqr())
        .sum()
}

/// Max-norm distance between two 2×2 matrices.
pub fn max_norm_diff(a: &Matrix2, b: &Matrix2) -> f64 {
    let mut m: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            m = m.max((a[r][c] - b[r][c]).norm());
        }
    }
    m
}

/// Eigenvalues of a 2×2 Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Matrix2) -> [f64; 2] {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let off = m[0][1].norm();
    let mean = (a + d) / 2.0;
    let spread = (((a - d) / 2.0).powi(2) + off * off).sqrt();
    [mean - spread, mean + spread]
}

/// Trace distance `½‖a − b‖₁` between two 2×2 Hermitian matrices.
pub fn trace_distance(a: &Matrix2, b: &Matrix2) -> f64 {
    let mut diff = [[C64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            diff[r][c] = a[r][c] - b[r][c];
        }
    }
    let ev = hermitian_eigenvalues(&diff);
    0.5 * (ev[0].abs() + ev[1].abs())
}
