//! Circuit → measurement-pattern compilation onto the brickwork layout.
//!
//! Each wire is a row of the layout. Columns are consumed two at a time by
//! blocks `Rx(a)·Rz(b)`, realised by measuring the even column at `−b` and
//! the odd column at `−a` (each measurement applies `J(α) = H·Rz(α)`, and
//! `J(a)·J(b) = Rx(a)·Rz(b)`).
//!
//! On two rows the vertical edges of brick `p` sit after blocks `4p` and
//! `4p+1`. A brick whose middle block `4p+1` is diagonal on both wires acts as
//! the identity, since `CZ·(D⊗D')·CZ = D⊗D'`. A CNOT occupies blocks `4p`
//! and `4p+1` using
//!
//! `CNOT(c→t) ≅ CZ · (I ⊗ Rx(π/2)) · CZ · (Rz(−π/2) ⊗ Rx(−π/2))`.
//!
//! Pending `Rz` rotations are folded into the `Rz` slot of the next block on
//! the same wire. That is the only merging the compiler does.

use super::circuit::{Circuit, Gate};
use super::layout::build_brickwork;
use super::pattern::MeasurementPattern;
use super::MbqcError;
use crate::angle::Angle;

/// Default cap on total graph vertices.
pub const DEFAULT_MAX_VERTICES: usize = 20;

#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    pub max_vertices: usize,
    /// Pad the pattern to exactly this many columns with identity blocks.
    pub cols: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { max_vertices: DEFAULT_MAX_VERTICES, cols: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Block {
    rx: Angle,
    rz: Angle,
}

const IDENTITY: Block = Block { rx: Angle::ZERO, rz: Angle::ZERO };

#[derive(Default)]
struct WireSchedule {
    blocks: Vec<Block>,
    pending: Angle,
}

impl WireSchedule {
    fn take_pending(&mut self) -> Angle {
        std::mem::take(&mut self.pending)
    }

    fn push_rx(&mut self, rx: Angle, bricked: bool) {
        if bricked && self.blocks.len() % 4 == 1 {
            let rz = self.take_pending();
            self.blocks.push(Block { rx: Angle::ZERO, rz });
        }
        let rz = self.take_pending();
        self.blocks.push(Block { rx, rz });
    }

    fn pad_to(&mut self, len: usize) {
        while self.blocks.len() < len {
            self.blocks.push(IDENTITY);
        }
    }

    fn flush(&mut self) {
        if self.pending != Angle::ZERO {
            let rz = self.take_pending();
            self.blocks.push(Block { rx: Angle::ZERO, rz });
        }
    }
}

pub fn compile_circuit(c: &Circuit) -> Result<MeasurementPattern, MbqcError> {
    compile_circuit_with(c, CompileOptions::default())
}

pub fn compile_circuit_with(c: &Circuit, opts: CompileOptions) -> Result<MeasurementPattern, MbqcError> {
    c.validate()?;
    let bricked = c.wires == 2;
    let mut wires: Vec<WireSchedule> = (0..c.wires).map(|_| WireSchedule::default()).collect();
    let half_pi = Angle::HALF_PI;
    for gate in &c.gates {
        match *gate {
            Gate::Rz { wire, angle } => wires[wire].pending += angle,
            Gate::T { wire } => wires[wire].pending += Angle::QUARTER,
            Gate::Rx { wire, angle } => wires[wire].push_rx(angle, bricked),
            Gate::H { wire } => {
                // H ≅ Rx(π/2)·Rz(π/2)·Rx(π/2)
                let w = &mut wires[wire];
                w.push_rx(half_pi, bricked);
                w.pending += half_pi;
                w.push_rx(half_pi, bricked);
            }
            Gate::Cnot { control, target } => {
                let start = wires.iter().map(|w| w.blocks.len()).max().unwrap_or(0).div_ceil(4) * 4;
                for w in wires.iter_mut() {
                    w.pad_to(start);
                }
                let rz = wires[control].take_pending() - half_pi;
                wires[control].blocks.extend([Block { rx: Angle::ZERO, rz }, IDENTITY]);
                let rz = wires[target].take_pending();
                wires[target].blocks.extend([Block { rx: -half_pi, rz }, Block { rx: half_pi, rz: Angle::ZERO }]);
            }
        }
    }
    for w in wires.iter_mut() {
        w.flush();
    }
    let mut blocks = wires.iter().map(|w| w.blocks.len()).max().unwrap_or(0);
    let natural_cols = 2 * blocks + 1;
    if let Some(cols) = opts.cols {
        if cols < natural_cols || (cols - natural_cols) % 2 != 0 {
            return Err(MbqcError::ColumnMismatch { requested: cols, minimum: natural_cols });
        }
        blocks = (cols - 1) / 2;
    }
    for w in wires.iter_mut() {
        w.pad_to(blocks);
    }
    let cols = 2 * blocks + 1;
    let vertices = c.wires * cols;
    if vertices > opts.max_vertices {
        return Err(MbqcError::CapacityExceeded { vertices, max: opts.max_vertices });
    }
    let layout = build_brickwork(c.wires, cols)?;
    let mut phi = vec![Angle::ZERO; layout.vertex_count];
    for (r, w) in wires.iter().enumerate() {
        for (b, block) in w.blocks.iter().enumerate() {
            phi[layout.vertex(r, 2 * b)] = -block.rz;
            phi[layout.vertex(r, 2 * b + 1)] = -block.rx;
        }
    }
    MeasurementPattern::on_grid(layout, phi)
}
