//! Graph layouts, measurement patterns with adaptive corrections, and the
//! compiler from small circuits onto brickwork patterns.

mod circuit;
mod compile;
mod layout;
pub mod oracle;
mod pattern;

use thiserror::Error;

pub use circuit::{Circuit, Gate};
pub use compile::{compile_circuit, compile_circuit_with, CompileOptions, DEFAULT_MAX_VERTICES};
pub use layout::{build_brickwork, build_linear_cluster, GraphLayout, BRICK_COLUMNS, BRICK_PERIOD, MAX_ROWS};
pub use pattern::{adapt_phi, collect_deps, MeasurementPattern};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MbqcError {
    #[error("a layout needs at least one vertex")]
    EmptyLayout,
    #[error("{0} rows are not supported (1 or 2)")]
    UnsupportedRows(usize),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),
    #[error("gate targets wire {wire} but the circuit has {wires}")]
    WireOutOfRange { wire: usize, wires: usize },
    #[error("pattern needs {vertices} vertices, cap is {max}")]
    CapacityExceeded { vertices: usize, max: usize },
    #[error("cannot pad to {requested} columns; need an odd count of at least {minimum} with matching parity")]
    ColumnMismatch { requested: usize, minimum: usize },
    #[error("vertex {vertex} depends on {dependency}, which has no corrected outcome yet")]
    MissingDependency { vertex: usize, dependency: usize },
    #[error("vertex {vertex} depends on {dependency}, which is not measured before it")]
    CyclicDependency { vertex: usize, dependency: usize },
    #[error("output vertex {vertex} has not been measured")]
    IncompleteRun { vertex: usize },
    #[error("circuit parse error: {0}")]
    Parse(String),
}
