use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MbqcError;

/// Columns (within each 8-column period, 0-based) carrying vertical edges
/// between row 0 and row 1. A brick is the pair `(8p + 2, 8p + 4)` and is
/// only laid down when both of its columns exist.
pub const BRICK_COLUMNS: [usize; 2] = [2, 4];
pub const BRICK_PERIOD: usize = 8;

pub const MAX_ROWS: usize = 2;

/// A graph on a `rows × cols` grid of vertices, numbered row-major
/// (`vertex = row * cols + col`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphLayout {
    pub rows: usize,
    pub cols: usize,
    pub vertex_count: usize,
    /// Unordered CZ edges stored as `(low, high)`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Measurement order of the non-output vertices.
    pub order: Vec<usize>,
    /// Logical outputs, one per row, in row order.
    pub outputs: Vec<usize>,
}

impl GraphLayout {
    pub fn vertex(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v / self.cols, v % self.cols)
    }

    pub fn is_output(&self, v: usize) -> bool {
        self.outputs.contains(&v)
    }

    /// Non-outputs in measurement order followed by the outputs.
    pub fn measurement_sequence(&self) -> Vec<usize> {
        self.order.iter().chain(self.outputs.iter()).copied().collect()
    }

    pub fn neighbours(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        })
    }

    /// True if column `col` carries a vertical edge.
    pub fn has_vertical(&self, col: usize) -> bool {
        self.rows == 2 && self.edges.contains(&(col, self.cols + col))
    }

    pub fn validate(&self) -> Result<(), MbqcError> {
        let bad = |msg: String| Err(MbqcError::InvalidLayout(msg));
        if self.vertex_count != self.rows * self.cols || self.vertex_count == 0 {
            return bad(format!("{}×{} grid cannot hold {} vertices", self.rows, self.cols, self.vertex_count));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if a >= self.vertex_count || b >= self.vertex_count {
                return bad(format!("edge ({a},{b}) references a missing vertex"));
            }
            if a == b {
                return bad(format!("self-loop on vertex {a}"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return bad(format!("duplicate edge ({a},{b})"));
            }
        }
        let mut covered = BTreeSet::new();
        for &v in &self.order {
            if v >= self.vertex_count || self.outputs.contains(&v) || !covered.insert(v) {
                return bad(format!("measurement order entry {v} is invalid or repeated"));
            }
        }
        let outputs: BTreeSet<_> = self.outputs.iter().copied().collect();
        if outputs.len() != self.outputs.len() || outputs.iter().any(|&v| v >= self.vertex_count) {
            return bad("output vertices are invalid or repeated".into());
        }
        if covered.len() + outputs.len() != self.vertex_count {
            return bad("measurement order does not cover every non-output vertex".into());
        }
        Ok(())
    }
}

/// Path graph `0 - 1 - … - (m−1)`, measured left to right, output `m−1`.
pub fn build_linear_cluster(m: usize) -> Result<GraphLayout, MbqcError> {
    if m == 0 {
        return Err(MbqcError::EmptyLayout);
    }
    build_brickwork(1, m)
}

/// Brickwork layout with one or two rows.
///
/// Each row is a horizontal chain. With two rows, vertical edges join
/// `(0, c)` and `(1, c)` for every complete brick `c ∈ {8p + 2, 8p + 4}`.
/// Measurement proceeds column by column, top row first, and the last
/// column holds the outputs.
pub fn build_brickwork(rows: usize, cols: usize) -> Result<GraphLayout, MbqcError> {
    if rows == 0 || rows > MAX_ROWS {
        return Err(MbqcError::UnsupportedRows(rows));
    }
    if cols == 0 {
        return Err(MbqcError::EmptyLayout);
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols - 1 {
            edges.push((r * cols + c, r * cols + c + 1));
        }
    }
    if rows == 2 {
        let mut start = BRICK_COLUMNS[0];
        while start + (BRICK_COLUMNS[1] - BRICK_COLUMNS[0]) < cols {
            for offset in BRICK_COLUMNS {
                let c = start - BRICK_COLUMNS[0] + offset;
                edges.push((c, cols + c));
            }
            start += BRICK_PERIOD;
        }
    }
    edges.sort_unstable();
    let order = (0..cols - 1)
        .flat_map(|c| (0..rows).map(move |r| r * cols + c))
        .collect();
    let outputs = (0..rows).map(|r| r * cols + cols - 1).collect();
    let layout = GraphLayout { rows, cols, vertex_count: rows * cols, edges, order, outputs };
    layout.validate()?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_cluster_examples() {
        let l1 = build_linear_cluster(1).unwrap();
        assert!(l1.edges.is_empty());
        assert_eq!(l1.outputs, vec![0]);
        assert!(l1.order.is_empty());

        let l3 = build_linear_cluster(3).unwrap();
        assert_eq!(l3.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(l3.order, vec![0, 1]);
        assert_eq!(l3.outputs, vec![2]);

        let l5 = build_linear_cluster(5).unwrap();
        assert_eq!(l5.edges.len(), 4);
        assert!(l5.edges.iter().all(|&(a, b)| b == a + 1));

        assert_eq!(build_linear_cluster(0), Err(MbqcError::EmptyLayout));
    }

    #[test]
    fn single_row_brickwork_is_linear_cluster() {
        for m in 1..12 {
            assert_eq!(build_brickwork(1, m).unwrap(), build_linear_cluster(m).unwrap());
        }
    }

    #[test]
    fn rejects_unsupported_rows() {
        assert_eq!(build_brickwork(3, 5), Err(MbqcError::UnsupportedRows(3)));
        assert_eq!(build_brickwork(0, 5), Err(MbqcError::UnsupportedRows(0)));
    }

    #[test]
    fn bricks_appear_only_when_complete() {
        assert!(build_brickwork(2, 1).unwrap().edges.is_empty());
        let l = build_brickwork(2, 4).unwrap();
        assert!(!l.has_vertical(2));
        let l = build_brickwork(2, 5).unwrap();
        assert!(l.has_vertical(2) && l.has_vertical(4));
        let l = build_brickwork(2, 12).unwrap();
        assert!(!l.has_vertical(10));
        let l = build_brickwork(2, 13).unwrap();
        assert!(l.has_vertical(10) && l.has_vertical(12));
    }

    #[test]
    fn order_is_column_major() {
        let l = build_brickwork(2, 3).unwrap();
        assert_eq!(l.order, vec![0, 3, 1, 4]);
        assert_eq!(l.outputs, vec![2, 5]);
        assert_eq!(l.measurement_sequence(), vec![0, 3, 1, 4, 2, 5]);
    }

    #[test]
    fn validate_catches_malformed_layouts() {
        let mut l = build_linear_cluster(3).unwrap();
        l.edges.push((1, 1));
        assert!(l.validate().is_err());
        let mut l = build_linear_cluster(3).unwrap();
        l.edges.push((1, 0));
        assert!(l.validate().is_err());
        let mut l = build_linear_cluster(3).unwrap();
        l.order.pop();
        assert!(l.validate().is_err());
        let mut l = build_linear_cluster(3).unwrap();
        l.edges.push((0, 7));
        assert!(l.validate().is_err());
    }
}
