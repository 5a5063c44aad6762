use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::layout::GraphLayout;
use super::MbqcError;
use crate::angle::Angle;

/// Target angles plus the dependency structure of the adaptive corrections.
///
/// Vertex `v` is measured at `adapt_phi(phi[v], sX, sZ)` where `sX`/`sZ` are
/// the parities of the corrected outcomes over `x_deps[v]`/`z_deps[v]`.
/// Output vertices are read at angle `0`; their reported bit is the corrected
/// outcome XOR the parity over the matching `output_flips` entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPattern {
    pub layout: GraphLayout,
    pub phi: Vec<Angle>,
    pub x_deps: Vec<BTreeSet<usize>>,
    pub z_deps: Vec<BTreeSet<usize>>,
    /// One set per entry of `layout.outputs`.
    pub output_flips: Vec<BTreeSet<usize>>,
}

/// `(−1)^{sX}·φ + sZ·π`.
pub fn adapt_phi(phi: Angle, sx: u8, sz: u8) -> Angle {
    phi.signed(sx) + Angle::pi_times(sz)
}

fn parity(set: &BTreeSet<usize>, outcomes: &[Option<u8>], vertex: usize) -> Result<u8, MbqcError> {
    set.iter().try_fold(0u8, |acc, &u| match outcomes.get(u).copied().flatten() {
        Some(bit) => Ok(acc ^ (bit & 1)),
        None => Err(MbqcError::MissingDependency { vertex, dependency: u }),
    })
}

/// Parities `(sX, sZ)` of the corrected outcomes over `v`'s dependency sets.
pub fn collect_deps(
    pattern: &MeasurementPattern,
    v: usize,
    corrected: &[Option<u8>],
) -> Result<(u8, u8), MbqcError> {
    let sx = parity(&pattern.x_deps[v], corrected, v)?;
    let sz = parity(&pattern.z_deps[v], corrected, v)?;
    Ok((sx, sz))
}

fn toggle(set: &mut BTreeSet<usize>, other: &BTreeSet<usize>) {
    for &u in other {
        if !set.remove(&u) {
            set.insert(u);
        }
    }
}

impl MeasurementPattern {
    /// Attaches `phi` to a grid layout and derives the correction structure.
    ///
    /// Along a row, measuring `v` teleports the logical state to its right
    /// neighbour through `J(−φ_v) = H·Rz(−φ_v)`, leaving the byproduct
    /// `X^{s_v} Z^{x(v)}`. A vertical edge at column `c` acts as a logical
    /// CZ, which copies each row's X-frame into the other row's Z-frame.
    pub fn on_grid(layout: GraphLayout, phi: Vec<Angle>) -> Result<Self, MbqcError> {
        layout.validate()?;
        if phi.len() != layout.vertex_count {
            return Err(MbqcError::InvalidLayout(format!(
                "{} angles for {} vertices",
                phi.len(),
                layout.vertex_count
            )));
        }
        let n = layout.vertex_count;
        let mut xf: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut zf: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut x_deps = vec![BTreeSet::new(); n];
        let mut z_deps = vec![BTreeSet::new(); n];
        let mut output_flips = vec![BTreeSet::new(); layout.outputs.len()];
        for c in 0..layout.cols {
            if layout.has_vertical(c) {
                let (top, bottom) = (layout.vertex(0, c), layout.vertex(1, c));
                let (xt, xb) = (xf[top].clone(), xf[bottom].clone());
                toggle(&mut zf[top], &xb);
                toggle(&mut zf[bottom], &xt);
            }
            for r in 0..layout.rows {
                let v = layout.vertex(r, c);
                if c + 1 == layout.cols {
                    x_deps[v] = xf[v].clone();
                    output_flips[r] = zf[v].clone();
                } else {
                    x_deps[v] = xf[v].clone();
                    z_deps[v] = zf[v].clone();
                    let next = layout.vertex(r, c + 1);
                    xf[next] = BTreeSet::from([v]);
                    zf[next] = xf[v].clone();
                }
            }
        }
        let mut phi = phi;
        for &o in &layout.outputs {
            phi[o] = Angle::ZERO;
        }
        let pattern = MeasurementPattern { layout, phi, x_deps, z_deps, output_flips };
        pattern.validate()?;
        Ok(pattern)
    }

    pub fn vertex_count(&self) -> usize {
        self.layout.vertex_count
    }

    pub fn wires(&self) -> usize {
        self.layout.rows
    }

    /// Checks that every dependency is measured before its dependant, which
    /// makes the dependency graph acyclic.
    pub fn validate(&self) -> Result<(), MbqcError> {
        self.layout.validate()?;
        let n = self.layout.vertex_count;
        if self.phi.len() != n || self.x_deps.len() != n || self.z_deps.len() != n {
            return Err(MbqcError::InvalidLayout("per-vertex tables have the wrong length".into()));
        }
        if self.output_flips.len() != self.layout.outputs.len() {
            return Err(MbqcError::InvalidLayout("one flip set per output is required".into()));
        }
        let seq = self.layout.measurement_sequence();
        let mut rank = vec![usize::MAX; n];
        for (i, &v) in seq.iter().enumerate() {
            rank[v] = i;
        }
        for &v in &seq {
            for &u in self.x_deps[v].iter().chain(&self.z_deps[v]) {
                if u >= n || rank[u] >= rank[v] {
                    return Err(MbqcError::CyclicDependency { vertex: v, dependency: u });
                }
            }
        }
        let measured_before_outputs = self.layout.order.len();
        for flips in &self.output_flips {
            if flips.iter().any(|&u| u >= n || rank[u] >= measured_before_outputs) {
                return Err(MbqcError::InvalidLayout("output flips must reference non-outputs".into()));
            }
        }
        Ok(())
    }

    /// Output bits from corrected outcomes, byproduct frame applied.
    pub fn decode(&self, corrected: &[Option<u8>]) -> Result<Vec<u8>, MbqcError> {
        self.layout
            .outputs
            .iter()
            .zip(&self.output_flips)
            .map(|(&o, flips)| {
                let s = corrected
                    .get(o)
                    .copied()
                    .flatten()
                    .ok_or(MbqcError::IncompleteRun { vertex: o })?;
                Ok(s ^ parity(flips, corrected, o)?)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbqc::layout::{build_brickwork, build_linear_cluster};

    #[test]
    fn adapt_phi_examples() {
        assert_eq!(adapt_phi(Angle::QUARTER, 0, 0), Angle::QUARTER);
        assert_eq!(adapt_phi(Angle::QUARTER, 1, 0), Angle::new(7));
        assert_eq!(adapt_phi(Angle::QUARTER, 1, 1), Angle::new(3));
    }

    #[test]
    fn adapt_phi_is_a_bijection() {
        for sx in 0..2 {
            for sz in 0..2 {
                let image: BTreeSet<_> = Angle::ALL.iter().map(|&a| adapt_phi(a, sx, sz)).collect();
                assert_eq!(image.len(), 8);
            }
        }
    }

    #[test]
    fn collect_deps_examples() {
        let layout = build_linear_cluster(4).unwrap();
        let mut p = MeasurementPattern::on_grid(layout, vec![Angle::ZERO; 4]).unwrap();
        let none = vec![None; 4];
        assert_eq!(collect_deps(&p, 0, &none).unwrap(), (0, 0));

        p.x_deps[2] = BTreeSet::from([0]);
        p.z_deps[2] = BTreeSet::new();
        let outcomes = vec![Some(1), Some(0), None, None];
        assert_eq!(collect_deps(&p, 2, &outcomes).unwrap(), (1, 0));

        p.x_deps[2] = BTreeSet::from([0, 1]);
        let outcomes = vec![Some(1), Some(1), None, None];
        assert_eq!(collect_deps(&p, 2, &outcomes).unwrap().0, 0);

        let err = collect_deps(&p, 2, &[Some(1), None, None, None]).unwrap_err();
        assert_eq!(err, MbqcError::MissingDependency { vertex: 2, dependency: 1 });
    }

    #[test]
    fn chain_flow_shape() {
        let p = MeasurementPattern::on_grid(build_linear_cluster(4).unwrap(), vec![Angle::ZERO; 4]).unwrap();
        assert!(p.x_deps[0].is_empty() && p.z_deps[0].is_empty());
        assert_eq!(p.x_deps[1], BTreeSet::from([0]));
        assert!(p.z_deps[1].is_empty());
        assert_eq!(p.x_deps[2], BTreeSet::from([1]));
        assert_eq!(p.z_deps[2], BTreeSet::from([0]));
        assert_eq!(p.x_deps[3], BTreeSet::from([2]));
        assert_eq!(p.output_flips[0], BTreeSet::from([1]));
    }

    #[test]
    fn brick_edges_couple_frames() {
        let layout = build_brickwork(2, 5).unwrap();
        let p = MeasurementPattern::on_grid(layout, vec![Angle::ZERO; 10]).unwrap();
        // Column 2 is the first vertical edge; (0,2) = 2, (1,2) = 7.
        assert_eq!(p.x_deps[2], BTreeSet::from([1]));
        assert_eq!(p.z_deps[2], BTreeSet::from([0, 6]));
        assert_eq!(p.z_deps[7], BTreeSet::from([5, 1]));
    }

    #[test]
    fn decode_applies_flip_frame() {
        let p = MeasurementPattern::on_grid(build_linear_cluster(3).unwrap(), vec![Angle::ZERO; 3]).unwrap();
        assert_eq!(p.output_flips[0], BTreeSet::from([0]));
        assert_eq!(p.decode(&[Some(0), Some(1), Some(0)]).unwrap(), vec![0]);
        assert_eq!(p.decode(&[Some(1), Some(1), Some(0)]).unwrap(), vec![1]);
        assert_eq!(p.decode(&[Some(0), Some(0), None]), Err(MbqcError::IncompleteRun { vertex: 2 }));
    }

    #[test]
    fn validate_rejects_forward_dependencies() {
        let mut p = MeasurementPattern::on_grid(build_linear_cluster(3).unwrap(), vec![Angle::ZERO; 3]).unwrap();
        p.x_deps[0].insert(1);
        assert_eq!(p.validate(), Err(MbqcError::CyclicDependency { vertex: 0, dependency: 1 }));
    }
}
