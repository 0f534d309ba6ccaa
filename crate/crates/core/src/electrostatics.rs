//! Cell-to-cell Coulomb coupling.
//!
//! Each cell carries four quantum dots at the corners of a square. Two
//! electrons (charge -e) occupy one diagonal and a neutralizing +e/2 sits on
//! every dot, so an occupied dot carries -e/2 and an empty one +e/2. The kink
//! energy of a pair is the electrostatic cost of opposite versus identical
//! polarization:
//!
//! ```text
//! E_k = U(+1, -1) - U(+1, +1),   U = 1/(4 pi eps0 eps_r) * sum_ab q_a q_b / |r_a - r_b|
//! ```
//!
//! E_k is positive for side-by-side cells (they align), negative for
//! diagonal neighbors and for cells stacked on adjacent layers.

use std::io::Write;

use thiserror::Error;

use crate::consts::{E_CHARGE, EPSILON_0, NM};
use crate::layout::{Cell, Layout};
use crate::params::TechnologyParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinkError {
    #[error("cells {i} and {j} are {distance:.3} nm apart, beyond r_effect = {r_effect} nm")]
    BeyondCutoff {
        i: usize,
        j: usize,
        distance: f64,
        r_effect: f64,
    },
    #[error("cells {i} and {j} have coincident quantum dots")]
    CoincidentDots { i: usize, j: usize },
}

/// Dot geometry and charge assignment of a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotChargeModel {
    /// Dot positions relative to the cell center, nm. Order: top-right,
    /// top-left, bottom-left, bottom-right.
    pub dot_offsets: [(f64, f64); 4],
}

impl DotChargeModel {
    /// Dots centered a quarter cell side away from the center on each axis.
    pub fn from_tech(tech: &TechnologyParams) -> Self {
        Self::with_offset(tech.cell_size / 4.0)
    }

    pub fn with_offset(a: f64) -> Self {
        DotChargeModel {
            dot_offsets: [(a, a), (-a, a), (-a, -a), (a, -a)],
        }
    }

    /// Net dot charges (coulomb) for a cell of the given polarization sign.
    /// P = +1 puts the electrons on the top-right / bottom-left diagonal.
    pub fn charges(&self, polarization: f64) -> [f64; 4] {
        let half = E_CHARGE / 2.0;
        if polarization >= 0.0 {
            [-half, half, -half, half]
        } else {
            [half, -half, half, -half]
        }
    }
}

fn coulomb_constant(epsilon_r: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * EPSILON_0 * epsilon_r)
}

/// Center-to-center distance in nm, with layers separated vertically.
pub fn center_distance(a: &Cell, b: &Cell, tech: &TechnologyParams) -> f64 {
    let dz = tech.layer_distance * (a.layer as f64 - b.layer as f64).abs();
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + dz * dz).sqrt()
}

/// Kink energy of a cell pair in joules.
///
/// The pair is put into a canonical order before summation so the result is
/// bit-identical for (i, j) and (j, i).
pub fn kink_energy(cell_i: &Cell, cell_j: &Cell, tech: &TechnologyParams) -> Result<f64, KinkError> {
    let distance = center_distance(cell_i, cell_j, tech);
    if distance > tech.r_effect * (1.0 + 1e-12) {
        return Err(KinkError::BeyondCutoff {
            i: cell_i.id,
            j: cell_j.id,
            distance,
            r_effect: tech.r_effect,
        });
    }
    let key = |c: &Cell| (c.layer, c.x.to_bits(), c.y.to_bits());
    let (a, b) = if key(cell_i) <= key(cell_j) {
        (cell_i, cell_j)
    } else {
        (cell_j, cell_i)
    };

    // Flipping b negates all of its charges, so E_k = -2 U(+1, +1). Within
    // cell b the charges pair up as (+e/2, -e/2); each pair's potential is
    // evaluated as a difference quotient instead of two large 1/r terms that
    // nearly cancel, which keeps the far-field result accurate to ~1e-14.
    let model = DotChargeModel::from_tech(tech);
    let dz = tech.layer_distance * (b.layer as f64 - a.layer as f64);
    let q = model.charges(1.0);
    let o = model.dot_offsets;
    let pairs = [(0, 1), (2, 3)];

    let mut u_same = 0.0;
    for (m, &(ax, ay)) in o.iter().enumerate() {
        let d = [b.x - a.x - ax, b.y - a.y - ay, dz];
        let mut potential = 0.0;
        for &(n0, n1) in &pairs {
            let (r0, r1) = (dot_distance(d, o[n0]), dot_distance(d, o[n1]));
            if r0 == 0.0 || r1 == 0.0 {
                return Err(KinkError::CoincidentDots {
                    i: cell_i.id,
                    j: cell_j.id,
                });
            }
            // 1/r1 - 1/r0 = (r0^2 - r1^2) / (r0 r1 (r0 + r1))
            let (e0, e1) = (o[n0], o[n1]);
            let sq_diff = (e0.0 - e1.0) * (2.0 * d[0] + e0.0 + e1.0) + (e0.1 - e1.1) * (2.0 * d[1] + e0.1 + e1.1);
            potential += q[n1] * sq_diff / (r0 * r1 * (r0 + r1));
        }
        u_same += q[m] * potential;
    }
    Ok(-2.0 * coulomb_constant(tech.epsilon_r) * u_same / NM)
}

/// |d + o| for a dot offset `o` in the plane.
#[inline]
fn dot_distance(d: [f64; 3], o: (f64, f64)) -> f64 {
    let (x, y) = (d[0] + o.0, d[1] + o.1);
    (x * x + y * y + d[2] * d[2]).sqrt()
}

/// Symmetric adjacency of cells within `r_effect`, in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    kink: Vec<f64>,
    distances: Vec<f64>,
}

/// One directed view of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub neighbor: usize,
    pub kink_energy: f64,
    pub distance_nm: f64,
}

impl NeighborGraph {
    pub fn build(layout: &Layout, tech: &TechnologyParams) -> Result<Self, KinkError> {
        let cells = layout.cells();
        let n = cells.len();
        let mut adj: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = center_distance(&cells[i], &cells[j], tech);
                if d <= tech.r_effect {
                    let ek = kink_energy(&cells[i], &cells[j], tech)?;
                    adj[i].push((j, ek, d));
                    adj[j].push((i, ek, d));
                }
            }
        }
        let mut graph = NeighborGraph {
            offsets: Vec::with_capacity(n + 1),
            neighbors: Vec::new(),
            kink: Vec::new(),
            distances: Vec::new(),
        };
        graph.offsets.push(0);
        for mut row in adj {
            row.sort_by_key(|e| e.0);
            for (j, ek, d) in row {
                graph.neighbors.push(j);
                graph.kink.push(ek);
                graph.distances.push(d);
            }
            graph.offsets.push(graph.neighbors.len());
        }
        Ok(graph)
    }

    pub fn cell_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of directed edge slots (twice the edge count).
    pub fn neighbor_slots(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, cell: usize) -> usize {
        self.offsets[cell + 1] - self.offsets[cell]
    }

    /// Range of directed-edge slots belonging to `cell`.
    pub fn slots(&self, cell: usize) -> std::ops::Range<usize> {
        self.offsets[cell]..self.offsets[cell + 1]
    }

    pub fn neighbor_ids(&self, cell: usize) -> &[usize] {
        &self.neighbors[self.slots(cell)]
    }

    pub fn kink_energies(&self, cell: usize) -> &[f64] {
        &self.kink[self.slots(cell)]
    }

    pub fn edges(&self, cell: usize) -> impl Iterator<Item = Edge> + '_ {
        self.slots(cell).map(move |s| Edge {
            neighbor: self.neighbors[s],
            kink_energy: self.kink[s],
            distance_nm: self.distances[s],
        })
    }

    pub fn kink_between(&self, i: usize, j: usize) -> Option<f64> {
        self.edges(i).find(|e| e.neighbor == j).map(|e| e.kink_energy)
    }

    /// Writes `cell_i,cell_j,distance_nm,kink_energy_J`, one row per
    /// unordered pair.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_i", "cell_j", "distance_nm", "kink_energy_J"])?;
        for i in 0..self.cell_count() {
            for e in self.edges(i).filter(|e| e.neighbor > i) {
                w.write_record(&[
                    i.to_string(),
                    e.neighbor.to_string(),
                    format!("{}", e.distance_nm),
                    format!("{:e}", e.kink_energy),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Coulomb term of the energy vector for `cell`:
/// `Phi_i = -sum_j E_k(i, j) * lambda_z(j)`.
///
/// The minus sign makes `(1/2) Phi_i lambda_z(i)` the coupling energy, so a
/// positive kink energy favors alignment.
#[inline]
pub fn coulomb_term(cell: usize, graph: &NeighborGraph, lambda_z: &[f64]) -> f64 {
    let ids = graph.neighbor_ids(cell);
    let ek = graph.kink_energies(cell);
    let mut phi = 0.0;
    for (&j, &k) in ids.iter().zip(ek) {
        phi -= k * lambda_z[j];
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{CellRole, ClockZone};

    fn cell(x: f64, y: f64, layer: u32) -> Cell {
        Cell::new(x, y, layer, ClockZone::new(0).unwrap(), CellRole::Normal)
    }

    #[test]
    fn dot_charges_cancel() {
        let m = DotChargeModel::from_tech(&TechnologyParams::default());
        for p in [-1.0, 1.0] {
            let total: f64 = m.charges(p).iter().sum();
            assert!(total.abs() < 1e-40);
        }
        let plus = m.charges(1.0);
        let minus = m.charges(-1.0);
        for k in 0..4 {
            assert_eq!(plus[k], -minus[k]);
        }
    }

    #[test]
    fn side_by_side_is_positive_diagonal_negative() {
        let t = TechnologyParams::default();
        let h = kink_energy(&cell(0.0, 0.0, 0), &cell(20.0, 0.0, 0), &t).unwrap();
        let v = kink_energy(&cell(0.0, 0.0, 0), &cell(0.0, 20.0, 0), &t).unwrap();
        let d = kink_energy(&cell(0.0, 0.0, 0), &cell(20.0, 20.0, 0), &t).unwrap();
        assert!(h > 0.0);
        assert!((h - v).abs() <= 1e-14 * h);
        assert!(d < 0.0);
    }

    #[test]
    fn stacked_layers_invert_sign() {
        let t = TechnologyParams::default();
        let ek = kink_energy(&cell(0.0, 0.0, 0), &cell(0.0, 0.0, 1), &t).unwrap();
        assert!(ek < 0.0);
    }

    #[test]
    fn beyond_cutoff_is_an_error() {
        let t = TechnologyParams::default();
        assert!(matches!(
            kink_energy(&cell(0.0, 0.0, 0), &cell(100.0, 0.0, 0), &t),
            Err(KinkError::BeyondCutoff { .. })
        ));
    }

    #[test]
    fn coincident_cells_are_an_error() {
        let t = TechnologyParams::default();
        assert!(matches!(
            kink_energy(&cell(0.0, 0.0, 0), &cell(0.0, 0.0, 0), &t),
            Err(KinkError::CoincidentDots { .. })
        ));
    }

    #[test]
    fn coulomb_term_definition() {
        let l = Layout::new("p", vec![cell(0.0, 0.0, 0), cell(20.0, 0.0, 0)], None).unwrap();
        let g = NeighborGraph::build(&l, &TechnologyParams::default()).unwrap();
        assert_eq!(coulomb_term(0, &g, &[0.0, 0.0]), 0.0);
        let ek = g.kink_between(0, 1).unwrap();
        assert_eq!(coulomb_term(0, &g, &[0.3, 1.0]), -ek);
    }

    #[test]
    fn single_cell_graph_is_empty() {
        let l = Layout::new("p", vec![cell(0.0, 0.0, 0)], None).unwrap();
        let g = NeighborGraph::build(&l, &TechnologyParams::default()).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.degree(0), 0);
    }

    #[test]
    fn csv_dump_has_one_row_per_pair() {
        let l = Layout::new(
            "p",
            vec![cell(0.0, 0.0, 0), cell(20.0, 0.0, 0), cell(40.0, 0.0, 0)],
            None,
        )
        .unwrap();
        let g = NeighborGraph::build(&l, &TechnologyParams::default()).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("cell_i,cell_j,distance_nm,kink_energy_J\n0,1,20,"));
    }
}
