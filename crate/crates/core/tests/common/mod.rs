//! Helpers shared by the integration tests.
#![allow(dead_code)]

use qca_energy::{Cell, CellRole, ClockZone, Layout, TechnologyParams};

pub fn zone(z: u8) -> ClockZone {
    ClockZone::new(z).unwrap()
}

pub fn cell(x: f64, y: f64, layer: u32) -> Cell {
    Cell::new(x, y, layer, zone(0), CellRole::Normal)
}

/// Independent point-charge model of a cell pair, summed in double-double
/// arithmetic so the far-field cancellation does not limit its accuracy.
///
/// Dots sit at `(+-a, +-a)` with `a = cell_size / 4`. A dot holding an
/// electron carries `-e/2` net, an empty one `+e/2`. Polarization +1 fills
/// the top-right and bottom-left dots.
pub mod oracle {
    use super::*;
    use twofloat::TwoFloat;

    const E: f64 = 1.602_176_634e-19;
    const EPS0: f64 = 8.854_187_8128e-12;

    /// Dot positions (nm) and charges in units of e/2.
    fn dots(c: &Cell, p: i32, tech: &TechnologyParams) -> Vec<([TwoFloat; 3], f64)> {
        let a = TwoFloat::from(tech.cell_size) / 4.0;
        let z = TwoFloat::from(c.layer as f64) * tech.layer_distance;
        let corners = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        corners
            .iter()
            .map(|&(sx, sy)| {
                let occupied = if p > 0 { sx * sy > 0.0 } else { sx * sy < 0.0 };
                let q = if occupied { -1.0 } else { 1.0 };
                ([a * sx + c.x, a * sy + c.y, z], q)
            })
            .collect()
    }

    /// `1/sqrt(x)` from the f64 estimate plus one Newton step carried out
    /// in double-double.
    fn inv_sqrt(x: TwoFloat) -> TwoFloat {
        let y0 = TwoFloat::from(1.0 / f64::from(x).sqrt());
        let r = TwoFloat::from(1.0) - x * y0 * y0;
        y0 + y0 * r / 2.0
    }

    fn sum_over_dots(ci: &Cell, pi: i32, cj: &Cell, pj: i32, tech: &TechnologyParams) -> TwoFloat {
        let mut u = TwoFloat::from(0.0);
        for (ra, qa) in dots(ci, pi, tech) {
            for (rb, qb) in dots(cj, pj, tech) {
                let d2 = (0..3).map(|k| (ra[k] - rb[k]) * (ra[k] - rb[k])).fold(TwoFloat::from(0.0), |s, v| s + v);
                u += inv_sqrt(d2) * (qa * qb);
            }
        }
        u
    }

    /// Electrostatic energy (J) between two cells of polarizations `pi`, `pj`.
    pub fn interaction(ci: &Cell, pi: i32, cj: &Cell, pj: i32, tech: &TechnologyParams) -> f64 {
        let k = (E / 2.0) * (E / 2.0) / (4.0 * std::f64::consts::PI * EPS0 * tech.epsilon_r) / 1e-9;
        f64::from(sum_over_dots(ci, pi, cj, pj, tech)) * k
    }

    pub fn kink(ci: &Cell, cj: &Cell, tech: &TechnologyParams) -> f64 {
        let k = (E / 2.0) * (E / 2.0) / (4.0 * std::f64::consts::PI * EPS0 * tech.epsilon_r) / 1e-9;
        let diff = sum_over_dots(ci, 1, cj, -1, tech) - sum_over_dots(ci, 1, cj, 1, tech);
        f64::from(diff) * k
    }
}

/// A layout of plain cells, for graph-level tests.
pub fn plain_layout(cells: Vec<Cell>) -> Layout {
    Layout::new("t", cells, None).unwrap()
}

/// A Fixed +1 driver next to one free cell in zone 0.
pub fn fixed_pair() -> Layout {
    use qca_energy::Polarity;
    Layout::new(
        "pair",
        vec![
            Cell::new(0.0, 0.0, 0, zone(0), CellRole::Fixed(Polarity::Pos)),
            Cell::new(20.0, 0.0, 0, zone(0), CellRole::Normal),
        ],
        None,
    )
    .unwrap()
}
