//! Per-cell energy bookkeeping.
//!
//! With `G = hbar * Gamma = [-2 gamma, 0, Phi]` (joules) the cell energy is
//! `E = G . lambda / 2`. Each timestep splits its change into
//!
//! * clock work, from the change of `-2 gamma` against `lambda_x`,
//! * neighbor work, from the change of `Phi` against `lambda_z`,
//! * exchange with the environment, `(1/2 tau) (G . lambda + |G| tanh eta)`,
//!
//! all integrated with the trapezoidal rule. `E_total` is accumulated from
//! the exact endpoint difference of `E`, so the balance residual
//! `E_total - (E_clk + E_io + E_env)` measures the discretization error.
//!
//! Every ledger quantity counts energy **leaving** the cell: positive `e_env`
//! is dissipated to the environment, positive `e_clk` is returned to the
//! clock, positive `e_io` is passed on to neighbors (`e_io = e_out - e_in`),
//! and positive `e_total` is a net loss of cell energy. With this single
//! orientation `e_total = e_clk + e_io + e_env` holds as written.

use serde::{Deserialize, Serialize};

use crate::consts::{joules_to_mev, K_B};
use crate::electrostatics::NeighborGraph;
use crate::layout::Layout;
use crate::params::TechnologyParams;

/// Floor for the denominator of the relative balance residual, joules.
pub const RESIDUAL_FLOOR: f64 = 1e-27;

/// Instantaneous state of one cell as seen by the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub gamma: f64,
    pub phi: f64,
    pub lambda: [f64; 3],
}

impl CellSnapshot {
    /// `hbar * Gamma` in joules.
    #[inline]
    pub fn energy_vector(&self) -> [f64; 3] {
        [-2.0 * self.gamma, 0.0, self.phi]
    }

    /// `E = (hbar/2) Gamma . lambda`.
    #[inline]
    pub fn energy(&self) -> f64 {
        0.5 * dot(self.energy_vector(), self.lambda)
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// `tanh(eta_th)` with `eta_th = hbar |Gamma| / (2 k_B T)`; `g_norm` is
/// `hbar |Gamma|` in joules.
#[inline]
pub fn thermal_tanh(g_norm: f64, temperature: f64) -> f64 {
    fast_tanh(g_norm / (2.0 * K_B * temperature))
}

/// `tanh` for non-negative arguments; exact to a few ulp and several times
/// cheaper than the libm call away from zero.
#[inline]
pub(crate) fn fast_tanh(x: f64) -> f64 {
    if x >= 19.1 {
        1.0
    } else if x > 0.55 {
        1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
    } else {
        x.tanh()
    }
}

/// Power flowing from the cell into the environment, watts. Zero at the
/// thermal steady state.
#[inline]
pub fn env_power(snap: &CellSnapshot, tech: &TechnologyParams) -> f64 {
    let g = snap.energy_vector();
    let gn = norm(g);
    (dot(g, snap.lambda) + gn * thermal_tanh(gn, tech.temperature)) / (2.0 * tech.tau)
}

/// Running energy integrals of one cell, joules, outflow-positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellEnergy {
    pub e_clk: f64,
    pub e_io: f64,
    pub e_env: f64,
    pub e_total: f64,
}

impl CellEnergy {
    /// `e_total - (e_clk + e_io + e_env)`.
    pub fn balance_error(&self) -> f64 {
        self.e_total - (self.e_clk + self.e_io + self.e_env)
    }

    /// Balance error relative to the dissipated energy.
    pub fn relative_residual(&self) -> f64 {
        self.balance_error().abs() / self.e_env.abs().max(RESIDUAL_FLOOR)
    }

    pub fn minus(&self, earlier: &CellEnergy) -> CellEnergy {
        CellEnergy {
            e_clk: self.e_clk - earlier.e_clk,
            e_io: self.e_io - earlier.e_io,
            e_env: self.e_env - earlier.e_env,
            e_total: self.e_total - earlier.e_total,
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, d: &CellEnergy) {
        self.e_clk += d.e_clk;
        self.e_io += d.e_io;
        self.e_env += d.e_env;
        self.e_total += d.e_total;
    }
}

/// Trapezoidal energy increments between two consecutive states.
pub fn increments(
    prev: &CellSnapshot,
    curr: &CellSnapshot,
    dt: f64,
    tech: &TechnologyParams,
) -> CellEnergy {
    increments_with_power(prev, curr, env_power(prev, tech), env_power(curr, tech), dt)
}

/// [`increments`] with the environment power at both ends already known.
#[inline]
pub(crate) fn increments_with_power(
    prev: &CellSnapshot,
    curr: &CellSnapshot,
    env0: f64,
    env1: f64,
    dt: f64,
) -> CellEnergy {
    let mean_x = 0.5 * (prev.lambda[0] + curr.lambda[0]);
    let mean_z = 0.5 * (prev.lambda[2] + curr.lambda[2]);
    CellEnergy {
        // -(1/2) d(-2 gamma) <lambda_x>
        e_clk: (curr.gamma - prev.gamma) * mean_x,
        // -(1/2) dPhi <lambda_z>
        e_io: -0.5 * (curr.phi - prev.phi) * mean_z,
        e_env: 0.5 * (env0 + env1) * dt,
        e_total: -(curr.energy() - prev.energy()),
    }
}

/// Energy integrals for every cell of a run, plus the neighbor work split
/// per directed edge (aligned with the neighbor graph's slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub cells: Vec<CellEnergy>,
    /// `edge_out[s]`: energy passed from the slot's owner to its neighbor.
    pub edge_out: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(graph: &NeighborGraph) -> Self {
        EnergyLedger {
            cells: vec![CellEnergy::default(); graph.cell_count()],
            edge_out: vec![0.0; graph.neighbor_slots()],
        }
    }

    /// Adds one step for `cell`. The per-edge split is left to the caller
    /// (see [`EnergyLedger::accumulate_edges`]).
    pub fn accumulate(
        &mut self,
        cell: usize,
        prev: &CellSnapshot,
        curr: &CellSnapshot,
        dt: f64,
        tech: &TechnologyParams,
    ) {
        let d = increments(prev, curr, dt, tech);
        self.cells[cell].add(&d);
    }

    /// Splits one step of neighbor work for `cell` across its edges.
    /// `lz_prev`/`lz_curr` hold every cell's `lambda_z` at both ends.
    pub fn accumulate_edges(
        &mut self,
        cell: usize,
        graph: &NeighborGraph,
        lz_prev: &[f64],
        lz_curr: &[f64],
    ) {
        let mean_z = 0.5 * (lz_prev[cell] + lz_curr[cell]);
        for (slot, (&j, &ek)) in graph
            .slots(cell)
            .zip(graph.neighbor_ids(cell).iter().zip(graph.kink_energies(cell)))
        {
            self.edge_out[slot] += 0.5 * ek * (lz_curr[j] - lz_prev[j]) * mean_z;
        }
    }

    /// [`EnergyLedger::accumulate_edges`] fused with the Coulomb term of
    /// `cell` at the end of the step, which it returns.
    #[inline]
    pub(crate) fn coulomb_with_edges(
        &mut self,
        cell: usize,
        graph: &NeighborGraph,
        lz_prev: &[f64],
        lz_curr: &[f64],
    ) -> f64 {
        let half_mean = 0.25 * (lz_prev[cell] + lz_curr[cell]);
        let slots = graph.slots(cell);
        let out = &mut self.edge_out[slots];
        let mut phi = 0.0;
        for ((o, &j), &ek) in out
            .iter_mut()
            .zip(graph.neighbor_ids(cell))
            .zip(graph.kink_energies(cell))
        {
            let (now, before) = (lz_curr[j], lz_prev[j]);
            phi -= ek * now;
            *o += ek * (now - before) * half_mean;
        }
        phi
    }

    pub fn minus(&self, earlier: &EnergyLedger) -> EnergyLedger {
        EnergyLedger {
            cells: self
                .cells
                .iter()
                .zip(&earlier.cells)
                .map(|(a, b)| a.minus(b))
                .collect(),
            edge_out: self
                .edge_out
                .iter()
                .zip(&earlier.edge_out)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("cell {neighbor} is in both the IN and OUT sets of cell {cell}")]
    Overlap { cell: usize, neighbor: usize },
    #[error("cell {neighbor} is not a neighbor of cell {cell}")]
    NotNeighbor { cell: usize, neighbor: usize },
}

/// Energy received from the `inputs` neighbors and passed to the `outputs`
/// neighbors of `cell`. Neighbors in neither set are ignored, so
/// `e_out - e_in = e_io` holds when the two sets cover the neighborhood.
pub fn directional_split(
    ledger: &EnergyLedger,
    graph: &NeighborGraph,
    cell: usize,
    inputs: &[usize],
    outputs: &[usize],
) -> Result<(f64, f64), SplitError> {
    if let Some(&n) = inputs.iter().find(|n| outputs.contains(n)) {
        return Err(SplitError::Overlap { cell, neighbor: n });
    }
    let nbrs = graph.neighbor_ids(cell);
    if let Some(&n) = inputs.iter().chain(outputs).find(|n| !nbrs.contains(n)) {
        return Err(SplitError::NotNeighbor { cell, neighbor: n });
    }
    let mut e_in = 0.0;
    let mut e_out = 0.0;
    for (slot, &j) in graph.slots(cell).zip(nbrs) {
        if inputs.contains(&j) {
            e_in -= ledger.edge_out[slot];
        } else if outputs.contains(&j) {
            e_out += ledger.edge_out[slot];
        }
    }
    Ok((e_in, e_out))
}

/// Minimum dissipation per erased bit, `k_B T ln 2`, joules.
pub fn landauer_limit(temperature: f64) -> f64 {
    K_B * temperature * std::f64::consts::LN_2
}

/// Energy figures of one cell over the measured cycle, in meV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEnergyRow {
    pub cell: usize,
    pub zone: u8,
    pub role: String,
    pub e_clk_mev: f64,
    pub e_io_mev: f64,
    pub e_env_mev: f64,
    pub e_total_mev: f64,
    /// Energy received from upstream neighbors, when a partition was given.
    #[serde(default)]
    pub e_in_mev: Option<f64>,
    /// Energy passed to downstream neighbors.
    #[serde(default)]
    pub e_out_mev: Option<f64>,
    pub residual: f64,
}

/// Energy summary of one run (one input combination).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Index of the measured cycle within the run.
    pub measured_cycle: usize,
    pub cells: Vec<CellEnergyRow>,
    pub sum_env: f64,
    pub sum_clk: f64,
    pub sum_io: f64,
    /// Σe_env over the reporting set for every full cycle of the run.
    pub per_cycle_env: Vec<f64>,
    /// Worst relative balance residual among reporting cells.
    pub epsilon_env: f64,
    pub landauer_limit: f64,
    pub below_landauer: bool,
}

impl EnergyReport {
    pub fn sum_env_mev(&self) -> f64 {
        joules_to_mev(self.sum_env)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("run covers {got} full clock cycles; at least {need} are required (transient, measured, guard)")]
    RunTooShort { got: usize, need: usize },
}

/// Minimum number of full cycles a run must cover to be reported.
pub const MIN_REPORT_CYCLES: usize = 3;

/// Builds the per-run report from the ledger snapshots taken at each cycle
/// boundary (`snapshots[k]` at `t = k * cycle`). The measured cycle is the
/// one before the final guard cycle.
pub fn finalize_report(
    snapshots: &[EnergyLedger],
    cell_info: &[(u8, String)],
    reporting_set: &[usize],
    tech: &TechnologyParams,
) -> Result<EnergyReport, ReportError> {
    let cycles = snapshots.len().saturating_sub(1);
    if cycles < MIN_REPORT_CYCLES {
        return Err(ReportError::RunTooShort {
            got: cycles,
            need: MIN_REPORT_CYCLES,
        });
    }
    let measured = cycles - 2;
    let per_cycle_env = (0..cycles)
        .map(|k| {
            reporting_set
                .iter()
                .map(|&c| snapshots[k + 1].cells[c].e_env - snapshots[k].cells[c].e_env)
                .sum()
        })
        .collect();

    let mut rows = Vec::with_capacity(reporting_set.len());
    let (mut sum_env, mut sum_clk, mut sum_io) = (0.0, 0.0, 0.0);
    let mut epsilon_env: f64 = 0.0;
    for &c in reporting_set {
        let e = snapshots[measured + 1].cells[c].minus(&snapshots[measured].cells[c]);
        sum_env += e.e_env;
        sum_clk += e.e_clk;
        sum_io += e.e_io;
        let residual = e.relative_residual();
        epsilon_env = epsilon_env.max(residual);
        let (zone, role) = &cell_info[c];
        rows.push(CellEnergyRow {
            cell: c,
            zone: *zone,
            role: role.clone(),
            e_clk_mev: joules_to_mev(e.e_clk),
            e_io_mev: joules_to_mev(e.e_io),
            e_env_mev: joules_to_mev(e.e_env),
            e_total_mev: joules_to_mev(e.e_total),
            e_in_mev: None,
            e_out_mev: None,
            residual,
        });
    }
    let limit = landauer_limit(tech.temperature);
    Ok(EnergyReport {
        measured_cycle: measured,
        cells: rows,
        sum_env,
        sum_clk,
        sum_io,
        per_cycle_env,
        epsilon_env,
        landauer_limit: limit,
        below_landauer: sum_env < limit,
    })
}

/// Upstream and downstream neighbor sets of one cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPartition {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Splits every cell's neighborhood by signal flow. Neighbors clocked one
/// zone earlier are upstream and one zone later downstream. Others are
/// ranked by hop count from the nearest Input or Fixed cell, counting only
/// nearby cells (within 1.5 pitches): closer means upstream. Input and
/// Fixed neighbors are always upstream.
pub fn flow_partitions(layout: &Layout, graph: &NeighborGraph, tech: &TechnologyParams) -> Vec<FlowPartition> {
    let cells = layout.cells();
    let reach = 1.5 * tech.cell_distance * (1.0 + 1e-9);
    let mut hops = vec![usize::MAX; cells.len()];
    let mut queue = std::collections::VecDeque::new();
    for c in cells.iter().filter(|c| !c.role.is_free()) {
        hops[c.id] = 0;
        queue.push_back(c.id);
    }
    while let Some(u) = queue.pop_front() {
        for e in graph.edges(u) {
            if e.distance_nm <= reach && hops[e.neighbor] == usize::MAX {
                hops[e.neighbor] = hops[u] + 1;
                queue.push_back(e.neighbor);
            }
        }
    }
    cells
        .iter()
        .map(|c| {
            let mut part = FlowPartition::default();
            let z = c.zone.index() as i32;
            for &j in graph.neighbor_ids(c.id) {
                let n = &cells[j];
                let dz = (n.zone.index() as i32 - z).rem_euclid(4);
                let upstream = !n.role.is_free() || dz == 3 || (dz != 1 && hops[j] < hops[c.id]);
                if upstream {
                    part.inputs.push(j);
                } else {
                    part.outputs.push(j);
                }
            }
            part
        })
        .collect()
}

impl EnergyReport {
    /// Fills the per-cell `e_in`/`e_out` columns over the measured cycle.
    pub fn attach_split(
        &mut self,
        snapshots: &[EnergyLedger],
        graph: &NeighborGraph,
        partitions: &[FlowPartition],
    ) -> Result<(), SplitError> {
        let m = self.measured_cycle;
        let ledger = snapshots[m + 1].minus(&snapshots[m]);
        for row in &mut self.cells {
            let p = &partitions[row.cell];
            let (e_in, e_out) = directional_split(&ledger, graph, row.cell, &p.inputs, &p.outputs)?;
            row.e_in_mev = Some(joules_to_mev(e_in));
            row.e_out_mev = Some(joules_to_mev(e_out));
        }
        Ok(())
    }
}
