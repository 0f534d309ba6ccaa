//! Fixed-step integration of the coherence-vector equation of motion
//!
//! ```text
//! d lambda / dt = Gamma x lambda - (lambda - lambda_ss) / tau
//! lambda_ss     = -(Gamma / |Gamma|) tanh(hbar |Gamma| / 2 k_B T)
//! ```
//!
//! for every free cell, with Fixed and Input cells pinned as boundary
//! conditions. Neighbor coupling is updated synchronously: the Coulomb term
//! of a step always comes from the previous step's polarizations.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocking::{ClockConfig, ClockPhase};
use crate::consts::HBAR;

const INV_HBAR: f64 = 1.0 / HBAR;
use crate::electrostatics::{coulomb_term, KinkError, NeighborGraph};
use crate::energy::{increments_with_power, thermal_tanh, CellSnapshot, EnergyLedger};
use crate::layout::{CellRole, Layout};
use crate::params::{require_positive, ParamError, TechnologyParams};

/// Norm beyond which a run is declared numerically unstable.
pub const DIVERGENCE_LIMIT: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Kink(#[from] KinkError),
    #[error("stimulus has no input periods")]
    EmptyStimulus,
    #[error("stimulus sequences have different lengths ({0} vs {1})")]
    RaggedStimulus(usize, usize),
    #[error("no stimulus for input `{0}`")]
    MissingStimulus(String),
    #[error("t_sim = {t_sim:e} s is shorter than one clock cycle ({cycle:e} s)")]
    TooShort { t_sim: f64, cycle: f64 },
    #[error("input period {period:e} s is shorter than one clock cycle ({cycle:e} s)")]
    InputPeriodTooShort { period: f64, cycle: f64 },
    #[error(
        "integration diverged: |lambda| = {norm:.4} on cell {cell} at t = {t:e} s; \
         t_step = {t_step:e} s is too coarse (explicit schemes need t_step well below tau = {tau:e} s)"
    )]
    Diverged {
        cell: usize,
        t: f64,
        norm: f64,
        t_step: f64,
        tau: f64,
    },
    #[error("energy vector of cell {cell} vanished at t = {t:e} s")]
    DegenerateEnergyVector { cell: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk2,
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk2" | "heun" => Ok(Integrator::Rk2),
            other => Err(format!("unknown integrator `{other}` (euler|rk2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub t_step: f64,
    pub t_sim: f64,
    /// Time between input changes. Inputs switch at multiples of it.
    pub input_period: f64,
    /// Keep every n-th step in the recorded trace.
    pub record_stride: usize,
    pub integrator: Integrator,
}

impl SimulationParams {
    /// 1e-17 s Euler steps over `cycles` clock cycles, one input per cycle.
    pub fn standard(clock: &ClockConfig, cycles: usize) -> Self {
        SimulationParams {
            t_step: 1e-17,
            t_sim: cycles as f64 * clock.cycle_time(),
            input_period: clock.cycle_time(),
            record_stride: 1000,
            integrator: Integrator::Euler,
        }
    }

    pub fn validate(&self, clock: &ClockConfig) -> Result<(), SimError> {
        require_positive("t_step", self.t_step)?;
        require_positive("t_sim", self.t_sim)?;
        require_positive("input_period", self.input_period)?;
        if self.record_stride == 0 {
            return Err(ParamError::Invalid("record_stride must be at least 1".into()).into());
        }
        let cycle = clock.cycle_time();
        if self.t_sim < cycle * (1.0 - 1e-9) {
            return Err(SimError::TooShort {
                t_sim: self.t_sim,
                cycle,
            });
        }
        if self.input_period < cycle * (1.0 - 1e-9) {
            return Err(SimError::InputPeriodTooShort {
                period: self.input_period,
                cycle,
            });
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_sim / self.t_step).round() as u64
    }

    fn steps_for(&self, t: f64) -> u64 {
        (t / self.t_step).round() as u64
    }
}

/// Input values per input period. Periods past the end of the plan repeat
/// the last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    sequences: BTreeMap<String, Vec<bool>>,
    len: usize,
}

impl StimulusPlan {
    pub fn new(sequences: BTreeMap<String, Vec<bool>>) -> Result<Self, SimError> {
        let mut len = None;
        for seq in sequences.values() {
            match len {
                None => len = Some(seq.len()),
                Some(l) if l != seq.len() => return Err(SimError::RaggedStimulus(l, seq.len())),
                _ => {}
            }
        }
        let len = len.unwrap_or(0);
        if len == 0 && !sequences.is_empty() {
            return Err(SimError::EmptyStimulus);
        }
        Ok(StimulusPlan { sequences, len })
    }

    /// The same values in every period. `labels` and `bits` pair up.
    pub fn constant(labels: &[&str], bits: &[bool]) -> Self {
        let sequences = labels
            .iter()
            .zip(bits)
            .map(|(l, &b)| (l.to_string(), vec![b]))
            .collect();
        StimulusPlan { sequences, len: 1 }
    }

    /// Every combination in turn, binary counting over sorted labels with
    /// the first label as the most significant bit.
    pub fn exhaustive(labels: &[&str]) -> Self {
        let mut sorted: Vec<&str> = labels.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let rows = 1usize << n;
        let sequences = sorted
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let seq = (0..rows).map(|r| (r >> (n - 1 - i)) & 1 == 1).collect();
                (l.to_string(), seq)
            })
            .collect();
        StimulusPlan {
            sequences,
            len: if n == 0 { 0 } else { rows },
        }
    }

    /// Number of periods described by the plan.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.sequences.keys().map(String::as_str)
    }

    pub fn value(&self, label: &str, period: usize) -> Option<bool> {
        let seq = self.sequences.get(label)?;
        seq.get(period.min(seq.len().checked_sub(1)?)).copied()
    }

    /// Input bits applied during `period`, in sorted label order.
    pub fn bits(&self, period: usize) -> Vec<bool> {
        self.labels()
            .map(|l| self.value(l, period).unwrap_or(false))
            .collect()
    }
}

/// Which cells end up in the recorded trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Recording {
    #[default]
    Off,
    All,
    Cells(Vec<usize>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub recording: Recording,
}

/// One recorded sample of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub cell: usize,
    pub lambda: [f64; 3],
    pub gamma: f64,
    pub phi: f64,
}

impl TraceRow {
    pub fn snapshot(&self) -> CellSnapshot {
        CellSnapshot {
            gamma: self.gamma,
            phi: self.phi,
            lambda: self.lambda,
        }
    }
}

/// Polarization of an output cell sampled inside one of its hold phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub cell: usize,
    /// Index of the zone-local clock cycle the hold phase belongs to.
    pub cycle: usize,
    /// Position within the hold phase, 0 (start) to `PROBES_PER_HOLD - 1`.
    pub slot: usize,
    pub t: f64,
    pub lambda_z: f64,
}

/// Samples taken per hold phase; the middle one is the decoding sample.
pub const PROBES_PER_HOLD: usize = 5;

/// How far (in quarter cycles) an output lags behind each driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTiming {
    pub cell: usize,
    pub label: String,
    pub zone: u8,
    /// `(driver zone, stages)` for every driver that reaches the output.
    pub lags: Vec<(u8, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub t_step: f64,
    pub steps: u64,
    pub clock: ClockConfig,
    pub input_period: f64,
    pub stimulus: StimulusPlan,
    pub record_stride: usize,
    pub samples: Vec<TraceRow>,
    /// Ledger at the end of the run.
    pub ledger: EnergyLedger,
    /// Ledger at every full cycle boundary, starting with t = 0.
    pub cycle_ledgers: Vec<EnergyLedger>,
    pub probes: Vec<Probe>,
    pub outputs: Vec<OutputTiming>,
    pub max_norm: f64,
}

impl RawTrace {
    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.t_step
    }

    /// Number of input periods that start inside the run.
    pub fn periods(&self) -> usize {
        (self.t_end() / self.input_period - 1e-9).ceil().max(1.0) as usize
    }

    /// Recorded samples of a single cell.
    pub fn cell_samples(&self, cell: usize) -> impl Iterator<Item = &TraceRow> {
        self.samples.iter().filter(move |r| r.cell == cell)
    }

    /// Writes `t_s,cell_id,lambda_x,lambda_y,lambda_z,gamma_J,phi_J`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t_s", "cell_id", "lambda_x", "lambda_y", "lambda_z", "gamma_J", "phi_J",
        ])?;
        for r in &self.samples {
            w.write_record(&[
                format!("{:e}", r.t),
                r.cell.to_string(),
                format!("{:e}", r.lambda[0]),
                format!("{:e}", r.lambda[1]),
                format!("{:e}", r.lambda[2]),
                format!("{:e}", r.gamma),
                format!("{:e}", r.phi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Drive {
    Free,
    Fixed(f64),
    Input(usize),
}

#[inline]
fn derivative(l: [f64; 3], g: [f64; 3], gn: f64, th: f64, inv_tau: f64) -> [f64; 3] {
    // G x lambda with G_y = 0
    let c = [
        -g[2] * l[1],
        g[2] * l[0] - g[0] * l[2],
        g[0] * l[1],
    ];
    let k = th / gn;
    [
        c[0] * INV_HBAR - (l[0] + g[0] * k) * inv_tau,
        c[1] * INV_HBAR - l[1] * inv_tau,
        c[2] * INV_HBAR - (l[2] + g[2] * k) * inv_tau,
    ]
}

/// Integrator state for one layout. [`Engine::step`] advances all cells by
/// one timestep.
pub struct Engine<'a> {
    graph: &'a NeighborGraph,
    tech: TechnologyParams,
    clock: ClockConfig,
    dt: f64,
    integrator: Integrator,
    period_steps: u64,
    inv_tau: f64,
    drive: Vec<Drive>,
    free: Vec<usize>,
    zone: Vec<u8>,
    input_values: Vec<Vec<f64>>,
    lambda: Vec<[f64; 3]>,
    scratch: Vec<[f64; 3]>,
    k1: Vec<[f64; 3]>,
    lz: Vec<f64>,
    lz_next: Vec<f64>,
    phi: Vec<f64>,
    gn: Vec<f64>,
    th: Vec<f64>,
    env: Vec<f64>,
    gamma: [f64; 4],
    n: u64,
    ledger: EnergyLedger,
    max_norm: f64,
}

impl<'a> Engine<'a> {
    pub fn new(
        layout: &Layout,
        graph: &'a NeighborGraph,
        tech: &TechnologyParams,
        clock: &ClockConfig,
        sim: &SimulationParams,
        stimulus: &StimulusPlan,
    ) -> Result<Self, SimError> {
        tech.validate()?;
        clock.validate()?;
        sim.validate(clock)?;

        let labels = layout.input_labels();
        let mut input_values = Vec::with_capacity(labels.len());
        for l in &labels {
            if stimulus.value(l, 0).is_none() {
                return Err(if stimulus.is_empty() {
                    SimError::EmptyStimulus
                } else {
                    SimError::MissingStimulus(l.to_string())
                });
            }
            let seq = (0..stimulus.len())
                .map(|k| if stimulus.value(l, k) == Some(true) { 1.0 } else { -1.0 })
                .collect();
            input_values.push(seq);
        }

        let cells = layout.cells();
        let drive: Vec<Drive> = cells
            .iter()
            .map(|c| match &c.role {
                CellRole::Fixed(p) => Drive::Fixed(p.value()),
                CellRole::Input(l) => {
                    Drive::Input(labels.iter().position(|x| x == l).expect("label listed"))
                }
                _ => Drive::Free,
            })
            .collect();
        let free = (0..cells.len()).filter(|&i| drive[i] == Drive::Free).collect();
        let zone = cells.iter().map(|c| c.zone.index()).collect();

        let n = cells.len();
        let mut engine = Engine {
            graph,
            tech: tech.clone(),
            clock: clock.clone(),
            dt: sim.t_step,
            integrator: sim.integrator,
            period_steps: sim.steps_for(sim.input_period).max(1),
            inv_tau: 1.0 / tech.tau,
            drive,
            free,
            zone,
            input_values,
            lambda: vec![[0.0; 3]; n],
            scratch: vec![[0.0; 3]; n],
            k1: vec![[0.0; 3]; n],
            lz: vec![0.0; n],
            lz_next: vec![0.0; n],
            phi: vec![0.0; n],
            gn: vec![0.0; n],
            th: vec![0.0; n],
            env: vec![0.0; n],
            gamma: [0.0; 4],
            n: 0,
            ledger: EnergyLedger::new(graph),
            max_norm: 0.0,
        };
        engine.initialize()?;
        Ok(engine)
    }

    fn gammas_at(&self, t: f64) -> [f64; 4] {
        [0u8, 1, 2, 3].map(|z| self.clock.gamma_at(z, t))
    }

    fn driven_value(&self, cell: usize, step: u64) -> Option<f64> {
        match self.drive[cell] {
            Drive::Free => None,
            Drive::Fixed(p) => Some(p),
            Drive::Input(k) => {
                let seq = &self.input_values[k];
                let period = (step / self.period_steps) as usize;
                Some(seq[period.min(seq.len() - 1)])
            }
        }
    }

    /// Free cells start depolarized at the steady state of their
    /// uncoupled energy vector.
    fn initialize(&mut self) -> Result<(), SimError> {
        self.gamma = self.gammas_at(0.0);
        for i in 0..self.lambda.len() {
            if let Some(p) = self.driven_value(i, 0) {
                self.lambda[i] = [0.0, 0.0, p];
            }
        }
        for i in 0..self.lambda.len() {
            self.lz[i] = self.lambda[i][2];
        }
        for idx in 0..self.free.len() {
            let i = self.free[idx];
            let g = [-2.0 * self.gamma[self.zone[i] as usize], 0.0, 0.0];
            let gn = g[0].abs();
            let th = thermal_tanh(gn, self.tech.temperature);
            self.lambda[i] = [th, 0.0, 0.0];
            self.lz[i] = 0.0;
        }
        for idx in 0..self.free.len() {
            let i = self.free[idx];
            self.refresh(i, 0.0)?;
        }
        self.max_norm = self.free.iter().map(|&i| norm(self.lambda[i])).fold(0.0, f64::max);
        Ok(())
    }

    /// Recomputes Phi, |G|, tanh and the environment power of cell `i`
    /// from the current polarizations.
    fn refresh(&mut self, i: usize, t: f64) -> Result<(), SimError> {
        let phi = coulomb_term(i, self.graph, &self.lz);
        let g = [-2.0 * self.gamma[self.zone[i] as usize], 0.0, phi];
        let gn = (g[0] * g[0] + g[2] * g[2]).sqrt();
        if !(gn > 0.0) {
            return Err(SimError::DegenerateEnergyVector { cell: i, t });
        }
        let th = thermal_tanh(gn, self.tech.temperature);
        self.phi[i] = phi;
        self.gn[i] = gn;
        self.th[i] = th;
        self.env[i] = env_from(g, self.lambda[i], gn, th, self.inv_tau);
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.n
    }

    pub fn lambda(&self) -> &[[f64; 3]] {
        &self.lambda
    }

    /// Overrides the state of a free cell. Driven cells ignore this.
    pub fn set_lambda(&mut self, cell: usize, lambda: [f64; 3]) -> Result<(), SimError> {
        if self.drive[cell] != Drive::Free {
            return Ok(());
        }
        self.lambda[cell] = lambda;
        self.lz[cell] = lambda[2];
        let t = self.time();
        for idx in 0..self.free.len() {
            let i = self.free[idx];
            self.refresh(i, t)?;
        }
        self.max_norm = self.max_norm.max(norm(lambda));
        Ok(())
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Tunneling energy currently applied to `cell`.
    pub fn gamma_of(&self, cell: usize) -> f64 {
        self.gamma[self.zone[cell] as usize]
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// Advances every cell by one timestep and books the energy flows.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.dt;
        let n1 = self.n + 1;
        let t1 = n1 as f64 * dt;
        let gamma1 = self.gammas_at(t1);

        // predictor (the whole step for Euler)
        for &i in &self.free {
            let g = [-2.0 * self.gamma[self.zone[i] as usize], 0.0, self.phi[i]];
            let k = derivative(self.lambda[i], g, self.gn[i], self.th[i], self.inv_tau);
            let l = self.lambda[i];
            self.k1[i] = k;
            self.scratch[i] = [l[0] + dt * k[0], l[1] + dt * k[1], l[2] + dt * k[2]];
        }
        for i in 0..self.lambda.len() {
            if let Some(p) = self.driven_value(i, n1) {
                self.scratch[i] = [0.0, 0.0, p];
            }
            self.lz_next[i] = self.scratch[i][2];
        }

        if self.integrator == Integrator::Rk2 {
            for &i in &self.free {
                let phi = coulomb_term(i, self.graph, &self.lz_next);
                let g = [-2.0 * gamma1[self.zone[i] as usize], 0.0, phi];
                let gn = (g[0] * g[0] + g[2] * g[2]).sqrt();
                let th = thermal_tanh(gn, self.tech.temperature);
                let k2 = derivative(self.scratch[i], g, gn, th, self.inv_tau);
                let (l, k1) = (self.lambda[i], self.k1[i]);
                // k1 is no longer needed: keep the corrected state there
                self.k1[i] = [
                    l[0] + 0.5 * dt * (k1[0] + k2[0]),
                    l[1] + 0.5 * dt * (k1[1] + k2[1]),
                    l[2] + 0.5 * dt * (k1[2] + k2[2]),
                ];
            }
            for &i in &self.free {
                self.scratch[i] = self.k1[i];
                self.lz_next[i] = self.scratch[i][2];
            }
        }

        // energy bookkeeping against the new state
        for idx in 0..self.free.len() {
            let i = self.free[idx];
            let prev = CellSnapshot {
                gamma: self.gamma[self.zone[i] as usize],
                phi: self.phi[i],
                lambda: self.lambda[i],
            };
            let phi = self
                .ledger
                .coulomb_with_edges(i, self.graph, &self.lz, &self.lz_next);
            let curr = CellSnapshot {
                gamma: gamma1[self.zone[i] as usize],
                phi,
                lambda: self.scratch[i],
            };
            let g = curr.energy_vector();
            let gn = (g[0] * g[0] + g[2] * g[2]).sqrt();
            if !(gn > 0.0) {
                return Err(SimError::DegenerateEnergyVector { cell: i, t: t1 });
            }
            let th = thermal_tanh(gn, self.tech.temperature);
            let env1 = env_from(g, curr.lambda, gn, th, self.inv_tau);
            let d = increments_with_power(&prev, &curr, self.env[i], env1, dt);
            self.ledger.cells[i].add(&d);

            let norm = norm(curr.lambda);
            if !(norm <= DIVERGENCE_LIMIT) {
                return Err(SimError::Diverged {
                    cell: i,
                    t: t1,
                    norm,
                    t_step: dt,
                    tau: self.tech.tau,
                });
            }
            self.max_norm = self.max_norm.max(norm);
            self.phi[i] = phi;
            self.gn[i] = gn;
            self.th[i] = th;
            self.env[i] = env1;
        }

        std::mem::swap(&mut self.lambda, &mut self.scratch);
        std::mem::swap(&mut self.lz, &mut self.lz_next);
        self.gamma = gamma1;
        self.n = n1;
        Ok(())
    }
}

#[inline]
fn norm(l: [f64; 3]) -> f64 {
    (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt()
}

#[inline]
fn env_from(g: [f64; 3], l: [f64; 3], gn: f64, th: f64, inv_tau: f64) -> f64 {
    if inv_tau == 0.0 {
        return 0.0;
    }
    0.5 * (g[0] * l[0] + g[2] * l[2] + gn * th) * inv_tau
}

/// Quarter-cycle stages from each Input driver to each Output cell, found
/// by a 0/1 breadth-first search over nearby cells: a neighbor in the same
/// zone latches in the same stage, one in the next zone a stage later.
pub fn output_timing(layout: &Layout, graph: &NeighborGraph, tech: &TechnologyParams) -> Vec<OutputTiming> {
    let cells = layout.cells();
    let reach = 1.5 * tech.cell_distance * (1.0 + 1e-9);
    let drivers: Vec<usize> = cells
        .iter()
        .filter(|c| c.role.input_label().is_some())
        .map(|c| c.id)
        .collect();
    let mut stages_from = Vec::with_capacity(drivers.len());
    for &d in &drivers {
        let mut stage = vec![i64::MAX; cells.len()];
        stage[d] = cells[d].zone.index() as i64;
        let mut queue = VecDeque::from([d]);
        while let Some(u) = queue.pop_front() {
            for e in graph.edges(u) {
                let v = e.neighbor;
                if e.distance_nm > reach || !cells[v].role.is_free() {
                    continue;
                }
                let step = (cells[v].zone.index() as i64 - cells[u].zone.index() as i64).rem_euclid(4);
                if step > 1 {
                    continue;
                }
                let s = stage[u] + step;
                if s < stage[v] {
                    stage[v] = s;
                    if step == 0 {
                        queue.push_front(v);
                    } else {
                        queue.push_back(v);
                    }
                }
            }
        }
        stages_from.push(stage);
    }

    cells
        .iter()
        .filter_map(|c| c.role.output_label().map(|l| (c, l)))
        .map(|(c, label)| OutputTiming {
            cell: c.id,
            label: label.to_string(),
            zone: c.zone.index(),
            lags: drivers
                .iter()
                .zip(&stages_from)
                .filter(|(_, s)| s[c.id] != i64::MAX)
                .map(|(&d, s)| {
                    let z = cells[d].zone.index();
                    (z, s[c.id] - z as i64)
                })
                .collect(),
        })
        .collect()
}

fn probe_schedule(
    outputs: &[OutputTiming],
    clock: &ClockConfig,
    sim: &SimulationParams,
    steps: u64,
) -> Vec<(u64, usize, usize, usize)> {
    let cycle = clock.cycle_time();
    let hold = clock.phase_duration(ClockPhase::Hold);
    let mut plan = Vec::new();
    for o in outputs {
        let start = o.zone as f64 * clock.quarter() + clock.phase_start(ClockPhase::Hold);
        for m in 0.. {
            let h0 = start + m as f64 * cycle;
            if sim.steps_for(h0) > steps {
                break;
            }
            for slot in 0..PROBES_PER_HOLD {
                let t = h0 + hold * (slot as f64 + 0.5) / PROBES_PER_HOLD as f64;
                let n = sim.steps_for(t);
                if n <= steps {
                    plan.push((n, o.cell, m, slot));
                }
            }
        }
    }
    plan.sort_unstable();
    plan
}

pub fn run(
    layout: &Layout,
    tech: &TechnologyParams,
    clock: &ClockConfig,
    sim: &SimulationParams,
    stimulus: &StimulusPlan,
) -> Result<RawTrace, SimError> {
    run_with(layout, tech, clock, sim, stimulus, &RunOptions::default())
}

pub fn run_with(
    layout: &Layout,
    tech: &TechnologyParams,
    clock: &ClockConfig,
    sim: &SimulationParams,
    stimulus: &StimulusPlan,
    options: &RunOptions,
) -> Result<RawTrace, SimError> {
    tech.validate()?;
    let graph = NeighborGraph::build(layout, tech)?;
    run_on_graph(layout, &graph, tech, clock, sim, stimulus, options)
}

/// [`run_with`] on a prebuilt neighbor graph.
pub fn run_on_graph(
    layout: &Layout,
    graph: &NeighborGraph,
    tech: &TechnologyParams,
    clock: &ClockConfig,
    sim: &SimulationParams,
    stimulus: &StimulusPlan,
    options: &RunOptions,
) -> Result<RawTrace, SimError> {
    let mut engine = Engine::new(layout, graph, tech, clock, sim, stimulus)?;
    let steps = sim.total_steps();
    let cycle = clock.cycle_time();
    let full_cycles = (steps as f64 * sim.t_step / cycle + 1e-9).floor() as usize;
    let boundaries: Vec<u64> = (1..=full_cycles).map(|k| sim.steps_for(k as f64 * cycle)).collect();

    let outputs = output_timing(layout, graph, tech);
    let schedule = probe_schedule(&outputs, clock, sim, steps);

    let recorded: Vec<usize> = match &options.recording {
        Recording::Off => Vec::new(),
        Recording::All => (0..layout.len()).collect(),
        Recording::Cells(c) => c.iter().copied().filter(|&i| i < layout.len()).collect(),
    };
    let stride = sim.record_stride as u64;
    let mut samples = Vec::new();
    let record = |e: &Engine, samples: &mut Vec<TraceRow>| {
        for &c in &recorded {
            samples.push(TraceRow {
                t: e.time(),
                cell: c,
                lambda: e.lambda[c],
                gamma: e.gamma_of(c),
                phi: e.phi[c],
            });
        }
    };

    let mut cycle_ledgers = vec![engine.ledger().clone()];
    let mut probes = Vec::with_capacity(schedule.len());
    let mut next_probe = 0;
    let mut next_boundary = 0;
    let take_probes = |e: &Engine, next: &mut usize, probes: &mut Vec<Probe>| {
        while *next < schedule.len() && schedule[*next].0 == e.step_index() {
            let (_, cell, m, slot) = schedule[*next];
            probes.push(Probe {
                cell,
                cycle: m,
                slot,
                t: e.time(),
                lambda_z: e.lambda[cell][2],
            });
            *next += 1;
        }
    };

    if !recorded.is_empty() {
        record(&engine, &mut samples);
    }
    take_probes(&engine, &mut next_probe, &mut probes);
    for n in 1..=steps {
        engine.step()?;
        if !recorded.is_empty() && n % stride == 0 {
            record(&engine, &mut samples);
        }
        take_probes(&engine, &mut next_probe, &mut probes);
        if next_boundary < boundaries.len() && boundaries[next_boundary] == n {
            cycle_ledgers.push(engine.ledger().clone());
            next_boundary += 1;
        }
    }

    Ok(RawTrace {
        t_step: sim.t_step,
        steps,
        clock: clock.clone(),
        input_period: sim.input_period,
        stimulus: stimulus.clone(),
        record_stride: sim.record_stride,
        samples,
        max_norm: engine.max_norm(),
        ledger: engine.ledger,
        cycle_ledgers,
        probes,
        outputs,
    })
}

/// Polarization threshold below which a decoded bit is flagged.
pub const DECODE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedBit {
    pub value: bool,
    /// Polarization at the middle of the hold phase (0 if not sampled).
    pub lambda_z: f64,
    /// Mid-hold |lambda_z| below the threshold.
    pub weak: bool,
    /// |lambda_z| stays below the threshold for the whole hold phase, or
    /// the hold phase lies outside the run.
    pub undecidable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutputs {
    pub period: usize,
    /// Input bits of the period, in sorted label order.
    pub inputs: Vec<bool>,
    pub bits: BTreeMap<String, DecodedBit>,
}

fn bit_from_window(window: &[&Probe]) -> DecodedBit {
    let centre = window.iter().find(|pr| pr.slot == PROBES_PER_HOLD / 2);
    match centre {
        None => DecodedBit {
            value: false,
            lambda_z: 0.0,
            weak: true,
            undecidable: true,
        },
        Some(c) => {
            let peak = window.iter().map(|pr| pr.lambda_z.abs()).fold(0.0, f64::max);
            DecodedBit {
                value: c.lambda_z > 0.0,
                lambda_z: c.lambda_z,
                weak: c.lambda_z.abs() < DECODE_THRESHOLD,
                undecidable: peak < DECODE_THRESHOLD,
            }
        }
    }
}

/// Decodes each output from its last complete hold. Meant for runs whose
/// inputs never change, where every hold after the transient is alike.
pub fn decode_steady(trace: &RawTrace) -> BTreeMap<String, DecodedBit> {
    trace
        .outputs
        .iter()
        .map(|o| {
            let last = trace
                .probes
                .iter()
                .filter(|pr| pr.cell == o.cell)
                .fold(BTreeMap::<usize, usize>::new(), |mut acc, pr| {
                    *acc.entry(pr.cycle).or_default() += 1;
                    acc
                })
                .into_iter()
                .filter(|&(_, n)| n == PROBES_PER_HOLD)
                .map(|(m, _)| m)
                .max();
            let window: Vec<&Probe> = match last {
                Some(m) => trace.probes.iter().filter(|pr| pr.cell == o.cell && pr.cycle == m).collect(),
                None => Vec::new(),
            };
            (o.label.clone(), bit_from_window(&window))
        })
        .collect()
}


/// Reads every output in the hold phase that carries the result of each
/// input period.
pub fn decode_outputs(trace: &RawTrace) -> Vec<PeriodOutputs> {
    let clock = &trace.clock;
    let q = clock.quarter();
    let cycle = clock.cycle_time();
    let (p, s) = (clock.plateau_time, clock.slope_time);
    let eps = 1e-6 * cycle;
    (0..trace.periods())
        .map(|k| {
            let t_k = k as f64 * trace.input_period;
            let bits = trace
                .outputs
                .iter()
                .map(|o| {
                    let mid = if o.lags.is_empty() {
                        clock.next_phase_start(o.zone, ClockPhase::Hold, t_k - eps) + p / 2.0
                    } else {
                        o.lags
                            .iter()
                            .map(|&(z, lag)| {
                                clock.next_phase_start(z, ClockPhase::Switch, t_k - eps)
                                    + lag as f64 * q
                                    + s
                                    + p / 2.0
                            })
                            .fold(f64::MIN, f64::max)
                    };
                    let first_mid = o.zone as f64 * q + p + s + p / 2.0;
                    let m = ((mid - first_mid) / cycle).round();
                    let window: Vec<&Probe> = if m < 0.0 {
                        Vec::new()
                    } else {
                        trace
                            .probes
                            .iter()
                            .filter(|pr| pr.cell == o.cell && pr.cycle == m as usize)
                            .collect()
                    };
                    (o.label.clone(), bit_from_window(&window))
                })
                .collect();
            PeriodOutputs {
                period: k,
                inputs: trace.stimulus.bits(k),
                bits,
            }
        })
        .collect()
}
