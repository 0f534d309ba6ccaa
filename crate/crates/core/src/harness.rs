//! Experiment orchestration: buffer insertion, per-combination runs,
//! truth-table sweeps, clock-slope sweeps and step-size convergence.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocking::{ClockConfig, SlopeShape};
use crate::consts::joules_to_mev;
use crate::electrostatics::NeighborGraph;
use crate::energy::{finalize_report, flow_partitions, landauer_limit, EnergyReport, ReportError};
use crate::engine::{
    decode_steady, output_timing, run_on_graph, DecodedBit, Integrator, RawTrace, Recording,
    RunOptions, SimError, SimulationParams, StimulusPlan,
};
use crate::layout::{bits_to_string, builtin_circuit, index_to_bits, Cell, CellRole, Layout, LayoutError};
use crate::params::TechnologyParams;

/// Buffer cells placed in front of every input and behind every output.
pub const BUFFER_CELLS: usize = 2;

/// Relative balance residual accepted by the convergence study.
pub const CONVERGENCE_TARGET: f64 = 0.01;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("no room for buffer cells next to `{0}`")]
    NoRoomForBuffers(String),
    #[error("layout `{0}` has no expected logic to check against")]
    NoExpectedLogic(String),
    #[error("input combination `{given}` does not match the {width} input(s) {labels:?}")]
    BadCombination {
        given: String,
        width: usize,
        labels: Vec<String>,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Everything that determines a run apart from the layout and the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tech: TechnologyParams,
    pub clock: ClockConfig,
    pub t_step: f64,
    pub integrator: Integrator,
    pub buffers: bool,
    /// Full cycles simulated; `None` picks pipeline fill + measured + guard.
    pub cycles: Option<usize>,
    pub record_stride: usize,
}

impl RunConfig {
    pub fn standard() -> Self {
        let tech = TechnologyParams::default();
        let clock = ClockConfig::standard(&tech);
        RunConfig {
            tech,
            clock,
            t_step: 1e-17,
            integrator: Integrator::Rk2,
            buffers: true,
            cycles: None,
            record_stride: 1000,
        }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.clock.slope_time = slope;
        self.clock.plateau_time = slope;
        self
    }

    pub fn with_step(mut self, t_step: f64) -> Self {
        self.t_step = t_step;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_shape(mut self, shape: SlopeShape) -> Self {
        self.clock.shape = shape;
        self
    }
}

/// A layout ready for simulation, with buffers and the cells whose energy
/// is reported.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub layout: Layout,
    /// Design cells (not buffers, drivers or fixed cells).
    pub reporting: Vec<usize>,
    pub cell_info: Vec<(u8, String)>,
}

fn role_name(role: &CellRole) -> String {
    match role {
        CellRole::Normal => "normal".into(),
        CellRole::Input(l) => format!("input:{l}"),
        CellRole::Output(l) => format!("output:{l}"),
        CellRole::Fixed(p) => format!("fixed:{:+}", p.value() as i32),
    }
}

/// Unit direction pointing away from the design cells near `cell`.
fn outward(cell: &Cell, cells: &[Cell], pitch: f64) -> Vec<(f64, f64)> {
    let (mut sx, mut sy) = (0.0, 0.0);
    for c in cells {
        if c.id == cell.id || c.layer != cell.layer {
            continue;
        }
        let (dx, dy) = (cell.x - c.x, cell.y - c.y);
        if dx.hypot(dy) <= 1.5 * pitch {
            sx += dx;
            sy += dy;
        }
    }
    let primary = if sx.abs() >= sy.abs() {
        (if sx < 0.0 { -1.0 } else { 1.0 }, 0.0)
    } else {
        (0.0, if sy < 0.0 { -1.0 } else { 1.0 })
    };
    let mut dirs = vec![primary];
    for d in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
        if d != primary {
            dirs.push(d);
        }
    }
    dirs
}

fn is_free_spot(x: f64, y: f64, layer: u32, cells: &[Cell], pitch: f64) -> bool {
    cells
        .iter()
        .all(|c| c.layer != layer || (c.x - x).hypot(c.y - y) > 0.5 * pitch)
}

/// Adds [`BUFFER_CELLS`] buffers ahead of every input (clocked one zone
/// earlier, fed by a driver cell) and behind every output (one zone
/// later). The original input cells become ordinary design cells.
pub fn prepare(layout: &Layout, tech: &TechnologyParams, buffers: bool) -> Result<Prepared, HarnessError> {
    let design = layout.cells();
    let mut cells: Vec<Cell> = design.to_vec();
    let mut reporting: Vec<usize> = design
        .iter()
        .filter(|c| c.role.is_free() || (buffers && c.role.input_label().is_some()))
        .map(|c| c.id)
        .collect();

    if buffers {
        let pitch = tech.cell_distance;
        for c in design {
            let (zone, label, count_with_driver, is_input) = match &c.role {
                CellRole::Input(l) => (c.zone.prev(), l.clone(), BUFFER_CELLS + 1, true),
                CellRole::Output(l) => (c.zone.next(), l.clone(), BUFFER_CELLS, false),
                _ => continue,
            };
            let dir = outward(c, design, pitch)
                .into_iter()
                .find(|&(dx, dy)| {
                    (1..=count_with_driver).all(|k| {
                        let k = k as f64 * pitch;
                        is_free_spot(c.x + dx * k, c.y + dy * k, c.layer, &cells, pitch)
                    })
                })
                .ok_or_else(|| HarnessError::NoRoomForBuffers(label.clone()))?;
            for k in 1..=count_with_driver {
                let role = if is_input && k == count_with_driver {
                    CellRole::Input(label.clone())
                } else {
                    CellRole::Normal
                };
                let d = k as f64 * pitch;
                cells.push(Cell::new(c.x + dir.0 * d, c.y + dir.1 * d, c.layer, zone, role));
            }
            if is_input {
                cells[c.id].role = CellRole::Normal;
            }
        }
    }

    let prepared = Layout::new(layout.name(), cells, layout.expected_logic().cloned())?;
    reporting.sort_unstable();
    let cell_info = prepared
        .cells()
        .iter()
        .map(|c| {
            let role = match design.get(c.id) {
                Some(d) => role_name(&d.role),
                None if c.role.input_label().is_some() => "driver".into(),
                None => "buffer".into(),
            };
            (c.zone.index(), role)
        })
        .collect();
    Ok(Prepared {
        layout: prepared.with_reconstruction(layout.is_reconstruction()),
        reporting,
        cell_info,
    })
}

/// Quarter cycles from the drivers to the last output buffer.
fn pipeline_depth(prepared: &Prepared, graph: &NeighborGraph, tech: &TechnologyParams) -> i64 {
    output_timing(&prepared.layout, graph, tech)
        .iter()
        .flat_map(|o| o.lags.iter().map(|&(_, lag)| lag))
        .max()
        .unwrap_or(4)
        + 1
}

/// Transient cycles needed before the measured cycle.
pub fn warmup_cycles(depth_quarters: i64) -> usize {
    ((depth_quarters.max(0) as usize) + 3) / 4 + 1
}

/// Result of one constant-input run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    /// Input bits in sorted label order.
    pub inputs: Vec<bool>,
    pub report: EnergyReport,
    pub decoded: BTreeMap<String, DecodedBit>,
    /// Expected output bits by label, when the layout has expected logic.
    pub expected: Option<BTreeMap<String, bool>>,
    pub cycles: usize,
    pub max_norm: f64,
}

impl CombinationResult {
    pub fn input_string(&self) -> String {
        bits_to_string(&self.inputs)
    }

    pub fn sum_env_mev(&self) -> f64 {
        self.report.sum_env_mev()
    }

    /// `None` without expected logic.
    pub fn logic_correct(&self) -> Option<bool> {
        let expected = self.expected.as_ref()?;
        Some(expected.iter().all(|(label, &bit)| {
            self.decoded
                .get(label)
                .is_some_and(|d| !d.undecidable && d.value == bit)
        }))
    }

    pub fn flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, d) in &self.decoded {
            if d.undecidable {
                out.push(format!("{label}:undecidable"));
            } else if d.weak {
                out.push(format!("{label}:weak"));
            }
        }
        out
    }
}

fn expected_for(layout: &Layout, inputs: &[bool]) -> Option<BTreeMap<String, bool>> {
    let logic = layout.expected_logic()?;
    let row = logic.lookup(inputs)?;
    Some(logic.outputs().iter().cloned().zip(row.iter().copied()).collect())
}

/// Parses a combination such as `"01"` against the sorted input labels.
pub fn parse_combination(layout: &Layout, text: &str) -> Result<Vec<bool>, HarnessError> {
    let labels = layout.input_labels();
    let bits: Option<Vec<bool>> = text
        .chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect();
    match bits {
        Some(b) if b.len() == labels.len() => Ok(b),
        _ => Err(HarnessError::BadCombination {
            given: text.to_string(),
            width: labels.len(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// Simulates one input combination held constant for the whole run and
/// reports the energy of the measured cycle.
pub fn simulate_combination(
    layout: &Layout,
    cfg: &RunConfig,
    inputs: &[bool],
) -> Result<CombinationResult, HarnessError> {
    simulate_combination_traced(layout, cfg, inputs, Recording::Off).map(|(r, _)| r)
}

/// [`simulate_combination`] that also returns the raw trace.
pub fn simulate_combination_traced(
    layout: &Layout,
    cfg: &RunConfig,
    inputs: &[bool],
    recording: Recording,
) -> Result<(CombinationResult, RawTrace), HarnessError> {
    cfg.tech.validate().map_err(SimError::from)?;
    let labels = layout.input_labels();
    if inputs.len() != labels.len() {
        return Err(HarnessError::BadCombination {
            given: bits_to_string(inputs),
            width: labels.len(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        });
    }
    let prepared = prepare(layout, &cfg.tech, cfg.buffers)?;
    let graph = NeighborGraph::build(&prepared.layout, &cfg.tech).map_err(SimError::from)?;
    let cycles = cfg
        .cycles
        .unwrap_or_else(|| warmup_cycles(pipeline_depth(&prepared, &graph, &cfg.tech)) + 2);
    let cycle = cfg.clock.cycle_time();
    let sim = SimulationParams {
        t_step: cfg.t_step,
        t_sim: cycles as f64 * cycle,
        input_period: cycle,
        record_stride: cfg.record_stride,
        integrator: cfg.integrator,
    };
    let stimulus = StimulusPlan::constant(&labels, inputs);
    let options = RunOptions { recording };
    let trace = run_on_graph(&prepared.layout, &graph, &cfg.tech, &cfg.clock, &sim, &stimulus, &options)?;
    let mut report = finalize_report(&trace.cycle_ledgers, &prepared.cell_info, &prepared.reporting, &cfg.tech)?;
    let partitions = flow_partitions(&prepared.layout, &graph, &cfg.tech);
    report
        .attach_split(&trace.cycle_ledgers, &graph, &partitions)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let decoded = decode_steady(&trace);
    Ok((
        CombinationResult {
            inputs: inputs.to_vec(),
            expected: expected_for(layout, inputs),
            decoded,
            cycles,
            max_norm: trace.max_norm,
            report,
        },
        trace,
    ))
}

/// Every input combination of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTableResult {
    pub circuit: String,
    pub input_labels: Vec<String>,
    pub rows: Vec<CombinationResult>,
    pub landauer_limit: f64,
}

impl TruthTableResult {
    pub fn logic_correct_count(&self) -> usize {
        self.rows.iter().filter(|r| r.logic_correct() == Some(true)).count()
    }

    pub fn below_limit_count(&self) -> usize {
        self.rows.iter().filter(|r| r.report.below_landauer).count()
    }

    pub fn mean_sum_env(&self) -> f64 {
        self.rows.iter().map(|r| r.report.sum_env).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn row(&self, inputs: &str) -> Option<&CombinationResult> {
        self.rows.iter().find(|r| r.input_string() == inputs)
    }
}

/// Runs all `2^n` combinations in parallel, in binary counting order.
pub fn truth_table(layout: &Layout, cfg: &RunConfig) -> Result<TruthTableResult, HarnessError> {
    let labels = layout.input_labels();
    let n = labels.len();
    let rows = (0..1usize << n)
        .into_par_iter()
        .map(|i| simulate_combination(layout, cfg, &index_to_bits(i, n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TruthTableResult {
        circuit: layout.name().to_string(),
        input_labels: labels.iter().map(|s| s.to_string()).collect(),
        rows,
        landauer_limit: landauer_limit(cfg.tech.temperature),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub slope: f64,
    /// Σe_env averaged over all input combinations, joules.
    pub sum_env: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub circuit: String,
    pub rows: Vec<SweepRow>,
    /// Strictly decreasing with growing slope; `None` for a single slope.
    pub monotone: Option<bool>,
    pub landauer_limit: f64,
}

impl SweepResult {
    /// Shortest swept slope whose dissipation is below the limit.
    pub fn first_slope_below_limit(&self) -> Option<f64> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.slope.total_cmp(&b.slope));
        rows.iter().find(|r| r.sum_env < self.landauer_limit).map(|r| r.slope)
    }
}

/// Truth-table-averaged Σe_env for each clock slope. Plateaus follow the
/// slope so every phase keeps lasting a quarter cycle.
pub fn slope_sweep(layout: &Layout, cfg: &RunConfig, slopes: &[f64]) -> Result<SweepResult, HarnessError> {
    if slopes.is_empty() {
        return Err(HarnessError::Invalid("slope sweep needs at least one slope".into()));
    }
    let rows = slopes
        .iter()
        .map(|&s| {
            let t = truth_table(layout, &cfg.clone().with_slope(s))?;
            Ok(SweepRow {
                slope: s,
                sum_env: t.mean_sum_env(),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let monotone = (rows.len() > 1).then(|| {
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.slope.total_cmp(&b.slope));
        sorted.windows(2).all(|w| w[1].sum_env < w[0].sum_env)
    });
    Ok(SweepResult {
        circuit: layout.name().to_string(),
        rows,
        monotone,
        landauer_limit: landauer_limit(cfg.tech.temperature),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t_step: f64,
    pub sum_env: Option<f64>,
    pub epsilon_env: Option<f64>,
    /// Diagnostic when the run failed (e.g. divergence).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub circuit: String,
    pub inputs: Vec<bool>,
    pub rows: Vec<ConvergenceRow>,
    /// Largest step meeting [`CONVERGENCE_TARGET`].
    pub largest_converged_step: Option<f64>,
    /// ε_env shrinks as the step shrinks (over the successful rows).
    pub decreasing: bool,
}

/// Repeats one combination at several step sizes.
pub fn convergence(
    layout: &Layout,
    cfg: &RunConfig,
    inputs: &[bool],
    steps: &[f64],
) -> Result<ConvergenceResult, HarnessError> {
    if steps.is_empty() {
        return Err(HarnessError::Invalid("convergence study needs at least one step".into()));
    }
    let rows: Vec<ConvergenceRow> = steps
        .par_iter()
        .map(|&dt| match simulate_combination(layout, &cfg.clone().with_step(dt), inputs) {
            Ok(r) => ConvergenceRow {
                t_step: dt,
                sum_env: Some(r.report.sum_env),
                epsilon_env: Some(r.report.epsilon_env),
                error: None,
            },
            Err(e) => ConvergenceRow {
                t_step: dt,
                sum_env: None,
                epsilon_env: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut ok: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.epsilon_env.map(|e| (r.t_step, e)))
        .collect();
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decreasing = ok.windows(2).all(|w| w[0].1 < w[1].1);
    let largest = ok
        .iter()
        .filter(|(_, e)| *e <= CONVERGENCE_TARGET)
        .map(|(dt, _)| *dt)
        .fold(None, |acc: Option<f64>, dt| Some(acc.map_or(dt, |a| a.max(dt))));
    Ok(ConvergenceResult {
        circuit: layout.name().to_string(),
        inputs: inputs.to_vec(),
        rows,
        largest_converged_step: largest,
        decreasing,
    })
}

/// Circuits of the comparison table, in row order.
pub const TABLE2_CIRCUITS: &[&str] = &[
    "or_std",
    "and_std",
    "maj_std",
    "or_rev",
    "and_rev",
    "maj_rev",
    "half_adder_rev",
];

/// Truth tables of every circuit in [`TABLE2_CIRCUITS`].
pub fn table2(cfg: &RunConfig) -> Result<Vec<TruthTableResult>, HarnessError> {
    TABLE2_CIRCUITS
        .iter()
        .map(|name| truth_table(&builtin_circuit(name)?, cfg))
        .collect()
}

/// Formats joules as meV with three decimals.
pub fn mev3(joules: f64) -> String {
    format!("{:.3}", joules_to_mev(joules))
}
