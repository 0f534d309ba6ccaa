//! Report documents: a plain-text table, CSV and JSON.
//!
//! Energies in text and CSV are meV. Entries below `k_B T ln 2` are marked
//! with `*`. The JSON document echoes the complete [`RunConfig`] so a run
//! can be repeated from it, and carries no timestamps: identical runs give
//! identical bytes.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::consts::joules_to_mev;
use crate::harness::{CombinationResult, ConvergenceResult, RunConfig, SweepResult, TruthTableResult};

/// Tells readers which cells the energy sums cover.
pub const REPORTING_NOTE: &str =
    "sums cover design cells only; input drivers, input buffers and output buffers are excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReportBody {
    Run { result: CombinationResult },
    TruthTable { result: TruthTableResult },
    SlopeSweep { result: SweepResult },
    Convergence { result: ConvergenceResult },
    Table2 { tables: Vec<TruthTableResult> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// `builtin:<name>` or the layout file path.
    pub layout_source: String,
    pub reconstruction: bool,
    pub reporting_set: String,
}

impl Provenance {
    pub fn new(layout_source: impl Into<String>, reconstruction: bool) -> Self {
        Provenance {
            tool: "qcae".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            layout_source: layout_source.into(),
            reconstruction,
            reporting_set: REPORTING_NOTE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub provenance: Provenance,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: ReportBody,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values serialize") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "# qcae {}", self.provenance.version);
        let _ = writeln!(
            out,
            "# layout {}{}",
            self.provenance.layout_source,
            if self.provenance.reconstruction { " (reconstruction)" } else { "" }
        );
        let _ = writeln!(
            out,
            "# T = {} K, tau = {:e} s, slope = {:e} s ({:?}), t_step = {:e} s ({:?})",
            c.tech.temperature, c.tech.tau, c.clock.slope_time, c.clock.shape, c.t_step, c.integrator
        );
        let _ = writeln!(out, "# {}", self.provenance.reporting_set);
        out.push('\n');
        match &self.body {
            ReportBody::Run { result } => render_run(&mut out, result),
            ReportBody::TruthTable { result } => render_truth_table(&mut out, result),
            ReportBody::SlopeSweep { result } => render_sweep(&mut out, result),
            ReportBody::Convergence { result } => render_convergence(&mut out, result),
            ReportBody::Table2 { tables } => render_table2(&mut out, tables),
        }
        out
    }

    /// Machine-readable rows of the body.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.body {
            ReportBody::Run { result } => {
                w.write_record([
                    "cell", "zone", "role", "e_clk_meV", "e_io_meV", "e_env_meV", "e_total_meV", "e_in_meV",
                    "e_out_meV", "residual",
                ])?;
                for r in &result.report.cells {
                    w.write_record([
                        r.cell.to_string(),
                        r.zone.to_string(),
                        r.role.clone(),
                        r.e_clk_mev.to_string(),
                        r.e_io_mev.to_string(),
                        r.e_env_mev.to_string(),
                        r.e_total_mev.to_string(),
                        opt(r.e_in_mev),
                        opt(r.e_out_mev),
                        r.residual.to_string(),
                    ])?;
                }
            }
            ReportBody::TruthTable { result } => {
                write_combination_header(&mut w, false)?;
                for r in &result.rows {
                    write_combination(&mut w, None, r)?;
                }
            }
            ReportBody::Table2 { tables } => {
                write_combination_header(&mut w, true)?;
                for t in tables {
                    for r in &t.rows {
                        write_combination(&mut w, Some(&t.circuit), r)?;
                    }
                }
            }
            ReportBody::SlopeSweep { result } => write_sweep(&mut w, result)?,
            ReportBody::Convergence { result } => {
                w.write_record(["t_step_s", "sum_env_meV", "epsilon_env", "error"])?;
                for r in &result.rows {
                    w.write_record([
                        r.t_step.to_string(),
                        opt(r.sum_env.map(joules_to_mev)),
                        opt(r.epsilon_env),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `slope_s,sum_env_meV` rows of a sweep.
pub fn write_sweep_csv<W: io::Write>(sweep: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    write_sweep(&mut w, sweep)?;
    w.flush()?;
    Ok(())
}

fn write_sweep<W: io::Write>(w: &mut csv::Writer<W>, sweep: &SweepResult) -> csv::Result<()> {
    w.write_record(["slope_s", "sum_env_meV"])?;
    for r in &sweep.rows {
        w.write_record([r.slope.to_string(), joules_to_mev(r.sum_env).to_string()])?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_combination_header<W: io::Write>(w: &mut csv::Writer<W>, with_circuit: bool) -> csv::Result<()> {
    let mut head = vec![
        "inputs",
        "sum_env_meV",
        "sum_clk_meV",
        "sum_io_meV",
        "epsilon_env",
        "below_limit",
        "logic_correct",
        "flags",
    ];
    if with_circuit {
        head.insert(0, "circuit");
    }
    w.write_record(head)
}

fn write_combination<W: io::Write>(
    w: &mut csv::Writer<W>,
    circuit: Option<&str>,
    r: &CombinationResult,
) -> csv::Result<()> {
    let mut rec = vec![
        r.input_string(),
        joules_to_mev(r.report.sum_env).to_string(),
        joules_to_mev(r.report.sum_clk).to_string(),
        joules_to_mev(r.report.sum_io).to_string(),
        r.report.epsilon_env.to_string(),
        r.report.below_landauer.to_string(),
        r.logic_correct().map(|b| b.to_string()).unwrap_or_default(),
        r.flags().join(";"),
    ];
    if let Some(c) = circuit {
        rec.insert(0, c.to_string());
    }
    w.write_record(rec)
}

/// `0.001*` style entry.
fn mark(joules: f64, limit: f64) -> String {
    format!("{:.3}{}", joules_to_mev(joules), if joules < limit { "*" } else { " " })
}

fn logic_cell(r: &CombinationResult) -> &'static str {
    match r.logic_correct() {
        Some(true) => "ok",
        Some(false) => "WRONG",
        None => "-",
    }
}

fn render_run(out: &mut String, r: &CombinationResult) {
    let limit = r.report.landauer_limit;
    let _ = writeln!(out, "inputs {}", r.input_string());
    let _ = writeln!(
        out,
        "{:>5} {:>4} {:<12} {:>9} {:>9} {:>10} {:>9} {:>9} {:>9}",
        "cell", "zone", "role", "e_clk", "e_io", "e_env", "e_total", "e_in", "e_out"
    );
    for c in &r.report.cells {
        let env = mark(c.e_env_mev * crate::consts::MEV, limit);
        let _ = writeln!(
            out,
            "{:>5} {:>4} {:<12} {:>9.3} {:>9.3} {:>10} {:>9.3} {:>9} {:>9}",
            c.cell,
            c.zone,
            c.role,
            c.e_clk_mev,
            c.e_io_mev,
            env,
            c.e_total_mev,
            c.e_in_mev.map(|v| format!("{v:.3}")).unwrap_or_default(),
            c.e_out_mev.map(|v| format!("{v:.3}")).unwrap_or_default(),
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "sum e_env  {} meV", mark(r.report.sum_env, limit));
    let _ = writeln!(out, "sum e_clk  {:.3} meV", joules_to_mev(r.report.sum_clk));
    let _ = writeln!(out, "sum e_io   {:.3} meV", joules_to_mev(r.report.sum_io));
    let _ = writeln!(out, "epsilon_env {:.3e}", r.report.epsilon_env);
    let _ = writeln!(out, "limit kT ln2 {:.4} meV, below: {}", joules_to_mev(limit), r.report.below_landauer);
    if !r.decoded.is_empty() {
        let bits: Vec<String> = r
            .decoded
            .iter()
            .map(|(l, d)| format!("{l}={}{}", d.value as u8, if d.undecidable { "?" } else if d.weak { "~" } else { "" }))
            .collect();
        let _ = writeln!(out, "outputs {} ({})", bits.join(" "), logic_cell(r));
    }
}

fn render_truth_table(out: &mut String, t: &TruthTableResult) {
    let _ = writeln!(out, "{} [{}]", t.circuit, t.input_labels.join(","));
    let _ = writeln!(out, "{:>8} {:>11} {:>6} {:>10}  flags", "inputs", "e_env[meV]", "logic", "eps_env");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{:>8} {:>11} {:>6} {:>10.2e}  {}",
            r.input_string(),
            mark(r.report.sum_env, t.landauer_limit),
            logic_cell(r),
            r.report.epsilon_env,
            r.flags().join(" ")
        );
    }
    let _ = writeln!(
        out,
        "logic correct {}/{}, below limit {}/{}",
        t.logic_correct_count(),
        t.rows.len(),
        t.below_limit_count(),
        t.rows.len()
    );
}

fn render_sweep(out: &mut String, s: &SweepResult) {
    let _ = writeln!(out, "{} slope sweep", s.circuit);
    let _ = writeln!(out, "{:>12} {:>11}", "slope[ps]", "e_env[meV]");
    for r in &s.rows {
        let _ = writeln!(out, "{:>12.3} {:>11}", r.slope * 1e12, mark(r.sum_env, s.landauer_limit));
    }
    match s.monotone {
        Some(m) => {
            let _ = writeln!(out, "strictly decreasing: {m}");
        }
        None => {
            let _ = writeln!(out, "single slope, no monotonicity check");
        }
    }
    if let Some(first) = s.first_slope_below_limit() {
        let _ = writeln!(out, "first slope below limit: {:.3} ps", first * 1e12);
    }
}

fn render_convergence(out: &mut String, c: &ConvergenceResult) {
    let inputs: String = c.inputs.iter().map(|&b| if b { '1' } else { '0' }).collect();
    let _ = writeln!(out, "{} convergence, inputs {inputs}", c.circuit);
    let _ = writeln!(out, "{:>12} {:>11} {:>11}  error", "t_step[s]", "e_env[meV]", "eps_env");
    for r in &c.rows {
        let _ = writeln!(
            out,
            "{:>12.3e} {:>11} {:>11}  {}",
            r.t_step,
            r.sum_env.map(|e| format!("{:.4}", joules_to_mev(e))).unwrap_or_else(|| "-".into()),
            r.epsilon_env.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into()),
            r.error.as_deref().unwrap_or("")
        );
    }
    let _ = writeln!(out, "eps_env decreasing with step: {}", c.decreasing);
    match c.largest_converged_step {
        Some(dt) => {
            let _ = writeln!(out, "largest step with eps_env <= 1%: {dt:e} s");
        }
        None => {
            let _ = writeln!(out, "no step reached eps_env <= 1%");
        }
    }
}

fn render_table2(out: &mut String, tables: &[TruthTableResult]) {
    let width = tables.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    let _ = write!(out, "{:<16}", "circuit");
    for i in 0..width {
        let bits = tables
            .iter()
            .find(|t| t.rows.len() == width)
            .map(|t| t.rows[i].input_string())
            .unwrap_or_default();
        let _ = write!(out, " {bits:>8}");
    }
    let _ = writeln!(out, "  logic");
    for t in tables {
        let _ = write!(out, "{:<16}", t.circuit);
        for i in 0..width {
            match t.rows.get(i) {
                Some(r) => {
                    let _ = write!(out, " {:>8}", mark(r.report.sum_env, t.landauer_limit));
                }
                None => {
                    let _ = write!(out, " {:>8}", "");
                }
            }
        }
        let _ = writeln!(out, "  {}/{}", t.logic_correct_count(), t.rows.len());
    }
    if let Some(t) = tables.first() {
        let _ = writeln!(out, "\n* below k_B T ln 2 = {:.4} meV", joules_to_mev(t.landauer_limit));
    }
}
