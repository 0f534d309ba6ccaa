//! `qcae`: run QCA energy simulations from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qca_energy::electrostatics::NeighborGraph;
use qca_energy::engine::Recording;
use qca_energy::harness::{
    convergence, parse_combination, prepare, simulate_combination_traced, slope_sweep, table2,
    truth_table, HarnessError, RunConfig,
};
use qca_energy::layout::{builtin_circuit, parse_layout, Layout};
use qca_energy::report::{write_sweep_csv, Provenance, ReportBody, ReportDocument};
use qca_energy::{Integrator, SimError, SlopeShape};

#[derive(Parser, Debug)]
#[command(name = "qcae", version, about = "Clocked QCA simulation with per-cell energy accounting")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Temperature, K
    #[arg(long, global = true)]
    temp: Option<f64>,
    /// Relaxation time, s
    #[arg(long, global = true, value_parser = parse_seconds)]
    tau: Option<f64>,
    /// Tunneling energy of the relax plateau, J
    #[arg(long, global = true)]
    gamma_high: Option<f64>,
    /// Tunneling energy of the hold plateau, J
    #[arg(long, global = true)]
    gamma_low: Option<f64>,
    #[arg(long, global = true)]
    epsilon_r: Option<f64>,
    /// Interaction cutoff, nm
    #[arg(long, global = true)]
    r_effect: Option<f64>,
    /// Integration step, s (accepts fs/ps/ns suffixes)
    #[arg(long, global = true, value_parser = parse_seconds)]
    t_step: Option<f64>,
    /// Simulated time, s; rounded to whole clock cycles
    #[arg(long, global = true, value_parser = parse_seconds)]
    t_sim: Option<f64>,
    /// Clock slope duration, s
    #[arg(long, global = true, value_parser = parse_seconds)]
    slope: Option<f64>,
    /// Plateau duration, s (default: equal to the slope)
    #[arg(long, global = true, value_parser = parse_seconds)]
    plateau: Option<f64>,
    /// ramp | gaussian
    #[arg(long, global = true)]
    shape: Option<SlopeShape>,
    /// euler | rk2
    #[arg(long, global = true)]
    integrator: Option<Integrator>,
    /// Built-in circuit name
    #[arg(long, global = true)]
    circuit: Option<String>,
    /// Native (.qca) or JSON layout file
    #[arg(long, global = true, conflicts_with = "circuit")]
    layout_file: Option<PathBuf>,
    /// Output prefix; files are `<out>.report.txt` and so on
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input combination in sorted label order, e.g. `01`
    #[arg(long, global = true)]
    inputs: Option<String>,
    /// Skip buffer insertion
    #[arg(long, global = true)]
    no_buffers: bool,
    /// Start from the parameters echoed in an earlier `.report.json`
    #[arg(long, global = true)]
    params: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one input combination
    Run {
        /// Also write `<out>.trace.csv`
        #[arg(long)]
        trace: bool,
        /// Keep every n-th step in the trace
        #[arg(long, default_value_t = 1000)]
        stride: usize,
    },
    /// Simulate every input combination and check the logic
    TruthTable,
    /// Truth-table-averaged dissipation for several clock slopes
    SlopeSweep {
        #[arg(long, value_delimiter = ',', value_parser = parse_seconds,
              default_value = "1ps,3ps,10ps,30ps,100ps")]
        slopes: Vec<f64>,
    },
    /// Balance residual for several step sizes
    Convergence {
        #[arg(long, value_delimiter = ',', value_parser = parse_seconds,
              default_value = "4e-17,2e-17,1e-17")]
        steps: Vec<f64>,
    },
    /// Truth tables of all standard and reversible gates
    Table2,
    /// Kink energies of every interacting cell pair
    DumpKink,
}

/// Seconds, optionally with an `fs`, `ps`, `ns` or `s` suffix.
fn parse_seconds(text: &str) -> Result<f64, String> {
    let t = text.trim();
    // dividing by an exact power of ten keeps `5fs` == 5e-15
    let (num, per_second) = [("fs", 1e15), ("ps", 1e12), ("ns", 1e9), ("s", 1.0)]
        .iter()
        .find_map(|&(suffix, d)| t.strip_suffix(suffix).map(|n| (n, d)))
        .unwrap_or((t, 1.0));
    num.trim()
        .parse::<f64>()
        .map(|v| v / per_second)
        .map_err(|e| format!("`{text}` is not a time: {e}"))
}

enum Failure {
    Config(String),
    Simulation(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Sim(
                SimError::Diverged { .. } | SimError::DegenerateEnergyVector { .. },
            ) => Failure::Simulation(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Simulation(format!("{}: {e}", path.display()))
}

fn load_layout(g: &GlobalOpts) -> Result<(Layout, String), Failure> {
    match (&g.circuit, &g.layout_file) {
        (Some(name), None) => builtin_circuit(name)
            .map(|l| (l, format!("builtin:{name}")))
            .map_err(|e| Failure::Config(e.to_string())),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            parse_layout(&text)
                .map(|l| (l, path.display().to_string()))
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
        }
        _ => Err(Failure::Config("give --circuit <name> or --layout-file <path>".into())),
    }
}

fn build_config(g: &GlobalOpts) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.params {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ReportDocument::from_json(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
                .config
        }
        None => RunConfig::standard(),
    };
    let t = &mut cfg.tech;
    if let Some(v) = g.temp {
        t.temperature = v;
    }
    if let Some(v) = g.tau {
        t.tau = v;
    }
    if let Some(v) = g.gamma_high {
        t.gamma_high = v;
    }
    if let Some(v) = g.gamma_low {
        t.gamma_low = v;
    }
    if let Some(v) = g.epsilon_r {
        t.epsilon_r = v;
    }
    if let Some(v) = g.r_effect {
        t.r_effect = v;
    }
    cfg.clock.gamma_high = cfg.tech.gamma_high;
    cfg.clock.gamma_low = cfg.tech.gamma_low;
    if let Some(v) = g.slope {
        cfg = cfg.with_slope(v);
    }
    if let Some(v) = g.plateau {
        cfg.clock.plateau_time = v;
    }
    if let Some(v) = g.shape {
        cfg.clock.shape = v;
    }
    if let Some(v) = g.t_step {
        cfg.t_step = v;
    }
    if let Some(v) = g.integrator {
        cfg.integrator = v;
    }
    if g.no_buffers {
        cfg.buffers = false;
    }
    cfg.tech.validate().map_err(|e| Failure::Config(e.to_string()))?;
    cfg.clock.validate().map_err(|e| Failure::Config(e.to_string()))?;
    if !(cfg.t_step > 0.0 && cfg.t_step.is_finite()) {
        return Err(Failure::Config(format!("t_step must be positive, got {}", cfg.t_step)));
    }
    if let Some(t_sim) = g.t_sim {
        let cycles = (t_sim / cfg.clock.cycle_time()).round();
        if !(cycles >= 1.0) {
            return Err(Failure::Config(format!(
                "t_sim = {t_sim:e} s is shorter than one clock cycle ({:e} s)",
                cfg.clock.cycle_time()
            )));
        }
        cfg.cycles = Some(cycles as usize);
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit(doc: &ReportDocument, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        None => print!("{}", doc.to_text()),
        Some(prefix) => {
            write(&with_suffix(prefix, ".report.txt"), doc.to_text().as_bytes())?;
            write(&with_suffix(prefix, ".report.json"), doc.to_json().as_bytes())?;
            let mut csv = Vec::new();
            doc.write_csv(&mut csv).map_err(|e| io_err(prefix, e))?;
            write(&with_suffix(prefix, ".report.csv"), &csv)?;
        }
    }
    Ok(())
}

fn combination(layout: &Layout, g: &GlobalOpts) -> Result<Vec<bool>, Failure> {
    match &g.inputs {
        Some(text) => Ok(parse_combination(layout, text)?),
        None => Ok(vec![false; layout.input_labels().len()]),
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let cfg = build_config(g)?;
    if let Command::Table2 = cli.command {
        let tables = table2(&cfg)?;
        let doc = ReportDocument {
            provenance: Provenance::new("builtin:table2", true),
            config: cfg,
            body: ReportBody::Table2 { tables },
        };
        return emit(&doc, g.out.as_deref());
    }

    let (layout, source) = load_layout(g)?;
    let provenance = Provenance::new(source, layout.is_reconstruction());
    let body = match &cli.command {
        Command::Run { trace, stride } => {
            let inputs = combination(&layout, g)?;
            let mut cfg = cfg.clone();
            cfg.record_stride = (*stride).max(1);
            let recording = if *trace { Recording::All } else { Recording::Off };
            let (result, raw) = simulate_combination_traced(&layout, &cfg, &inputs, recording)?;
            if *trace {
                let prefix = g
                    .out
                    .as_deref()
                    .ok_or_else(|| Failure::Config("--trace needs --out".into()))?;
                let path = with_suffix(prefix, ".trace.csv");
                let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                raw.write_csv(std::io::BufWriter::new(file)).map_err(|e| io_err(&path, e))?;
            }
            ReportBody::Run { result }
        }
        Command::TruthTable => ReportBody::TruthTable {
            result: truth_table(&layout, &cfg)?,
        },
        Command::SlopeSweep { slopes } => {
            let result = slope_sweep(&layout, &cfg, slopes)?;
            if let Some(prefix) = &g.out {
                let mut csv = Vec::new();
                write_sweep_csv(&result, &mut csv).map_err(|e| io_err(prefix, e))?;
                write(&with_suffix(prefix, ".sweep.csv"), &csv)?;
            }
            ReportBody::SlopeSweep { result }
        }
        Command::Convergence { steps } => {
            let inputs = combination(&layout, g)?;
            ReportBody::Convergence {
                result: convergence(&layout, &cfg, &inputs, steps)?,
            }
        }
        Command::DumpKink => {
            let prepared = prepare(&layout, &cfg.tech, cfg.buffers)?;
            let graph = NeighborGraph::build(&prepared.layout, &cfg.tech).map_err(|e| Failure::Config(e.to_string()))?;
            let mut csv = Vec::new();
            graph.write_csv(&mut csv).map_err(|e| Failure::Simulation(e.to_string()))?;
            match &g.out {
                Some(prefix) => write(&with_suffix(prefix, ".kink.csv"), &csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
            return Ok(());
        }
        Command::Table2 => unreachable!("handled above"),
    };
    let doc = ReportDocument {
        provenance,
        config: cfg,
        body,
    };
    emit(&doc, g.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("qcae: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Simulation(msg)) => {
            eprintln!("qcae: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_suffixes() {
        assert_eq!(parse_seconds("100ps").unwrap(), 100e-12);
        assert_eq!(parse_seconds("1e-17").unwrap(), 1e-17);
        assert_eq!(parse_seconds("2 ns").unwrap(), 2e-9);
        assert_eq!(parse_seconds("5fs").unwrap(), 5e-15);
        assert!(parse_seconds("fast").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
