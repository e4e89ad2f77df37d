//! `cca`: run cooperative collision-avoidance scenarios from the command line.

mod catalog;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cca_core::sim::plot::{write_plot, PlotKind};
use cca_core::sim::trace::write_trace;
use cca_core::sim::{compare_modes, run_with, RunOptions, Scenario, SimulationTrace};
use cca_core::tuning::Preset;

use report::{mode_label, side_by_side, table, RunReport};

const EXIT_COLLISION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "cca", version, about = "Cooperative collision-avoidance simulator")]
struct Cli {
    /// Directory of additional scenario files (*.toml).
    #[arg(long, global = true, env = "CCA_SCENARIOS", value_name = "DIR")]
    scenarios: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List shipped and user scenarios.
    List,
    /// Run one scenario and write its trace.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Force V2X fully on or fully off; defaults to the scenario's bus settings.
        #[arg(long, value_enum)]
        v2x: Option<OnOff>,
    },
    /// Run a scenario with V2X on and off and compare the outcomes.
    Compare {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Turn a trace into plot-ready CSV.
    Plotdata {
        /// Trace CSV written by `run` or `compare`.
        trace: PathBuf,
        /// displacement-time or path-xy.
        #[arg(long, value_parser = parse_kind)]
        kind: PlotKind,
        /// Output file; defaults to `<trace>_<kind>.csv` next to the trace.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Shipped scenario name, user scenario name or path to a scenario file.
    scenario: String,
    /// Bus random seed; overrides the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trace files.
    #[arg(long, value_name = "DIR", default_value = "cca-out")]
    out: PathBuf,
    /// Maneuver tuning preset.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Keep simulating after a collision instead of halting.
    #[arg(long)]
    keep_going: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<PlotKind, String> {
    s.parse().map_err(|e: cca_core::sim::plot::PlotError| e.to_string())
}

struct Failure(u8, String);

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure(EXIT_CONFIG, message.to_string())
    }
}

fn prepare(args: &RunArgs, user_dir: Option<&Path>) -> Result<Scenario, Failure> {
    let mut sc = catalog::resolve(&args.scenario, user_dir).map_err(Failure::config)?;
    if let Some(seed) = args.seed {
        sc = sc.with_seed(seed);
    }
    if let Some(preset) = args.preset {
        sc = sc.with_preset(preset);
    }
    Ok(sc)
}

fn save(trace: &SimulationTrace, out: &Path) -> Result<RunReport, Failure> {
    let stem = format!("{}_{}_{}", trace.meta.scenario, trace.meta.preset, mode_label(trace.meta.v2x));
    let (csv, json) = write_trace(trace, out, &stem)
        .map_err(|e| Failure::config(format!("cannot write traces to {}: {e}", out.display())))?;
    Ok(RunReport::new(trace, csv, json))
}

fn cmd_list(user_dir: Option<&Path>) -> Result<u8, Failure> {
    let listing = catalog::list(user_dir);
    for w in &listing.warnings {
        eprintln!("warning: {w}");
    }
    let width = listing.entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &listing.entries {
        println!("{:<width$}  {:<8}  {}", e.name, if e.origin == "shipped" { "shipped" } else { "user" }, e.description);
    }
    Ok(0)
}

fn cmd_run(args: &RunArgs, v2x: Option<OnOff>, user_dir: Option<&Path>) -> Result<u8, Failure> {
    let mut sc = prepare(args, user_dir)?;
    if let Some(flag) = v2x {
        sc = sc.with_v2x(matches!(flag, OnOff::On));
    }
    let trace = run_with(&sc, RunOptions { keep_going: args.keep_going }).map_err(Failure::config)?;
    let report = save(&trace, &args.out)?;
    print!("{}", table(&report));
    Ok(if report.metrics.collision_occurred { EXIT_COLLISION } else { 0 })
}

fn cmd_compare(args: &RunArgs, user_dir: Option<&Path>) -> Result<u8, Failure> {
    let sc = prepare(args, user_dir)?;
    let (on, off) = if args.keep_going {
        let opts = RunOptions { keep_going: true };
        let on = run_with(&sc.clone().with_v2x(true), opts).map_err(Failure::config)?;
        let off = run_with(&sc.with_v2x(false), opts).map_err(Failure::config)?;
        (on, off)
    } else {
        compare_modes(&sc).map_err(Failure::config)?
    };
    let (on, off) = (save(&on, &args.out)?, save(&off, &args.out)?);
    print!("{}", side_by_side(&on, &off));
    Ok(if on.metrics.collision_occurred { EXIT_COLLISION } else { 0 })
}

fn cmd_plotdata(trace: &Path, kind: PlotKind, out: Option<PathBuf>) -> Result<u8, Failure> {
    let out = out.unwrap_or_else(|| {
        let stem = trace.file_stem().unwrap_or_default().to_string_lossy();
        trace.with_file_name(format!("{stem}_{kind}.csv"))
    });
    let written = write_plot(kind, trace, &out).map_err(Failure::config)?;
    println!("{}", written.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let user_dir = cli.scenarios.as_deref();
    let result = match cli.command {
        Command::List => cmd_list(user_dir),
        Command::Run { common, v2x } => cmd_run(&common, v2x, user_dir),
        Command::Compare { common } => cmd_compare(&common, user_dir),
        Command::Plotdata { trace, kind, out } => cmd_plotdata(&trace, kind, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
