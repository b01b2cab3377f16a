use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cascadesim::engine::{
    analyze_tiers, run_cascade, write_outputs, PreparedCase, RunConfig, RunMethod,
};
use cascadesim::metrics::{end_state_compare, monte_carlo, McOptions};
use cascadesim::modal::mode_report_csv;
use cascadesim::runfile::RunFile;

#[derive(Parser)]
#[command(
    name = "cascadesim",
    version,
    about = "Cascading-failure dynamic simulation of power grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cascade and write events.jsonl, end_state.json and timeline.csv.
    Run {
        runfile: PathBuf,
        /// Output directory (overrides the run file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random multi-node outages, reference vs candidate methods.
    Mc {
        runfile: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the same contingency with two methods and compare end states.
    Compare {
        runfile: PathBuf,
        #[arg(long, default_value = "tm")]
        reference: String,
        #[arg(long, default_value = "bem_pc")]
        candidate: String,
    },
    /// Oscillatory modes of every tier of a plain backward-Euler run.
    Modes {
        runfile: PathBuf,
        /// Machines listed per mode.
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn method(name: &str) -> cascadesim::Result<RunMethod> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| {
        cascadesim::Error::InvalidArgument(format!("unknown method {name} (tm, bem, bem_pc, rk4)"))
    })
}

fn load(runfile: &PathBuf) -> cascadesim::Result<(RunFile, PreparedCase, RunConfig)> {
    let rf = RunFile::from_path(runfile)?;
    let case = rf.load_case()?;
    let cfg = rf.run_config(&case)?;
    Ok((rf, PreparedCase::new(case)?, cfg))
}

fn execute(cli: Cli) -> cascadesim::Result<()> {
    match cli.command {
        Command::Run { runfile, out } => {
            let (rf, prep, cfg) = load(&runfile)?;
            let run = run_cascade(&prep, &cfg)?;
            println!(
                "{}: {:?} at t = {:.2} s, {} tiers, {} dependent line outages, demand loss {:.2}%, {:.3} s wall",
                run.method.name(),
                run.termination,
                run.end_state.t,
                run.tiers.len(),
                run.dependent_line_outages.len(),
                run.end_state.demand_loss_pct(),
                run.runtime_s
            );
            if let Some(dir) = out.or_else(|| rf.output_dir()) {
                write_outputs(&run, &dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Mc {
            runfile,
            n,
            seed,
            workers,
            out,
        } => {
            let (rf, prep, cfg) = load(&runfile)?;
            let mut opts = rf.monte_carlo.clone().unwrap_or_else(McOptions::default);
            opts.n = n.unwrap_or(opts.n);
            opts.seed = seed.unwrap_or(opts.seed);
            opts.workers = workers.unwrap_or(opts.workers);
            let summary = monte_carlo(&prep, &cfg, &opts)?;
            for m in &summary.methods {
                println!(
                    "{:>6}: mean R {:.4}, median R {:.3}, median runtime ratio {:.2}, resilient {}, collapsed {}, corrected {}",
                    m.method.name(),
                    m.mean_r,
                    m.median_r,
                    m.median_runtime_ratio,
                    m.resilient,
                    m.collapsed,
                    m.corrected
                );
            }
            if let Some(dir) = out.or_else(|| rf.output_dir()) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("mc_summary.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
                println!("wrote {}", dir.join("mc_summary.json").display());
            }
        }
        Command::Compare {
            runfile,
            reference,
            candidate,
        } => {
            let (_, prep, cfg) = load(&runfile)?;
            let a = run_cascade(
                &prep,
                &RunConfig {
                    method: method(&reference)?,
                    ..cfg.clone()
                },
            )?;
            let b = run_cascade(
                &prep,
                &RunConfig {
                    method: method(&candidate)?,
                    ..cfg
                },
            )?;
            let report = end_state_compare(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Modes {
            runfile,
            top_k,
            out,
        } => {
            let (_, prep, cfg) = load(&runfile)?;
            let (_, analyses) = analyze_tiers(&prep, &cfg)?;
            let rows: Vec<_> = analyses.iter().map(|a| (a.tier, a.modes.clone())).collect();
            let ids: Vec<u32> = prep.case.machines.iter().map(|m| m.id).collect();
            let csv = mode_report_csv(&rows, |k| format!("G{}", ids[k]), top_k);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
