//! `mcbf run | plot | verify`.
//!
//! Exit codes: 0 on success, 1 on usage, I/O or parse errors, 2 when the
//! safety filter became infeasible, 3 on a solver failure, 4 when an oracle
//! check fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcbf_core::logio::{load_csv, to_csv_string, to_json, write_atomic, LogMeta, TrajectoryFile};
use mcbf_core::plot::{render, PlotKind};
use mcbf_core::scenario::load_scenario;
use mcbf_core::sim::{invariance_audit, run, Termination};
use mcbf_core::verify::{format_table, run_suite, VerifyOptions};
use mcbf_core::Error;

#[derive(Parser)]
#[command(name = "mcbf", version, about = "Multi-barrier safety filter for tractor-trailer robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv, metrics.json and audit.json.
    Run {
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Enforce the MPC state boxes as hard constraints.
        #[arg(long)]
        hard_state_boxes: bool,
        /// Allow penalized slack in the safety filter instead of stopping.
        #[arg(long)]
        filter_slack: bool,
        /// Add the input boxes to the safety filter.
        #[arg(long)]
        filter_input_boxes: bool,
        /// Linearize at the current state instead of the reference.
        #[arg(long)]
        linearize_at_state: bool,
    },
    /// Render a logged trajectory as SVG.
    Plot {
        trajectory: PathBuf,
        /// path, inputs, barriers or footprint.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical oracle suite and print a pass/fail table.
    Verify {
        /// Add DELTA to the named matrix entry before checking, e.g. a_57=1e-3.
        #[arg(long, value_name = "ENTRY=DELTA")]
        perturb: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            hard_state_boxes,
            filter_slack,
            filter_input_boxes,
            linearize_at_state,
        } => cmd_run(
            &scenario,
            &out,
            Flags {
                hard_state_boxes,
                filter_slack,
                filter_input_boxes,
                linearize_at_state,
            },
        ),
        Command::Plot { trajectory, kind, out } => cmd_plot(&trajectory, &kind, &out),
        Command::Verify { perturb } => cmd_verify(perturb.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

struct Flags {
    hard_state_boxes: bool,
    filter_slack: bool,
    filter_input_boxes: bool,
    linearize_at_state: bool,
}

fn cmd_run(path: &Path, out: &Path, flags: Flags) -> Result<u8, Error> {
    let mut sc = load_scenario(path)?;
    sc.mpc.hard_state_boxes |= flags.hard_state_boxes;
    sc.mpc.linearize_at_state |= flags.linearize_at_state;
    sc.safety.slack |= flags.filter_slack;
    sc.safety.input_boxes |= flags.filter_input_boxes;

    let result = run(&sc)?;
    let audit = invariance_audit(&result.log, &sc)?;
    std::fs::create_dir_all(out)?;
    let file = TrajectoryFile {
        meta: LogMeta::from_run(&sc, &result),
        log: result.log.clone(),
    };
    write_atomic(&out.join("trajectory.csv"), to_csv_string(&file)?.as_bytes())?;
    write_atomic(&out.join("metrics.json"), to_json(&result.metrics)?.as_bytes())?;
    write_atomic(&out.join("audit.json"), to_json(&audit)?.as_bytes())?;

    let m = &result.metrics;
    println!(
        "{}: {} steps, collision {}, filter active on {} steps, audit {}",
        sc.name,
        m.steps,
        m.collision,
        m.filter_activation_count,
        if audit.passed { "passed" } else { "failed" }
    );
    Ok(match &m.termination {
        Termination::Completed => 0,
        Termination::FilterInfeasible(msg) => {
            eprintln!("stopped: safety filter infeasible: {msg}");
            2
        }
        Termination::SolverFailure(msg) => {
            eprintln!("stopped: solver failure: {msg}");
            3
        }
        Termination::DomainError(msg) => {
            eprintln!("stopped: {msg}");
            1
        }
    })
}

fn cmd_plot(trajectory: &Path, kind: &str, out: &Path) -> Result<u8, Error> {
    let kind: PlotKind = kind.parse()?;
    let file = load_csv(trajectory)?;
    write_atomic(out, render(&file, kind).as_bytes())?;
    Ok(0)
}

fn cmd_verify(perturb: Option<&str>) -> Result<u8, Error> {
    let entry_perturbation = match perturb {
        None => None,
        Some(spec) => {
            let (name, delta) = spec
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected ENTRY=DELTA, got '{spec}'")))?;
            let delta: f64 = delta
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad perturbation '{delta}'")))?;
            Some((name.to_string(), delta))
        }
    };
    let results = run_suite(&VerifyOptions {
        entry_perturbation,
        ..Default::default()
    })?;
    print!("{}", format_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(if failed == 0 { 0 } else { 4 })
}
