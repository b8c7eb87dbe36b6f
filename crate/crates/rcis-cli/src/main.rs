//! `rcis` command-line tool.
//!
//! Exit codes: 0 success, 2 infeasible synthesis segment, 3 run aborted or a constraint was
//! violated, 4 certificate failure, 64 usage or malformed input, 65 bundle/scenario mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rcis::bundle::{self, Bundle};
use rcis::harness::{self, build_scenario_1, build_scenario_2, RunOptions, Scenario, Trace};
use rcis::plot;
use rcis::Error;

const EXIT_OK: u8 = 0;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_USAGE: u8 = 64;
const EXIT_MISMATCH: u8 = 65;

#[derive(Parser)]
#[command(name = "rcis", version, about = "Ellipsoidal invariant-set path synthesis and closed-loop simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the initial path bundle of a scenario.
    Synthesize {
        #[arg(long)]
        scenario: PathBuf,
        /// Bundle JSON to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop run; writes trace.csv, timing.csv, summary.json and SVG figures.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Pre-synthesized bundle; without it the initial path is synthesized on line.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add bounded radar noise.
        #[arg(long)]
        noise: bool,
        #[arg(long)]
        no_plots: bool,
    },
    /// Check nesting, admissibility and sampled one-step feasibility of a bundle.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate the figures of a trace CSV.
    Plot {
        /// trace.csv written by `run`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a built-in scenario (1 or 2) as TOML.
    Scenario {
        which: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure(u8, String);

type CmdResult = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_USAGE, e.to_string())
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, data: &str) -> CmdResult {
    fs::write(path, data).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn synthesize(scenario: &Path, out: &Path) -> CmdResult {
    let scn = load_scenario(scenario)?;
    let b = Bundle::synthesize(&scn, Default::default()).map_err(|e| match e {
        Error::Config(_) | Error::Io(_) | Error::Json(_) => usage(e),
        other => Failure(EXIT_INFEASIBLE, other.to_string()),
    })?;
    println!("{:>4} {:>9} {:>9} {:>6}  {}", "s", "x5_eq", "x6_eq", "rings", "shrink factors");
    for f in b.path.traversal() {
        let shrink: Vec<String> = f.provenance.iter().map(|p| format!("{:.4}", p.shrink)).collect();
        println!("{:>4} {:>9.3} {:>9.3} {:>6}  {}", f.s, f.x_eq[4], f.x_eq[5], f.chain.len(), shrink.join(" "));
    }
    write(out, &b.to_json().map_err(usage)?)?;
    info!("wrote {} families to {}", b.path.families.len(), out.display());
    Ok(())
}

/// First record in a path mode with a negative margin.
fn first_violation(trace: &Trace) -> Option<String> {
    const NAMES: [&str; 6] = ["u1", "u2", "x1", "x3", "x4", "x5"];
    trace.records.iter().find_map(|r| {
        r.decision.mode.indices()?;
        let k = (0..6).find(|&k| r.margins[k] < -1e-9)?;
        Some(format!("{} violated at t = {:.1} s (margin {:.3e})", NAMES[k], r.t, r.margins[k]))
    })
}

fn run(scenario: &Path, bundle: Option<&Path>, out: &Path, seed: u64, noise: bool, plots: bool) -> CmdResult {
    let scn = load_scenario(scenario)?;
    let b = match bundle {
        Some(p) => {
            let b = Bundle::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if !b.matches(&scn) {
                return Err(Failure(EXIT_MISMATCH, format!("bundle {} was not built from this scenario", p.display())));
            }
            Some(b)
        }
        None => None,
    };
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let opts = RunOptions { seed, noise, lenient: true, ..Default::default() };
    let trace = harness::run(&scn, b.as_ref().map(|b| &b.path), &opts).map_err(|e| Failure(EXIT_RUN, e.to_string()))?;
    let csv = harness::trace_csv(&trace);
    write(&out.join("trace.csv"), &csv)?;
    write(&out.join("timing.csv"), &harness::timing_csv(&trace))?;
    let summary = harness::summarize(&scn, &trace);
    write(&out.join("summary.json"), &serde_json::to_string_pretty(&summary).map_err(usage)?)?;
    if plots {
        for (name, svg) in plot::trace_figures(&csv).map_err(usage)? {
            write(&out.join(name), &svg)?;
        }
        if let Some(fp) = trace.paths.last() {
            let traj: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.x[4], r.x[5])).collect();
            write(&out.join("plane.svg"), &plot::plane_svg(fp, &traj, scn.constraints.lateral))?;
        }
    }
    println!(
        "{}: {} steps, {} replan(s), min |x_rel| {:.2} m, mean step {:.3} ms",
        scn.name,
        summary.steps,
        summary.replans,
        summary.min_abs_xrel,
        summary.timing.mean_ms
    );
    match first_violation(&trace) {
        Some(v) => Err(Failure(EXIT_RUN, v)),
        None => Ok(()),
    }
}

fn verify(path: &Path, samples: usize, seed: u64) -> CmdResult {
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let b = Bundle::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let outcome = bundle::verify(&b, samples, seed).map_err(|e| Failure(EXIT_VERIFY, e.to_string()))?;
    println!("{:>4} {:>3} {:>6} {:>12} {:>10} {:>10}", "s", "i", "nested", "adm_excess", "feasible", "worst");
    for r in &outcome.rows {
        println!(
            "{:>4} {:>3} {:>6} {:>12.3e} {:>5}/{:<4} {:>10.6}",
            r.s, r.i, r.nested, r.admissibility_excess, r.feasible, r.samples, r.worst_membership
        );
    }
    match outcome.first_failure() {
        Some((s, i)) => Err(Failure(EXIT_VERIFY, format!("certificate failed at s = {s}, i = {i}"))),
        None => Ok(()),
    }
}

fn replot(trace: &Path, out: &Path) -> CmdResult {
    let csv = fs::read_to_string(trace).map_err(|e| usage(format!("{}: {e}", trace.display())))?;
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    for (name, svg) in plot::trace_figures(&csv).map_err(usage)? {
        write(&out.join(name), &svg)?;
    }
    Ok(())
}

fn export(which: u8, out: &Path) -> CmdResult {
    let scn = match which {
        1 => build_scenario_1(),
        2 => build_scenario_2(),
        _ => return Err(usage("built-in scenarios are 1 and 2")),
    };
    write(out, &scn.to_toml().map_err(usage)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match &cli.cmd {
        Cmd::Synthesize { scenario, out } => synthesize(scenario, out),
        Cmd::Run { scenario, bundle, out, seed, noise, no_plots } => {
            run(scenario, bundle.as_deref(), out, *seed, *noise, !no_plots)
        }
        Cmd::Verify { bundle, samples, seed } => verify(bundle, *samples, *seed),
        Cmd::Plot { trace, out } => replot(trace, out),
        Cmd::Scenario { which, out } => export(*which, out),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
