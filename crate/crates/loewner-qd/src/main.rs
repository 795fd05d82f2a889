//! Command-line surface: runs one JSON job per invocation and emits CSV
//! samples plus an optional two-panel SVG figure.
//!
//! Exit codes: 0 on success, 1 when the job file or flags cannot be used
//! (nothing is written), 2 when the run itself fails or ends early — in the
//! early-ended case the partial CSV is still written and its final
//! `stop_reason` cell says why. Set `LOEWNER_QD_LOG` to `off`, `info` or
//! `debug` to control diagnostics on stderr.

mod job;
mod output;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use job::{CheckJob, MultiJob, OracleJob, OraclePlan, RadialJob, TraceJob};
use loewner_qd::chordal::{self, StopReason};
use loewner_qd::multislit::multi_trace;
use loewner_qd::oracle::{polyline_driving, sup_deviation};
use loewner_qd::radial::{disc_polyline_driving, radial_trace};
use loewner_qd::RunConfig;

#[derive(Parser)]
#[command(name = "loewner-qd", version, about = "Loewner driving functions of \
trajectory-arc slits of quadratic differentials", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace trajectory arcs growing from the real line
    Trace(JobArgs),
    /// Trace several slits jointly
    Multi(JobArgs),
    /// Trace a slit growing in the unit disc
    Radial(JobArgs),
    /// Extract a driving function by welding a polyline slit
    Oracle(JobArgs),
    /// Trace a path and weld it independently, then compare
    Check(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// JSON job description
    #[arg(long)]
    job: PathBuf,
    /// Write the samples as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write a two-panel SVG figure here (trace jobs only)
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Override the job's base step
    #[arg(long)]
    h: Option<f64>,
    /// Override the job's Taylor order
    #[arg(long)]
    order: Option<usize>,
}

fn main() -> ExitCode {
    let filters = std::env::var("LOEWNER_QD_LOG").unwrap_or_else(|_| "off".into());
    env_logger::Builder::new()
        .parse_filters(&filters)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Trace(args) => cmd_trace(args),
        Cmd::Multi(args) => cmd_multi(args),
        Cmd::Radial(args) => cmd_radial(args),
        Cmd::Oracle(args) => cmd_oracle(args),
        Cmd::Check(args) => cmd_check(args),
    }
}

/// The job file or flags cannot be used; nothing was written.
fn load_failed() -> ExitCode {
    ExitCode::from(1)
}

/// The run itself failed or ended early.
fn run_failed() -> ExitCode {
    ExitCode::from(2)
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad job file {}: {e}", path.display()))
}

fn override_config(cfg: &mut RunConfig, args: &JobArgs) {
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(order) = args.order {
        cfg.order = order;
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExitCode> {
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        load_failed()
    })
}

fn no_svg_here(args: &JobArgs) -> Result<(), ExitCode> {
    if args.svg.is_some() {
        eprintln!("error: --svg is only available for trace jobs");
        return Err(load_failed());
    }
    Ok(())
}

/// Natural completion means the final arc's stop rule was what ended the
/// run; anything else is a partial result.
fn completion_code(reason: StopReason) -> ExitCode {
    match reason {
        StopReason::CapacityReached | StopReason::LengthReached => ExitCode::SUCCESS,
        StopReason::LoopDetected | StopReason::Corner => run_failed(),
    }
}

fn cmd_trace(args: JobArgs) -> ExitCode {
    let mut job: TraceJob = match load(&args.job) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return load_failed();
        }
    };
    override_config(&mut job.config, &args);
    let plan = match job.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return load_failed();
        }
    };
    let result = match chordal::trace(&plan.qd, plan.launch_x, &plan.arcs, &plan.cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: trace failed: {e}");
            return run_failed();
        }
    };
    if let Some(path) = &args.csv {
        if let Err(code) = write_file(path, &output::trace_csv(&result)) {
            return code;
        }
    }
    if let Some(path) = &args.svg {
        if let Err(code) = write_file(path, &output::trace_svg(&result)) {
            return code;
        }
    }
    let summary = json!({
        "command": "trace",
        "samples": result.samples.len(),
        "t_end": result.state.t,
        "arclength": result.state.arclength,
        "arcs_completed": result.arcs.len(),
        "stop_reason": result.stop_reason.as_str(),
    });
    println!("{summary}");
    completion_code(result.stop_reason)
}

fn cmd_multi(args: JobArgs) -> ExitCode {
    if let Err(code) = no_svg_here(&args) {
        return code;
    }
    let mut job: MultiJob = match load(&args.job) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return load_failed();
        }
    };
    override_config(&mut job.config, &args);
    let plan = match job.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return load_failed();
        }
    };
    let result = match multi_trace(&plan.qd, &plan.starts, &plan.weights, plan.t_end, &plan.cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: multi trace failed: {e}");
            return run_failed();
        }
    };
    if let Some(path) = &args.csv {
        if let Err(code) = write_file(path, &output::multi_csv(&result)) {
            return code;
        }
    }
    let summary = json!({
        "command": "multi",
        "samples": result.samples.len(),
        "t_end": result.state.t,
        "stop_reason": result.stop_reason.as_str(),
    });
    println!("{summary}");
    completion_code(result.stop_reason)
}

fn cmd_radial(args: JobArgs) -> ExitCode {
    if let Err(code) = no_svg_here(&args) {
        return code;
    }
    let mut job: RadialJob = match load(&args.job) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return load_failed();
        }
    };
    override_config(&mut job.config, &args);
    let plan = match job.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return load_failed();
        }
    };
    let result = match radial_trace(&plan.qd, &plan.start, plan.t_end, &plan.cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: radial trace failed: {e}");
            return run_failed();
        }
    };
    if let Some(path) = &args.csv {
        if let Err(code) = write_file(path, &output::radial_csv(&result)) {
            return code;
        }
    }
    let max_residual = result.samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let max_defect = result
        .samples
        .iter()
        .map(|s| s.modulus_defect)
        .fold(0.0, f64::max);
    let summary = json!({
        "command": "radial",
        "samples": result.samples.len(),
        "t_end": result.state.t,
        "max_invariant_residual": max_residual,
        "max_modulus_defect": max_defect,
        "stop_reason": result.stop_reason.as_str(),
    });
    println!("{summary}");
    completion_code(result.stop_reason)
}

fn cmd_oracle(args: JobArgs) -> ExitCode {
    if let Err(code) = no_svg_here(&args) {
        return code;
    }
    if args.h.is_some() || args.order.is_some() {
        eprintln!("error: --h/--order only apply to tracing jobs");
        return load_failed();
    }
    let job: OracleJob = match load(&args.job) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return load_failed();
        }
    };
    let plan = match job.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return load_failed();
        }
    };
    let samples = match plan {
        OraclePlan::HalfPlane {
            vertices,
            n_subdiv,
            tol,
        } => match polyline_driving(&vertices, n_subdiv, tol) {
            Ok(r) => r.samples,
            Err(e) => {
                eprintln!("error: welding failed: {e}");
                return run_failed();
            }
        },
        OraclePlan::Disc {
            vertices,
            n_subdiv,
            tol,
        } => match disc_polyline_driving(&vertices, n_subdiv, tol) {
            Ok(r) => r.samples,
            Err(e) => {
                eprintln!("error: welding failed: {e}");
                return run_failed();
            }
        },
    };
    if let Some(path) = &args.csv {
        if let Err(code) = write_file(path, &output::oracle_csv(&samples)) {
            return code;
        }
    }
    let max_residual = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let summary = json!({
        "command": "oracle",
        "samples": samples.len(),
        "t_end": samples.last().map(|s| s.t).unwrap_or(0.0),
        "max_replay_residual": max_residual,
    });
    println!("{summary}");
    ExitCode::SUCCESS
}

fn cmd_check(args: JobArgs) -> ExitCode {
    if let Err(code) = no_svg_here(&args) {
        return code;
    }
    let mut job: CheckJob = match load(&args.job) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return load_failed();
        }
    };
    override_config(&mut job.config, &args);
    let plan = match job.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return load_failed();
        }
    };
    let traced = match chordal::trace(
        &loewner_qd::qdiff::unit_qd(),
        plan.launch_x,
        &plan.arcs,
        &plan.cfg,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: trace failed: {e}");
            return run_failed();
        }
    };
    let welded = match polyline_driving(&plan.vertices, plan.n_subdiv, plan.tol) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: welding failed: {e}");
            return run_failed();
        }
    };
    if let Some(path) = &args.csv {
        if let Err(code) = write_file(path, &output::trace_csv(&traced)) {
            return code;
        }
    }
    let trace_driving: Vec<(f64, f64)> =
        traced.samples.iter().map(|s| (s.t, s.xi)).collect();
    let deviation = match sup_deviation(&trace_driving, &welded.driving()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: the two driving functions do not overlap: {e}");
            return run_failed();
        }
    };
    let completed = matches!(
        traced.stop_reason,
        StopReason::CapacityReached | StopReason::LengthReached
    );
    let pass = completed && deviation < plan.tolerance;
    let summary = json!({
        "command": "check",
        "deviation": deviation,
        "tolerance": plan.tolerance,
        "trace_stop_reason": traced.stop_reason.as_str(),
        "pass": pass,
    });
    println!("{summary}");
    if pass {
        ExitCode::SUCCESS
    } else {
        run_failed()
    }
}
