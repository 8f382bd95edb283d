//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input, 3 not converged (or compare gap above
//! 1%), 4 oracle failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adjustment::{run_algorithm_1, AdjustParams};
use crate::oracle::solve_centralized;
use crate::protocol::{run_algorithm_a, validate_step_sizes, AlgoParams, Mode, ProtocolState};
use crate::rates::{link_rate, objective, Allocation};
use crate::scenario::{load_scenario, LinkKind, NetworkScenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNCONVERGED: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

/// Barrier tolerance of the centralized solver used by `oracle` and `compare`.
const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "relayopt",
    version,
    about = "Distributed power, channel and relay allocation for DF relay networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario and the dual step-size condition.
    Validate(CommonArgs),
    /// Run the distributed protocol with fixed channel budgets.
    Run(CommonArgs),
    /// Run the protocol with outer channel-budget adjustment.
    Adjust(CommonArgs),
    /// Solve the problem centrally.
    Oracle(CommonArgs),
    /// Run the protocol and the centralized solver and report the gap.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    /// Channel update period in rounds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Dual step size for every power constraint.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Proximal coefficient for every link.
    #[arg(long)]
    pub c: Option<f64>,
    /// Initial budget step size of the outer adjustment.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    /// Drop every relay and use direct transmission only.
    #[arg(long)]
    pub no_relays: bool,
    /// Move the proximal centres only after the dual iteration settles.
    #[arg(long)]
    pub classic_proximal: bool,
    /// Recorded in the outputs; the algorithms themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<i32, CliError>;

pub fn run(cli: Cli) -> i32 {
    let out = match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Adjust(a) => cmd_adjust(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load(args: &CommonArgs) -> Result<(NetworkScenario, AlgoParams), CliError> {
    let mut scenario = load_scenario(&args.scenario).map_err(CliError::input)?;
    if let Some(t) = args.theta_min {
        scenario = scenario.with_theta_min(t).map_err(CliError::input)?;
    }
    if args.no_relays {
        scenario = scenario.without_relays();
    }
    let mut params = AlgoParams::for_scenario(&scenario);
    if let Some(c) = args.c {
        params = params.with_uniform_c(c);
    }
    if let Some(a) = args.alpha {
        params = params.with_uniform_alpha(a);
    }
    if let Some(k) = args.k {
        params.k = k;
    }
    if let Some(n) = args.max_iters {
        params.max_iters = n;
    }
    if let Some(t) = args.stop_tol {
        params.stop_tol = t;
    }
    if args.classic_proximal {
        params.mode = Mode::ClassicProximal;
    }
    params.validate(&scenario).map_err(CliError::input)?;
    Ok((scenario, params))
}

fn out_dir(args: &CommonArgs) -> Result<&Path, CliError> {
    fs::create_dir_all(&args.out).map_err(|e| CliError::input(format!("{}: {e}", args.out.display())))?;
    Ok(&args.out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::input)?;
    fs::write(path, text + "\n").map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn cmd_validate(args: &CommonArgs) -> CliResult {
    let (scenario, params) = load(args)?;
    let report = validate_step_sizes(&params, &scenario);
    println!("{}", scenario.summary());
    println!("S = {}", report.s);
    println!(
        "step-size bound = {:e}, max alpha = {:e}, margin = {:e}",
        report.bound, report.max_alpha, report.margin
    );
    if !report.within_bound {
        println!(
            "warning: dual step size {:e} exceeds the convergence bound {:e}",
            report.max_alpha, report.bound
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SelectedLink {
    /// `null` for direct transmission.
    relay: Option<u32>,
    theta: f64,
    p_s: f64,
    p_r: f64,
    rate: f64,
}

#[derive(Debug, Serialize)]
struct StreamReport {
    id: u32,
    rate: f64,
    selected: Vec<SelectedLink>,
}

#[derive(Debug, Serialize)]
struct AllocationReport {
    objective: f64,
    converged: bool,
    iterations: usize,
    seed: u64,
    beta: Vec<f64>,
    streams: Vec<StreamReport>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    omega: Vec<f64>,
}

fn allocation_report(
    scenario: &NetworkScenario,
    state: &ProtocolState,
    converged: bool,
    iterations: usize,
    seed: u64,
) -> Result<AllocationReport, CliError> {
    let alloc = state.allocation();
    let theta_min = scenario.theta_min();
    let mut streams: Vec<StreamReport> = scenario
        .streams
        .iter()
        .map(|s| StreamReport {
            id: s.id,
            rate: 0.0,
            selected: Vec::new(),
        })
        .collect();
    for (i, link) in scenario.links().iter().enumerate() {
        let p = alloc.power[i];
        let rate = link_rate(scenario, i, &p, alloc.theta[i]).map_err(CliError::input)?;
        let entry = &mut streams[link.stream];
        entry.rate += rate;
        if alloc.theta[i] > theta_min * (1.0 + 1e-9) {
            entry.selected.push(SelectedLink {
                relay: match link.kind {
                    LinkKind::Direct => None,
                    LinkKind::Relayed { relay } => Some(scenario.relays[relay].id.0),
                },
                theta: alloc.theta[i],
                p_s: p.source,
                p_r: p.relay,
                rate,
            });
        }
    }
    Ok(AllocationReport {
        objective: objective(scenario, &alloc).map_err(CliError::input)?,
        converged,
        iterations,
        seed,
        beta: scenario.channel.beta.clone(),
        streams,
        mu: state.mu.clone(),
        nu: state.nu.clone(),
        omega: state.omega.clone(),
    })
}

pub fn cmd_run(args: &CommonArgs) -> CliResult {
    let (scenario, params) = load(args)?;
    validate_step_sizes(&params, &scenario);
    let dir = out_dir(args)?;
    let result = run_algorithm_a(&scenario, &params, None).map_err(CliError::input)?;
    result
        .trace
        .write_csv(&scenario, dir.join("trace.csv"))
        .map_err(CliError::input)?;
    let report = allocation_report(&scenario, &result.state, result.converged, result.iterations, args.seed)?;
    write_json(&dir.join("allocation.json"), &report)?;
    println!("total spectral efficiency = {:.6} bits/s/Hz", report.objective);
    println!("rounds = {}, converged = {}", result.iterations, result.converged);
    for s in &report.streams {
        let links: Vec<String> = s
            .selected
            .iter()
            .map(|l| l.relay.map_or("DT".to_string(), |r| format!("DF via relay {r}")))
            .collect();
        println!("stream {}: {:.6} ({})", s.id, s.rate, links.join(", "));
    }
    Ok(if result.converged { EXIT_OK } else { EXIT_UNCONVERGED })
}

#[derive(Debug, Serialize)]
struct AdjustReport {
    beta: Vec<f64>,
    objective: f64,
    converged: bool,
    outer_iterations: usize,
    any_inner_unconverged: bool,
    seed: u64,
}

pub fn cmd_adjust(args: &CommonArgs) -> CliResult {
    let (scenario, params) = load(args)?;
    let mut adjust = AdjustParams::for_scenario(&scenario);
    if let Some(d) = args.delta {
        adjust.delta = d;
    }
    if let Some(n) = args.max_iters {
        adjust.inner_iters = n;
    }
    let dir = out_dir(args)?;
    let result = run_algorithm_1(&scenario, &params, &adjust).map_err(CliError::input)?;
    result
        .trace
        .write_csv(&scenario, dir.join("outer_trace.csv"))
        .map_err(CliError::input)?;
    let report = AdjustReport {
        beta: result.beta.clone(),
        objective: result.objective,
        converged: result.converged,
        outer_iterations: result.trace.rows.len(),
        any_inner_unconverged: result.any_inner_unconverged,
        seed: args.seed,
    };
    write_json(&dir.join("adjust.json"), &report)?;
    let beta: Vec<String> = result.beta.iter().map(|b| format!("{b:.6}")).collect();
    println!("final beta = [{}]", beta.join(", "));
    println!("total spectral efficiency = {:.6} bits/s/Hz", result.objective);
    println!(
        "outer steps = {}, converged = {}",
        report.outer_iterations, result.converged
    );
    Ok(if result.converged { EXIT_OK } else { EXIT_UNCONVERGED })
}

#[derive(Debug, Serialize)]
struct OracleReport {
    objective: f64,
    gap_bound: f64,
    newton_steps: usize,
    allocation: Allocation,
}

pub fn cmd_oracle(args: &CommonArgs) -> CliResult {
    let (scenario, _) = load(args)?;
    let dir = out_dir(args)?;
    let r = solve_centralized(&scenario, ORACLE_TOL).map_err(|e| CliError {
        code: EXIT_ORACLE,
        message: e.to_string(),
    })?;
    write_json(
        &dir.join("oracle.json"),
        &OracleReport {
            objective: r.objective,
            gap_bound: r.kkt_residual,
            newton_steps: r.iterations,
            allocation: r.allocation.clone(),
        },
    )?;
    println!(
        "optimal total spectral efficiency = {:.9} bits/s/Hz (gap bound {:.1e})",
        r.objective, r.kkt_residual
    );
    Ok(EXIT_OK)
}

fn max_abs_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn cmd_compare(args: &CommonArgs) -> CliResult {
    let (scenario, params) = load(args)?;
    let run = run_algorithm_a(&scenario, &params, None).map_err(CliError::input)?;
    let oracle = solve_centralized(&scenario, ORACLE_TOL).map_err(|e| CliError {
        code: EXIT_ORACLE,
        message: e.to_string(),
    })?;
    let alloc = run.allocation();
    let ours = objective(&scenario, &alloc).map_err(CliError::input)?;
    let reference = objective(&scenario, &oracle.allocation).map_err(CliError::input)?;
    let gap = reference - ours;
    let rel = gap.abs() / reference.abs().max(f64::MIN_POSITIVE);
    let dp_s = max_abs_diff(
        alloc.power.iter().map(|p| p.source),
        oracle.allocation.power.iter().map(|p| p.source),
    );
    let dp_r = max_abs_diff(
        alloc.power.iter().map(|p| p.relay),
        oracle.allocation.power.iter().map(|p| p.relay),
    );
    let dtheta = max_abs_diff(alloc.theta.iter().copied(), oracle.allocation.theta.iter().copied());
    println!(
        "protocol objective = {ours:.9} ({} rounds, {} local solves, converged = {})",
        run.iterations, run.local_solves, run.converged
    );
    println!("oracle objective   = {reference:.9}");
    println!("gap = {gap:.3e} (relative {rel:.3e})");
    println!("max deviation: p_s {dp_s:.3e}, p_r {dp_r:.3e}, theta {dtheta:.3e}");
    Ok(if rel <= 0.01 && run.converged {
        EXIT_OK
    } else {
        EXIT_UNCONVERGED
    })
}
