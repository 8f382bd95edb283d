//! The distributed two-layer algorithm, simulated as synchronous rounds.
//!
//! One round: every link solves its proximal local problem (`step_power`),
//! sources and relays update their power prices (`step_dual`), every link
//! re-solves at the new prices to move its proximal centre
//! (`step_auxiliary`), and every `k` rounds the control nodes reallocate
//! channel shares at the new centres (`step_channel`).

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::local_solvers::{
    channel_a_values, solve_channel_subproblem, solve_df_local, solve_df_unregularized, solve_dt_local,
    solve_dt_unregularized, ChannelSubproblem, DfSubproblem, DtSubproblem, LocalError,
};
use crate::rates::{objective, Allocation, DfGains, LinkPower, RateError};
use crate::scenario::{compute_s_bound, LinkKind, NetworkScenario};

pub const DEFAULT_C: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 5e-5;
pub const DEFAULT_K: usize = 2;
pub const DEFAULT_MAX_ITERS: usize = 50_000;
pub const DEFAULT_STOP_TOL: f64 = 1e-3;
/// Rounds over which the primal oscillation statistic is measured.
pub const TAIL_WINDOW: usize = 100;
/// Inner criterion of the classic proximal method: relative dual change.
pub const CLASSIC_INNER_TOL: f64 = 0.01;
/// Consecutive rounds the stopping tests must hold. Longer than the slow
/// price oscillation seen with the default step sizes.
pub const DEFAULT_STABLE_ROUNDS: usize = 1000;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("local solver failed on link {link}: {source}")]
    Local { link: usize, source: LocalError },
    #[error("channel allocation failed at control node {control}: {source}")]
    Channel { control: usize, source: LocalError },
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("initial state does not match the scenario: {0}")]
    State(String),
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing trace: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing trace: {0}")]
    Json(#[from] serde_json::Error),
}

/// How the proximal centres are moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// One centre update per round.
    TwoLayer,
    /// Centres move only once the inner dual iteration has settled.
    ClassicProximal,
    /// No proximal term at all; powers are boxed by the node caps. Only
    /// meant to show why the proximal term is needed.
    DualDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Proximal coefficient of every link, in scenario link order.
    pub c: Vec<f64>,
    /// Dual step size of every power constraint: sources, then relays.
    pub alpha: Vec<f64>,
    /// Channel update period in rounds.
    pub k: usize,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub mode: Mode,
    /// Keep a full state snapshot every `k` rounds in the trace.
    pub snapshots: bool,
    /// Consecutive rounds the stopping tests must hold.
    pub stable_rounds: usize,
}

impl AlgoParams {
    /// Defaults, overridden by the scenario's `[params]` section.
    pub fn for_scenario(scenario: &NetworkScenario) -> Self {
        let p = &scenario.params;
        let c = p.c.unwrap_or(DEFAULT_C);
        let alpha = p.alpha.unwrap_or(DEFAULT_ALPHA);
        AlgoParams {
            c: vec![c; scenario.links().len()],
            alpha: vec![alpha; scenario.num_nodes() + scenario.num_relays()],
            k: p.k.unwrap_or(DEFAULT_K),
            max_iters: p.max_iters.unwrap_or(DEFAULT_MAX_ITERS),
            stop_tol: p.stop_tol.unwrap_or(DEFAULT_STOP_TOL),
            mode: if p.classic_proximal.unwrap_or(false) {
                Mode::ClassicProximal
            } else {
                Mode::TwoLayer
            },
            snapshots: false,
            stable_rounds: DEFAULT_STABLE_ROUNDS,
        }
    }

    pub fn with_uniform_c(mut self, c: f64) -> Self {
        self.c.iter_mut().for_each(|v| *v = c);
        self
    }

    pub fn with_uniform_alpha(mut self, alpha: f64) -> Self {
        self.alpha.iter_mut().for_each(|v| *v = alpha);
        self
    }

    pub fn validate(&self, scenario: &NetworkScenario) -> Result<(), ProtocolError> {
        let err = |m: String| Err(ProtocolError::Params(m));
        if self.c.len() != scenario.links().len() {
            return err(format!(
                "c has {} entries, scenario has {} links",
                self.c.len(),
                scenario.links().len()
            ));
        }
        let rows = scenario.num_nodes() + scenario.num_relays();
        if self.alpha.len() != rows {
            return err(format!("alpha has {} entries, expected {rows}", self.alpha.len()));
        }
        let c_ok = |c: f64| {
            c.is_finite()
                && if self.mode == Mode::DualDecomposition {
                    c >= 0.0
                } else {
                    c > 0.0
                }
        };
        if !self.c.iter().all(|&c| c_ok(c)) {
            return err("c must be > 0".into());
        }
        if !self.alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return err("alpha must be > 0".into());
        }
        if self.k == 0 {
            return err("k must be >= 1".into());
        }
        if !(self.stop_tol > 0.0) {
            return err("stop_tol must be > 0".into());
        }
        Ok(())
    }
}

/// Everything the agents hold between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolState {
    /// Latest local solutions `x(k)`.
    pub power: Vec<LinkPower>,
    /// Proximal centres `Q(k)`.
    pub q: Vec<LinkPower>,
    /// Source power prices, one per node.
    pub mu: Vec<f64>,
    /// Relay power prices.
    pub nu: Vec<f64>,
    pub theta: Vec<f64>,
    /// Channel prices of the control nodes from the latest channel step.
    pub omega: Vec<f64>,
    pub k: usize,
    /// Consecutive rounds for which the stopping tests have held.
    #[serde(default)]
    pub stable_rounds: usize,
}

impl ProtocolState {
    /// Cold start: zero powers and prices, budgets split evenly over links.
    pub fn initial(scenario: &NetworkScenario) -> Self {
        let n = scenario.links().len();
        let mut theta = vec![scenario.theta_min(); n];
        for (t, links) in scenario.incidence().control_links.iter().enumerate() {
            if links.is_empty() {
                continue;
            }
            let share = (scenario.channel.beta[t] / links.len() as f64).max(scenario.theta_min());
            for &i in links {
                theta[i] = share;
            }
        }
        ProtocolState {
            power: vec![LinkPower::ZERO; n],
            q: vec![LinkPower::ZERO; n],
            mu: vec![0.0; scenario.num_nodes()],
            nu: vec![0.0; scenario.num_relays()],
            theta,
            omega: vec![0.0; scenario.num_controls()],
            k: 0,
            stable_rounds: 0,
        }
    }

    pub fn allocation(&self) -> Allocation {
        Allocation {
            power: self.q.clone(),
            theta: self.theta.clone(),
        }
    }

    fn duals(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.nu).copied().collect()
    }

    fn check(&self, scenario: &NetworkScenario) -> Result<(), ProtocolError> {
        let n = scenario.links().len();
        if self.power.len() != n || self.q.len() != n || self.theta.len() != n {
            return Err(ProtocolError::State(format!("expected {n} links")));
        }
        if self.mu.len() != scenario.num_nodes() || self.nu.len() != scenario.num_relays() {
            return Err(ProtocolError::State("dual vector sizes".into()));
        }
        if self.omega.len() != scenario.num_controls() {
            return Err(ProtocolError::State("channel price vector size".into()));
        }
        Ok(())
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Total rate at the centres `Q(k+1)` and the current shares.
    pub objective: f64,
    /// `||duals(k+1) - duals(k)||_2`.
    pub dual_change: f64,
    /// `||Q(k+1) - Q(k)||_2`.
    pub aux_change: f64,
    /// Largest power-cap violation at the centres.
    pub max_power_residual: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<ProtocolState>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: ProtocolState,
    pub trace: Trace,
    pub converged: bool,
    pub iterations: usize,
    /// Number of per-link local problems solved.
    pub local_solves: usize,
    /// Largest max-minus-min of any power variable `x(k)` over the last
    /// [`TAIL_WINDOW`] rounds.
    pub tail_variation: f64,
}

impl RunResult {
    pub fn allocation(&self) -> Allocation {
        self.state.allocation()
    }

    pub fn objective(&self, scenario: &NetworkScenario) -> Result<f64, RateError> {
        objective(scenario, &self.allocation())
    }
}

fn df_gains(scenario: &NetworkScenario, i: usize) -> DfGains {
    let (sr, sd, rd) = scenario.df_gains(&scenario.links()[i]).expect("relayed link");
    DfGains { sr, sd, rd }
}

/// Per-link maximizers of the proximal Lagrangian for given centres and
/// prices, in link order.
pub fn local_argmax(
    scenario: &NetworkScenario,
    params: &AlgoParams,
    centres: &[LinkPower],
    mu: &[f64],
    nu: &[f64],
    theta: &[f64],
) -> Result<Vec<LinkPower>, ProtocolError> {
    let links = scenario.links();
    let mut out = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        let source = scenario.streams[link.stream].source;
        let mu_l = mu[source];
        let p = match (link.kind, params.mode) {
            (LinkKind::Direct, Mode::DualDecomposition) => LinkPower::new(
                solve_dt_unregularized(
                    theta[i],
                    mu_l,
                    scenario.gains.sd[link.stream],
                    scenario.limits.p_s_max[source],
                ),
                0.0,
            ),
            (LinkKind::Relayed { relay }, Mode::DualDecomposition) => solve_df_unregularized(
                theta[i],
                mu_l,
                nu[relay],
                &df_gains(scenario, i),
                scenario.limits.p_s_max[source],
                scenario.limits.p_r_max[relay],
            ),
            (LinkKind::Direct, _) => {
                let sub = DtSubproblem {
                    theta_dt: theta[i],
                    c: params.c[i],
                    mu: mu_l,
                    q_s: centres[i].source,
                    g_sd: scenario.gains.sd[link.stream],
                };
                LinkPower::new(solve_dt_local(&sub), 0.0)
            }
            (LinkKind::Relayed { relay }, _) => {
                let sub = DfSubproblem {
                    theta_df: theta[i],
                    c: params.c[i],
                    mu: mu_l,
                    nu: nu[relay],
                    q_s: centres[i].source,
                    q_r: centres[i].relay,
                    gains: df_gains(scenario, i),
                };
                solve_df_local(&sub)
                    .map_err(|source| ProtocolError::Local { link: i, source })?
                    .power
            }
        };
        out.push(p);
    }
    Ok(out)
}

/// `x(k)`: local solutions at the current centres and prices.
pub fn step_power(
    state: &ProtocolState,
    scenario: &NetworkScenario,
    params: &AlgoParams,
) -> Result<Vec<LinkPower>, ProtocolError> {
    local_argmax(scenario, params, &state.q, &state.mu, &state.nu, &state.theta)
}

/// Total source power per node and relay power per relay.
pub fn power_usage(scenario: &NetworkScenario, powers: &[LinkPower]) -> (Vec<f64>, Vec<f64>) {
    let inc = scenario.incidence();
    let src = inc
        .source_links
        .iter()
        .map(|ls| ls.iter().map(|&i| powers[i].source).sum())
        .collect();
    let rel = inc
        .relay_links
        .iter()
        .map(|ls| ls.iter().map(|&i| powers[i].relay).sum())
        .collect();
    (src, rel)
}

/// Projected price update at the usage of `x`.
pub fn step_dual(
    state: &ProtocolState,
    scenario: &NetworkScenario,
    params: &AlgoParams,
    x: &[LinkPower],
) -> (Vec<f64>, Vec<f64>) {
    let (src, rel) = power_usage(scenario, x);
    let n = scenario.num_nodes();
    let mu = state
        .mu
        .iter()
        .zip(&src)
        .enumerate()
        .map(|(l, (&m, &u))| (m + params.alpha[l] * (u - scenario.limits.p_s_max[l])).max(0.0))
        .collect();
    let nu = state
        .nu
        .iter()
        .zip(&rel)
        .enumerate()
        .map(|(j, (&v, &u))| (v + params.alpha[n + j] * (u - scenario.limits.p_r_max[j])).max(0.0))
        .collect();
    (mu, nu)
}

/// New centres: the local solutions at the updated prices and the old
/// centres, computed once rather than iterated to a fixed point.
pub fn step_auxiliary(
    state: &ProtocolState,
    scenario: &NetworkScenario,
    params: &AlgoParams,
) -> Result<Vec<LinkPower>, ProtocolError> {
    local_argmax(scenario, params, &state.q, &state.mu, &state.nu, &state.theta)
}

/// Channel shares and prices of every control node at the centres.
pub fn step_channel(state: &ProtocolState, scenario: &NetworkScenario) -> Result<(Vec<f64>, Vec<f64>), ProtocolError> {
    let mut theta = state.theta.clone();
    let mut omega = vec![0.0; scenario.num_controls()];
    for (t, links) in scenario.incidence().control_links.iter().enumerate() {
        if links.is_empty() {
            continue;
        }
        let problem = ChannelSubproblem {
            links: channel_a_values(scenario, t, &state.q),
            beta: scenario.channel.beta[t],
            theta_min: scenario.theta_min(),
        };
        let hint = (state.omega[t] > 0.0).then_some(state.omega[t]);
        let sol =
            solve_channel_subproblem(&problem, hint).map_err(|source| ProtocolError::Channel { control: t, source })?;
        for (&i, &th) in links.iter().zip(&sol.theta) {
            theta[i] = th;
        }
        omega[t] = sol.omega;
    }
    Ok((theta, omega))
}

/// Outcome of checking the sufficient step-size condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSizeReport {
    pub s: usize,
    /// `min c / (2 S)`.
    pub bound: f64,
    pub max_alpha: f64,
    /// `bound - max_alpha`; negative when the condition is violated.
    pub margin: f64,
    pub within_bound: bool,
}

/// Checks `max alpha <= min c / (2 S)`. The condition is sufficient, not
/// necessary, so a violation is only logged.
pub fn validate_step_sizes(params: &AlgoParams, scenario: &NetworkScenario) -> StepSizeReport {
    let s = compute_s_bound(scenario).max(1);
    let c_min = params.c.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = c_min / (2.0 * s as f64);
    let max_alpha = params.alpha.iter().copied().fold(0.0, f64::max);
    let report = StepSizeReport {
        s,
        bound,
        max_alpha,
        margin: bound - max_alpha,
        within_bound: max_alpha <= bound,
    };
    if !report.within_bound {
        warn!(
            "dual step size {max_alpha:e} exceeds the sufficient convergence bound {bound:e} (S = {s}); convergence is not guaranteed"
        );
    }
    report
}

/// Residuals of the stationarity conditions at a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    /// `max |argmax L(., Q; duals) - Q|` over all power variables.
    pub fixed_point: f64,
    /// Largest power-cap violation at `Q`.
    pub primal_infeasibility: f64,
    /// Most negative dual, as a positive number.
    pub dual_infeasibility: f64,
    /// Largest `|dual * (usage - cap)|`.
    pub complementary_slackness: f64,
}

impl StationarityReport {
    pub fn max(&self) -> f64 {
        self.fixed_point
            .max(self.primal_infeasibility)
            .max(self.dual_infeasibility)
            .max(self.complementary_slackness)
    }
}

fn cap_residuals(scenario: &NetworkScenario, state: &ProtocolState, powers: &[LinkPower]) -> (f64, f64) {
    let (src, rel) = power_usage(scenario, powers);
    let caps = scenario.power_caps();
    let duals = state.duals();
    let mut infeas: f64 = 0.0;
    let mut slack: f64 = 0.0;
    for ((u, cap), d) in src.iter().chain(&rel).zip(&caps).zip(&duals) {
        infeas = infeas.max(u - cap);
        slack = slack.max((d * (u - cap)).abs());
    }
    (infeas.max(0.0), slack)
}

pub fn check_stationary(
    state: &ProtocolState,
    scenario: &NetworkScenario,
    params: &AlgoParams,
) -> Result<StationarityReport, ProtocolError> {
    state.check(scenario)?;
    let x = local_argmax(scenario, params, &state.q, &state.mu, &state.nu, &state.theta)?;
    let fixed_point = x
        .iter()
        .zip(&state.q)
        .map(|(a, b)| (a.source - b.source).abs().max((a.relay - b.relay).abs()))
        .fold(0.0, f64::max);
    let (primal_infeasibility, complementary_slackness) = cap_residuals(scenario, state, &state.q);
    let dual_infeasibility = state.duals().iter().map(|d| (-d).max(0.0)).fold(0.0, f64::max);
    Ok(StationarityReport {
        fixed_point,
        primal_infeasibility,
        dual_infeasibility,
        complementary_slackness,
    })
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn flatten(p: &[LinkPower]) -> Vec<f64> {
    p.iter().flat_map(|l| [l.source, l.relay]).collect()
}

fn tail_variation(window: &VecDeque<Vec<f64>>) -> f64 {
    let Some(first) = window.front() else { return 0.0 };
    (0..first.len())
        .map(|i| {
            let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[i]), hi.max(v[i]))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Runs the algorithm from `initial` (or a cold start) until the stopping
/// rule holds or `max_iters` rounds have passed.
///
/// A round passes the stopping tests when the relative dual change and the
/// relative centre change are both below `stop_tol`, the centres violate no
/// power cap and no complementary slackness condition by more than
/// `stop_tol`, and no channel share moved by more than `stop_tol`. The run
/// stops once `stable_rounds` consecutive rounds have passed. Per-round
/// changes alone are not enough: with small dual steps the prices drift in a
/// slow oscillation whose per-round steps are far below the tolerance.
/// The count is part of the state, so a warm start from a converged state
/// stops after one round if nothing moves.
pub fn run_algorithm_a(
    scenario: &NetworkScenario,
    params: &AlgoParams,
    initial: Option<ProtocolState>,
) -> Result<RunResult, ProtocolError> {
    params.validate(scenario)?;
    let mut state = match initial {
        Some(s) => {
            s.check(scenario)?;
            s
        }
        None => ProtocolState::initial(scenario),
    };
    let start_k = state.k;
    let n_links = scenario.links().len();
    let tol = params.stop_tol;
    let caps = scenario.power_caps();
    let cap_scale = caps.iter().copied().fold(1.0, f64::max);

    let mut trace = Trace::default();
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(TAIL_WINDOW + 1);
    let mut local_solves = 0usize;
    let mut converged = false;

    for _ in 0..params.max_iters {
        let duals_before = state.duals();
        let q_before = flatten(&state.q);

        let x = step_power(&state, scenario, params)?;
        local_solves += n_links;
        let (mu, nu) = step_dual(&state, scenario, params, &x);
        state.mu = mu;
        state.nu = nu;
        state.power = x;

        let move_centres = match params.mode {
            Mode::TwoLayer => true,
            Mode::DualDecomposition => true,
            Mode::ClassicProximal => l2_diff(&state.duals(), &duals_before) <= CLASSIC_INNER_TOL * l2(&duals_before),
        };
        if move_centres {
            state.q = match params.mode {
                Mode::DualDecomposition => state.power.clone(),
                _ => {
                    local_solves += n_links;
                    step_auxiliary(&state, scenario, params)?
                }
            };
        }
        state.k += 1;

        let mut theta_change = 0.0;
        if state.k % params.k == 0 {
            let (theta, omega) = step_channel(&state, scenario)?;
            theta_change = state
                .theta
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            state.theta = theta;
            state.omega = omega;
            if params.snapshots {
                trace.snapshots.push(state.clone());
            }
        }

        let duals = state.duals();
        let q_now = flatten(&state.q);
        let dual_change = l2_diff(&duals, &duals_before);
        let aux_change = l2_diff(&q_now, &q_before);
        let (infeas, slack) = cap_residuals(scenario, &state, &state.q);
        let obj = objective(scenario, &state.allocation())?;
        trace.rows.push(TraceRow {
            k: state.k,
            objective: obj,
            dual_change,
            aux_change,
            max_power_residual: infeas,
            mu: state.mu.clone(),
            nu: state.nu.clone(),
        });

        window.push_back(flatten(&state.power));
        if window.len() > TAIL_WINDOW {
            window.pop_front();
        }

        let passed = dual_change <= tol * l2(&duals_before).max(1.0)
            && aux_change <= tol * l2(&q_before).max(1.0)
            && infeas <= tol * cap_scale
            && slack <= tol
            && theta_change <= tol;
        state.stable_rounds = if passed { state.stable_rounds + 1 } else { 0 };
        if state.stable_rounds >= params.stable_rounds {
            converged = true;
            break;
        }
        if state.k % 5000 == 0 {
            debug!(
                "round {}: objective {obj:.6}, dual change {dual_change:.3e}, centre change {aux_change:.3e}, violation {infeas:.3e}",
                state.k
            );
        }
    }
    let iterations = state.k - start_k;
    if converged {
        info!("converged after {iterations} rounds");
    } else {
        warn!("not converged after {iterations} rounds");
    }
    Ok(RunResult {
        tail_variation: tail_variation(&window),
        state,
        trace,
        converged,
        iterations,
        local_solves,
    })
}

impl Trace {
    /// CSV with columns `k,objective,dual_change,max_power_residual,mu_*,nu_*`.
    pub fn write_csv(&self, scenario: &NetworkScenario, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "k".to_string(),
            "objective".into(),
            "dual_change".into(),
            "max_power_residual".into(),
        ];
        header.extend(scenario.nodes.iter().map(|n| format!("mu_{}", n.id)));
        header.extend(scenario.relays.iter().map(|r| format!("nu_{}", r.id)));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.k.to_string(),
                format!("{:.12e}", row.objective),
                format!("{:.6e}", row.dual_change),
                format!("{:.6e}", row.max_power_residual),
            ];
            rec.extend(row.mu.iter().chain(&row.nu).map(|v| format!("{v:.12e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_snapshots(&self, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &self.snapshots)?;
        f.flush()?;
        Ok(())
    }
}
