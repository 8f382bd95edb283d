//! Outer adjustment of the per-control-node channel budgets by projected
//! subgradient steps, using the channel prices of the inner run as
//! subgradients.

use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::{PolytopeB, PolytopeError};
use crate::protocol::{run_algorithm_a, step_channel, AlgoParams, ProtocolError, ProtocolState};
use crate::rates::{objective, Allocation};
use crate::scenario::{NetworkScenario, ScenarioError};

#[derive(Debug, Error)]
pub enum AdjustError {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid adjustment parameters: {0}")]
    Params(String),
    #[error("writing outer trace: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaSchedule {
    /// `delta(q) = delta`.
    Constant,
    /// `delta(q) = delta / sqrt(q)`.
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustParams {
    pub delta: f64,
    pub schedule: DeltaSchedule,
    pub outer_iters: usize,
    /// Round budget of every inner run.
    pub inner_iters: usize,
    pub outer_tol: f64,
}

impl AdjustParams {
    pub fn for_scenario(scenario: &NetworkScenario) -> Self {
        let p = &scenario.params;
        let schedule = match p.delta_schedule.as_deref() {
            Some("constant") => DeltaSchedule::Constant,
            _ => DeltaSchedule::Diminishing,
        };
        AdjustParams {
            delta: p.delta.unwrap_or(0.3),
            schedule,
            outer_iters: p.outer_iters.unwrap_or(300),
            inner_iters: p.inner_iters.unwrap_or(50_000),
            outer_tol: p.outer_tol.unwrap_or(1e-4),
        }
    }

    /// Step size of outer iteration `q` (starting at 1).
    pub fn delta_at(&self, q: usize) -> f64 {
        match self.schedule {
            DeltaSchedule::Constant => self.delta,
            DeltaSchedule::Diminishing => self.delta / (q.max(1) as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<(), AdjustError> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(AdjustError::Params("delta must be >= 0".into()));
        }
        if self.inner_iters == 0 {
            return Err(AdjustError::Params("inner_iters must be >= 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(AdjustError::Params("outer_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Euclidean projection onto the budget polytope, with every budget kept at
/// or above its floor.
pub fn project_onto_b(beta: &[f64], polytope: &PolytopeB, floors: &[f64]) -> Result<Vec<f64>, PolytopeError> {
    polytope.project(beta, floors)
}

/// `project(beta + delta * omega)`.
pub fn step_beta(
    beta: &[f64],
    omega: &[f64],
    delta: f64,
    polytope: &PolytopeB,
    floors: &[f64],
) -> Result<Vec<f64>, PolytopeError> {
    let moved: Vec<f64> = beta.iter().zip(omega).map(|(b, w)| b + delta * w).collect();
    project_onto_b(&moved, polytope, floors)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRow {
    pub q: usize,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub objective: f64,
    pub inner_rounds: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OuterTrace {
    pub rows: Vec<OuterRow>,
}

impl OuterTrace {
    /// CSV with columns `q,beta_*,omega_*,objective`.
    pub fn write_csv(&self, scenario: &NetworkScenario, path: impl AsRef<Path>) -> Result<(), AdjustError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["q".to_string()];
        header.extend(scenario.channel.controls.iter().map(|c| format!("beta_{c}")));
        header.extend(scenario.channel.controls.iter().map(|c| format!("omega_{c}")));
        header.push("objective".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.q.to_string()];
            rec.extend(row.beta.iter().chain(&row.omega).map(|v| format!("{v:.12e}")));
            rec.push(format!("{:.12e}", row.objective));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdjustResult {
    pub beta: Vec<f64>,
    pub allocation: Allocation,
    pub objective: f64,
    pub state: ProtocolState,
    pub trace: OuterTrace,
    /// The projected price gradient fell below `outer_tol`.
    pub converged: bool,
    /// Some inner run hit its round budget.
    pub any_inner_unconverged: bool,
}

/// Alternates warm-started inner runs with projected budget steps.
pub fn run_algorithm_1(
    scenario: &NetworkScenario,
    algo: &AlgoParams,
    adjust: &AdjustParams,
) -> Result<AdjustResult, AdjustError> {
    adjust.validate()?;
    let floors = scenario.budget_floors();
    let polytope = &scenario.polytope;
    let mut beta = project_onto_b(&scenario.channel.beta, polytope, &floors)?;
    let mut inner = algo.clone();
    inner.max_iters = adjust.inner_iters;

    let mut state: Option<ProtocolState> = None;
    let mut trace = OuterTrace::default();
    let mut converged = false;
    let mut any_inner_unconverged = false;
    let mut current = scenario.with_budgets(&beta)?;

    for q in 1..=adjust.outer_iters.max(1) {
        current = scenario.with_budgets(&beta)?;
        // shares from the previous budgets may not fit the new ones
        let warm = match state.take() {
            Some(mut s) => {
                let (theta, omega) = step_channel(&s, &current)?;
                s.theta = theta;
                s.omega = omega;
                Some(s)
            }
            None => None,
        };
        let run = run_algorithm_a(&current, &inner, warm)?;
        if !run.converged {
            warn!(
                "outer step {q}: inner run stopped unconverged after {} rounds",
                run.iterations
            );
            any_inner_unconverged = true;
        }
        let omega = run.state.omega.clone();
        let obj = objective(&current, &run.state.allocation()).map_err(ProtocolError::from)?;
        trace.rows.push(OuterRow {
            q,
            beta: beta.clone(),
            omega: omega.clone(),
            objective: obj,
            inner_rounds: run.iterations,
            inner_converged: run.converged,
        });
        state = Some(run.state);
        if q == adjust.outer_iters {
            break;
        }
        let delta = adjust.delta_at(q);
        let next = step_beta(&beta, &omega, delta, polytope, &floors)?;
        // projected price gradient; the plain step length shrinks with delta
        // and would stop the run before the prices have equalized
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if delta == 0.0 || change <= adjust.outer_tol * delta {
            converged = true;
            break;
        }
        beta = next;
    }
    let state = state.expect("at least one outer step");
    let allocation = state.allocation();
    let objective = objective(&current, &allocation).map_err(ProtocolError::from)?;
    info!(
        "budget adjustment finished after {} outer steps, objective {objective:.6}",
        trace.rows.len()
    );
    Ok(AdjustResult {
        beta,
        allocation,
        objective,
        state,
        trace,
        converged,
        any_inner_unconverged,
    })
}
