//! Reference solvers for tests: a centralized interior-point solver for the
//! joint power and channel problem, a budget-grid search on top of it, and
//! brute-force maximizers of the local subproblems.
//!
//! The centralized solver works on the hypograph form of the DF rate
//! (`t <= relay branch`, `t <= destination branch`), so every constraint is
//! smooth and concave and a plain log-barrier method applies. The barrier
//! parameter gives a certified bound on the optimality gap.

use std::f64::consts::LN_2;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::local_solvers::{ChannelSubproblem, DfSubproblem, DtSubproblem};
use crate::polytope::PolytopeError;
use crate::rates::{objective, Allocation, LinkPower, RateError};
use crate::scenario::{LinkKind, NetworkScenario, ScenarioError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("Newton system is singular after {iterations} iterations (barrier weight {tau:e})")]
    Singular { iterations: usize, tau: f64 },
    #[error("interior-point method did not converge: gap bound {gap:e} after {iterations} Newton steps")]
    NoConvergence { gap: f64, iterations: usize },
    #[error("budget grid needs a bounded polytope with nonnegative rows")]
    UnboundedGrid,
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub objective: f64,
    /// Certified bound on the optimality gap (`constraints / barrier weight`).
    pub kkt_residual: f64,
    /// Total Newton steps.
    pub iterations: usize,
}

/// `(theta / w) log2(1 + w s / theta)` with its first and second partial
/// derivatives in `(s, theta)`.
struct Persp {
    val: f64,
    ds: f64,
    dt: f64,
    dss: f64,
    dst: f64,
    dtt: f64,
}

fn persp(s: f64, theta: f64, w: f64) -> Persp {
    let z = 1.0 + w * s / theta;
    let k = w / (theta * z * z * LN_2);
    Persp {
        val: (theta / w) * (w * s / theta).ln_1p() / LN_2,
        ds: 1.0 / (z * LN_2),
        dt: ((w * s / theta).ln_1p() - (z - 1.0) / z) / (w * LN_2),
        dss: -k,
        dst: k * s / theta,
        dtt: -k * s * s / (theta * theta),
    }
}

/// A concave constraint `g(x) >= 0` or objective term, with sparse gradient
/// and Hessian.
struct Term {
    val: f64,
    grad: Vec<(usize, f64)>,
    hess: Vec<(usize, usize, f64)>,
}

/// `rate(sum_k coef_k x_k, theta) + lin`, where theta is either a variable or
/// a constant.
fn rate_term(powers: &[(usize, f64)], theta: ThetaVar, w: f64, x: &[f64], extra: Option<(usize, f64)>) -> Term {
    let s: f64 = powers.iter().map(|&(i, g)| g * x[i]).sum();
    let th = theta.value(x);
    let p = persp(s, th, w);
    let mut grad: Vec<(usize, f64)> = powers.iter().map(|&(i, g)| (i, p.ds * g)).collect();
    let mut hess = Vec::new();
    for &(i, gi) in powers {
        for &(j, gj) in powers {
            hess.push((i, j, p.dss * gi * gj));
        }
    }
    let mut val = p.val;
    if let ThetaVar::Var(t) = theta {
        grad.push((t, p.dt));
        hess.push((t, t, p.dtt));
        for &(i, gi) in powers {
            hess.push((i, t, p.dst * gi));
            hess.push((t, i, p.dst * gi));
        }
    }
    if let Some((i, c)) = extra {
        val += c * x[i];
        grad.push((i, c));
    }
    Term { val, grad, hess }
}

#[derive(Debug, Clone, Copy)]
enum ThetaVar {
    Var(usize),
    Fixed(f64),
}

impl ThetaVar {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            ThetaVar::Var(i) => x[i],
            ThetaVar::Fixed(v) => v,
        }
    }
}

struct LinkVars {
    ps: usize,
    pr: Option<usize>,
    theta: ThetaVar,
    t: Option<usize>,
}

/// The barrier problem of one scenario.
struct Barrier<'a> {
    scenario: &'a NetworkScenario,
    vars: Vec<LinkVars>,
    n: usize,
    /// Linear constraints `a . x + b >= 0`.
    linear: Vec<(Vec<(usize, f64)>, f64)>,
}

impl<'a> Barrier<'a> {
    fn new(scenario: &'a NetworkScenario) -> Self {
        let links = scenario.links();
        let inc = scenario.incidence();
        let theta_min = scenario.theta_min();
        // budgets with no room above the floor pin their shares
        let pinned: Vec<bool> = inc
            .control_links
            .iter()
            .enumerate()
            .map(|(t, ls)| {
                scenario.channel.beta[t] - theta_min * ls.len() as f64 <= 1e-12 * scenario.channel.beta[t].max(1.0)
            })
            .collect();
        let mut n = 0;
        let mut next = || {
            n += 1;
            n - 1
        };
        let mut vars = Vec::with_capacity(links.len());
        for link in links {
            let control = scenario.streams[link.stream].control;
            let ps = next();
            let pr = link.relay().map(|_| next());
            let theta = if pinned[control] {
                ThetaVar::Fixed(theta_min)
            } else {
                ThetaVar::Var(next())
            };
            let t = link.relay().map(|_| next());
            vars.push(LinkVars { ps, pr, theta, t });
        }

        let mut linear = Vec::new();
        for v in &vars {
            linear.push((vec![(v.ps, 1.0)], 0.0));
            if let Some(pr) = v.pr {
                linear.push((vec![(pr, 1.0)], 0.0));
            }
            if let ThetaVar::Var(t) = v.theta {
                linear.push((vec![(t, 1.0)], -theta_min));
            }
        }
        for (l, ls) in inc.source_links.iter().enumerate() {
            if !ls.is_empty() {
                linear.push((
                    ls.iter().map(|&i| (vars[i].ps, -1.0)).collect(),
                    scenario.limits.p_s_max[l],
                ));
            }
        }
        for (j, ls) in inc.relay_links.iter().enumerate() {
            if !ls.is_empty() {
                linear.push((
                    ls.iter().map(|&i| (vars[i].pr.expect("relayed"), -1.0)).collect(),
                    scenario.limits.p_r_max[j],
                ));
            }
        }
        for (t, ls) in inc.control_links.iter().enumerate() {
            if !ls.is_empty() && !pinned[t] {
                let row = ls
                    .iter()
                    .filter_map(|&i| match vars[i].theta {
                        ThetaVar::Var(v) => Some((v, -1.0)),
                        ThetaVar::Fixed(_) => None,
                    })
                    .collect();
                linear.push((row, scenario.channel.beta[t]));
            }
        }
        Barrier {
            scenario,
            vars,
            n,
            linear,
        }
    }

    fn constraints(&self) -> usize {
        self.linear.len() + 2 * self.vars.iter().filter(|v| v.t.is_some()).count()
    }

    fn start(&self) -> Vec<f64> {
        let sc = self.scenario;
        let inc = sc.incidence();
        let mut x = vec![0.0; self.n];
        for (l, ls) in inc.source_links.iter().enumerate() {
            for &i in ls {
                x[self.vars[i].ps] = 0.5 * sc.limits.p_s_max[l] / ls.len() as f64;
            }
        }
        for (j, ls) in inc.relay_links.iter().enumerate() {
            for &i in ls {
                x[self.vars[i].pr.expect("relayed")] = 0.5 * sc.limits.p_r_max[j] / ls.len() as f64;
            }
        }
        for (t, ls) in inc.control_links.iter().enumerate() {
            let slack = sc.channel.beta[t] - sc.theta_min() * ls.len() as f64;
            for &i in ls {
                if let ThetaVar::Var(v) = self.vars[i].theta {
                    x[v] = sc.theta_min() + slack / (ls.len() + 1) as f64;
                }
            }
        }
        for (v, (rel, dst)) in self.vars.iter().zip(self.branches_at(&x)) {
            if let (Some(t), Some(r), Some(d)) = (v.t, rel, dst) {
                x[t] = r.val.min(d.val) - 1.0;
            }
        }
        x
    }

    /// The two DF branch rates of every relayed link as terms in `x`.
    fn branches_at(&self, x: &[f64]) -> Vec<(Option<Term>, Option<Term>)> {
        let sc = self.scenario;
        sc.links()
            .iter()
            .zip(&self.vars)
            .map(|(link, v)| match link.kind {
                LinkKind::Direct => (None, None),
                LinkKind::Relayed { .. } => {
                    let (sr, sd, rd) = sc.df_gains(link).expect("relayed");
                    let pr = v.pr.expect("relayed");
                    let t = v.t.expect("relayed");
                    (
                        Some(rate_term(&[(v.ps, sr)], v.theta, 2.0, x, Some((t, -1.0)))),
                        Some(rate_term(&[(v.ps, sd), (pr, rd)], v.theta, 2.0, x, Some((t, -1.0)))),
                    )
                }
            })
            .collect()
    }

    /// Objective terms: DT rates and DF hypograph variables.
    fn objective_terms(&self, x: &[f64]) -> Vec<Term> {
        let sc = self.scenario;
        sc.links()
            .iter()
            .zip(&self.vars)
            .map(|(link, v)| match link.kind {
                LinkKind::Direct => rate_term(&[(v.ps, sc.gains.sd[link.stream])], v.theta, 1.0, x, None),
                LinkKind::Relayed { .. } => Term {
                    val: x[v.t.expect("relayed")],
                    grad: vec![(v.t.expect("relayed"), 1.0)],
                    hess: Vec::new(),
                },
            })
            .collect()
    }

    /// Barrier value, or `None` outside the interior.
    fn value(&self, x: &[f64], tau: f64) -> Option<f64> {
        let mut f = tau * self.objective_terms(x).iter().map(|t| t.val).sum::<f64>();
        for (row, b) in &self.linear {
            let g: f64 = row.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + b;
            if !(g > 0.0) {
                return None;
            }
            f += g.ln();
        }
        for (r, d) in self.branches_at(x) {
            for term in [r, d].into_iter().flatten() {
                if !(term.val > 0.0) {
                    return None;
                }
                f += term.val.ln();
            }
        }
        Some(f)
    }

    fn derivatives(&self, x: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = DVector::zeros(self.n);
        let mut hess = DMatrix::zeros(self.n, self.n);
        for term in self.objective_terms(x) {
            for &(i, g) in &term.grad {
                grad[i] += tau * g;
            }
            for &(i, j, h) in &term.hess {
                hess[(i, j)] += tau * h;
            }
        }
        let mut add_log = |term: &Term| {
            let g = term.val;
            for &(i, gi) in &term.grad {
                grad[i] += gi / g;
                for &(j, gj) in &term.grad {
                    hess[(i, j)] -= gi * gj / (g * g);
                }
            }
            for &(i, j, h) in &term.hess {
                hess[(i, j)] += h / g;
            }
        };
        for (row, b) in &self.linear {
            let val = row.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + b;
            add_log(&Term {
                val,
                grad: row.clone(),
                hess: Vec::new(),
            });
        }
        for (r, d) in self.branches_at(x) {
            for term in [r, d].into_iter().flatten() {
                add_log(&term);
            }
        }
        (grad, hess)
    }

    fn allocation(&self, x: &[f64]) -> Allocation {
        Allocation {
            power: self
                .vars
                .iter()
                .map(|v| LinkPower::new(x[v.ps], v.pr.map_or(0.0, |i| x[i])))
                .collect(),
            theta: self.vars.iter().map(|v| v.theta.value(x)).collect(),
        }
    }
}

/// Maximizes the total rate over powers and channel shares by a log-barrier
/// interior-point method. `tol` bounds the certified optimality gap.
pub fn solve_centralized(scenario: &NetworkScenario, tol: f64) -> Result<OracleResult, OracleError> {
    let bar = Barrier::new(scenario);
    let m = bar.constraints() as f64;
    let mut x = bar.start();
    let mut tau = 1.0;
    let mut iterations = 0;
    const MAX_NEWTON: usize = 10_000;
    loop {
        // centring
        for _ in 0..200 {
            let (g, h) = bar.derivatives(&x, tau);
            let neg = -h;
            let step = match neg.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    let reg = neg.diagonal().amax().max(1.0) * 1e-12;
                    let shifted = neg + DMatrix::identity(bar.n, bar.n) * reg;
                    shifted
                        .cholesky()
                        .ok_or(OracleError::Singular { iterations, tau })?
                        .solve(&g)
                }
            };
            let decrement = g.dot(&step);
            iterations += 1;
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            let f0 = bar.value(&x, tau).expect("interior point");
            let mut s = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
                if let Some(f) = bar.value(&trial, tau) {
                    if f >= f0 + 0.25 * s * decrement {
                        x = trial;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-20 {
                    break;
                }
            }
            if s < 1e-20 || iterations > MAX_NEWTON {
                break;
            }
        }
        let gap = m / tau;
        if gap <= tol {
            break;
        }
        if iterations > MAX_NEWTON {
            return Err(OracleError::NoConvergence { gap, iterations });
        }
        tau *= 20.0;
    }
    let allocation = bar.allocation(&x);
    let value = objective(scenario, &allocation)?;
    debug!("centralized oracle: objective {value:.9}, {iterations} Newton steps");
    Ok(OracleResult {
        allocation,
        objective: value,
        kkt_residual: m / tau,
        iterations,
    })
}

/// Best budget vector on a grid and the optimum at it.
#[derive(Debug, Clone, Serialize)]
pub struct P1Reference {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub grid_points: usize,
}

/// Grid search over budget vectors in the polytope. Since the optimal rate
/// never decreases when a budget grows, only grid points that cannot be
/// raised by one grid step in any coordinate are evaluated.
pub fn solve_p1_reference(scenario: &NetworkScenario, resolution: f64) -> Result<P1Reference, OracleError> {
    let b = &scenario.polytope;
    let floors = scenario.budget_floors();
    let dim = floors.len();
    let tol = 1e-9;
    let mut upper = vec![f64::INFINITY; dim];
    for (coeffs, rhs) in b.rows() {
        if coeffs.iter().any(|&a| a < 0.0) {
            continue;
        }
        for t in 0..dim {
            if coeffs[t] > 0.0 {
                let rest: f64 = (0..dim).filter(|&s| s != t).map(|s| coeffs[s] * floors[s]).sum();
                upper[t] = upper[t].min((rhs - rest) / coeffs[t]);
            }
        }
    }
    if upper.iter().any(|u| !u.is_finite()) {
        return Err(OracleError::UnboundedGrid);
    }
    let steps: Vec<usize> = (0..dim)
        .map(|t| ((upper[t] - floors[t]) / resolution + 1e-9).floor().max(0.0) as usize)
        .collect();
    let point = |idx: &[usize]| -> Vec<f64> { (0..dim).map(|t| floors[t] + idx[t] as f64 * resolution).collect() };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluated = 0;
    let mut idx = vec![0usize; dim];
    loop {
        let beta = point(&idx);
        if b.contains(&beta, &floors, tol) {
            let maximal = (0..dim).all(|t| {
                let mut up = beta.clone();
                up[t] += resolution;
                idx[t] + 1 > steps[t] || !b.contains(&up, &floors, tol)
            });
            if maximal {
                let sc = scenario.with_budgets(&beta)?;
                let r = solve_centralized(&sc, 1e-9)?;
                evaluated += 1;
                if best.as_ref().is_none_or(|(_, v)| r.objective > *v) {
                    best = Some((beta, r.objective));
                }
            }
        }
        // odometer over the index box
        let mut t = 0;
        loop {
            if t == dim {
                let (beta, objective) = best.ok_or(OracleError::UnboundedGrid)?;
                return Ok(P1Reference {
                    beta,
                    objective,
                    grid_points: evaluated,
                });
            }
            if idx[t] < steps[t] {
                idx[t] += 1;
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .max_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap()
}

/// Upper bound on any coordinate of a local maximizer: past it the proximal
/// pull exceeds the largest possible marginal rate.
fn local_bound(theta: f64, c: f64, centre: f64) -> f64 {
    centre + 1.5 * (theta / (2.0 * c * LN_2)).sqrt() + 1.0
}

/// Golden-section maximizer of the DT local problem.
pub fn golden_section_dt(sub: &DtSubproblem) -> f64 {
    let hi = local_bound(2.0 * sub.theta_dt, sub.c, sub.q_s);
    golden_section(|p| sub.objective(p), 0.0, hi, 300)
}

/// Brute-force maximizer of the DF local problem: a `grid x grid` search over
/// `[0, bounds.0] x [0, bounds.1]`, then repeated zooming around the best
/// point and a pattern search whose directions include the kink line.
pub fn brute_force_df_local(sub: &DfSubproblem, grid: usize, bounds: (f64, f64)) -> (LinkPower, f64) {
    let f = |ps: f64, pr: f64| sub.objective(&LinkPower::new(ps.max(0.0), pr.max(0.0)));
    let search = |lo: (f64, f64), hi: (f64, f64), n: usize| {
        let mut best = (lo.0, lo.1, f64::NEG_INFINITY);
        for a in 0..=n {
            let ps = lo.0 + (hi.0 - lo.0) * a as f64 / n as f64;
            for b in 0..=n {
                let pr = lo.1 + (hi.1 - lo.1) * b as f64 / n as f64;
                let v = f(ps, pr);
                if v > best.2 {
                    best = (ps, pr, v);
                }
            }
        }
        best
    };
    let mut best = search((0.0, 0.0), bounds, grid);
    let mut half = (bounds.0 / grid as f64 * 2.0, bounds.1 / grid as f64 * 2.0);
    for _ in 0..60 {
        let lo = ((best.0 - half.0).max(0.0), (best.1 - half.1).max(0.0));
        let hi = (best.0 + half.0, best.1 + half.1);
        let cand = search(lo, hi, 20);
        if cand.2 >= best.2 {
            best = cand;
        }
        half = (half.0 * 0.25, half.1 * 0.25);
        if half.0 < 1e-13 && half.1 < 1e-13 {
            break;
        }
    }
    // pattern search, including the direction along which both branches agree
    let g = &sub.gains;
    let k = ((g.sr - g.sd) / g.rd).max(0.0);
    let norm = (1.0 + k * k).sqrt();
    let dirs = [(1.0, 0.0), (0.0, 1.0), (1.0 / norm, k / norm), (1.0, 1.0), (1.0, -1.0)];
    let mut step = half.0.max(half.1).max(1e-6);
    while step > 1e-14 {
        let mut improved = false;
        for &(dx, dy) in &dirs {
            for sign in [1.0, -1.0] {
                let (ps, pr) = (
                    (best.0 + sign * step * dx).max(0.0),
                    (best.1 + sign * step * dy).max(0.0),
                );
                let v = f(ps, pr);
                if v > best.2 {
                    best = (ps, pr, v);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (LinkPower::new(best.0, best.1), best.2)
}

/// Default search box for [`brute_force_df_local`].
pub fn df_local_bounds(sub: &DfSubproblem) -> (f64, f64) {
    (
        local_bound(sub.theta_df, sub.c, sub.q_s),
        local_bound(sub.theta_df, sub.c, sub.q_r),
    )
}

/// Channel allocation by projected gradient ascent with backtracking on
/// `{theta >= theta_min, sum theta <= beta}`.
pub fn channel_projected_gradient(problem: &ChannelSubproblem, iters: usize) -> Result<Vec<f64>, OracleError> {
    let n = problem.links.len();
    let poly = crate::polytope::PolytopeB::simplex_cap(n, problem.beta);
    let floors = vec![problem.theta_min; n];
    let grad = |theta: &[f64]| -> Vec<f64> {
        problem
            .links
            .iter()
            .zip(theta)
            .map(|(l, &t)| {
                if l.a > 0.0 {
                    crate::local_solvers::root::marginal_rate(l.a / t) / l.weight
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut theta = vec![problem.beta / n as f64; n];
    let mut value = problem.objective(&theta);
    let mut step = 1.0;
    for _ in 0..iters {
        let g = grad(&theta);
        let mut accepted = false;
        while step > 1e-16 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t + step * gi).collect();
            let proj = poly.project(&trial, &floors)?;
            let v = problem.objective(&proj);
            // sufficient increase relative to the projected step
            let moved: f64 = proj.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
            if v >= value + 1e-4 * moved / step {
                let done = moved.sqrt() < 1e-15;
                theta = proj;
                value = v;
                accepted = true;
                step *= 2.0;
                if done {
                    return Ok(theta);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(theta)
}
