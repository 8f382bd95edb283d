//! Per-control-node channel allocation: maximize the sum of link rates over
//! channel shares `theta >= theta_min` with `sum theta <= beta`.
//!
//! Every link rate has the form `(theta / w) log2(1 + a / theta)`. For a price
//! `omega` on the budget, the share of a link solves the scalar root equation
//! with `b = w * omega`, floored at `theta_min`; `omega` is then searched so
//! the budget binds.

use crate::rates::{DfGains, LinkPower};
use crate::scenario::{LinkKind, NetworkScenario};

use super::root::{marginal_rate, marginal_rate_slope, solve_u};
use super::LocalError;

/// Effective SNR numerator `a` of one link and its price multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelLink {
    pub a: f64,
    pub weight: f64,
}

impl ChannelLink {
    pub fn direct(g_sd: f64, p_s: f64) -> Self {
        ChannelLink {
            a: g_sd * p_s,
            weight: 1.0,
        }
    }

    pub fn relayed(g: &DfGains, p: &LinkPower) -> Self {
        let a = 2.0 * (g.sr * p.source).min(g.sd * p.source + g.rd * p.relay);
        ChannelLink { a, weight: 2.0 }
    }

    /// Rate of this link at channel share `theta`.
    pub fn rate(&self, theta: f64) -> f64 {
        crate::rates::perspective_rate(self.a / self.weight, theta, self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSubproblem {
    pub links: Vec<ChannelLink>,
    pub beta: f64,
    pub theta_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSolution {
    pub theta: Vec<f64>,
    pub omega: f64,
    /// Largest Newton iteration count over the final per-link root solves.
    pub max_root_iterations: usize,
    /// Largest residual of the root equation over the final per-link solves.
    pub max_root_residual: f64,
}

/// The `(a, weight)` pairs of every link managed by control node `control`,
/// evaluated at `powers` (indexed like the scenario's links).
pub fn channel_a_values(scenario: &NetworkScenario, control: usize, powers: &[LinkPower]) -> Vec<ChannelLink> {
    scenario.incidence().control_links[control]
        .iter()
        .map(|&i| {
            let link = &scenario.links()[i];
            match link.kind {
                LinkKind::Direct => ChannelLink::direct(scenario.gains.sd[link.stream], powers[i].source),
                LinkKind::Relayed { .. } => {
                    let (sr, sd, rd) = scenario.df_gains(link).expect("relayed link");
                    ChannelLink::relayed(&DfGains { sr, sd, rd }, &powers[i])
                }
            }
        })
        .collect()
}

impl ChannelSubproblem {
    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.links.iter().zip(theta).map(|(l, &t)| l.rate(t)).sum()
    }

    /// Price above which link `i` sits at the floor.
    fn floor_price(&self, link: &ChannelLink) -> f64 {
        marginal_rate(link.a / self.theta_min) / link.weight
    }

    /// Shares at price `omega`, the derivative of their sum in `omega`, and
    /// root statistics.
    fn shares_at(&self, omega: f64) -> Result<(Vec<f64>, f64, usize, f64), LocalError> {
        let mut theta = Vec::with_capacity(self.links.len());
        let mut slope = 0.0;
        let mut iters = 0;
        let mut resid: f64 = 0.0;
        for link in &self.links {
            if link.a <= 0.0 || omega >= self.floor_price(link) {
                theta.push(self.theta_min);
                continue;
            }
            let (u, it, r) = solve_u(link.weight * omega)?;
            iters = iters.max(it);
            resid = resid.max(r);
            let x = link.a / u;
            if x <= self.theta_min {
                theta.push(self.theta_min);
            } else {
                theta.push(x);
                // dx/domega = -(a / u^2) * w / phi'(u)
                slope -= link.a / (u * u) * link.weight / marginal_rate_slope(u);
            }
        }
        Ok((theta, slope, iters, resid))
    }
}

/// Solves one control node's channel allocation. `omega_hint` warm-starts the
/// price search.
pub fn solve_channel_subproblem(
    problem: &ChannelSubproblem,
    omega_hint: Option<f64>,
) -> Result<ChannelSolution, LocalError> {
    let n = problem.links.len() as f64;
    let floor_total = n * problem.theta_min;
    if problem.beta < floor_total * (1.0 - 1e-12) {
        return Err(LocalError::InfeasibleBudget {
            beta: problem.beta,
            floor: floor_total,
        });
    }
    if problem.links.iter().any(|l| !(l.a >= 0.0) || !l.a.is_finite()) {
        return Err(LocalError::BadInput(
            "channel numerators must be finite and >= 0".into(),
        ));
    }
    let floored = || ChannelSolution {
        theta: vec![problem.theta_min; problem.links.len()],
        omega: 0.0,
        max_root_iterations: 0,
        max_root_residual: 0.0,
    };
    if problem.links.iter().all(|l| l.a == 0.0) {
        return Ok(floored());
    }
    let omega_max = problem
        .links
        .iter()
        .filter(|l| l.a > 0.0)
        .map(|l| problem.floor_price(l))
        .fold(0.0f64, f64::max);
    if problem.beta - floor_total <= 1e-14 * problem.beta.max(1.0) {
        return Ok(ChannelSolution {
            omega: omega_max,
            ..floored()
        });
    }

    // sum(omega) is continuous and decreasing on (0, omega_max], from +inf down
    // to the floor total, so the budget is met exactly at a unique price.
    let mut hi = omega_max;
    let mut omega = omega_hint.filter(|w| *w > 0.0 && *w < hi).unwrap_or(0.5 * hi);
    let mut lo = omega;
    loop {
        let (theta, ..) = problem.shares_at(lo)?;
        if theta.iter().sum::<f64>() >= problem.beta {
            break;
        }
        hi = lo;
        lo *= 0.25;
        if lo < 1e-300 {
            return Err(LocalError::BadInput("channel price underflow".into()));
        }
    }
    omega = omega.clamp(lo, hi);

    let tol = 1e-14 * problem.beta.max(1.0);
    for _ in 0..400 {
        let (theta, slope, iters, resid) = problem.shares_at(omega)?;
        let gap = theta.iter().sum::<f64>() - problem.beta;
        if gap.abs() <= tol || (hi - lo) <= 1e-15 * hi {
            let mut theta = theta;
            if gap > 0.0 {
                // never overshoot the budget, even by rounding
                let widest = (0..theta.len()).max_by(|&a, &b| theta[a].total_cmp(&theta[b])).unwrap();
                theta[widest] -= gap;
            }
            return Ok(ChannelSolution {
                theta,
                omega,
                max_root_iterations: iters,
                max_root_residual: resid,
            });
        }
        if gap > 0.0 {
            lo = omega;
        } else {
            hi = omega;
        }
        let mut next = if slope < 0.0 { omega - gap / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        }
        omega = next;
    }
    Err(LocalError::ChannelNoConvergence)
}

/// KKT residual of a channel solution: budget gap, stationarity of free
/// links, and dual feasibility of floored ones.
pub fn channel_kkt_residual(problem: &ChannelSubproblem, sol: &ChannelSolution) -> f64 {
    let mut worst: f64 = 0.0;
    let active = problem.links.iter().any(|l| l.a > 0.0);
    if active {
        worst = worst.max((sol.theta.iter().sum::<f64>() - problem.beta).abs());
    }
    for (link, &t) in problem.links.iter().zip(&sol.theta) {
        worst = worst.max((problem.theta_min - t).max(0.0));
        let slope = if link.a > 0.0 {
            marginal_rate(link.a / t) / link.weight
        } else {
            0.0
        };
        if t > problem.theta_min * (1.0 + 1e-12) {
            worst = worst.max((slope - sol.omega).abs());
        } else {
            worst = worst.max((slope - sol.omega).max(0.0));
        }
    }
    worst
}
