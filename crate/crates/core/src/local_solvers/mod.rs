//! Closed-form maximizers of the per-link proximal Lagrangian subproblems and
//! the per-control-node channel allocation.

pub mod channel;
pub mod root;
pub mod unregularized;

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::rates::{df_branch_gradients, df_regime, perspective_rate, DfGains, DfRegime, LinkPower, KINK_TOL};

pub use channel::{
    channel_a_values, channel_kkt_residual, solve_channel_subproblem, ChannelLink, ChannelSolution, ChannelSubproblem,
};
pub use root::{solve_rate_root, RootSolution};
pub use unregularized::{solve_df_unregularized, solve_dt_unregularized};

#[derive(Debug, Error, PartialEq)]
pub enum LocalError {
    #[error("root equation has no finite root for price {b}")]
    NoRoot { b: f64 },
    #[error("root solver did not converge for price {b}")]
    RootNoConvergence { b: f64 },
    #[error("channel budget {beta} is below the floor total {floor}")]
    InfeasibleBudget { beta: f64, floor: f64 },
    #[error("channel price search did not converge")]
    ChannelNoConvergence,
    #[error("no DF candidate is consistent with its region")]
    NoConsistentCandidate,
    #[error("{0}")]
    BadInput(String),
}

/// Maximizer over `P >= 0` of
/// `(theta/2) log2(1 + 2 P g / theta) - (c v / 2) P^2 + c q P - mu P`.
///
/// Stationarity is a quadratic in `P`; its positive root is taken with the
/// cancellation-free form and clamped at zero. Works for `mu = 0`.
pub fn f_core(theta: f64, c: f64, mu: f64, q: f64, g: f64, v: f64) -> f64 {
    let a = c * v;
    let lin = mu - c * q;
    let shift = theta / (2.0 * g);
    let c0 = lin * shift - theta / (2.0 * LN_2);
    if c0 >= 0.0 {
        // marginal gain at P = 0 does not beat the price
        return 0.0;
    }
    let half = a * shift;
    let b = half + lin;
    let disc = (half - lin) * (half - lin) + 2.0 * a * theta / LN_2;
    let sq = disc.sqrt();
    let root = if b > 0.0 {
        -2.0 * c0 / (b + sq)
    } else {
        (sq - b) / (2.0 * a)
    };
    root.max(0.0)
}

/// The explicit radical form of [`f_core`]. Divides by `mu`, so it is only a
/// cross-check for `mu > 0`.
pub fn f_core_radical(theta: f64, c: f64, mu: f64, q: f64, g: f64, v: f64) -> f64 {
    let wf = theta / (mu * LN_2);
    let x = mu / (c * v) - q / v + wf - theta / (2.0 * g);
    let y = 2.0 * q * theta / (mu * v * LN_2) + theta * theta / (g * mu * LN_2) - wf * wf;
    // sqrt(x^2 + y) - x without cancellation when x is large and positive
    let s = x * x + y;
    let tail = if x > 0.0 {
        y / ((s.max(0.0)).sqrt() + x)
    } else {
        s.max(0.0).sqrt() - x
    };
    (0.5 * (wf - theta / g + tail)).max(0.0)
}

/// Local power problem of a DT link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtSubproblem {
    pub theta_dt: f64,
    pub c: f64,
    pub mu: f64,
    pub q_s: f64,
    pub g_sd: f64,
}

impl DtSubproblem {
    pub fn objective(&self, p_s: f64) -> f64 {
        perspective_rate(p_s * self.g_sd, self.theta_dt, 1.0) - 0.5 * self.c * (p_s - self.q_s).powi(2) - self.mu * p_s
    }

    /// Derivative of the objective in `p_s`.
    pub fn gradient(&self, p_s: f64) -> f64 {
        self.g_sd / (LN_2 * (1.0 + self.g_sd * p_s / self.theta_dt)) - self.c * (p_s - self.q_s) - self.mu
    }
}

/// Local power problem of a DF link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfSubproblem {
    pub theta_df: f64,
    pub c: f64,
    pub mu: f64,
    pub nu: f64,
    pub q_s: f64,
    pub q_r: f64,
    pub gains: DfGains,
}

impl DfSubproblem {
    fn prox(&self, p: &LinkPower) -> f64 {
        0.5 * self.c * ((p.source - self.q_s).powi(2) + (p.relay - self.q_r).powi(2))
            + self.mu * p.source
            + self.nu * p.relay
    }

    pub fn objective(&self, p: &LinkPower) -> f64 {
        let g = &self.gains;
        let relay = perspective_rate(p.source * g.sr, self.theta_df, 2.0);
        let dest = perspective_rate(p.source * g.sd + p.relay * g.rd, self.theta_df, 2.0);
        relay.min(dest) - self.prox(p)
    }
}

/// Which case of the DF solution produced the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfCase {
    RelayLimited,
    DestinationLimited,
    /// Destination-limited with the relay switched off.
    DestinationLimitedNoRelay,
    Kink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfSolution {
    pub power: LinkPower,
    pub case: DfCase,
}

pub fn solve_dt_local(sub: &DtSubproblem) -> f64 {
    f_core(2.0 * sub.theta_dt, sub.c, sub.mu, sub.q_s, sub.g_sd, 1.0)
}

/// Best point of the relaxation in which the rate is the destination branch
/// alone: the interior solution along the gain direction, or one of the two
/// faces of the orthant.
fn destination_relaxation(sub: &DfSubproblem) -> (LinkPower, DfCase) {
    let g = &sub.gains;
    let c = sub.c;
    let gg = g.sd * g.sd + g.rd * g.rd;
    let dest_obj = |p: &LinkPower| perspective_rate(p.source * g.sd + p.relay * g.rd, sub.theta_df, 2.0) - sub.prox(p);

    let mut best = {
        let ps = f_core(sub.theta_df, c, sub.mu, sub.q_s, g.sd, 1.0);
        (LinkPower::new(ps, 0.0), DfCase::DestinationLimitedNoRelay)
    };
    let mut best_val = dest_obj(&best.0);

    let e = f_core(
        sub.theta_df * gg,
        c,
        g.sd * sub.mu + g.rd * sub.nu,
        g.sd * sub.q_s + g.rd * sub.q_r,
        gg,
        1.0,
    );
    let (zs, zr) = (sub.q_s - sub.mu / c, sub.q_r - sub.nu / c);
    let lambda = (e - (g.sd * zs + g.rd * zr)) / gg;
    let (ps, pr) = (zs + lambda * g.sd, zr + lambda * g.rd);
    if ps >= 0.0 && pr >= 0.0 {
        let p = LinkPower::new(ps, pr);
        let v = dest_obj(&p);
        if v > best_val {
            best = (p, DfCase::DestinationLimited);
            best_val = v;
        }
    }

    let pr = f_core(sub.theta_df, c, sub.nu, sub.q_r, g.rd, 1.0);
    let p = LinkPower::new(0.0, pr);
    if dest_obj(&p) > best_val {
        best = (p, DfCase::DestinationLimited);
    }
    best
}

fn region_gap(p: &LinkPower, g: &DfGains) -> (f64, f64) {
    let lhs = g.rd * p.relay;
    let rhs = (g.sr - g.sd) * p.source;
    (lhs - rhs, 1.0 + lhs.abs() + rhs.abs())
}

fn df_candidates(sub: &DfSubproblem, tol: f64) -> Vec<(LinkPower, DfCase)> {
    let g = &sub.gains;
    let c = sub.c;
    let mut out = Vec::with_capacity(3);

    // rate is the source-relay branch; relay power only pays its price
    let relay_limited = LinkPower::new(
        f_core(sub.theta_df, c, sub.mu, sub.q_s, g.sr, 1.0),
        (sub.q_r - sub.nu / c).max(0.0),
    );
    let (gap, scale) = region_gap(&relay_limited, g);
    if gap >= -tol * scale {
        out.push((relay_limited, DfCase::RelayLimited));
    }

    let (dest, case) = destination_relaxation(sub);
    let (gap, scale) = region_gap(&dest, g);
    if gap <= tol * scale {
        out.push((dest, case));
    }

    // on the kink g_rd p_r = k p_s, both branches equal the relay branch
    let k = (g.sr - g.sd) / g.rd;
    let kink = if k > 0.0 {
        let ps = f_core(
            sub.theta_df,
            c,
            sub.mu + sub.nu * k,
            sub.q_s + k * sub.q_r,
            g.sr,
            1.0 + k * k,
        );
        LinkPower::new(ps, k * ps)
    } else if k == 0.0 {
        LinkPower::new(f_core(sub.theta_df, c, sub.mu, sub.q_s, g.sr, 1.0), 0.0)
    } else {
        LinkPower::ZERO
    };
    out.push((kink, DfCase::Kink));
    out
}

/// Maximizer of the DF local problem by enumerating the relay-limited,
/// destination-limited and kink candidates, keeping those consistent with
/// their region, and returning the best.
pub fn solve_df_local(sub: &DfSubproblem) -> Result<DfSolution, LocalError> {
    for tol in [KINK_TOL, 1e3 * KINK_TOL] {
        let best = df_candidates(sub, tol)
            .into_iter()
            .filter(|(p, _)| p.source.is_finite() && p.relay.is_finite())
            .map(|(p, case)| (sub.objective(&p), p, case))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, power, case)) = best {
            return Ok(DfSolution { power, case });
        }
    }
    Err(LocalError::NoConsistentCandidate)
}

/// Scale used to make the power KKT residuals relative: the largest term
/// entering the stationarity condition.
fn kkt_scale(terms: &[f64]) -> f64 {
    terms.iter().fold(1.0f64, |m, t| m.max(t.abs()))
}

fn coordinate_residual(p: f64, grad: f64) -> f64 {
    if p > 0.0 {
        grad.abs()
    } else {
        grad.max(0.0)
    }
}

/// KKT residual of a DT local solution: stationarity where `p_s > 0`, dual
/// feasibility of the bound where `p_s = 0`, relative to the gradient scale.
pub fn dt_kkt_residual(sub: &DtSubproblem, p_s: f64) -> f64 {
    let rate = sub.g_sd / (LN_2 * (1.0 + sub.g_sd * p_s / sub.theta_dt));
    let scale = kkt_scale(&[rate, sub.c * p_s, sub.c * sub.q_s, sub.mu]);
    (coordinate_residual(p_s, sub.gradient(p_s)) + (-p_s).max(0.0)) / scale
}

/// KKT residual of a DF local solution. On the kink the branch weight is the
/// one minimizing the residual, found by ternary search since the residual is
/// convex in it.
pub fn df_kkt_residual(sub: &DfSubproblem, p: &LinkPower) -> f64 {
    let g = &sub.gains;
    let (relay, dest) = df_branch_gradients(p.source, p.relay, sub.theta_df, g);
    let prox_s = sub.c * (p.source - sub.q_s) + sub.mu;
    let prox_r = sub.c * (p.relay - sub.q_r) + sub.nu;
    let scale = kkt_scale(&[
        relay[0],
        dest[0],
        dest[1],
        sub.c * p.source,
        sub.c * sub.q_s,
        sub.mu,
        sub.c * p.relay,
        sub.c * sub.q_r,
        sub.nu,
    ]);
    let resid = |tau: f64| {
        let gs = tau * dest[0] + (1.0 - tau) * relay[0] - prox_s;
        let gr = tau * dest[1] + (1.0 - tau) * relay[1] - prox_r;
        coordinate_residual(p.source, gs).max(coordinate_residual(p.relay, gr))
    };
    let feas = (-p.source).max(0.0).max((-p.relay).max(0.0));
    let r = match df_regime(p.source, p.relay, g) {
        DfRegime::RelayLimited => resid(0.0),
        DfRegime::DestinationLimited => resid(1.0),
        DfRegime::Kink => {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if resid(m1) <= resid(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            resid(0.5 * (lo + hi)).min(resid(0.0)).min(resid(1.0))
        }
    };
    (r + feas) / scale
}
