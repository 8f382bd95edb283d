//! Spectral efficiency of direct (DT) and decode-and-forward (DF) links.
//!
//! All rates are in bits/s/Hz. Noise and bandwidth are folded into the gains,
//! so a DT link with power `p`, gain `g` and channel share `theta` achieves
//! `theta * log2(1 + p g / theta)`.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::scenario::{LinkKind, NetworkScenario};

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("channel share must be positive, got {0}")]
    NonPositiveShare(f64),
    #[error("negative or non-finite power {0}")]
    BadPower(f64),
    #[error("allocation has {found} links, scenario has {expected}")]
    Dimension { expected: usize, found: usize },
}

/// Source and relay power of one link. `relay` is zero on DT links.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkPower {
    pub source: f64,
    pub relay: f64,
}

impl LinkPower {
    pub const ZERO: LinkPower = LinkPower {
        source: 0.0,
        relay: 0.0,
    };

    pub fn new(source: f64, relay: f64) -> Self {
        LinkPower { source, relay }
    }
}

/// All primal variables: per-link powers and channel shares, in the
/// scenario's link order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Allocation {
    pub power: Vec<LinkPower>,
    pub theta: Vec<f64>,
}

impl Allocation {
    pub fn zeros(links: usize, theta: f64) -> Self {
        Allocation {
            power: vec![LinkPower::ZERO; links],
            theta: vec![theta; links],
        }
    }
}

/// Channel gains of one DF link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfGains {
    pub sr: f64,
    pub sd: f64,
    pub rd: f64,
}

fn check(theta: f64, powers: &[f64]) -> Result<(), RateError> {
    if !(theta > 0.0) {
        return Err(RateError::NonPositiveShare(theta));
    }
    for &p in powers {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(RateError::BadPower(p));
        }
    }
    Ok(())
}

/// `(theta / w) log2(1 + w s / theta)`: the common perspective form of every
/// rate branch, with `w = 1` for DT and `w = 2` for the half-duplex DF phases.
#[inline]
pub(crate) fn perspective_rate(s: f64, theta: f64, w: f64) -> f64 {
    (theta / w) * (w * s / theta).ln_1p() / LN_2
}

pub fn rate_dt(p_s: f64, theta: f64, g_sd: f64) -> Result<f64, RateError> {
    check(theta, &[p_s])?;
    Ok(perspective_rate(p_s * g_sd, theta, 1.0))
}

/// The two DF branches: `(source-relay, combined at destination)`.
#[inline]
pub(crate) fn df_branches(p_s: f64, p_r: f64, theta: f64, g: &DfGains) -> (f64, f64) {
    (
        perspective_rate(p_s * g.sr, theta, 2.0),
        perspective_rate(p_s * g.sd + p_r * g.rd, theta, 2.0),
    )
}

pub fn rate_df(p_s: f64, p_r: f64, theta: f64, g: &DfGains) -> Result<f64, RateError> {
    check(theta, &[p_s, p_r])?;
    let (relay_branch, direct_branch) = df_branches(p_s, p_r, theta, g);
    Ok(relay_branch.min(direct_branch))
}

/// Total spectral efficiency of an allocation.
pub fn objective(scenario: &NetworkScenario, alloc: &Allocation) -> Result<f64, RateError> {
    let links = scenario.links();
    if alloc.power.len() != links.len() || alloc.theta.len() != links.len() {
        return Err(RateError::Dimension {
            expected: links.len(),
            found: alloc.power.len().min(alloc.theta.len()),
        });
    }
    let mut total = 0.0;
    for i in 0..links.len() {
        total += link_rate(scenario, i, &alloc.power[i], alloc.theta[i])?;
    }
    Ok(total)
}

/// Rate of the `index`-th link of the scenario.
pub fn link_rate(scenario: &NetworkScenario, index: usize, p: &LinkPower, theta: f64) -> Result<f64, RateError> {
    let link = &scenario.links()[index];
    match link.kind {
        LinkKind::Direct => rate_dt(p.source, theta, scenario.gains.sd[link.stream]),
        LinkKind::Relayed { .. } => {
            let (sr, sd, rd) = scenario.df_gains(link).expect("relayed link");
            rate_df(p.source, p.relay, theta, &DfGains { sr, sd, rd })
        }
    }
}

/// Relative tolerance used to decide that the two DF branches coincide.
pub const KINK_TOL: f64 = 1e-9;

/// Which DF branch limits the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfRegime {
    /// The source-relay hop is the bottleneck; relay power does not matter.
    RelayLimited,
    /// The combined source+relay signal at the destination is the bottleneck.
    DestinationLimited,
    /// Both branches coincide.
    Kink,
}

/// Classifies a DF operating point by comparing `g_rd p_r` with
/// `(g_sr - g_sd) p_s` under [`KINK_TOL`].
pub fn df_regime(p_s: f64, p_r: f64, g: &DfGains) -> DfRegime {
    let lhs = g.rd * p_r;
    let rhs = (g.sr - g.sd) * p_s;
    let scale = 1.0 + lhs.abs() + rhs.abs();
    if (lhs - rhs).abs() <= KINK_TOL * scale {
        DfRegime::Kink
    } else if lhs > rhs {
        DfRegime::RelayLimited
    } else {
        DfRegime::DestinationLimited
    }
}

/// Gradients of the two branches with respect to `(p_s, p_r)`.
pub(crate) fn df_branch_gradients(p_s: f64, p_r: f64, theta: f64, g: &DfGains) -> ([f64; 2], [f64; 2]) {
    let relay = g.sr / (LN_2 * (1.0 + 2.0 * g.sr * p_s / theta));
    let dest = 1.0 / (LN_2 * (1.0 + 2.0 * (g.sd * p_s + g.rd * p_r) / theta));
    ([relay, 0.0], [g.sd * dest, g.rd * dest])
}

/// A subgradient of the DF rate in `(p_s, p_r)` with weight `tau` on the
/// destination branch: `tau * grad(dest) + (1 - tau) * grad(relay)`.
pub fn df_subgradient_with_weight(
    p_s: f64,
    p_r: f64,
    theta: f64,
    g: &DfGains,
    tau: f64,
) -> Result<[f64; 2], RateError> {
    check(theta, &[p_s, p_r])?;
    let (relay, dest) = df_branch_gradients(p_s, p_r, theta, g);
    Ok([
        tau * dest[0] + (1.0 - tau) * relay[0],
        tau * dest[1] + (1.0 - tau) * relay[1],
    ])
}

/// Gradient of the active branch; on the kink the midpoint of the two branch
/// gradients.
pub fn df_subgradient(p_s: f64, p_r: f64, theta: f64, g: &DfGains) -> Result<[f64; 2], RateError> {
    let tau = match df_regime(p_s, p_r, g) {
        DfRegime::RelayLimited => 0.0,
        DfRegime::DestinationLimited => 1.0,
        DfRegime::Kink => 0.5,
    };
    df_subgradient_with_weight(p_s, p_r, theta, g, tau)
}

/// Derivative of the DT rate in `p_s`.
pub fn dt_derivative(p_s: f64, theta: f64, g_sd: f64) -> Result<f64, RateError> {
    check(theta, &[p_s])?;
    Ok(g_sd / (LN_2 * (1.0 + g_sd * p_s / theta)))
}
