//! Local maximizers without the proximal term, as used by plain dual
//! decomposition. Powers are boxed by the node caps so the problems stay
//! bounded. The DF problem is then not strictly concave: at a zero relay
//! price every relay power above the kink is optimal, and the tie is broken
//! towards the cap. This is the behaviour that makes plain dual decomposition
//! oscillate.

use std::f64::consts::LN_2;

use crate::rates::{perspective_rate, DfGains, LinkPower};

/// `argmax_{0 <= p <= p_max} theta log2(1 + p g / theta) - mu p`.
pub fn solve_dt_unregularized(theta: f64, mu: f64, g: f64, p_max: f64) -> f64 {
    if mu <= 0.0 {
        return p_max;
    }
    (theta / (mu * LN_2) - theta / g).clamp(0.0, p_max)
}

/// Best relay power for a fixed source power.
fn best_relay(p_s: f64, theta: f64, nu: f64, g: &DfGains, pr_max: f64) -> f64 {
    let kink = ((g.sr - g.sd) * p_s / g.rd).clamp(0.0, pr_max);
    if nu <= 0.0 {
        return pr_max;
    }
    let level = 0.5 * theta * (g.rd / (nu * LN_2) - 1.0);
    ((level - g.sd * p_s) / g.rd).clamp(0.0, kink)
}

/// Maximizer of the DF rate minus linear prices over the power box, by
/// golden-section search on the source power of the concave partial maximum.
pub fn solve_df_unregularized(theta: f64, mu: f64, nu: f64, g: &DfGains, ps_max: f64, pr_max: f64) -> LinkPower {
    let value = |p_s: f64| {
        let p_r = best_relay(p_s, theta, nu, g, pr_max);
        let rate = perspective_rate(p_s * g.sr, theta, 2.0).min(perspective_rate(p_s * g.sd + p_r * g.rd, theta, 2.0));
        rate - mu * p_s - nu * p_r
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, ps_max);
    for _ in 0..200 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if value(a) >= value(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut p_s = 0.5 * (lo + hi);
    for end in [0.0, ps_max] {
        if value(end) > value(p_s) {
            p_s = end;
        }
    }
    LinkPower::new(p_s, best_relay(p_s, theta, nu, g, pr_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_is_clamped_water_filling() {
        assert_eq!(solve_dt_unregularized(0.5, 0.0, 2.0, 1.0), 1.0);
        let p = solve_dt_unregularized(0.5, 2.0, 2.0, 10.0);
        assert!((p - (0.5 / (2.0 * LN_2) - 0.25)).abs() < 1e-15);
        assert_eq!(solve_dt_unregularized(0.5, 100.0, 2.0, 10.0), 0.0);
    }

    #[test]
    fn relay_power_jumps_with_the_price() {
        // relay-limited link: relay power is useless beyond the kink
        let g = DfGains {
            sr: 1.0,
            sd: 0.5,
            rd: 50.0,
        };
        let free = solve_df_unregularized(0.3, 0.1, 0.0, &g, 1.0, 1.0);
        let priced = solve_df_unregularized(0.3, 0.1, 1e-6, &g, 1.0, 1.0);
        assert_eq!(free.relay, 1.0);
        assert!(priced.relay < 0.02, "{priced:?}");
    }
}
