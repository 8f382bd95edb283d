//! Scalar root of the channel-share stationarity equation
//! `log2(1 + a/x) - (a/x) / (ln2 (1 + a/x)) = b`.

use std::f64::consts::LN_2;

use super::LocalError;

/// Maximum Newton iterations before the solver gives up.
pub const MAX_ROOT_ITERS: usize = 100;

/// Left-hand side as a function of `u = a/x`. Strictly increasing from 0.
pub fn marginal_rate(u: f64) -> f64 {
    if u < 1e-2 {
        // ln(1+u) - u/(1+u) = sum_{k>=2} (-1)^k (k-1)/k u^k
        let mut term = u * u;
        let mut sum = 0.0;
        for k in 2..14 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (kf - 1.0) / kf * term;
            term *= u;
        }
        sum / LN_2
    } else {
        (u.ln_1p() - u / (1.0 + u)) / LN_2
    }
}

/// Derivative of [`marginal_rate`] in `u`.
pub fn marginal_rate_slope(u: f64) -> f64 {
    u / (LN_2 * (1.0 + u) * (1.0 + u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolution {
    pub x: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves for `u` with `marginal_rate(u) = b` by Newton's method safeguarded
/// by bisection on a guaranteed bracket.
pub(crate) fn solve_u(b: f64) -> Result<(f64, usize, f64), LocalError> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(LocalError::NoRoot { b });
    }
    // marginal_rate(u) >= log2(1 + u) - 1/ln2, so this upper end is a bracket.
    let mut hi = (b + 1.0 / LN_2).exp2() - 1.0;
    let mut lo = 0.0;
    let mut u = if b < 0.5 { (2.0 * LN_2 * b).sqrt() } else { hi };
    u = u.clamp(f64::MIN_POSITIVE, hi);
    let tol = 1e-14 * b.max(1.0);
    for iter in 1..=MAX_ROOT_ITERS {
        let r = marginal_rate(u) - b;
        if r.abs() <= tol {
            return Ok((u, iter, r.abs()));
        }
        if r > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let slope = marginal_rate_slope(u);
        let mut next = u - r / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-16 * u {
            let res = (marginal_rate(next) - b).abs();
            return Ok((next, iter, res));
        }
        u = next;
    }
    Err(LocalError::RootNoConvergence { b })
}

/// Root `x > 0` of the stationarity equation for gain-power product `a > 0`
/// and price `b > 0`.
pub fn solve_rate_root(a: f64, b: f64) -> Result<RootSolution, LocalError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(LocalError::BadInput(format!("root equation needs a > 0, got {a}")));
    }
    let (u, iterations, residual) = solve_u(b)?;
    Ok(RootSolution {
        x: a / u,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisection_oracle(a: f64, b: f64) -> f64 {
        let lhs = |x: f64| {
            let u = a / x;
            u.ln_1p() / LN_2 - u / (LN_2 * (1.0 + u))
        };
        // decreasing in x
        let (mut lo, mut hi) = (1e-12f64, 1e12f64);
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if lhs(mid) > b {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }

    #[test]
    fn matches_bisection_oracle() {
        let x = solve_rate_root(1.0, 0.5).unwrap();
        let oracle = bisection_oracle(1.0, 0.5);
        assert!((x.x - oracle).abs() <= 1e-9, "{} vs {oracle}", x.x);
        assert!(x.residual <= 1e-10);
    }

    #[test]
    fn scale_invariance() {
        let x1 = solve_rate_root(1.3, 0.8).unwrap().x;
        let x2 = solve_rate_root(2.6, 0.8).unwrap().x;
        assert!((x2 - 2.0 * x1).abs() <= 1e-13 * x2);
    }

    #[test]
    fn larger_price_gives_smaller_share() {
        let mut prev = f64::INFINITY;
        for b in [1e-6, 1e-3, 0.1, 0.5, 1.0, 3.0, 10.0, 40.0] {
            let x = solve_rate_root(2.0, b).unwrap().x;
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn residual_and_iterations_over_wide_range() {
        let mut worst = 0;
        for i in 0..200 {
            let b = 10f64.powf(-8.0 + 9.5 * i as f64 / 199.0);
            let sol = solve_rate_root(1.0, b).unwrap();
            let u = 1.0 / sol.x;
            assert!((marginal_rate(u) - b).abs() <= 1e-10, "b = {b}");
            worst = worst.max(sol.iterations);
        }
        assert!(worst <= 30, "worst iteration count {worst}");
    }

    #[test]
    fn nonpositive_price_has_no_root() {
        assert!(matches!(solve_rate_root(1.0, 0.0), Err(LocalError::NoRoot { .. })));
        assert!(solve_rate_root(1.0, -1.0).is_err());
    }

    #[test]
    fn series_branch_is_continuous() {
        let u: f64 = 1e-2;
        let direct = (u.ln_1p() - u / (1.0 + u)) / LN_2;
        assert!((marginal_rate(u * (1.0 - 1e-12)) - direct).abs() < 1e-15);
    }
}
