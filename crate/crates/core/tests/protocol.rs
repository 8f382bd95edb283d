use std::path::PathBuf;

use proptest::prelude::*;

use relayopt::adjustment::{run_algorithm_1, AdjustParams, DeltaSchedule};
use relayopt::local_solvers::{solve_channel_subproblem, ChannelLink, ChannelSubproblem};
use relayopt::oracle::solve_centralized;
use relayopt::protocol::{check_stationary, run_algorithm_a, AlgoParams, Mode};
use relayopt::rates::{objective, rate_df, rate_dt, DfGains};
use relayopt::scenario::{load_scenario, NetworkScenario};

fn scenario(name: &str) -> NetworkScenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", &format!("{name}.toml")]
        .iter()
        .collect();
    load_scenario(path).unwrap()
}

#[test]
fn small_scenarios_match_the_oracle() {
    for (name, tol) in [("single_link", 1e-6), ("two_link", 1e-4), ("mirrored", 1e-4)] {
        let sc = scenario(name);
        let run = run_algorithm_a(&sc, &AlgoParams::for_scenario(&sc), None).unwrap();
        assert!(run.converged, "{name}");
        let ours = run.objective(&sc).unwrap();
        let best = solve_centralized(&sc, 1e-10).unwrap().objective;
        assert!((ours - best).abs() <= tol * best, "{name}: {ours} vs {best}");
    }
}

#[test]
fn converged_state_is_nearly_stationary() {
    let sc = scenario("two_link");
    let params = AlgoParams::for_scenario(&sc);
    let run = run_algorithm_a(&sc, &params, None).unwrap();
    let report = check_stationary(&run.state, &sc, &params).unwrap();
    assert!(report.max() < 1e-3, "{report:?}");
}

#[test]
fn warm_start_from_a_converged_state_stops_at_once() {
    let sc = scenario("two_link");
    let params = AlgoParams::for_scenario(&sc);
    let first = run_algorithm_a(&sc, &params, None).unwrap();
    let second = run_algorithm_a(&sc, &params, Some(first.state.clone())).unwrap();
    assert!(second.converged);
    assert!(second.iterations <= 2, "{}", second.iterations);
    let (a, b) = (first.objective(&sc).unwrap(), second.objective(&sc).unwrap());
    // the extra round moves the point by at most one dual step
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn powers_and_shares_stay_feasible() {
    let sc = scenario("default");
    let run = run_algorithm_a(&sc, &AlgoParams::for_scenario(&sc), None).unwrap();
    let alloc = run.allocation();
    let inc = sc.incidence();
    let caps = sc.power_caps();
    for (l, links) in inc.source_links.iter().enumerate() {
        let used: f64 = links.iter().map(|&i| alloc.power[i].source).sum();
        assert!(used <= caps[l] * (1.0 + 1e-3), "node {l}: {used}");
    }
    for (t, links) in inc.control_links.iter().enumerate() {
        let used: f64 = links.iter().map(|&i| alloc.theta[i]).sum();
        assert!(used <= sc.channel.beta[t] + 1e-12);
        assert!(links.iter().all(|&i| alloc.theta[i] >= sc.theta_min()));
    }
}

#[test]
fn relays_never_hurt_the_optimum() {
    let sc = scenario("default");
    let with = solve_centralized(&sc, 1e-9).unwrap().objective;
    let without = solve_centralized(&sc.without_relays(), 1e-9).unwrap().objective;
    assert!(with > without);
}

#[test]
fn classic_mode_reaches_the_same_point() {
    let sc = scenario("mirrored");
    let fast = AlgoParams::for_scenario(&sc);
    let mut classic = fast.clone();
    classic.mode = Mode::ClassicProximal;
    let a = run_algorithm_a(&sc, &fast, None).unwrap();
    let b = run_algorithm_a(&sc, &classic, None).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.objective(&sc).unwrap() - b.objective(&sc).unwrap()).abs() < 2e-3);
}

#[test]
fn budget_adjustment_improves_on_fixed_budgets() {
    let sc = scenario("mirrored");
    let algo = AlgoParams::for_scenario(&sc);
    let fixed = run_algorithm_a(&sc, &algo, None).unwrap().objective(&sc).unwrap();
    let adjust = AdjustParams {
        schedule: DeltaSchedule::Diminishing,
        ..AdjustParams::for_scenario(&sc)
    };
    let r = run_algorithm_1(&sc, &algo, &adjust).unwrap();
    assert!(r.converged);
    assert!(r.objective > fixed, "{} vs {fixed}", r.objective);
    let tuned = sc.with_budgets(&r.beta).unwrap();
    assert!((objective(&tuned, &r.allocation).unwrap() - r.objective).abs() < 1e-12);
    assert!((r.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn constant_delta_also_settles() {
    let sc = scenario("mirrored");
    let adjust = AdjustParams {
        schedule: DeltaSchedule::Constant,
        delta: 0.3,
        ..AdjustParams::for_scenario(&sc)
    };
    let r = run_algorithm_1(&sc, &AlgoParams::for_scenario(&sc), &adjust).unwrap();
    assert!(r.beta.iter().all(|b| (b - 0.5).abs() < 0.02), "{:?}", r.beta);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn channel_split_meets_the_budget(
        a in prop::collection::vec(1e-3f64..100.0, 1..8),
        relayed in prop::collection::vec(any::<bool>(), 8),
        slack in 0.0f64..1.0,
    ) {
        let theta_min = 0.01;
        let n = a.len();
        let links: Vec<ChannelLink> = a
            .iter()
            .zip(&relayed)
            .map(|(&a, &r)| ChannelLink { a, weight: if r { 2.0 } else { 1.0 } })
            .collect();
        let beta = n as f64 * theta_min + slack;
        let sol = solve_channel_subproblem(&ChannelSubproblem { links, beta, theta_min }, None).unwrap();
        prop_assert!((sol.theta.iter().sum::<f64>() - beta).abs() <= 1e-10);
        prop_assert!(sol.theta.iter().all(|&t| t >= theta_min));
        prop_assert!(sol.omega >= 0.0);
    }

    #[test]
    fn rates_grow_with_power_and_share(
        p in 0.0f64..10.0, dp in 1e-3f64..1.0, theta in 0.01f64..1.0, dt in 1e-3f64..0.5,
        sr in 0.1f64..100.0, sd in 0.1f64..100.0, rd in 0.1f64..100.0, pr in 0.0f64..10.0,
    ) {
        let g = DfGains { sr, sd, rd };
        prop_assert!(rate_dt(p + dp, theta, sd).unwrap() > rate_dt(p, theta, sd).unwrap());
        prop_assert!(rate_dt(p + dp, theta + dt, sd).unwrap() >= rate_dt(p + dp, theta, sd).unwrap());
        prop_assert!(rate_df(p, pr, theta + dt, &g).unwrap() >= rate_df(p, pr, theta, &g).unwrap());
        prop_assert!(rate_df(p + dp, pr + dp, theta, &g).unwrap() > rate_df(p, pr, theta, &g).unwrap());
    }
}
