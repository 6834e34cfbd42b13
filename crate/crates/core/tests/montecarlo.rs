use std::f64::consts::PI;

use ppto::analytic::{self, ChannelParams, LinkPolicy, QosConstraint};
use ppto::montecarlo::{estimate_outage, estimate_outage_on_stream, simulate_protocol, SimConfig};
use ppto::optimize::beta_star;

fn channel(lambda: f64) -> ChannelParams {
    ChannelParams::new(4.0, 1.0, lambda).unwrap()
}

fn sim(seed: u64, n: u64, window: f64) -> SimConfig {
    SimConfig {
        n_messages: n,
        window_radius_factor: window,
        ..SimConfig::new(seed)
    }
}

/// Outage probability of the field truncated to a disk of radius `radius`
/// (alpha = 4, r0 = 1).
fn truncated_outage(lambda: f64, beta: f64, radius: f64) -> f64 {
    let c = beta.sqrt();
    -(-PI * lambda * c * (radius * radius / c).atan()).exp_m1()
}

#[test]
fn distinct_streams_are_independent() {
    let p = channel(0.02);
    let s = sim(99, 2000, 30.0);
    let mut rejections = 0;
    for pair in 0..100u64 {
        let a = estimate_outage_on_stream(&p, 1.0, &s, 2 * pair, 2000).unwrap();
        let b = estimate_outage_on_stream(&p, 1.0, &s, 2 * pair + 1, 2000).unwrap();
        let z = (a.mean - b.mean) / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        if z.abs() > 2.5758 {
            rejections += 1;
        }
    }
    assert!(
        rejections <= 5,
        "{rejections} of 100 pairs rejected at the 1% level"
    );
}

#[test]
fn repeated_and_parallel_runs_are_identical() {
    let p = channel(0.1);
    let base = sim(5, 20_000, 30.0);
    let once = estimate_outage(&p, 2.0, &base).unwrap();
    assert_eq!(estimate_outage(&p, 2.0, &base).unwrap(), once);
    let wide = SimConfig { streams: 8, ..base };
    assert_eq!(estimate_outage(&p, 2.0, &wide).unwrap(), once);

    let policy = LinkPolicy::new(2.0, 3).unwrap();
    let serial = simulate_protocol(&p, &policy, &base).unwrap();
    assert_eq!(simulate_protocol(&p, &policy, &wide).unwrap(), serial);
}

#[test]
fn outage_transfers_monotonicity() {
    let lambdas = [0.02, 0.05, 0.1, 0.2];
    let betas = [0.5, 1.0, 2.0, 6.0, 10.0];
    let mut grid = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let row: Vec<_> = betas
            .iter()
            .enumerate()
            .map(|(j, &beta)| {
                estimate_outage(
                    &channel(lambda),
                    beta,
                    &sim(1000 + (i * 5 + j) as u64, 20_000, 30.0),
                )
                .unwrap()
            })
            .collect();
        grid.push(row);
    }
    let noise = |a: &ppto::McEstimate, b: &ppto::McEstimate| 3.0 * a.std_error.hypot(b.std_error);
    for row in &grid {
        for w in row.windows(2) {
            assert!(w[1].mean > w[0].mean - noise(&w[0], &w[1]));
        }
    }
    for rows in grid.windows(2) {
        for (lo, hi) in rows[0].iter().zip(&rows[1]) {
            assert!(hi.mean > lo.mean - noise(lo, hi));
        }
    }
}

#[test]
fn window_truncation_is_negligible() {
    let (lambda, beta) = (0.05, 6.0);
    let p = channel(lambda);
    let full = analytic::outage_probability(&p, beta);
    let se = (full * (1.0 - full) / 1e5).sqrt();
    let windows = [50.0, 100.0, 200.0];
    let exact: Vec<f64> = windows
        .iter()
        .map(|&w| truncated_outage(lambda, beta, w))
        .collect();
    for w in exact.windows(2) {
        assert!((w[1] - w[0]).abs() < se);
    }
    assert!((full - exact[2]).abs() < se);

    for (&window, &target) in windows.iter().zip(&exact) {
        let s = sim(31, 10_000, window);
        s.validate(&p).unwrap();
        let e = estimate_outage(&p, beta, &s).unwrap();
        assert!(
            e.agrees_with(target, 3.0),
            "window {window}: z = {}",
            e.z_score(target)
        );
    }
}

#[test]
fn tight_window_is_rejected() {
    let s = sim(1, 1000, 2.0);
    assert!(estimate_outage(&channel(0.2), 1.0, &s).is_err());
    assert!(simulate_protocol(&channel(0.2), &LinkPolicy::new(1.0, 0).unwrap(), &s).is_err());
}

#[test]
fn drop_rate_at_constraint_threshold_equals_epsilon() {
    for (lambda, e, m) in [(0.1, 0.1, 2), (0.05, 0.05, 1)] {
        let p = channel(lambda);
        let eps = QosConstraint::new(e).unwrap();
        let beta = beta_star(&p, eps, m).unwrap();
        let policy = LinkPolicy::new(beta, m).unwrap();
        let r = simulate_protocol(&p, &policy, &sim(77, 40_000, 30.0)).unwrap();
        assert!(
            r.drop_rate.agrees_with(e, 3.0),
            "z = {}",
            r.drop_rate.z_score(e)
        );

        let p_out = analytic::outage_probability(&p, beta);
        let attempts = analytic::mean_attempts(p_out, m);
        assert!(r.mean_attempts.agrees_with(attempts, 3.0));
        assert!(r
            .throughput
            .agrees_with(analytic::throughput(&p, &policy), 3.0));
        assert!(r.p_out.agrees_with(p_out, 3.0));
    }
}

#[test]
fn power_ratio_scales_interference() {
    // Doubling interferer power is the same as doubling the threshold.
    let p = channel(0.05);
    let doubled = SimConfig {
        power_ratio: 2.0,
        ..sim(8, 20_000, 30.0)
    };
    let e = estimate_outage(&p, 1.0, &doubled).unwrap();
    let target = analytic::outage_probability(&p, 2.0);
    assert!(e.agrees_with(target, 3.0), "z = {}", e.z_score(target));
}
