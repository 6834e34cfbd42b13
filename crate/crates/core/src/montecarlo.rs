//! Seeded Monte Carlo simulation of the link.
//!
//! Every attempt sees a fresh Poisson field of interferers on a disk of radius
//! `R = window_radius_factor * r0` centred on the receiver, with independent
//! unit-mean exponential fading on every link (including the desired one).
//!
//! Work is split into fixed blocks of [`BLOCK_LEN`] trials and block `i` draws
//! from ChaCha stream `i` of the configured seed. Counts are integers and are
//! merged in block order, so an estimate depends only on the seed and the
//! trial count, never on the number of worker threads.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{ChannelParams, LinkPolicy};
use crate::{Error, Result};

/// Trials per RNG substream.
pub const BLOCK_LEN: u64 = 4096;

/// Random number generator backing every substream.
pub type SimRng = ChaCha8Rng;

/// Substream `stream_index` of `seed`. Distinct indices give
/// non-overlapping sequences.
pub fn seeded_stream(seed: u64, stream_index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Radius of the simulated disk in units of `r0`.
    pub window_radius_factor: f64,
    /// Trials per estimate (messages for protocol runs, attempts for
    /// outage estimates).
    pub n_messages: u64,
    pub seed: u64,
    /// Interferer to reference transmit power ratio `W_p / W_s`.
    pub power_ratio: f64,
    /// Worker threads. Does not affect results, so it is not serialized.
    #[serde(skip, default = "one_stream")]
    pub streams: usize,
}

fn one_stream() -> usize {
    1
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            window_radius_factor: 100.0,
            n_messages: 100_000,
            seed,
            power_ratio: 1.0,
            streams: 1,
        }
    }

    pub fn window_radius(&self, params: &ChannelParams) -> f64 {
        self.window_radius_factor * params.r0()
    }

    /// Mean interference power from interferers outside the window,
    /// `2 pi lambda R^(2 - alpha) / (alpha - 2)`.
    pub fn truncated_interference(&self, params: &ChannelParams) -> f64 {
        let alpha = params.alpha();
        2.0 * PI * params.lambda() * self.window_radius(params).powf(2.0 - alpha) / (alpha - 2.0)
    }

    /// Largest admissible truncated interference, `1e-3 k lambda r0^(-alpha)`.
    pub fn truncation_bound(&self, params: &ChannelParams) -> f64 {
        1e-3 * params.interference_scale() * params.r0().powf(-params.alpha())
    }

    pub fn validate(&self, params: &ChannelParams) -> Result<()> {
        if !(self.window_radius_factor.is_finite() && self.window_radius_factor > 1.0) {
            return Err(Error::invalid(
                "window_radius_factor",
                self.window_radius_factor,
                "window must extend beyond the reference link",
            ));
        }
        if self.n_messages == 0 {
            return Err(Error::invalid(
                "n_messages",
                0.0,
                "at least one trial is required",
            ));
        }
        if !(self.power_ratio.is_finite() && self.power_ratio > 0.0) {
            return Err(Error::invalid(
                "power_ratio",
                self.power_ratio,
                "must be positive",
            ));
        }
        if self.streams == 0 {
            return Err(Error::invalid(
                "streams",
                0.0,
                "at least one worker is required",
            ));
        }
        if params.lambda() > 0.0 {
            let neglected = self.truncated_interference(params);
            let bound = self.truncation_bound(params);
            if neglected >= bound {
                return Err(Error::WindowTooSmall { neglected, bound });
            }
        }
        Ok(())
    }
}

/// One transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptSample {
    pub sir: f64,
    /// `sir > beta`
    pub success: bool,
    pub n_interferers: u64,
}

/// Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl McEstimate {
    /// Proportion `hits / n` with the binomial standard error.
    pub fn bernoulli(hits: u64, n: u64) -> Self {
        assert!(n >= 1);
        let p = hits as f64 / n as f64;
        McEstimate {
            mean: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean - value| <= k * std_error`. A zero standard error demands
    /// exact agreement.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }

    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.std_error
    }
}

enum PathLoss {
    /// alpha = 4: `x^(-2)` without `powf`.
    InverseSquare,
    Power(f64),
}

/// Draws attempt SIRs for one channel and simulation configuration.
pub struct SirSampler {
    r0_gain: f64,
    power_ratio: f64,
    radius_sq: f64,
    count: Option<Poisson<f64>>,
    path_loss: PathLoss,
}

impl SirSampler {
    pub fn new(params: &ChannelParams, sim: &SimConfig) -> Result<Self> {
        sim.validate(params)?;
        let radius = sim.window_radius(params);
        let mean_count = params.lambda() * PI * radius * radius;
        let count = if mean_count > 0.0 {
            Some(Poisson::new(mean_count).map_err(|_| {
                Error::invalid(
                    "lambda",
                    params.lambda(),
                    "interferer count not representable",
                )
            })?)
        } else {
            None
        };
        let half_alpha = params.alpha() / 2.0;
        Ok(SirSampler {
            r0_gain: params.r0().powf(-params.alpha()),
            power_ratio: sim.power_ratio,
            radius_sq: radius * radius,
            count,
            path_loss: if half_alpha == 2.0 {
                PathLoss::InverseSquare
            } else {
                PathLoss::Power(-half_alpha)
            },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> AttemptSample {
        let signal = exp1(rng) * self.r0_gain;
        let n = match &self.count {
            Some(poisson) => poisson.sample(rng) as u64,
            None => 0,
        };
        let mut interference = 0.0;
        for _ in 0..n {
            // Squared distance of a uniform point on the disk.
            let d2 = self.radius_sq * unit_open_closed(rng);
            interference += exp1(rng) * self.loss(d2);
        }
        let sir = signal / (self.power_ratio * interference);
        AttemptSample {
            sir,
            success: sir > beta,
            n_interferers: n,
        }
    }
}

impl SirSampler {
    /// Whether one attempt at threshold `beta` is in outage. Stops drawing
    /// interferers once the outcome is decided, so it consumes fewer random
    /// numbers than [`SirSampler::sample`].
    pub fn outage<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> bool {
        let signal = exp1(rng) * self.r0_gain;
        let n = match &self.count {
            Some(poisson) => poisson.sample(rng) as u64,
            None => 0,
        };
        let limit = signal / (beta * self.power_ratio);
        let mut interference = 0.0;
        for _ in 0..n {
            let d2 = self.radius_sq * unit_open_closed(rng);
            interference += exp1(rng) * self.loss(d2);
            if interference >= limit {
                return true;
            }
        }
        signal / (self.power_ratio * interference) <= beta
    }

    fn loss(&self, d2: f64) -> f64 {
        match self.path_loss {
            PathLoss::InverseSquare => 1.0 / (d2 * d2),
            PathLoss::Power(p) => d2.powf(p),
        }
    }
}

/// Uniform on (0, 1].
fn unit_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Unit-mean exponential by inversion.
fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -unit_open_closed(rng).ln()
}

/// One attempt with a fresh interferer field.
pub fn sample_sir<R: Rng + ?Sized>(
    params: &ChannelParams,
    sim: &SimConfig,
    beta: f64,
    rng: &mut R,
) -> Result<AttemptSample> {
    Ok(SirSampler::new(params, sim)?.sample(beta, rng))
}

// Runs `job(stream_index, trials)` over the fixed block decomposition of
// `n` trials and returns results in block order.
fn run_blocks<T, F>(n: u64, threads: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK_LEN);
    let len = |b: u64| BLOCK_LEN.min(n - b * BLOCK_LEN);
    if threads == 1 {
        return Ok((0..blocks).map(|b| job(b, len(b))).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    Ok(pool.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| job(b, len(b)))
            .collect()
    }))
}

fn count_outages(sampler: &SirSampler, beta: f64, rng: &mut SimRng, n: u64) -> u64 {
    (0..n).filter(|_| sampler.outage(beta, rng)).count() as u64
}

/// Fraction of `sim.n_messages` independent attempts in outage.
pub fn estimate_outage(params: &ChannelParams, beta: f64, sim: &SimConfig) -> Result<McEstimate> {
    if sim.n_messages < 1000 {
        return Err(Error::invalid(
            "n_messages",
            sim.n_messages as f64,
            "outage estimates need at least 1000 trials",
        ));
    }
    let sampler = SirSampler::new(params, sim)?;
    let counts = run_blocks(sim.n_messages, sim.streams, |block, len| {
        count_outages(&sampler, beta, &mut seeded_stream(sim.seed, block), len)
    })?;
    Ok(McEstimate::bernoulli(counts.iter().sum(), sim.n_messages))
}

/// Outage estimate from `n` attempts drawn sequentially from a single
/// substream.
pub fn estimate_outage_on_stream(
    params: &ChannelParams,
    beta: f64,
    sim: &SimConfig,
    stream_index: u64,
    n: u64,
) -> Result<McEstimate> {
    let sampler = SirSampler::new(params, sim)?;
    let mut rng = seeded_stream(sim.seed, stream_index);
    Ok(McEstimate::bernoulli(
        count_outages(&sampler, beta, &mut rng, n),
        n,
    ))
}

/// Empirical behaviour of the retransmission protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolReport {
    /// `log(1 + beta)` times delivered messages per attempt.
    pub throughput: McEstimate,
    /// Fraction of messages that failed every attempt.
    pub drop_rate: McEstimate,
    /// Attempts consumed per message.
    pub mean_attempts: McEstimate,
    /// Fraction of attempts in outage.
    pub p_out: McEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct ProtocolCounts {
    messages: u64,
    delivered: u64,
    attempts: u64,
    attempts_sq: u64,
    attempts_delivered: u64,
}

impl ProtocolCounts {
    fn merge(mut self, other: Self) -> Self {
        self.messages += other.messages;
        self.delivered += other.delivered;
        self.attempts += other.attempts;
        self.attempts_sq += other.attempts_sq;
        self.attempts_delivered += other.attempts_delivered;
        self
    }
}

fn run_messages(
    sampler: &SirSampler,
    policy: &LinkPolicy,
    rng: &mut SimRng,
    n: u64,
) -> ProtocolCounts {
    let mut c = ProtocolCounts::default();
    for _ in 0..n {
        let mut used = 0u64;
        let mut ok = false;
        while used < u64::from(policy.attempts()) {
            used += 1;
            if !sampler.outage(policy.beta(), rng) {
                ok = true;
                break;
            }
        }
        c.messages += 1;
        c.attempts += used;
        c.attempts_sq += used * used;
        if ok {
            c.delivered += 1;
            c.attempts_delivered += used;
        }
    }
    c
}

/// Sends `sim.n_messages` messages, each with up to `1 + m` attempts.
pub fn simulate_protocol(
    params: &ChannelParams,
    policy: &LinkPolicy,
    sim: &SimConfig,
) -> Result<ProtocolReport> {
    let sampler = SirSampler::new(params, sim)?;
    let c = run_blocks(sim.n_messages, sim.streams, |block, len| {
        run_messages(&sampler, policy, &mut seeded_stream(sim.seed, block), len)
    })?
    .into_iter()
    .fold(ProtocolCounts::default(), ProtocolCounts::merge);

    let n = c.messages as f64;
    let s = c.delivered as f64;
    let a = c.attempts as f64;
    let dof = (n - 1.0).max(1.0);

    let attempts_var = ((c.attempts_sq as f64 - a * a / n) / dof).max(0.0);
    let mean_attempts = McEstimate {
        mean: a / n,
        std_error: (attempts_var / n).sqrt(),
        n: c.messages,
    };

    // Ratio estimator S/A with a delta-method standard error; the
    // per-message residual is delivered_i - ratio * attempts_i.
    let ratio = s / a;
    let resid_ss =
        s - 2.0 * ratio * c.attempts_delivered as f64 + ratio * ratio * c.attempts_sq as f64;
    let ratio_se = (resid_ss.max(0.0) / dof / n).sqrt() / (a / n);
    let rate = params.log_base().log1p(policy.beta());
    let throughput = McEstimate {
        mean: rate * ratio,
        std_error: rate * ratio_se,
        n: c.messages,
    };

    Ok(ProtocolReport {
        throughput,
        drop_rate: McEstimate::bernoulli(c.messages - c.delivered, c.messages),
        mean_attempts,
        p_out: McEstimate::bernoulli(c.attempts - c.delivered, c.attempts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::outage_probability;

    fn params(lambda: f64) -> ChannelParams {
        ChannelParams::new(4.0, 1.0, lambda).unwrap()
    }

    fn sim(seed: u64, n: u64) -> SimConfig {
        SimConfig {
            window_radius_factor: 30.0,
            n_messages: n,
            ..SimConfig::new(seed)
        }
    }

    #[test]
    fn window_validation() {
        let p = params(0.2);
        let tight = SimConfig {
            window_radius_factor: 2.0,
            ..SimConfig::new(1)
        };
        assert!(matches!(
            tight.validate(&p),
            Err(Error::WindowTooSmall { .. })
        ));
        for factor in [50.0, 100.0, 200.0] {
            let ok = SimConfig {
                window_radius_factor: factor,
                ..SimConfig::new(1)
            };
            ok.validate(&p).unwrap();
        }
        // alpha = 4, r0 = 1: admissible iff pi / R^2 < 1e-3 k, i.e. R > 25.2.
        let edge = SimConfig {
            window_radius_factor: 25.0,
            ..SimConfig::new(1)
        };
        assert!(edge.validate(&p).is_err());
        SimConfig::new(1).validate(&params(0.0)).unwrap();
    }

    #[test]
    fn no_interferers_always_succeeds() {
        let s = sim(3, 2000);
        let mut rng = seeded_stream(3, 0);
        let sampler = SirSampler::new(&params(0.0), &s).unwrap();
        for _ in 0..100 {
            let a = sampler.sample(1e6, &mut rng);
            assert!(a.success && a.sir.is_infinite() && a.n_interferers == 0);
        }
        let e = estimate_outage(&params(0.0), 10.0, &s).unwrap();
        assert_eq!((e.mean, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn early_exit_matches_full_sample() {
        let s = sim(5, 2000);
        let sampler = SirSampler::new(&params(0.1), &s).unwrap();
        let mut rng = seeded_stream(5, 0);
        for beta in [0.3, 1.0, 4.0] {
            for _ in 0..300 {
                let full = sampler.sample(beta, &mut rng.clone());
                assert_eq!(sampler.outage(beta, &mut rng.clone()), !full.success);
                sampler.sample(beta, &mut rng);
            }
        }
    }

    #[test]
    fn success_iff_sir_exceeds_threshold() {
        let s = sim(5, 1000);
        let sampler = SirSampler::new(&params(0.1), &s).unwrap();
        let mut rng = seeded_stream(5, 0);
        for _ in 0..500 {
            let a = sampler.sample(1.0, &mut rng);
            assert_eq!(a.success, a.sir > 1.0);
        }
    }

    #[test]
    fn interferer_count_is_poisson_mean() {
        let p = params(0.01);
        let s = sim(11, 1000);
        let sampler = SirSampler::new(&p, &s).unwrap();
        let mut rng = seeded_stream(11, 0);
        let total: u64 = (0..4000)
            .map(|_| sampler.sample(1.0, &mut rng).n_interferers)
            .sum();
        let mean = 0.01 * PI * 900.0;
        let got = total as f64 / 4000.0;
        // Poisson: sd of the mean is sqrt(mean / 4000).
        assert!(
            (got - mean).abs() < 4.0 * (mean / 4000.0).sqrt(),
            "{got} vs {mean}"
        );
    }

    #[test]
    fn outage_matches_closed_form() {
        let p = params(0.1);
        let e = estimate_outage(&p, 1.0, &sim(7, 40_000)).unwrap();
        let want = outage_probability(&p, 1.0);
        assert!(e.agrees_with(want, 3.0), "{e:?} vs {want}");
    }

    #[test]
    fn power_ratio_scales_threshold() {
        let p = params(0.05);
        let doubled = SimConfig {
            power_ratio: 2.0,
            ..sim(9, 40_000)
        };
        let a = estimate_outage(&p, 1.5, &doubled).unwrap();
        let b = estimate_outage(&p, 3.0, &sim(10, 40_000)).unwrap();
        let z = (a.mean - b.mean) / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(z.abs() < 3.0, "{a:?} {b:?}");
        assert!(a.agrees_with(outage_probability(&p, 3.0), 3.0));
    }

    #[test]
    fn determinism_and_thread_invariance() {
        let p = params(0.05);
        let base = sim(42, 20_000);
        let a = estimate_outage(&p, 2.0, &base).unwrap();
        let b = estimate_outage(&p, 2.0, &base).unwrap();
        let c = estimate_outage(&p, 2.0, &SimConfig { streams: 8, ..base }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);

        let policy = LinkPolicy::new(2.0, 3).unwrap();
        let a = simulate_protocol(
            &p,
            &policy,
            &SimConfig {
                n_messages: 5000,
                ..base
            },
        )
        .unwrap();
        let c = simulate_protocol(
            &p,
            &policy,
            &SimConfig {
                n_messages: 5000,
                streams: 3,
                ..base
            },
        )
        .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn interference_free_protocol() {
        let policy = LinkPolicy::new(3.0, 4).unwrap();
        let r = simulate_protocol(&params(0.0), &policy, &sim(1, 2000)).unwrap();
        assert_eq!(r.drop_rate.mean, 0.0);
        assert_eq!(r.mean_attempts.mean, 1.0);
        assert_eq!(r.throughput.mean, 4f64.ln());
    }

    #[test]
    fn bernoulli_estimate() {
        let e = McEstimate::bernoulli(25, 100);
        assert_eq!(e.mean, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert!(e.agrees_with(0.3, 3.0));
        assert!(!e.agrees_with(0.5, 3.0));
    }

    #[test]
    fn outage_needs_enough_trials() {
        assert!(estimate_outage(&params(0.1), 1.0, &sim(1, 999)).is_err());
    }

    #[test]
    fn block_decomposition_covers_all_trials() {
        let lens = run_blocks(10_000, 1, |_, len| len).unwrap();
        assert_eq!(lens, vec![4096, 4096, 1808]);
        let lens = run_blocks(10_000, 4, |b, len| (b, len)).unwrap();
        assert_eq!(lens, vec![(0, 4096), (1, 4096), (2, 1808)]);
    }
}
