//! Closed-form link model.
//!
//! Interferers form a Poisson field of density `lambda` on the plane, every
//! link experiences unit-mean Rayleigh fading and distance path loss with
//! exponent `alpha`, and the reference link has length `r0`. A message is
//! decoded when the SIR exceeds the threshold `beta`, and a message in outage
//! may be sent again up to `m` more times before it is dropped.
//!
//! All transmit powers are taken equal here; unequal powers are handled by the
//! Monte Carlo simulator through an effective threshold.

mod gamma;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::gamma::gamma;
use crate::{Error, Result};

/// Base of the logarithm in the spectral efficiency `log(1 + beta)`.
///
/// The base only rescales throughput; it never moves an optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    /// bits/s/Hz
    #[serde(rename = "2")]
    Two,
    /// nats/s/Hz
    #[default]
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    /// `log(1 + x)` in this base.
    pub fn log1p(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.ln_1p() / std::f64::consts::LN_2,
            LogBase::E => x.ln_1p(),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        })
    }
}

impl FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "2" => Ok(LogBase::Two),
            "e" | "E" => Ok(LogBase::E),
            other => Err(format!("log base must be `2` or `e`, got `{other}`")),
        }
    }
}

/// Propagation environment of the reference link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    alpha: f64,
    r0: f64,
    lambda: f64,
    log_base: LogBase,
}

impl ChannelParams {
    /// Path-loss exponent `alpha > 2`, link distance `r0 > 0`, interferer
    /// density `lambda >= 0`. The log base defaults to natural log.
    pub fn new(alpha: f64, r0: f64, lambda: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 2.0) {
            return Err(Error::invalid(
                "alpha",
                alpha,
                "path-loss exponent must exceed 2",
            ));
        }
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::invalid("r0", r0, "link distance must be positive"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(
                "lambda",
                lambda,
                "density must be non-negative",
            ));
        }
        Ok(ChannelParams {
            alpha,
            r0,
            lambda,
            log_base: LogBase::default(),
        })
    }

    pub fn with_log_base(mut self, log_base: LogBase) -> Self {
        self.log_base = log_base;
        self
    }

    /// Same environment with a different interferer density.
    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Ok(ChannelParams::new(self.alpha, self.r0, lambda)?.with_log_base(self.log_base))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    /// `k * lambda`, the exponent scale of the outage probability.
    pub fn interference_scale(&self) -> f64 {
        geometry_constant(self) * self.lambda
    }
}

/// Design variables of the link: SIR threshold and retransmission cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPolicy {
    beta: f64,
    m: u32,
}

impl LinkPolicy {
    /// Threshold `beta > 0`; `m` retransmissions allow `1 + m` attempts.
    pub fn new(beta: f64, m: u32) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(
                "beta",
                beta,
                "SIR threshold must be positive and finite",
            ));
        }
        Ok(LinkPolicy { beta, m })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn attempts(&self) -> u32 {
        self.m + 1
    }
}

/// Largest acceptable probability that a message is dropped after all of
/// its attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosConstraint {
    epsilon: f64,
}

impl QosConstraint {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(
                "epsilon",
                epsilon,
                "drop probability must lie in (0, 1)",
            ));
        }
        Ok(QosConstraint { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Per-attempt outage probability at which `1 + m` attempts drop a
    /// message with probability exactly epsilon: `epsilon^(1 / (1 + m))`.
    pub fn per_attempt_outage(&self, m: u32) -> f64 {
        (self.epsilon.ln() / f64::from(m + 1)).exp()
    }

    /// `1 - epsilon^(1 / (1 + m))`, accurate when the root is close to one.
    pub fn per_attempt_success(&self, m: u32) -> f64 {
        -(self.epsilon.ln() / f64::from(m + 1)).exp_m1()
    }
}

/// `k = pi r0^2 Gamma(1 - 2/alpha) Gamma(1 + 2/alpha)`.
pub fn geometry_constant(params: &ChannelParams) -> f64 {
    let delta = 2.0 / params.alpha;
    PI * params.r0 * params.r0 * gamma(1.0 - delta) * gamma(1.0 + delta)
}

/// Probability that one attempt at threshold `beta >= 0` is in outage,
/// `1 - exp(-k lambda beta^(2/alpha))`.
pub fn outage_probability(params: &ChannelParams, beta: f64) -> f64 {
    -(-params.interference_scale() * beta.powf(2.0 / params.alpha)).exp_m1()
}

/// Expected attempts per message, `sum_{n=0}^{m} p^n`, evaluated exactly.
pub fn mean_attempts(p_out: f64, m: u32) -> f64 {
    if m == 0 || p_out == 0.0 {
        return 1.0;
    }
    // (1 - p^(m+1)) / (1 - p)
    -(f64::from(m + 1) * p_out.ln()).exp_m1() / (1.0 - p_out)
}

/// Mean attempts under the assumption that the drop constraint is active,
/// `(1 - epsilon) / (1 - epsilon^(1/(1+m)))`.
///
/// This is the approximation used to derive the constrained optimum. It is
/// exact when the per-attempt outage equals `epsilon^(1/(1+m))`.
pub fn mean_attempts_approx(epsilon: QosConstraint, m: u32) -> f64 {
    (1.0 - epsilon.epsilon) / epsilon.per_attempt_success(m)
}

/// Probability that a message fails all `1 + m` attempts.
pub fn drop_rate(params: &ChannelParams, policy: &LinkPolicy) -> f64 {
    outage_probability(params, policy.beta).powi(policy.attempts() as i32)
}

/// Link throughput `log(1 + beta) (1 - p^(1+m)) / (1 + m_bar)` with the
/// exact mean attempt count.
pub fn throughput(params: &ChannelParams, policy: &LinkPolicy) -> f64 {
    let p = outage_probability(params, policy.beta);
    let delivered = -(f64::from(policy.attempts()) * p.ln()).exp_m1();
    let delivered = if p == 0.0 { 1.0 } else { delivered };
    params.log_base.log1p(policy.beta) * delivered / mean_attempts(p, policy.m)
}

/// Throughput without an error-rate constraint,
/// `log(1 + beta) exp(-k lambda beta^(2/alpha))`.
pub fn unconstrained_throughput(params: &ChannelParams, beta: f64) -> f64 {
    params.log_base.log1p(beta)
        * (-params.interference_scale() * beta.powf(2.0 / params.alpha)).exp()
}

/// Throughput `log(1 + beta*) (1 - epsilon^(1/(m+1)))` at the threshold that
/// makes the drop constraint hold with equality for cap `m`.
pub fn constrained_throughput(
    params: &ChannelParams,
    epsilon: QosConstraint,
    m: u32,
) -> Result<f64> {
    let beta = crate::optimize::beta_star(params, epsilon, m)?;
    Ok(params.log_base.log1p(beta) * epsilon.per_attempt_success(m))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn params(alpha: f64, r0: f64, lambda: f64) -> ChannelParams {
        ChannelParams::new(alpha, r0, lambda).unwrap()
    }

    fn close(got: f64, want: f64, rel: f64) -> bool {
        ((got - want) / want).abs() < rel
    }

    // Independent route: Gamma(1 - d) Gamma(1 + d) = pi d / sin(pi d).
    fn k_reflection(alpha: f64, r0: f64) -> f64 {
        let d = 2.0 / alpha;
        PI * r0 * r0 * PI * d / (PI * d).sin()
    }

    #[test]
    fn geometry_constant_values() {
        assert!(close(
            geometry_constant(&params(4.0, 1.0, 0.0)),
            PI * PI / 2.0,
            1e-13
        ));
        assert!(close(
            geometry_constant(&params(4.0, 2.0, 0.0)),
            2.0 * PI * PI,
            1e-13
        ));
        assert!(close(
            geometry_constant(&params(3.0, 1.0, 0.0)),
            7.597_625_010_352_075_162,
            1e-12
        ));
        for alpha in [2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0] {
            let k = geometry_constant(&params(alpha, 1.3, 0.0));
            assert!(close(k, k_reflection(alpha, 1.3), 1e-12), "alpha {alpha}");
        }
    }

    #[test]
    fn geometry_constant_blows_up_near_two() {
        let k4 = geometry_constant(&params(4.0, 1.0, 0.0));
        assert!(geometry_constant(&params(2.01, 1.0, 0.0)) > 10.0 * k4);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::new(2.0, 1.0, 0.1).is_err());
        assert!(ChannelParams::new(1.5, 1.0, 0.1).is_err());
        assert!(ChannelParams::new(4.0, 0.0, 0.1).is_err());
        assert!(ChannelParams::new(4.0, 1.0, -0.1).is_err());
        assert!(ChannelParams::new(f64::NAN, 1.0, 0.1).is_err());
        assert!(LinkPolicy::new(0.0, 1).is_err());
        assert!(LinkPolicy::new(f64::INFINITY, 1).is_err());
        assert!(QosConstraint::new(0.0).is_err());
        assert!(QosConstraint::new(1.0).is_err());
    }

    #[test]
    fn outage_values() {
        for beta in [0.01, 1.0, 1e3] {
            assert_eq!(outage_probability(&params(4.0, 1.0, 0.0), beta), 0.0);
        }
        let p = outage_probability(&params(4.0, 1.0, 0.1), 1.0);
        assert!(close(p, 0.389_501_974_734_202_835, 1e-12), "{p}");
        let p = outage_probability(&params(4.0, 1.0, 0.05), 6.14);
        assert!(close(p, 0.457_408_148_121_540_820, 1e-12), "{p}");
    }

    #[test]
    fn mean_attempts_values() {
        assert_eq!(mean_attempts(0.0, 5), 1.0);
        assert_eq!(mean_attempts(0.73, 0), 1.0);
        assert!((mean_attempts(0.5, 3) - 1.875).abs() < 1e-15);
        let brute: f64 = (0..=12).map(|n| 0.9f64.powi(n)).sum();
        assert!(close(mean_attempts(0.9, 12), brute, 1e-14));
    }

    #[test]
    fn approx_mean_attempts_exact_when_constraint_active() {
        let eps = QosConstraint::new(0.02).unwrap();
        for m in 0..20 {
            let p = eps.per_attempt_outage(m);
            assert!(close(
                mean_attempts_approx(eps, m),
                mean_attempts(p, m),
                1e-12
            ));
        }
    }

    #[test]
    fn throughput_values() {
        let clear = params(4.0, 1.0, 0.0).with_log_base(LogBase::Two);
        assert!((throughput(&clear, &LinkPolicy::new(1.0, 0).unwrap()) - 1.0).abs() < 1e-15);
        let t = throughput(&params(4.0, 1.0, 0.1), &LinkPolicy::new(1.0, 0).unwrap());
        let want = 2f64.ln() * (1.0 - 0.389_501_974_734_202_835);
        assert!(close(t, want, 1e-12), "{t} vs {want}");
        let t = throughput(&params(4.0, 1.0, 0.1), &LinkPolicy::new(1e-12, 3).unwrap());
        assert!(t < 1e-11);
    }

    #[test]
    fn constrained_throughput_values() {
        let p = params(4.0, 1.0, 0.05);
        let t = constrained_throughput(&p, QosConstraint::new(0.02).unwrap(), 4).unwrap();
        assert!(close(t, 1.066_492_319_168_708_5, 1e-12), "{t}");
        let p = params(4.0, 1.0, 0.1);
        let t = constrained_throughput(&p, QosConstraint::new(0.01).unwrap(), 5).unwrap();
        assert!(close(t, 0.511_694_847_682_670_5, 1e-12), "{t}");
        let t = constrained_throughput(&p, QosConstraint::new(1.0 - 1e-12).unwrap(), 3).unwrap();
        assert!(t < 1e-9);
        assert!(matches!(
            constrained_throughput(&params(4.0, 1.0, 0.0), QosConstraint::new(0.1).unwrap(), 1),
            Err(Error::InterferenceFree)
        ));
    }

    #[test]
    fn log_base_parsing() {
        assert_eq!("2".parse::<LogBase>().unwrap(), LogBase::Two);
        assert_eq!("e".parse::<LogBase>().unwrap(), LogBase::E);
        assert!("10".parse::<LogBase>().is_err());
    }
}
