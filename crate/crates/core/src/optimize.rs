//! Joint choice of SIR threshold and retransmission cap.
//!
//! Under a drop-rate constraint the best threshold for a given cap `m` makes
//! the constraint active, which has a closed form. The best cap is then found
//! by scanning `m` over the integers. Without the constraint, the optimal
//! threshold solves a transcendental stationarity equation.

use crate::analytic::{
    self, mean_attempts, outage_probability, unconstrained_throughput, ChannelParams, LinkPolicy,
    QosConstraint,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Search limits for the optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Largest retransmission cap the integer scan will consider.
    pub m_max: u32,
    /// Initial upper end of the threshold bracket.
    pub bracket_hi_init: f64,
    /// Relative tolerance on the threshold, also the bound on the relative
    /// residual of the stationarity equation.
    pub root_tol: f64,
    pub max_bracket_expansions: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            m_max: 1000,
            bracket_hi_init: 1e3,
            root_tol: 1e-10,
            max_bracket_expansions: 60,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_max == 0 {
            return Err(Error::invalid(
                "m_max",
                0.0,
                "search ceiling must be positive",
            ));
        }
        if !(self.bracket_hi_init.is_finite() && self.bracket_hi_init > 0.0) {
            return Err(Error::invalid(
                "bracket_hi_init",
                self.bracket_hi_init,
                "initial bracket must be positive",
            ));
        }
        if !(self.root_tol > 0.0 && self.root_tol < 1.0) {
            return Err(Error::invalid(
                "root_tol",
                self.root_tol,
                "tolerance must lie in (0, 1)",
            ));
        }
        if self.max_bracket_expansions == 0 {
            return Err(Error::invalid(
                "max_bracket_expansions",
                0.0,
                "at least one expansion is required",
            ));
        }
        Ok(())
    }
}

/// An optimal operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumReport {
    pub beta_star: f64,
    /// Retransmission cap; `None` for the unconstrained optimum.
    pub m_star: Option<u32>,
    pub throughput_star: f64,
    pub p_out_at_opt: f64,
    /// `1 + m_bar` at the optimum.
    pub mean_attempts_at_opt: f64,
    /// `p_out^(1+m)`; `None` for the unconstrained optimum.
    pub drop_rate: Option<f64>,
    /// The scan maximum sits on the search ceiling `m_max`, which may be
    /// binding.
    pub at_search_ceiling: bool,
}

/// Result of an optimizer. Without interference the threshold can grow
/// without bound and there is no finite optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimum {
    InterferenceFree,
    Found(OptimumReport),
}

impl Optimum {
    pub fn report(&self) -> Option<&OptimumReport> {
        match self {
            Optimum::Found(r) => Some(r),
            Optimum::InterferenceFree => None,
        }
    }

    /// # Panics
    /// On [`Optimum::InterferenceFree`].
    pub fn unwrap_report(self) -> OptimumReport {
        match self {
            Optimum::Found(r) => r,
            Optimum::InterferenceFree => panic!("no finite optimum: interference-free link"),
        }
    }
}

/// Threshold at which `1 + m` attempts drop a message with probability
/// exactly epsilon:
/// `(-ln(1 - epsilon^(1/(m+1))) / (k lambda))^(alpha/2)`.
pub fn beta_star(params: &ChannelParams, epsilon: QosConstraint, m: u32) -> Result<f64> {
    if params.lambda() == 0.0 {
        return Err(Error::InterferenceFree);
    }
    let success = epsilon.per_attempt_success(m);
    Ok((-success.ln() / params.interference_scale()).powf(params.alpha() / 2.0))
}

/// One point of the constrained scan over `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapPoint {
    pub m: u32,
    pub beta: f64,
    pub throughput: f64,
}

/// Constrained throughput for every cap in `0..=m_hi`.
pub fn constrained_scan(
    params: &ChannelParams,
    epsilon: QosConstraint,
    m_hi: u32,
) -> Result<Vec<CapPoint>> {
    (0..=m_hi)
        .map(|m| {
            let beta = beta_star(params, epsilon, m)?;
            let throughput = params.log_base().log1p(beta) * epsilon.per_attempt_success(m);
            Ok(CapPoint {
                m,
                beta,
                throughput,
            })
        })
        .collect()
}

/// Best retransmission cap under the drop constraint, scanning
/// `m = 0..=min(m_cap, m_max)`. Ties go to the smallest `m`.
pub fn m_star(
    params: &ChannelParams,
    epsilon: QosConstraint,
    cfg: &SearchConfig,
    m_cap: Option<u32>,
) -> Result<Optimum> {
    cfg.validate()?;
    if params.lambda() == 0.0 {
        return Ok(Optimum::InterferenceFree);
    }
    let m_hi = m_cap.map_or(cfg.m_max, |cap| cap.min(cfg.m_max));
    let scan = constrained_scan(params, epsilon, m_hi)?;
    let best = best_cap(&scan).expect("scan covers at least m = 0");

    let p_out = outage_probability(params, best.beta);
    Ok(Optimum::Found(OptimumReport {
        beta_star: best.beta,
        m_star: Some(best.m),
        throughput_star: best.throughput,
        p_out_at_opt: p_out,
        mean_attempts_at_opt: mean_attempts(p_out, best.m),
        drop_rate: Some(p_out.powi(best.m as i32 + 1)),
        at_search_ceiling: best.m == cfg.m_max,
    }))
}

// First point with the largest throughput.
fn best_cap(scan: &[CapPoint]) -> Option<CapPoint> {
    scan.iter().copied().reduce(|best, p| {
        if p.throughput > best.throughput {
            p
        } else {
            best
        }
    })
}

/// `true` when the sequence never rises again after its first strict fall.
pub fn is_unimodal(values: &[f64]) -> bool {
    let mut falling = false;
    for w in values.windows(2) {
        if w[1] < w[0] {
            falling = true;
        } else if falling && w[1] > w[0] {
            return false;
        }
    }
    true
}

/// Stationarity residual of the unconstrained throughput,
/// `g(beta) = alpha beta - 2 beta^(2/alpha) k lambda (1 + beta) ln(1 + beta)`.
pub fn stationarity_residual(params: &ChannelParams, beta: f64) -> f64 {
    let alpha = params.alpha();
    alpha * beta
        - 2.0 * beta.powf(2.0 / alpha) * params.interference_scale() * (1.0 + beta) * beta.ln_1p()
}

// g(beta) / beta: equals alpha at zero and is strictly decreasing, so it has
// exactly one positive root, the same as g.
fn scaled_residual(params: &ChannelParams, beta: f64) -> f64 {
    if beta == 0.0 {
        return params.alpha();
    }
    let alpha = params.alpha();
    let growth = (1.0 + beta) * beta.ln_1p() / beta;
    alpha - 2.0 * beta.powf(2.0 / alpha) * params.interference_scale() * growth
}

const PROBES: usize = 64;

/// Threshold maximizing `log(1 + beta) exp(-k lambda beta^(2/alpha))`.
pub fn beta_star_unconstrained(params: &ChannelParams, cfg: &SearchConfig) -> Result<f64> {
    cfg.validate()?;
    if params.lambda() == 0.0 {
        return Err(Error::InterferenceFree);
    }

    let mut hi = cfg.bracket_hi_init;
    let mut expansions = 0;
    while scaled_residual(params, hi) > 0.0 {
        if expansions == cfg.max_bracket_expansions {
            return Err(Error::NoBracket {
                hi,
                g_hi: stationarity_residual(params, hi),
                expansions,
            });
        }
        hi *= 10.0;
        expansions += 1;
    }
    let hi_bracket = hi;

    let mut lo = 0.0;
    let (mut f_lo, mut f_hi) = (scaled_residual(params, lo), scaled_residual(params, hi));
    // Illinois false position; the bracket [lo, hi] always holds the root.
    let mut side = 0i8;
    for _ in 0..500 {
        let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let mid = if mid > lo && mid < hi {
            mid
        } else {
            0.5 * (lo + hi)
        };
        let f_mid = scaled_residual(params, mid);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= 1e-3 * cfg.root_tol * hi {
            break;
        }
    }
    let beta = 0.5 * (lo + hi);

    let crossings = sign_changes(params, hi_bracket);
    if crossings != 1 {
        return Err(Error::NonUniqueRoot {
            sign_changes: crossings,
        });
    }

    let residual = stationarity_residual(params, beta).abs() / (params.alpha() * beta).max(1.0);
    if residual >= cfg.root_tol {
        return Err(Error::ResidualTooLarge {
            beta,
            residual,
            tol: cfg.root_tol,
        });
    }
    Ok(beta)
}

// Sign changes of g on log-spaced probes spanning (0, hi].
fn sign_changes(params: &ChannelParams, hi: f64) -> usize {
    let lo = hi * 1e-12;
    let step = (hi / lo).ln() / (PROBES - 1) as f64;
    let signs: Vec<bool> = (0..PROBES)
        .map(|i| scaled_residual(params, lo * (step * i as f64).exp()) > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Unconstrained optimum; retransmissions play no role, so the report has
/// no cap and one attempt per message.
pub fn optimum_unconstrained(params: &ChannelParams, cfg: &SearchConfig) -> Result<Optimum> {
    let beta = match beta_star_unconstrained(params, cfg) {
        Ok(beta) => beta,
        Err(Error::InterferenceFree) => return Ok(Optimum::InterferenceFree),
        Err(e) => return Err(e),
    };
    Ok(Optimum::Found(OptimumReport {
        beta_star: beta,
        m_star: None,
        throughput_star: unconstrained_throughput(params, beta),
        p_out_at_opt: outage_probability(params, beta),
        mean_attempts_at_opt: 1.0,
        drop_rate: None,
        at_search_ceiling: false,
    }))
}

/// Comparison of the constrained (uncapped) and unconstrained optima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub unconstrained: OptimumReport,
    pub constrained: OptimumReport,
    /// `(T_un - T_con) / T_un`; non-negative up to round-off.
    pub relative_gap: f64,
}

/// Checks numerically that letting the cap grow recovers the unconstrained
/// optimum; integer caps leave a small quantization gap.
pub fn verify_optima_coincide(
    params: &ChannelParams,
    epsilon: QosConstraint,
    cfg: &SearchConfig,
) -> Result<GapReport> {
    let unconstrained = optimum_unconstrained(params, cfg)?
        .report()
        .copied()
        .ok_or(Error::InterferenceFree)?;
    let constrained = m_star(params, epsilon, cfg, None)?
        .report()
        .copied()
        .ok_or(Error::InterferenceFree)?;
    Ok(GapReport {
        unconstrained,
        constrained,
        relative_gap: (unconstrained.throughput_star - constrained.throughput_star)
            / unconstrained.throughput_star,
    })
}

/// Throughput of the report's operating point recomputed from the analytic
/// model with the exact mean attempt count.
pub fn throughput_at(params: &ChannelParams, report: &OptimumReport) -> Result<f64> {
    match report.m_star {
        Some(m) => Ok(analytic::throughput(
            params,
            &LinkPolicy::new(report.beta_star, m)?,
        )),
        None => Ok(unconstrained_throughput(params, report.beta_star)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64) -> ChannelParams {
        ChannelParams::new(4.0, 1.0, lambda).unwrap()
    }

    fn eps(e: f64) -> QosConstraint {
        QosConstraint::new(e).unwrap()
    }

    // Plain bisection on g over a hand-chosen bracket.
    fn bisect_oracle(p: &ChannelParams, mut lo: f64, mut hi: f64) -> f64 {
        assert!(stationarity_residual(p, lo) > 0.0 && stationarity_residual(p, hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if stationarity_residual(p, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn beta_star_values() {
        let b = beta_star(&params(0.05), eps(0.02), 4).unwrap();
        assert!((b - 6.14).abs() < 0.01, "{b}");
        assert!((b - 6.136_184_644_111_366).abs() < 1e-10);
        let b = beta_star(&params(0.1), eps(0.01), 5).unwrap();
        assert!((b / 1.598_508_517_148_784 - 1.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn beta_star_makes_constraint_active() {
        for lambda in [0.01, 0.05, 0.2, 0.3] {
            for e in [0.1, 0.02, 1e-3] {
                for m in [0, 1, 4, 17, 200] {
                    let p = params(lambda);
                    let b = beta_star(&p, eps(e), m).unwrap();
                    let drop = outage_probability(&p, b).powi(m as i32 + 1);
                    assert!((drop / e - 1.0).abs() < 1e-10, "{lambda} {e} {m}: {drop}");
                }
            }
        }
    }

    #[test]
    fn beta_star_needs_interference() {
        assert!(matches!(
            beta_star(&params(0.0), eps(0.1), 2),
            Err(Error::InterferenceFree)
        ));
        let cfg = SearchConfig::default();
        assert_eq!(
            m_star(&params(0.0), eps(0.1), &cfg, None).unwrap(),
            Optimum::InterferenceFree
        );
        assert_eq!(
            optimum_unconstrained(&params(0.0), &cfg).unwrap(),
            Optimum::InterferenceFree
        );
    }

    #[test]
    fn m_star_matches_exhaustive_scan() {
        let cfg = SearchConfig::default();
        let r = m_star(&params(0.05), eps(0.02), &cfg, None)
            .unwrap()
            .unwrap_report();
        assert_eq!(r.m_star, Some(5));
        assert!((r.throughput_star - 1.098_075_320_676_971).abs() < 1e-9);

        let r = m_star(&params(0.2), eps(0.02), &cfg, None)
            .unwrap()
            .unwrap_report();
        assert_eq!(r.m_star, Some(11));
        assert!((r.throughput_star / 0.274 - 1.0).abs() < 0.01);

        let r = m_star(&params(0.1), eps(0.01), &cfg, Some(5))
            .unwrap()
            .unwrap_report();
        assert_eq!(r.m_star, Some(5));
        assert!(!r.at_search_ceiling);
        assert!((r.throughput_star - 0.511_694_847_682_670_5).abs() < 1e-9);
    }

    #[test]
    fn report_is_self_consistent() {
        let cfg = SearchConfig::default();
        for lambda in [0.02, 0.1, 0.3] {
            for e in [0.1, 0.01, 0.001] {
                let p = params(lambda);
                let r = m_star(&p, eps(e), &cfg, None).unwrap().unwrap_report();
                let drop = r.drop_rate.unwrap();
                assert!(drop <= e + 1e-12);
                assert!((drop / e - 1.0).abs() < 1e-9);
                let t = throughput_at(&p, &r).unwrap();
                assert!((t / r.throughput_star - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ceiling_flag() {
        let cfg = SearchConfig {
            m_max: 3,
            ..SearchConfig::default()
        };
        let r = m_star(&params(0.2), eps(0.02), &cfg, None)
            .unwrap()
            .unwrap_report();
        assert_eq!(r.m_star, Some(3));
        assert!(r.at_search_ceiling);
    }

    #[test]
    fn tie_breaks_to_smallest_cap() {
        let scan: Vec<CapPoint> = [1.0, 2.0, 2.0, 1.0]
            .iter()
            .enumerate()
            .map(|(m, &t)| CapPoint {
                m: m as u32,
                beta: 1.0,
                throughput: t,
            })
            .collect();
        assert_eq!(best_cap(&scan).unwrap().m, 1);
        assert_eq!(best_cap(&[]), None);
    }

    #[test]
    fn unconstrained_root_matches_bisection_oracle() {
        let cfg = SearchConfig::default();
        let p = params(0.05);
        let b = beta_star_unconstrained(&p, &cfg).unwrap();
        assert!((b / 9.643_535_751_943_177 - 1.0).abs() < 1e-9, "{b}");
        assert!((b / bisect_oracle(&p, 9.0, 10.0) - 1.0).abs() < 1e-9);
        let p_out = outage_probability(&p, b);
        assert!((p_out - 0.5).abs() < 0.05, "{p_out}");

        let p = params(0.2);
        let b = beta_star_unconstrained(&p, &cfg).unwrap();
        assert!((b / bisect_oracle(&p, 1.6, 1.7) - 1.0).abs() < 1e-9);
        assert!((b - 1.667_132_362_429_426).abs() < 1e-8);
    }

    #[test]
    fn unconstrained_residual_small() {
        let cfg = SearchConfig::default();
        for lambda in [1e-4, 0.01, 0.05, 0.2, 1.0, 10.0] {
            let p = params(lambda);
            let b = beta_star_unconstrained(&p, &cfg).unwrap();
            let res = stationarity_residual(&p, b).abs() / (4.0 * b).max(1.0);
            assert!(res < 1e-10, "lambda {lambda}: residual {res:e}");
        }
    }

    #[test]
    fn bracket_expands_and_fails_gracefully() {
        let p = params(1e-6);
        let cfg = SearchConfig {
            bracket_hi_init: 1.0,
            ..SearchConfig::default()
        };
        assert!(beta_star_unconstrained(&p, &cfg).unwrap() > 1.0);
        let cfg = SearchConfig {
            bracket_hi_init: 1.0,
            max_bracket_expansions: 1,
            ..SearchConfig::default()
        };
        assert!(matches!(
            beta_star_unconstrained(&p, &cfg),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn unconstrained_optimum_values() {
        let cfg = SearchConfig::default();
        let r = optimum_unconstrained(&params(0.05), &cfg)
            .unwrap()
            .unwrap_report();
        assert!((r.throughput_star - 1.099_142_403_938_782).abs() < 1e-9);
        assert_eq!(r.m_star, None);
        let r = optimum_unconstrained(&params(0.2), &cfg)
            .unwrap()
            .unwrap_report();
        assert!((r.throughput_star - 0.274_304_268_719_705).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_is_concave_near_optimum() {
        let cfg = SearchConfig::default();
        for lambda in [0.02, 0.05, 0.1, 0.2, 0.3] {
            let p = params(lambda);
            let b = beta_star_unconstrained(&p, &cfg).unwrap();
            for scale in [0.8, 0.9, 1.0, 1.1, 1.2] {
                let x = b * scale;
                let h = 1e-3 * x;
                let d2 = (unconstrained_throughput(&p, x + h)
                    - 2.0 * unconstrained_throughput(&p, x)
                    + unconstrained_throughput(&p, x - h))
                    / (h * h);
                assert!(d2 < 0.0, "lambda {lambda}, beta {x}: {d2}");
            }
        }
    }

    #[test]
    fn constrained_points_lie_on_unconstrained_curve() {
        for lambda in [0.02, 0.1, 0.3] {
            let p = params(lambda);
            for point in constrained_scan(&p, eps(0.01), 60).unwrap() {
                let on_curve = unconstrained_throughput(&p, point.beta);
                assert!((point.throughput - on_curve).abs() <= 1e-12 * on_curve.max(1e-300));
            }
        }
    }

    #[test]
    fn scans_are_unimodal() {
        for lambda in [0.01, 0.05, 0.1, 0.2, 0.3] {
            for e in [0.1, 0.02, 0.01, 0.001] {
                let t: Vec<f64> = constrained_scan(&params(lambda), eps(e), 1000)
                    .unwrap()
                    .iter()
                    .map(|p| p.throughput)
                    .collect();
                assert!(is_unimodal(&t), "lambda {lambda}, eps {e}");
            }
        }
        assert!(!is_unimodal(&[1.0, 2.0, 1.0, 3.0]));
        assert!(is_unimodal(&[1.0, 1.0, 3.0, 2.0, 2.0]));
    }

    #[test]
    fn optima_coincide_up_to_quantization() {
        let cfg = SearchConfig::default();
        let gap = verify_optima_coincide(&params(0.05), eps(0.02), &cfg).unwrap();
        assert!(
            gap.relative_gap >= -1e-9 && gap.relative_gap < 0.02,
            "{gap:?}"
        );

        let t: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&e| verify_optima_coincide(&params(0.1), eps(e), &cfg).unwrap())
            .map(|g| g.constrained.throughput_star)
            .collect();
        let (lo, hi) = t
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!((hi - lo) / hi < 0.02, "{t:?}");
    }
}
