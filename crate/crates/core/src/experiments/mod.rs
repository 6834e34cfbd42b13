//! Parameter sweeps behind the throughput figures.
//!
//! A [`SweepSpec`] fully describes one figure. Running it yields a
//! [`FigureDataset`] whose metadata embeds the spec, so every dataset can be
//! regenerated bit for bit. [`render`] turns datasets into CSV and SVG.

pub mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{
    self, outage_probability, ChannelParams, LinkPolicy, LogBase, QosConstraint,
};
use crate::montecarlo::{simulate_protocol, SimConfig};
use crate::optimize::{self, m_star, optimum_unconstrained, Optimum, SearchConfig};
use crate::{Error, Result};

pub use self::render::{
    read_csv, render_figure, to_csv, write_figure, CsvTable, PlotStyle, RenderedFigure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    /// Throughput versus SIR threshold.
    Fig2,
    /// Throughput versus attempts `1 + m`.
    Fig3,
    /// Optimal throughput versus density, unlimited retransmissions.
    Fig4,
    /// Optimal throughput versus density, capped retransmissions.
    Fig5,
    /// Optimal retransmission cap versus density.
    Fig6,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6 => "fig6",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown figure `{s}` (expected fig2..fig6)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Beta,
    /// Swept as the attempt count `1 + m`.
    M,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Explicit(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        spacing: Spacing,
    },
}

impl Grid {
    pub fn log(min: f64, max: f64, count: usize) -> Self {
        Grid::Range {
            min,
            max,
            count,
            spacing: Spacing::Log,
        }
    }

    /// Grid points; non-empty and strictly increasing.
    pub fn points(&self) -> Result<Vec<f64>> {
        let points = match *self {
            Grid::Explicit(ref v) => v.clone(),
            Grid::Range {
                min,
                max,
                count,
                spacing,
            } => {
                if count == 0 {
                    return Err(Error::InvalidSweep("grid has no points".into()));
                }
                if spacing == Spacing::Log && min <= 0.0 {
                    return Err(Error::InvalidSweep(
                        "log grid needs a positive minimum".into(),
                    ));
                }
                if count == 1 {
                    vec![min]
                } else {
                    let last = (count - 1) as f64;
                    (0..count)
                        .map(|i| {
                            let t = i as f64 / last;
                            match spacing {
                                Spacing::Linear => min + (max - min) * t,
                                Spacing::Log => min * (max / min).powf(t),
                            }
                        })
                        .collect()
                }
            }
        };
        if points.is_empty() {
            return Err(Error::InvalidSweep("grid has no points".into()));
        }
        if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSweep(
                "grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(points)
    }
}

/// How the threshold sweep picks the retransmission cap at each threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPolicy {
    /// Smallest cap meeting the drop constraint; points needing more than
    /// `m_cap` are infeasible.
    SmallestFeasible,
    /// Same cap everywhere, constraint ignored.
    Fixed(u32),
}

/// Mean attempt count used by the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptsModel {
    Exact,
    /// Assumes the drop constraint is active at every point.
    Approximate,
    /// Emit both, side by side.
    Both,
}

/// Monte Carlo overlay on a subset of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOverlay {
    pub sim: SimConfig,
    /// Simulate every `stride`-th grid point.
    pub stride: usize,
}

/// Full description of one figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub figure_id: FigureId,
    pub sweep_variable: SweepVariable,
    pub grid: Grid,
    pub alpha: f64,
    pub r0: f64,
    pub log_base: LogBase,
    /// One series per density (threshold and cap sweeps).
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub m_cap: Option<u32>,
    pub cap_policy: CapPolicy,
    pub attempts_model: AttemptsModel,
    pub search: SearchConfig,
    pub mc_overlay: Option<McOverlay>,
}

fn default_lambda_grid() -> Grid {
    Grid::log(0.01, 0.3, 50)
}

impl SweepSpec {
    fn base(figure_id: FigureId, sweep_variable: SweepVariable, grid: Grid) -> Self {
        SweepSpec {
            figure_id,
            sweep_variable,
            grid,
            alpha: 4.0,
            r0: 1.0,
            log_base: LogBase::E,
            lambdas: vec![0.05, 0.1, 0.2],
            epsilons: vec![0.1, 0.01, 0.001],
            m_cap: None,
            cap_policy: CapPolicy::SmallestFeasible,
            attempts_model: AttemptsModel::Exact,
            search: SearchConfig::default(),
            mc_overlay: None,
        }
    }

    /// Default spec for each figure.
    pub fn default_for(figure_id: FigureId) -> Self {
        match figure_id {
            FigureId::Fig2 => SweepSpec {
                epsilons: vec![0.02],
                ..Self::base(figure_id, SweepVariable::Beta, Grid::log(0.1, 30.0, 200))
            },
            FigureId::Fig3 => SweepSpec {
                epsilons: vec![0.02],
                ..Self::base(
                    figure_id,
                    SweepVariable::M,
                    Grid::Explicit((1..=30).map(f64::from).collect()),
                )
            },
            FigureId::Fig4 | FigureId::Fig6 => {
                Self::base(figure_id, SweepVariable::Lambda, default_lambda_grid())
            }
            FigureId::Fig5 => SweepSpec {
                m_cap: Some(5),
                ..Self::base(figure_id, SweepVariable::Lambda, default_lambda_grid())
            },
        }
    }

    fn channel(&self, lambda: f64) -> Result<ChannelParams> {
        Ok(ChannelParams::new(self.alpha, self.r0, lambda)?.with_log_base(self.log_base))
    }

    fn epsilons(&self) -> Result<Vec<QosConstraint>> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidSweep("no epsilon values".into()));
        }
        self.epsilons
            .iter()
            .map(|&e| QosConstraint::new(e))
            .collect()
    }

    fn series_lambdas(&self) -> Result<&[f64]> {
        if self.lambdas.is_empty() {
            return Err(Error::InvalidSweep("no lambda values".into()));
        }
        Ok(&self.lambdas)
    }

    /// Canonical JSON form, embedded in dataset metadata.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Short content hash used in output file names.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }
}

/// One curve. Missing or infeasible points are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub y: Vec<f64>,
    pub std_error: Option<Vec<f64>>,
}

impl Series {
    fn new(label: impl Into<String>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            y,
            std_error: None,
        }
    }

    /// Points carrying a value (feasible under the sweep's constraint).
    pub fn feasible(&self) -> Vec<bool> {
        self.y.iter().map(|y| !y.is_nan()).collect()
    }

    /// Largest value and its index, ignoring missing points.
    pub fn max(&self) -> Option<(usize, f64)> {
        self.y
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, y)| !y.is_nan())
            .fold(None, |best, (i, y)| match best {
                Some((_, b)) if b >= y => best,
                _ => Some((i, y)),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureDataset {
    pub figure_id: FigureId,
    /// CSV name of the x column.
    pub x_name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
    pub metadata: BTreeMap<String, String>,
}

impl FigureDataset {
    fn new(
        spec: &SweepSpec,
        x_name: &str,
        x_label: &str,
        y_label: &str,
        x: Vec<f64>,
    ) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        metadata.insert("figure_id".into(), spec.figure_id.as_str().into());
        metadata.insert("log_base".into(), spec.log_base.to_string());
        metadata.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
        metadata.insert("spec".into(), spec.to_json()?);
        metadata.insert("spec_hash".into(), spec.hash()?);
        if let Some(mc) = &spec.mc_overlay {
            metadata.insert("seed".into(), mc.sim.seed.to_string());
        }
        Ok(FigureDataset {
            figure_id: spec.figure_id,
            x_name: x_name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            series: Vec::new(),
            metadata,
        })
    }

    pub fn series(&self, label: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.label == label)
    }

    /// Spec recovered from the metadata.
    pub fn spec(&self) -> Result<SweepSpec> {
        let json = self
            .metadata
            .get("spec")
            .ok_or_else(|| Error::InvalidSweep("dataset metadata has no spec".into()))?;
        SweepSpec::from_json(json)
    }

    /// Regenerates the dataset from its own metadata.
    pub fn rerun(&self) -> Result<FigureDataset> {
        run(&self.spec()?)
    }
}

/// Runs the sweep the spec describes.
pub fn run(spec: &SweepSpec) -> Result<FigureDataset> {
    match (spec.sweep_variable, spec.figure_id) {
        (SweepVariable::Beta, _) => sweep_beta(spec),
        (SweepVariable::M, _) => sweep_m(spec),
        (SweepVariable::Lambda, FigureId::Fig6) => sweep_lambda_mstar(spec),
        (SweepVariable::Lambda, _) => sweep_lambda_optimal(spec),
    }
}

fn lambda_label(lambda: f64) -> String {
    format!("lambda={lambda}")
}

fn eps_label(eps: f64) -> String {
    format!("eps={eps}")
}

// SplitMix64 finalizer; gives each overlay point its own seed.
fn point_seed(seed: u64, series: usize, point: usize) -> u64 {
    let mut z = seed
        .wrapping_add(((series as u64) << 32 | point as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Simulated throughput at the given operating points (None = skip).
fn overlay(
    spec: &SweepSpec,
    series_index: usize,
    label: String,
    points: &[Option<(ChannelParams, LinkPolicy)>],
) -> Result<Option<Series>> {
    let Some(mc) = spec.mc_overlay else {
        return Ok(None);
    };
    let stride = mc.stride.max(1);
    let mut y = vec![f64::NAN; points.len()];
    let mut se = vec![f64::NAN; points.len()];
    for (i, point) in points.iter().enumerate() {
        if i % stride != 0 {
            continue;
        }
        if let Some((params, policy)) = point {
            let sim = SimConfig {
                seed: point_seed(mc.sim.seed, series_index, i),
                ..mc.sim
            };
            let report = simulate_protocol(params, policy, &sim)?;
            y[i] = report.throughput.mean;
            se[i] = report.throughput.std_error;
        }
    }
    Ok(Some(Series {
        label,
        y,
        std_error: Some(se),
    }))
}

/// Smallest `m <= m_cap` with `p^(1+m) <= epsilon`.
pub fn smallest_feasible_cap(p_out: f64, epsilon: QosConstraint, m_cap: u32) -> Option<u32> {
    if p_out == 0.0 {
        return Some(0);
    }
    if p_out >= 1.0 {
        return None;
    }
    let eps = epsilon.epsilon();
    let guess = (eps.ln() / p_out.ln()).ceil() - 1.0;
    if !(guess.is_finite()) || guess > f64::from(m_cap) + 1.0 {
        return None;
    }
    let mut m = guess.max(0.0) as u32;
    while m > 0 && p_out.powi(m as i32) <= eps {
        m -= 1;
    }
    while p_out.powi(m as i32 + 1) > eps {
        m += 1;
    }
    (m <= m_cap).then_some(m)
}

/// Throughput versus threshold, one series per density.
pub fn sweep_beta(spec: &SweepSpec) -> Result<FigureDataset> {
    if spec.sweep_variable != SweepVariable::Beta {
        return Err(Error::InvalidSweep(
            "sweep_beta needs sweep_variable = beta".into(),
        ));
    }
    let betas = spec.grid.points()?;
    if betas[0] <= 0.0 {
        return Err(Error::InvalidSweep("thresholds must be positive".into()));
    }
    let eps = spec.epsilons()?[0];
    let m_cap = spec.m_cap.unwrap_or(spec.search.m_max);
    let mut ds = FigureDataset::new(
        spec,
        "beta",
        "SIR threshold beta",
        "throughput T",
        betas.clone(),
    )?;
    ds.metadata.insert(
        "cap_policy".into(),
        serde_json::to_string(&spec.cap_policy)?,
    );

    for (si, &lambda) in spec.series_lambdas()?.iter().enumerate() {
        let params = spec.channel(lambda)?;
        let mut exact = Vec::with_capacity(betas.len());
        let mut approx = Vec::with_capacity(betas.len());
        let mut points = Vec::with_capacity(betas.len());
        for &beta in &betas {
            let p = outage_probability(&params, beta);
            let m = match spec.cap_policy {
                CapPolicy::SmallestFeasible => smallest_feasible_cap(p, eps, m_cap),
                CapPolicy::Fixed(m) => Some(m),
            };
            match m {
                Some(m) => {
                    let policy = LinkPolicy::new(beta, m)?;
                    exact.push(analytic::throughput(&params, &policy));
                    approx.push(params.log_base().log1p(beta) * eps.per_attempt_success(m));
                    points.push(Some((params, policy)));
                }
                None => {
                    exact.push(f64::NAN);
                    approx.push(f64::NAN);
                    points.push(None);
                }
            }
        }
        let label = lambda_label(lambda);
        match spec.attempts_model {
            AttemptsModel::Exact => ds.series.push(Series::new(label.clone(), exact)),
            AttemptsModel::Approximate => ds.series.push(Series::new(label.clone(), approx)),
            AttemptsModel::Both => {
                ds.series.push(Series::new(label.clone(), exact));
                ds.series
                    .push(Series::new(format!("{label} approx"), approx));
            }
        }
        if let Some(s) = overlay(spec, si, format!("{label} mc"), &points)? {
            ds.series.push(s);
        }
    }
    Ok(ds)
}

/// Throughput versus attempt count `1 + m` at the constraint-active
/// threshold, one series per density.
pub fn sweep_m(spec: &SweepSpec) -> Result<FigureDataset> {
    if spec.sweep_variable != SweepVariable::M {
        return Err(Error::InvalidSweep(
            "sweep_m needs sweep_variable = m".into(),
        ));
    }
    let attempts = spec.grid.points()?;
    let caps: Vec<u32> = attempts
        .iter()
        .map(|&a| {
            if a >= 1.0 && a.fract() == 0.0 && a <= f64::from(u32::MAX) {
                Ok(a as u32 - 1)
            } else {
                Err(Error::InvalidSweep(format!(
                    "attempt count {a} is not a positive integer"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let eps = spec.epsilons()?[0];
    let mut ds = FigureDataset::new(spec, "attempts", "attempts 1+m", "throughput T", attempts)?;

    for (si, &lambda) in spec.series_lambdas()?.iter().enumerate() {
        let params = spec.channel(lambda)?;
        let mut y = Vec::with_capacity(caps.len());
        let mut points = Vec::with_capacity(caps.len());
        for &m in &caps {
            let beta = optimize::beta_star(&params, eps, m)?;
            y.push(params.log_base().log1p(beta) * eps.per_attempt_success(m));
            points.push(Some((params, LinkPolicy::new(beta, m)?)));
        }
        let label = lambda_label(lambda);
        ds.series.push(Series::new(label.clone(), y));
        if let Some(s) = overlay(spec, si, format!("{label} mc"), &points)? {
            ds.series.push(s);
        }
    }
    Ok(ds)
}

fn lambda_grid(spec: &SweepSpec) -> Result<Vec<f64>> {
    if spec.sweep_variable != SweepVariable::Lambda {
        return Err(Error::InvalidSweep(
            "sweep needs sweep_variable = lambda".into(),
        ));
    }
    let lambdas = spec.grid.points()?;
    if lambdas[0] <= 0.0 {
        return Err(Error::InvalidSweep("densities must be positive".into()));
    }
    Ok(lambdas)
}

fn found(opt: Optimum) -> Result<optimize::OptimumReport> {
    opt.report().copied().ok_or(Error::InterferenceFree)
}

/// Unconstrained and constrained optimal throughput versus density; the
/// spec's `m_cap` limits the constrained scan.
pub fn sweep_lambda_optimal(spec: &SweepSpec) -> Result<FigureDataset> {
    let lambdas = lambda_grid(spec)?;
    let epsilons = spec.epsilons()?;
    let mut ds = FigureDataset::new(
        spec,
        "lambda",
        "density lambda",
        "optimal throughput T*",
        lambdas.clone(),
    )?;

    let mut unconstrained = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let report = found(optimum_unconstrained(&spec.channel(lambda)?, &spec.search)?)?;
        unconstrained.push(report.throughput_star);
    }
    ds.series.push(Series::new("unconstrained", unconstrained));

    for (ei, eps) in epsilons.iter().enumerate() {
        let mut y = Vec::with_capacity(lambdas.len());
        let mut points = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let params = spec.channel(lambda)?;
            let r = found(m_star(&params, *eps, &spec.search, spec.m_cap)?)?;
            y.push(r.throughput_star);
            points.push(Some((
                params,
                LinkPolicy::new(r.beta_star, r.m_star.unwrap_or(0))?,
            )));
        }
        let label = eps_label(eps.epsilon());
        ds.series.push(Series::new(label.clone(), y));
        if let Some(s) = overlay(spec, ei, format!("{label} mc"), &points)? {
            ds.series.push(s);
        }
    }
    Ok(ds)
}

/// Optimal retransmission cap versus density, one step series per epsilon.
pub fn sweep_lambda_mstar(spec: &SweepSpec) -> Result<FigureDataset> {
    let lambdas = lambda_grid(spec)?;
    let epsilons = spec.epsilons()?;
    let mut ds = FigureDataset::new(
        spec,
        "lambda",
        "density lambda",
        "optimal cap m*",
        lambdas.clone(),
    )?;
    for eps in &epsilons {
        let mut y = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let r = found(m_star(
                &spec.channel(lambda)?,
                *eps,
                &spec.search,
                spec.m_cap,
            )?)?;
            y.push(f64::from(r.m_star.unwrap_or(0)));
        }
        ds.series.push(Series::new(eps_label(eps.epsilon()), y));
    }
    Ok(ds)
}

/// Headline operating point for one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Headline {
    pub lambda: f64,
    pub epsilon: f64,
    pub beta_star: f64,
    pub m_star: u32,
    pub throughput_star: f64,
    pub throughput_unconstrained: f64,
}

/// Constrained and unconstrained optima for each density.
pub fn headlines(
    params: &ChannelParams,
    lambdas: &[f64],
    epsilon: QosConstraint,
    search: &SearchConfig,
) -> Result<Vec<Headline>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let p = params.with_lambda(lambda)?;
            let con = found(m_star(&p, epsilon, search, None)?)?;
            let un = found(optimum_unconstrained(&p, search)?)?;
            Ok(Headline {
                lambda,
                epsilon: epsilon.epsilon(),
                beta_star: con.beta_star,
                m_star: con.m_star.unwrap_or(0),
                throughput_star: con.throughput_star,
                throughput_unconstrained: un.throughput_star,
            })
        })
        .collect()
}
