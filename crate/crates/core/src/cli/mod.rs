//! The `ppto` command line.
//!
//! Exit codes: 0 success, 2 argument or configuration error, 3 solver
//! failure, 4 I/O failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use self::config::{CliConfig, ConfigError, Settings, OUTPUT_DIR_ENV};
use crate::analytic::{self, ChannelParams, LinkPolicy, LogBase, QosConstraint};
use crate::experiments::{self, AttemptsModel, FigureId, McOverlay, PlotStyle, SweepSpec};
use crate::montecarlo::{simulate_protocol, McEstimate};
use crate::optimize::{m_star, optimum_unconstrained, Optimum};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "ppto",
    version,
    about = "Throughput of ARQ links under Poisson-field interference"
)]
pub struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (falls back to $PPTO_OUTPUT_DIR, then ./out).
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Record format for printed results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Kv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// One `key=value` per line.
    Kv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the closed forms at one operating point.
    Eval(EvalArgs),
    /// Find the optimal threshold and retransmission cap.
    Optimize(OptimizeArgs),
    /// Monte Carlo simulation of the retransmission protocol.
    Simulate(SimulateArgs),
    /// Regenerate the figure datasets (CSV + SVG).
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct ChannelArgs {
    /// Path-loss exponent (> 2) [default: 4]
    #[arg(long)]
    alpha: Option<f64>,
    /// Reference link distance [default: 1]
    #[arg(long)]
    r0: Option<f64>,
    /// Interferer density
    #[arg(long)]
    lambda: Option<f64>,
    /// Logarithm base of the spectral efficiency: 2 or e [default: e]
    #[arg(long, value_parser = parse_log_base)]
    log_base: Option<LogBase>,
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// SIR threshold
    #[arg(long)]
    beta: Option<f64>,
    /// Retransmission cap [default: 0]
    #[arg(long)]
    m: Option<u32>,
    /// Drop-rate constraint to check
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Maximize throughput without a drop-rate constraint.
    #[arg(long, conflicts_with_all = ["epsilon", "m_cap"])]
    unconstrained: bool,
    /// Largest admissible retransmission cap.
    #[arg(long)]
    m_cap: Option<u32>,
    /// Search ceiling of the cap scan [default: 1000]
    #[arg(long)]
    m_max: Option<u32>,
    #[arg(long)]
    root_tol: Option<f64>,
    #[arg(long)]
    bracket_hi_init: Option<f64>,
    #[arg(long)]
    max_bracket_expansions: Option<u32>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Messages per estimate [default: 100000]
    #[arg(long)]
    n: Option<u64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation disk radius in units of r0 [default: 100]
    #[arg(long)]
    window_factor: Option<f64>,
    /// Worker threads; results do not depend on it [default: 1]
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[command(flatten)]
    sim: SimArgs,
    /// Interferer to reference transmit power ratio [default: 1]
    #[arg(long)]
    power_ratio: Option<f64>,
    /// Also write the estimates as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long, value_parser = parse_log_base)]
    log_base: Option<LogBase>,
    /// Only this figure (fig2..fig6).
    #[arg(long, value_parser = parse_figure)]
    figure: Option<FigureId>,
    /// Add Monte Carlo error bars (requires --seed).
    #[arg(long)]
    mc_overlay: bool,
    #[command(flatten)]
    sim: SimArgs,
    /// Simulate every N-th grid point [default: about 10 points per series]
    #[arg(long)]
    mc_stride: Option<usize>,
    /// Mean-attempt model of the threshold sweep.
    #[arg(long, value_enum, default_value_t = ModelArg::Exact)]
    attempts_model: ModelArg,
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Exact,
    Approximate,
    Both,
}

impl From<ModelArg> for AttemptsModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Exact => AttemptsModel::Exact,
            ModelArg::Approximate => AttemptsModel::Approximate,
            ModelArg::Both => AttemptsModel::Both,
        }
    }
}

impl ChannelArgs {
    fn settings(&self) -> Settings {
        Settings {
            alpha: self.alpha,
            r0: self.r0,
            lambda: self.lambda,
            log_base: self.log_base,
            ..Settings::default()
        }
    }
}

impl SimArgs {
    fn settings(&self) -> Settings {
        Settings {
            n: self.n,
            seed: self.seed,
            window_factor: self.window_factor,
            threads: self.threads,
            ..Settings::default()
        }
    }
}

impl Command {
    fn settings(&self) -> Settings {
        match self {
            Command::Eval(a) => Settings {
                beta: a.beta,
                m: a.m,
                epsilon: a.epsilon,
                ..a.channel.settings()
            },
            Command::Optimize(a) => Settings {
                epsilon: a.epsilon,
                m_cap: a.m_cap,
                m_max: a.m_max,
                root_tol: a.root_tol,
                bracket_hi_init: a.bracket_hi_init,
                max_bracket_expansions: a.max_bracket_expansions,
                ..a.channel.settings()
            },
            Command::Simulate(a) => Settings {
                beta: a.beta,
                m: a.m,
                power_ratio: a.power_ratio,
                ..a.channel.settings().over(a.sim.settings())
            },
            Command::Reproduce(a) => Settings {
                alpha: a.alpha,
                r0: a.r0,
                log_base: a.log_base,
                mc_stride: a.mc_stride,
                ..a.sim.settings()
            },
        }
    }
}

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter { .. }
            | Error::InterferenceFree
            | Error::WindowTooSmall { .. }
            | Error::InvalidSweep(_) => CliError::Usage(msg),
            Error::NoBracket { .. }
            | Error::NonUniqueRoot { .. }
            | Error::ResidualTooLarge { .. } => CliError::Solver(msg),
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::ThreadPool(_) => {
                CliError::Io(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

enum Value {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
}

/// Ordered key/value output record.
#[derive(Default)]
struct Record(Vec<(&'static str, Value)>);

impl Record {
    fn num(&mut self, key: &'static str, v: f64) -> &mut Self {
        self.0.push((key, Value::Num(v)));
        self
    }

    fn int(&mut self, key: &'static str, v: impl Into<u64>) -> &mut Self {
        self.0.push((key, Value::Int(v.into())));
        self
    }

    fn flag(&mut self, key: &'static str, v: bool) -> &mut Self {
        self.0.push((key, Value::Bool(v)));
        self
    }

    fn text(&mut self, key: &'static str, v: impl Into<String>) -> &mut Self {
        self.0.push((key, Value::Str(v.into())));
        self
    }

    fn estimate(&mut self, key: &'static str, se_key: &'static str, e: &McEstimate) -> &mut Self {
        self.num(key, e.mean).num(se_key, e.std_error)
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Kv => self
                .0
                .iter()
                .map(|(k, v)| {
                    let v = match v {
                        Value::Num(x) => x.to_string(),
                        Value::Int(i) => i.to_string(),
                        Value::Bool(b) => b.to_string(),
                        Value::Str(s) => s.clone(),
                    };
                    format!("{k}={v}\n")
                })
                .collect(),
            Format::Json => {
                let fields: Vec<String> = self
                    .0
                    .iter()
                    .map(|(k, v)| {
                        let v = match v {
                            Value::Num(x) => serde_json::json!(x),
                            Value::Int(i) => serde_json::json!(i),
                            Value::Bool(b) => serde_json::json!(b),
                            Value::Str(s) => serde_json::json!(s),
                        };
                        format!("{}:{v}", serde_json::json!(k))
                    })
                    .collect();
                format!("{{{}}}\n", fields.join(","))
            }
        }
    }
}

struct Ctx<'a> {
    cfg: CliConfig,
    format: Format,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit(&mut self, record: &Record) -> Result<(), CliError> {
        self.out.write_all(record.render(self.format).as_bytes())?;
        Ok(())
    }

    fn policy(&self) -> Result<LinkPolicy, CliError> {
        Ok(LinkPolicy::new(self.cfg.require_beta()?, self.cfg.m)?)
    }
}

/// Runs the CLI with explicit arguments and streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };

    let file = match &cli.config {
        None => Settings::default(),
        Some(path) => {
            let parsed = fs::read_to_string(path)
                .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))
                .and_then(|text| {
                    Settings::parse_file(&text)
                        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))
                });
            match parsed {
                Ok(s) => s,
                Err((code, msg)) => {
                    let _ = writeln!(err, "error: {msg}");
                    return code;
                }
            }
        }
    };
    let flags = Settings {
        output_dir: cli.output_dir.clone(),
        verbosity: (cli.verbose > 0).then_some(cli.verbose),
        ..cli.command.settings()
    };
    let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let mut ctx = Ctx {
        cfg: CliConfig::resolve(flags, file, env_dir),
        format: cli.format,
        out,
        err,
    };

    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Optimize(a) => cmd_optimize(&mut ctx, a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, a),
        Command::Reproduce(a) => cmd_reproduce(&mut ctx, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {}", e.message());
            e.code()
        }
    }
}

fn channel_record(r: &mut Record, p: &ChannelParams) {
    r.num("alpha", p.alpha())
        .num("r0", p.r0())
        .num("lambda", p.lambda())
        .text("log_base", p.log_base().to_string());
}

fn cmd_eval(ctx: &mut Ctx, _args: &EvalArgs) -> Result<(), CliError> {
    let params = ctx.cfg.channel()?;
    let policy = ctx.policy()?;
    let p_out = analytic::outage_probability(&params, policy.beta());
    let drop = analytic::drop_rate(&params, &policy);
    let mut r = Record::default();
    channel_record(&mut r, &params);
    r.num("beta", policy.beta())
        .int("m", policy.m())
        .num("k", analytic::geometry_constant(&params))
        .num("p_out", p_out)
        .num("mean_attempts", analytic::mean_attempts(p_out, policy.m()))
        .num("throughput", analytic::throughput(&params, &policy))
        .num("drop_rate", drop);
    if ctx.cfg.epsilon.is_some() {
        let eps = ctx.cfg.require_epsilon()?;
        r.num("epsilon", eps.epsilon())
            .flag("feasible", drop <= eps.epsilon());
    }
    ctx.emit(&r)
}

fn cmd_optimize(ctx: &mut Ctx, args: &OptimizeArgs) -> Result<(), CliError> {
    let params = ctx.cfg.channel()?;
    let search = ctx.cfg.search;
    let mut r = Record::default();
    channel_record(&mut r, &params);
    if args.unconstrained {
        r.text("mode", "unconstrained");
        match optimum_unconstrained(&params, &search)? {
            Optimum::InterferenceFree => {
                r.flag("interference_free", true);
            }
            Optimum::Found(o) => {
                r.flag("interference_free", false)
                    .num("beta_star", o.beta_star)
                    .num("throughput_star", o.throughput_star)
                    .num("p_out", o.p_out_at_opt);
            }
        }
        return ctx.emit(&r);
    }

    let eps: QosConstraint = ctx.cfg.require_epsilon()?;
    r.text("mode", "constrained").num("epsilon", eps.epsilon());
    if let Some(cap) = ctx.cfg.m_cap {
        r.int("m_cap", cap);
    }
    match m_star(&params, eps, &search, ctx.cfg.m_cap)? {
        Optimum::InterferenceFree => {
            r.flag("interference_free", true);
        }
        Optimum::Found(o) => {
            let m = o.m_star.unwrap_or(0);
            let drop = o.drop_rate.unwrap_or(f64::NAN);
            r.flag("interference_free", false)
                .num("beta_star", o.beta_star)
                .int("m_star", m)
                .int("attempts", m + 1)
                .num("throughput_star", o.throughput_star)
                .num("p_out", o.p_out_at_opt)
                .num("mean_attempts", o.mean_attempts_at_opt)
                .num("drop_rate", drop)
                .flag("constraint_met", drop <= eps.epsilon() * (1.0 + 1e-9))
                .flag("at_search_ceiling", o.at_search_ceiling);
            if o.at_search_ceiling {
                writeln!(
                    ctx.err,
                    "warning: optimum at the search ceiling m_max = {}",
                    search.m_max
                )?;
            }
        }
    }
    ctx.emit(&r)
}

fn cmd_simulate(ctx: &mut Ctx, args: &SimulateArgs) -> Result<(), CliError> {
    let params = ctx.cfg.channel()?;
    let policy = ctx.policy()?;
    let sim = ctx.cfg.sim(ctx.cfg.require_seed()?);
    sim.validate(&params)?;
    let started = Instant::now();
    let report = simulate_protocol(&params, &policy, &sim)?;
    if ctx.cfg.verbosity > 0 {
        writeln!(
            ctx.err,
            "simulated {} messages in {:.2?}",
            sim.n_messages,
            started.elapsed()
        )?;
    }

    let p_out = analytic::outage_probability(&params, policy.beta());
    let analytic_values = [
        p_out,
        analytic::throughput(&params, &policy),
        analytic::drop_rate(&params, &policy),
        analytic::mean_attempts(p_out, policy.m()),
    ];
    let estimates = [
        report.p_out,
        report.throughput,
        report.drop_rate,
        report.mean_attempts,
    ];

    let mut r = Record::default();
    channel_record(&mut r, &params);
    r.num("beta", policy.beta())
        .int("m", policy.m())
        .int("n", sim.n_messages)
        .int("seed", sim.seed)
        .num("window_factor", sim.window_radius_factor)
        .num("power_ratio", sim.power_ratio)
        .estimate("p_out", "p_out_se", &estimates[0])
        .num("p_out_analytic", analytic_values[0])
        .estimate("throughput", "throughput_se", &estimates[1])
        .num("throughput_analytic", analytic_values[1])
        .estimate("drop_rate", "drop_rate_se", &estimates[2])
        .num("drop_rate_analytic", analytic_values[2])
        .estimate("mean_attempts", "mean_attempts_se", &estimates[3])
        .num("mean_attempts_analytic", analytic_values[3]);
    ctx.emit(&r)?;

    if let Some(path) = &args.csv {
        let names = ["p_out", "throughput", "drop_rate", "mean_attempts"];
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(["quantity", "mean", "std_error", "n", "analytic"])
            .map_err(io)?;
        for ((name, e), a) in names.iter().zip(&estimates).zip(&analytic_values) {
            w.write_record([
                name.to_string(),
                e.mean.to_string(),
                e.std_error.to_string(),
                e.n.to_string(),
                a.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error())))?;
        fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_reproduce(ctx: &mut Ctx, args: &ReproduceArgs) -> Result<(), CliError> {
    let figures: Vec<FigureId> = match args.figure {
        Some(f) => vec![f],
        None => FigureId::ALL.to_vec(),
    };
    let seed = if args.mc_overlay {
        Some(ctx.cfg.require_seed()?)
    } else {
        None
    };
    let cfg = ctx.cfg.clone();
    // Validates alpha and r0 up front so every figure sees the same error.
    let base = ChannelParams::new(cfg.alpha, cfg.r0, 0.0)?.with_log_base(cfg.log_base);

    for figure in figures {
        let mut spec = SweepSpec::default_for(figure);
        spec.alpha = cfg.alpha;
        spec.r0 = cfg.r0;
        spec.log_base = cfg.log_base;
        spec.search = cfg.search;
        spec.attempts_model = args.attempts_model.into();
        if let Some(seed) = seed {
            if figure != FigureId::Fig6 {
                let points = spec.grid.points()?.len();
                let sim = cfg.sim(seed);
                spec.mc_overlay = Some(McOverlay {
                    sim,
                    stride: cfg.mc_stride.unwrap_or(points.div_ceil(10)).max(1),
                });
            }
        }
        let started = Instant::now();
        let ds = experiments::run(&spec)?;
        let (csv, svg) = experiments::write_figure(&ds, &PlotStyle::default(), &cfg.output_dir)?;
        if cfg.verbosity > 0 {
            writeln!(ctx.err, "{}: {:.2?}", figure.as_str(), started.elapsed())?;
        }
        writeln!(ctx.out, "wrote {}", csv.display())?;
        writeln!(ctx.out, "wrote {}", svg.display())?;
    }

    writeln!(
        ctx.out,
        "{:>8} {:>8} {:>10} {:>6} {:>9} {:>10} {:>10}",
        "lambda", "epsilon", "beta*", "m*", "1+m*", "T*", "T*_un"
    )?;
    for eps in [0.02, 0.01] {
        let rows = experiments::headlines(
            &base,
            &[0.05, 0.1, 0.2],
            QosConstraint::new(eps)?,
            &cfg.search,
        )?;
        for h in rows {
            writeln!(
                ctx.out,
                "{:>8} {:>8} {:>10.4} {:>6} {:>9} {:>10.6} {:>10.6}",
                h.lambda,
                h.epsilon,
                h.beta_star,
                h.m_star,
                h.m_star + 1,
                h.throughput_star,
                h.throughput_unconstrained
            )?;
        }
    }
    Ok(())
}
