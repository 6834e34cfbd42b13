//! Layered CLI settings.
//!
//! Values come from command-line flags, then the config file, then the
//! `PPTO_OUTPUT_DIR` environment variable (output directory only), then
//! built-in defaults. The config file is flat `key = value` text; `#` and `;`
//! start comments and `[section]` headers are accepted and ignored.

use std::path::PathBuf;

use crate::analytic::{ChannelParams, LogBase, QosConstraint};
use crate::montecarlo::SimConfig;
use crate::optimize::SearchConfig;

pub const OUTPUT_DIR_ENV: &str = "PPTO_OUTPUT_DIR";

/// Every setting any subcommand reads; `None` means "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub alpha: Option<f64>,
    pub r0: Option<f64>,
    pub lambda: Option<f64>,
    pub log_base: Option<LogBase>,
    pub beta: Option<f64>,
    pub m: Option<u32>,
    pub epsilon: Option<f64>,
    pub m_cap: Option<u32>,
    pub m_max: Option<u32>,
    pub bracket_hi_init: Option<f64>,
    pub root_tol: Option<f64>,
    pub max_bracket_expansions: Option<u32>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub window_factor: Option<f64>,
    pub power_ratio: Option<f64>,
    pub threads: Option<usize>,
    pub mc_stride: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub verbosity: Option<u8>,
}

macro_rules! settings_fields {
    ($mac:ident) => {
        $mac!(
            alpha,
            r0,
            lambda,
            log_base,
            beta,
            m,
            epsilon,
            m_cap,
            m_max,
            bracket_hi_init,
            root_tol,
            max_bracket_expansions,
            n,
            seed,
            window_factor,
            power_ratio,
            threads,
            mc_stride,
            output_dir,
            verbosity
        )
    };
}

impl Settings {
    /// Field-wise `self` over `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        macro_rules! merge {
            ($($f:ident),*) => {
                Settings { $($f: self.$f.or(lower.$f)),* }
            };
        }
        settings_fields!(merge)
    }

    /// Parses config-file text.
    pub fn parse_file(text: &str) -> Result<Settings, String> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim().replace('-', "_");
            s.set(&key, value.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, String> {
            value
                .parse()
                .map(Some)
                .map_err(|_| format!("invalid value `{value}` for `{key}`"))
        }
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => self.$f = parse(key, value)?,)*
                    _ => return Err(format!("unknown key `{key}`")),
                }
            };
        }
        if key == "window_radius_factor" {
            self.window_factor = parse(key, value)?;
            return Ok(());
        }
        settings_fields!(assign);
        Ok(())
    }
}

/// Settings after defaults have been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub alpha: f64,
    pub r0: f64,
    pub lambda: Option<f64>,
    pub log_base: LogBase,
    pub beta: Option<f64>,
    pub m: u32,
    pub epsilon: Option<f64>,
    pub m_cap: Option<u32>,
    pub search: SearchConfig,
    pub n: u64,
    pub seed: Option<u64>,
    pub window_factor: f64,
    pub power_ratio: f64,
    pub threads: usize,
    pub mc_stride: Option<usize>,
    pub output_dir: PathBuf,
    pub verbosity: u8,
}

/// Failure to assemble a usable configuration; always an argument error.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl CliConfig {
    /// Applies defaults under `flags` over `file`; `env_output_dir` is the
    /// environment fallback for the output directory.
    pub fn resolve(flags: Settings, file: Settings, env_output_dir: Option<PathBuf>) -> Self {
        let s = flags.over(file);
        let search = SearchConfig::default();
        CliConfig {
            alpha: s.alpha.unwrap_or(4.0),
            r0: s.r0.unwrap_or(1.0),
            lambda: s.lambda,
            log_base: s.log_base.unwrap_or_default(),
            beta: s.beta,
            m: s.m.unwrap_or(0),
            epsilon: s.epsilon,
            m_cap: s.m_cap,
            search: SearchConfig {
                m_max: s.m_max.unwrap_or(search.m_max),
                bracket_hi_init: s.bracket_hi_init.unwrap_or(search.bracket_hi_init),
                root_tol: s.root_tol.unwrap_or(search.root_tol),
                max_bracket_expansions: s
                    .max_bracket_expansions
                    .unwrap_or(search.max_bracket_expansions),
            },
            n: s.n.unwrap_or(100_000),
            seed: s.seed,
            window_factor: s.window_factor.unwrap_or(100.0),
            power_ratio: s.power_ratio.unwrap_or(1.0),
            threads: s.threads.unwrap_or(1),
            mc_stride: s.mc_stride,
            output_dir: s
                .output_dir
                .or(env_output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            verbosity: s.verbosity.unwrap_or(0),
        }
    }

    pub fn channel(&self) -> Result<ChannelParams, ConfigError> {
        let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
        ChannelParams::new(self.alpha, self.r0, lambda)
            .map(|p| p.with_log_base(self.log_base))
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn require_beta(&self) -> Result<f64, ConfigError> {
        self.beta.ok_or_else(|| missing("beta"))
    }

    pub fn require_epsilon(&self) -> Result<QosConstraint, ConfigError> {
        let e = self.epsilon.ok_or_else(|| missing("epsilon"))?;
        QosConstraint::new(e).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| missing("seed"))
    }

    pub fn sim(&self, seed: u64) -> SimConfig {
        SimConfig {
            window_radius_factor: self.window_factor,
            n_messages: self.n,
            seed,
            power_ratio: self.power_ratio,
            streams: self.threads,
        }
    }
}

fn missing(name: &str) -> ConfigError {
    ConfigError(format!(
        "missing required value: --{}",
        name.replace('_', "-")
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let s = Settings::parse_file(
            "# channel\n[channel]\nalpha = 3.5\nlambda=0.1 ; density\nlog-base = 2\n\nseed = 9\nwindow_radius_factor = 40\n",
        )
        .unwrap();
        assert_eq!(s.alpha, Some(3.5));
        assert_eq!(s.lambda, Some(0.1));
        assert_eq!(s.log_base, Some(LogBase::Two));
        assert_eq!(s.seed, Some(9));
        assert_eq!(s.window_factor, Some(40.0));
        assert_eq!(s.beta, None);
    }

    #[test]
    fn rejects_bad_file() {
        assert!(Settings::parse_file("colour = red")
            .unwrap_err()
            .contains("unknown key"));
        assert!(Settings::parse_file("alpha = four")
            .unwrap_err()
            .contains("alpha"));
        assert!(Settings::parse_file("alpha")
            .unwrap_err()
            .contains("line 1"));
    }

    #[test]
    fn precedence_is_flags_then_file_then_defaults() {
        let flags = Settings {
            alpha: Some(3.0),
            ..Settings::default()
        };
        let file = Settings {
            alpha: Some(5.0),
            r0: Some(2.0),
            ..Settings::default()
        };
        let c = CliConfig::resolve(flags.clone(), file.clone(), None);
        assert_eq!((c.alpha, c.r0, c.m), (3.0, 2.0, 0));
        let c = CliConfig::resolve(Settings::default(), file, None);
        assert_eq!(c.alpha, 5.0);
        let c = CliConfig::resolve(flags, Settings::default(), None);
        assert_eq!((c.alpha, c.r0), (3.0, 1.0));
    }

    #[test]
    fn output_dir_fallbacks() {
        let env = Some(PathBuf::from("env"));
        let file = Settings {
            output_dir: Some("file".into()),
            ..Settings::default()
        };
        let flags = Settings {
            output_dir: Some("flag".into()),
            ..Settings::default()
        };
        let dir = |f: &Settings, fl: &Settings, e: &Option<PathBuf>| {
            CliConfig::resolve(f.clone(), fl.clone(), e.clone()).output_dir
        };
        assert_eq!(dir(&flags, &file, &env), PathBuf::from("flag"));
        assert_eq!(
            dir(&Settings::default(), &file, &env),
            PathBuf::from("file")
        );
        assert_eq!(
            dir(&Settings::default(), &Settings::default(), &env),
            PathBuf::from("env")
        );
        assert_eq!(
            dir(&Settings::default(), &Settings::default(), &None),
            PathBuf::from("out")
        );
    }

    #[test]
    fn missing_values_are_named() {
        let c = CliConfig::resolve(Settings::default(), Settings::default(), None);
        assert!(c.channel().unwrap_err().0.contains("lambda"));
        assert!(c.require_beta().unwrap_err().0.contains("--beta"));
        assert!(c.require_seed().unwrap_err().0.contains("--seed"));
    }
}
