use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside the domain where the model is defined.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The interference density is zero, so the error-rate constraint never
    /// binds and the optimal threshold is unbounded.
    #[error("interference-free link (lambda = 0): optimal threshold is unbounded")]
    InterferenceFree,

    #[error(
        "root bracket not found: g({hi}) = {g_hi} still positive after {expansions} expansions"
    )]
    NoBracket { hi: f64, g_hi: f64, expansions: u32 },

    #[error("stationarity equation has {sign_changes} sign changes on the probe grid, expected 1")]
    NonUniqueRoot { sign_changes: usize },

    #[error("root residual {residual:e} exceeds tolerance {tol:e} at beta = {beta}")]
    ResidualTooLarge { beta: f64, residual: f64, tol: f64 },

    /// The simulation window is too small for the requested interference
    /// density: the interference neglected outside the window is not small.
    #[error(
        "simulation window too small: truncated interference {neglected:e} exceeds bound {bound:e}"
    )]
    WindowTooSmall { neglected: f64, bound: f64 },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
