//! C ABI over the `ppto` library.
//!
//! Every fallible function returns a [`PptoStatus`] and writes its result
//! through an out-pointer that is left untouched on failure. The message of
//! the most recent failure on the calling thread is available from
//! [`ppto_last_error_message`]. Channels are opaque handles created with
//! [`ppto_channel_new`] and released with [`ppto_channel_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ppto::analytic::{self, ChannelParams, LinkPolicy, LogBase, QosConstraint};
use ppto::montecarlo::{self, ProtocolReport};
use ppto::optimize::{self, Optimum, OptimumReport};
use ppto::{Error, McEstimate, SearchConfig, SimConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PptoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    /// The density is zero, so no finite optimum exists.
    InterferenceFree = 3,
    SolverFailure = 4,
    WindowTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 99,
}

/// Logarithm base of the spectral efficiency `log(1 + beta)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PptoLogBase {
    Natural = 0,
    Binary = 1,
}

/// Opaque channel handle.
pub struct PptoChannel {
    params: ChannelParams,
}

/// Optimal operating point. `m_star` is meaningful only when `has_m_star`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptoOptimum {
    pub beta_star: f64,
    pub has_m_star: bool,
    pub m_star: u32,
    pub throughput_star: f64,
    pub p_out: f64,
    pub mean_attempts: f64,
    /// NaN for the unconstrained optimum.
    pub drop_rate: f64,
    pub at_search_ceiling: bool,
}

/// Monte Carlo settings; see [`ppto_sim_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptoSimConfig {
    pub window_radius_factor: f64,
    pub n_messages: u64,
    pub seed: u64,
    pub power_ratio: f64,
    /// Worker threads; results do not depend on it.
    pub threads: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptoEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptoProtocolReport {
    pub throughput: PptoEstimate,
    pub drop_rate: PptoEstimate,
    pub mean_attempts: PptoEstimate,
    pub p_out: PptoEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PptoStatus {
    match e {
        Error::InterferenceFree => PptoStatus::InterferenceFree,
        Error::NoBracket { .. } | Error::NonUniqueRoot { .. } | Error::ResidualTooLarge { .. } => {
            PptoStatus::SolverFailure
        }
        Error::WindowTooSmall { .. } => PptoStatus::WindowTooSmall,
        Error::ThreadPool(_) => PptoStatus::Internal,
        _ => PptoStatus::InvalidParameter,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

// Runs `f`, writes its value to `out` on success and records the error
// message otherwise. Panics never cross the boundary.
fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, Failure>) -> PptoStatus {
    if out.is_null() {
        set_last_error("null output pointer");
        return PptoStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            // SAFETY: checked non-null above; the caller guarantees it is
            // valid for writes of `T`.
            unsafe { out.write(v) };
            set_last_error("");
            PptoStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            PptoStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal error");
            PptoStatus::Internal
        }
    }
}

fn channel<'a>(ptr: *const PptoChannel) -> Result<&'a ChannelParams, Failure> {
    // SAFETY: the caller passes either null or a live handle from
    // `ppto_channel_new`.
    unsafe { ptr.as_ref() }
        .map(|c| &c.params)
        .ok_or(Failure::Null("channel"))
}

fn sim_config(ptr: *const PptoSimConfig) -> Result<SimConfig, Failure> {
    // SAFETY: the caller passes either null or a valid config.
    let c = unsafe { ptr.as_ref() }.ok_or(Failure::Null("config"))?;
    Ok(SimConfig {
        window_radius_factor: c.window_radius_factor,
        n_messages: c.n_messages,
        seed: c.seed,
        power_ratio: c.power_ratio,
        streams: c.threads.max(1) as usize,
    })
}

impl From<McEstimate> for PptoEstimate {
    fn from(e: McEstimate) -> Self {
        PptoEstimate {
            mean: e.mean,
            std_error: e.std_error,
            n: e.n,
        }
    }
}

impl From<ProtocolReport> for PptoProtocolReport {
    fn from(r: ProtocolReport) -> Self {
        PptoProtocolReport {
            throughput: r.throughput.into(),
            drop_rate: r.drop_rate.into(),
            mean_attempts: r.mean_attempts.into(),
            p_out: r.p_out.into(),
        }
    }
}

impl From<OptimumReport> for PptoOptimum {
    fn from(r: OptimumReport) -> Self {
        PptoOptimum {
            beta_star: r.beta_star,
            has_m_star: r.m_star.is_some(),
            m_star: r.m_star.unwrap_or(0),
            throughput_star: r.throughput_star,
            p_out: r.p_out_at_opt,
            mean_attempts: r.mean_attempts_at_opt,
            drop_rate: r.drop_rate.unwrap_or(f64::NAN),
            at_search_ceiling: r.at_search_ceiling,
        }
    }
}

fn found(opt: Optimum) -> Result<PptoOptimum, Failure> {
    match opt {
        Optimum::Found(r) => Ok(r.into()),
        Optimum::InterferenceFree => Err(Failure::Lib(Error::InterferenceFree)),
    }
}

/// Message describing the last failed call on this thread, or an empty
/// string. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ppto_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ppto_version() -> *const c_char {
    const VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version contains NUL"),
        };
    VERSION.as_ptr()
}

/// Creates a channel with path-loss exponent `alpha > 2`, link distance
/// `r0 > 0` and interferer density `lambda >= 0`.
///
/// # Safety
///
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ppto_channel_new(
    alpha: f64,
    r0: f64,
    lambda: f64,
    log_base: PptoLogBase,
    out: *mut *mut PptoChannel,
) -> PptoStatus {
    guard(out, || {
        let base = match log_base {
            PptoLogBase::Natural => LogBase::E,
            PptoLogBase::Binary => LogBase::Two,
        };
        let params = ChannelParams::new(alpha, r0, lambda)?.with_log_base(base);
        Ok(Box::into_raw(Box::new(PptoChannel { params })))
    })
}

/// Releases a channel. Null is ignored.
///
/// # Safety
///
/// `channel` must be null or a handle from [`ppto_channel_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn ppto_channel_free(channel: *mut PptoChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// Per-attempt outage probability at threshold `beta`.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_outage_probability(
    channel: *const PptoChannel,
    beta: f64,
    out: *mut f64,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        LinkPolicy::new(beta, 0)?;
        Ok(analytic::outage_probability(p, beta))
    })
}

/// Throughput of threshold `beta` with at most `m` retransmissions.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_throughput(
    channel: *const PptoChannel,
    beta: f64,
    m: u32,
    out: *mut f64,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        Ok(analytic::throughput(p, &LinkPolicy::new(beta, m)?))
    })
}

/// Probability that all `1 + m` attempts fail.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_drop_rate(
    channel: *const PptoChannel,
    beta: f64,
    m: u32,
    out: *mut f64,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        Ok(analytic::drop_rate(p, &LinkPolicy::new(beta, m)?))
    })
}

/// Threshold at which `1 + m` attempts drop exactly a fraction `epsilon`.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_beta_star(
    channel: *const PptoChannel,
    epsilon: f64,
    m: u32,
    out: *mut f64,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        Ok(optimize::beta_star(p, QosConstraint::new(epsilon)?, m)?)
    })
}

/// Best threshold and cap subject to drop rate `<= epsilon`. When `capped`
/// is true the cap may not exceed `m_cap`.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_optimize_constrained(
    channel: *const PptoChannel,
    epsilon: f64,
    capped: bool,
    m_cap: u32,
    out: *mut PptoOptimum,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        let eps = QosConstraint::new(epsilon)?;
        let cap = capped.then_some(m_cap);
        found(optimize::m_star(p, eps, &SearchConfig::default(), cap)?)
    })
}

/// Threshold maximizing throughput without a drop-rate constraint.
///
/// # Safety
///
/// `channel` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_optimize_unconstrained(
    channel: *const PptoChannel,
    out: *mut PptoOptimum,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        found(optimize::optimum_unconstrained(
            p,
            &SearchConfig::default(),
        )?)
    })
}

/// Default Monte Carlo settings for `seed`.
#[no_mangle]
pub extern "C" fn ppto_sim_config_default(seed: u64) -> PptoSimConfig {
    let s = SimConfig::new(seed);
    PptoSimConfig {
        window_radius_factor: s.window_radius_factor,
        n_messages: s.n_messages,
        seed: s.seed,
        power_ratio: s.power_ratio,
        threads: s.streams as u32,
    }
}

/// Monte Carlo estimate of the outage probability at threshold `beta`.
///
/// # Safety
///
/// `channel` and `config` must be null or valid; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_estimate_outage(
    channel: *const PptoChannel,
    beta: f64,
    config: *const PptoSimConfig,
    out: *mut PptoEstimate,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        Ok(montecarlo::estimate_outage(p, beta, &sim_config(config)?)?.into())
    })
}

/// Simulates the retransmission protocol for `config.n_messages` messages.
///
/// # Safety
///
/// `channel` and `config` must be null or valid; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ppto_simulate_protocol(
    channel: *const PptoChannel,
    beta: f64,
    m: u32,
    config: *const PptoSimConfig,
    out: *mut PptoProtocolReport,
) -> PptoStatus {
    guard(out, || {
        let p = self::channel(channel)?;
        let policy = LinkPolicy::new(beta, m)?;
        Ok(montecarlo::simulate_protocol(p, &policy, &sim_config(config)?)?.into())
    })
}
