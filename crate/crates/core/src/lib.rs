//! Link throughput of a retransmitting point-to-point link whose receiver sees
//! interference from a Poisson field of transmitters under Rayleigh fading.
//!
//! The crate is organized by concern:
//!
//! * [`analytic`]: closed forms for the geometry constant, per-attempt outage
//!   probability, mean attempt count and throughput.
//! * [`optimize`]: the joint (SIR threshold, retransmission cap) design under an
//!   error-rate constraint, and the unconstrained threshold optimum.
//! * [`montecarlo`]: a seeded, parallel simulator of the physical model used to
//!   validate the closed forms.
//! * [`experiments`]: parameter sweeps producing CSV and SVG figure datasets.
//! * [`cli`]: the `ppto` command-line front end.

pub mod analytic;
pub mod cli;
mod error;
pub mod experiments;
pub mod montecarlo;
pub mod optimize;

pub use analytic::{ChannelParams, LinkPolicy, LogBase, QosConstraint};
pub use error::{Error, Result};
pub use montecarlo::{McEstimate, SimConfig};
pub use optimize::{Optimum, OptimumReport, SearchConfig};
