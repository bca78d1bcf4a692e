//! Preventive-maintenance scheduling for wind farms.
//!
//! The crate builds maintenance plans for a farm of `m` turbines, each with
//! `n` component types whose lifetimes follow Weibull distributions. It is
//! organized as a pipeline:
//!
//! 1. [`stochastic`] — Weibull lifetime model, age-conditioned sampling and
//!    renewal failure paths, with reproducible per-cell random streams.
//! 2. [`revenue`] — the piecewise-affine future-revenue function `R` and
//!    revenue-loss queries used to price downtime.
//! 3. [`costs`] — Monte Carlo estimation of expected corrective-maintenance
//!    costs, failure-free fractions, and the per-interval cost tensors for
//!    the supported contract/phase variants.
//! 4. [`model`] — assembly of the schedule polytope (flow-balance plus
//!    turbine/farm linking) and the variant objective into an integer linear
//!    program.
//! 5. [`solver`] — exact branch-and-bound optimization of the program, a
//!    brute-force oracle for small instances, and MPS export.
//! 6. [`simulate`] — rolling-horizon replanning under sampled failures and
//!    baseline policies (pure corrective, constant interval), with cost,
//!    downtime, and availability metrics.
//! 7. [`cli`] — JSON scenario configuration, command orchestration, and CSV
//!    reporting for the `windpm` binary.
//!
//! Monetary quantities are in thousands of dollars (`k$`) and times in
//! months throughout, matching the units of the shipped reference
//! configuration.

pub mod cli;
pub mod costs;
pub mod model;
pub mod revenue;
pub mod simulate;
pub mod solver;
pub mod stochastic;

/// Errors produced when validating domain inputs or assembling models.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    Parameter(String),
    /// A scenario or model configuration is inconsistent.
    Config(String),
    /// An argument lies outside the domain of the queried function.
    Domain(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
