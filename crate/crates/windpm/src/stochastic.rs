//! Weibull lifetime model, age-conditioned sampling, and renewal paths.
//!
//! Component lifetimes are Weibull distributed. The individual in service at
//! a reference time step has a known age, so its remaining life is sampled
//! from the age-conditioned distribution; subsequent individuals are fresh.
//! Chaining those lives yields the failure path of a component over a
//! planning window, which is the randomness source for every cost estimator
//! and for the failure simulator.
//!
//! All sampling is driven by [`SeedPolicy`]: a master seed plus a splittable
//! 64-bit mixer derive an independent, reproducible stream per estimation
//! cell or simulated component individual, so results are identical across
//! runs and thread counts.

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

use crate::{Error, Result};

/// Scale/shape pair of a Weibull lifetime distribution (months).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullParams {
    /// Scale parameter, months; strictly positive.
    pub scale: f64,
    /// Shape parameter, dimensionless; strictly positive.
    pub shape: f64,
}

impl WeibullParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Parameter(format!("Weibull scale must be finite and > 0, got {scale}")));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::Parameter(format!("Weibull shape must be finite and > 0, got {shape}")));
        }
        Ok(Self { scale, shape })
    }

    /// Mean lifetime `scale * Gamma(1 + 1/shape)` is not needed here; the
    /// estimators work directly on sampled paths.
    fn fresh_life(&self, rng: &mut Pcg64Mcg) -> f64 {
        self.scale * std_exponential(rng).powf(1.0 / self.shape)
    }
}

/// Age of the in-service component individual at a reference time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentState {
    /// Age in months, `>= 0`.
    pub age: f64,
}

impl ComponentState {
    pub fn new(age: f64) -> Result<Self> {
        if !(age.is_finite() && age >= 0.0) {
            return Err(Error::Parameter(format!("component age must be finite and >= 0, got {age}")));
        }
        Ok(Self { age })
    }
}

/// Survival probability of the current individual beyond total age `v`,
/// conditioned on having survived to `age`:
/// `P(L >= v | L >= age)`.
///
/// Equals 1 for `v <= age` and `exp[(age/a)^b - (v/a)^b]` otherwise.
pub fn conditional_survival(params: WeibullParams, age: f64, v: f64) -> Result<f64> {
    if !(age.is_finite() && age >= 0.0) {
        return Err(Error::Parameter(format!("age must be finite and >= 0, got {age}")));
    }
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Parameter(format!("v must be finite and >= 0, got {v}")));
    }
    if v <= age {
        return Ok(1.0);
    }
    let a = params.scale;
    let b = params.shape;
    Ok(((age / a).powf(b) - (v / a).powf(b)).exp())
}

/// Samples the total life `V >= age` of the current individual via the
/// inverse CDF of the age-conditioned distribution:
/// `V = scale * ((age/scale)^shape + E)^(1/shape)` with `E` standard
/// exponential. The distribution of `V` matches [`conditional_survival`].
pub fn sample_residual_total_life(
    params: WeibullParams,
    age: f64,
    rng: &mut Pcg64Mcg,
) -> Result<f64> {
    if !(age.is_finite() && age >= 0.0) {
        return Err(Error::Parameter(format!("age must be finite and >= 0, got {age}")));
    }
    Ok(total_life_from_exponential(params, age, std_exponential(rng)))
}

/// Inverse-CDF transform behind [`sample_residual_total_life`]: maps a
/// standard-exponential draw `e` to the conditioned total life.
pub fn total_life_from_exponential(params: WeibullParams, age: f64, e: f64) -> f64 {
    let a = params.scale;
    let b = params.shape;
    a * ((age / a).powf(b) + e).powf(1.0 / b)
}

/// Failure path of one component from reference step `start`.
///
/// `times` are the continuous failure times in strictly increasing order:
/// every failure up to the sampling horizon plus the first time beyond it,
/// so callers can distinguish "no failure in window" from an exhausted path.
#[derive(Debug, Clone, PartialEq)]
pub struct FailurePath {
    pub start: f64,
    pub times: Vec<f64>,
}

impl FailurePath {
    /// Failure times within `(start, horizon]`; excludes the overshoot.
    pub fn in_window(&self, horizon: f64) -> &[f64] {
        let n = self.times.iter().take_while(|&&t| t <= horizon).count();
        &self.times[..n]
    }
}

/// Samples the renewal failure path of a component over `(u, t_max]`.
///
/// The first life is conditioned on `age` at step `u`; later lives are
/// fresh. Returns all failures `<= t_max` plus the first one beyond.
pub fn sample_failure_path(
    params: WeibullParams,
    u: f64,
    age: f64,
    t_max: f64,
    rng: &mut Pcg64Mcg,
) -> Result<FailurePath> {
    if !(t_max > u) {
        return Err(Error::Parameter(format!("horizon {t_max} must exceed start {u}")));
    }
    let mut times = Vec::new();
    walk_failures(params, u, age, rng, |time| {
        times.push(time);
        time <= t_max
    });
    Ok(FailurePath { start: u, times })
}

/// Drives `visit` with consecutive failure times starting after `u` (current
/// individual aged `age`), continuing while `visit` returns `true`.
///
/// This is the allocation-free core used by the Monte Carlo estimators; the
/// caller terminates the walk once its horizon is exceeded.
pub fn walk_failures(
    params: WeibullParams,
    u: f64,
    age: f64,
    rng: &mut Pcg64Mcg,
    mut visit: impl FnMut(f64) -> bool,
) {
    let a = params.scale;
    let b = params.shape;
    // First failure: birth time u - age plus the conditioned total life.
    let e = std_exponential(rng);
    let total = a * ((age / a).powf(b) + e).powf(1.0 / b);
    let mut time = u - age + total;
    if time <= u {
        // Total life numerically equal to the current age; nudge so that
        // paths stay strictly increasing and inside (u, ..].
        time = next_up(u);
    }
    loop {
        if !visit(time) {
            return;
        }
        let life = params.fresh_life(rng);
        time += life.max(f64::MIN_POSITIVE);
    }
}

fn std_exponential(rng: &mut Pcg64Mcg) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p()
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// Derives reproducible random streams from a master seed.
///
/// Each estimation cell `(turbine, component, step, replication)` and each
/// simulated component individual gets its own stream via a splittable
/// 64-bit mix, so identical inputs replay identical draws while distinct
/// cells are statistically independent, regardless of evaluation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedPolicy {
    pub master: u64,
}

const TAG_PATH: u64 = 0x70617468; // estimation path pools
const TAG_LIFE: u64 = 0x6c696665; // simulated individual lives

impl SeedPolicy {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    fn derive(&self, parts: &[u64]) -> u64 {
        let mut state = self.master ^ 0x9e37_79b9_7f4a_7c15;
        for &p in parts {
            state = splitmix64(state ^ splitmix64(p));
        }
        splitmix64(state)
    }

    /// Stream feeding replication `replication` of the lifetime pool of
    /// `(turbine, component)`. One pool serves every interval start, age,
    /// and variant that touches the component, which is what makes the
    /// estimates common-random-number comparable across cells.
    pub fn path_stream(&self, turbine: u32, component: u32, replication: u32) -> Pcg64Mcg {
        Pcg64Mcg::seed_from_u64(self.derive(&[
            TAG_PATH,
            turbine as u64,
            component as u64,
            replication as u64,
        ]))
    }

    /// Stream for the lifetime of the `individual`-th consecutive component
    /// of `(turbine, component)` in simulation replication `rep`. Keyed by
    /// the individual, not by calendar time, so every maintenance policy
    /// sees the same underlying life draws.
    pub fn life_stream(&self, rep: u32, turbine: u32, component: u32, individual: u32) -> Pcg64Mcg {
        Pcg64Mcg::seed_from_u64(self.derive(&[
            TAG_LIFE,
            rep as u64,
            turbine as u64,
            component as u64,
            individual as u64,
        ]))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
