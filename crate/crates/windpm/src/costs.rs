//! Monte Carlo estimation of interval costs and failure-free fractions.
//!
//! The planning models price a maintenance interval `(u, t]` of one
//! component by the expected corrective-maintenance cost accumulated inside
//! it plus the preventive cost at `t`, the latter discounted by the expected
//! failure-free fraction of the right end of the interval (a late failure
//! absorbs the planned replacement). This module estimates those
//! ingredients by simulating Weibull renewal paths and assembles them into
//! the per-variant cost tensors consumed by the model builder.
//!
//! Estimation uses common random numbers aggressively: every turbine and
//! component type owns one presampled pool of consecutive lifetimes per
//! replication, and every cell `(u, t)`, every contract variant, and every
//! insurance level walks the same pools. Elementwise tensor comparisons and
//! the solver's relative ranking of intervals are therefore free of
//! independent Monte Carlo noise, and estimates replay bit-identically for
//! a fixed master seed regardless of thread count or evaluation order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::revenue::RevenueFunction;
use crate::stochastic::{SeedPolicy, WeibullParams};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Planning window and interval indexing
// ---------------------------------------------------------------------------

/// Planning window `[start, end]`: PM may be scheduled at the integer steps
/// `start+1 ..= end`; `end + 1` is the virtual "no further PM" column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub start: u32,
    pub end: u32,
}

impl Window {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if end <= start {
            return Err(Error::Config(format!("window end {end} must exceed start {start}")));
        }
        Ok(Self { start, end })
    }

    /// Number of schedulable steps.
    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Dense index over interval pairs `(u, t)` with
/// `start <= u < t <= last`, ordered by `u` then `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    start: u32,
    last: u32,
    offsets: Vec<usize>,
}

impl PairIndex {
    pub fn new(start: u32, last: u32) -> Self {
        assert!(last > start);
        let mut offsets = Vec::with_capacity((last - start + 1) as usize);
        let mut acc = 0usize;
        for u in start..last {
            offsets.push(acc);
            acc += (last - u) as usize;
        }
        offsets.push(acc);
        Self { start, last, offsets }
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    /// Largest endpoint `t`.
    pub fn last(&self) -> u32 {
        self.last
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, u: u32, t: u32) -> usize {
        debug_assert!(self.start <= u && u < t && t <= self.last);
        self.offsets[(u - self.start) as usize] + (t - u - 1) as usize
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let (start, last) = (self.start, self.last);
        (start..last).flat_map(move |u| (u + 1..=last).map(move |t| (u, t)))
    }
}

// ---------------------------------------------------------------------------
// Farm description
// ---------------------------------------------------------------------------

/// Cost and lifetime parameters of one component type.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTypeSpec {
    pub name: String,
    pub weibull: WeibullParams,
    /// Full corrective replacement cost (component + logistics), k$.
    pub cm_total_cost: f64,
    /// Component-only share of the corrective cost, k$.
    pub cm_component_cost: f64,
    /// Preventive replacement cost, k$.
    pub pm_cost: f64,
    /// Corrective downtime, months.
    pub cm_duration: f64,
}

impl ComponentTypeSpec {
    fn validate(&self) -> Result<()> {
        for (label, v) in [
            ("cm_total_cost", self.cm_total_cost),
            ("cm_component_cost", self.cm_component_cost),
            ("pm_cost", self.pm_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{}: {label} must be finite and >= 0", self.name)));
            }
        }
        if self.cm_component_cost > self.cm_total_cost {
            return Err(Error::Config(format!(
                "{}: component-only cost {} exceeds total corrective cost {}",
                self.name, self.cm_component_cost, self.cm_total_cost
            )));
        }
        if !(self.cm_duration.is_finite() && self.cm_duration > 0.0) {
            return Err(Error::Config(format!("{}: cm_duration must be > 0", self.name)));
        }
        Ok(())
    }
}

/// Costs shared by all component types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedCosts {
    /// Preventive downtime, months.
    pub pm_duration: f64,
    /// Cost attributed to one turbine per maintenance occasion, k$.
    pub turbine_occasion: f64,
    /// Cost shared by the farm per maintenance occasion, k$.
    pub farm_occasion: f64,
}

/// A farm of identical turbines, each carrying one of every component type.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmSpec {
    pub turbines: u32,
    pub components: Vec<ComponentTypeSpec>,
    pub shared: SharedCosts,
}

impl FarmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.turbines == 0 {
            return Err(Error::Config("farm must have at least one turbine".into()));
        }
        if self.components.is_empty() {
            return Err(Error::Config("farm must have at least one component type".into()));
        }
        for c in &self.components {
            c.validate()?;
        }
        if !(self.shared.pm_duration.is_finite() && self.shared.pm_duration > 0.0) {
            return Err(Error::Config("pm_duration must be > 0".into()));
        }
        if self.shared.turbine_occasion < 0.0 || self.shared.farm_occasion < 0.0 {
            return Err(Error::Config("occasion costs must be >= 0".into()));
        }
        Ok(())
    }

    /// Longest downtime of any maintenance action, months.
    pub fn gamma_bar(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.cm_duration)
            .fold(self.shared.pm_duration, f64::max)
    }
}

/// Monte Carlo settings: replication count and the seed policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub samples: u32,
    pub seeds: SeedPolicy,
}

impl McSettings {
    pub fn new(samples: u32, seeds: SeedPolicy) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Config("Monte Carlo sample count must be >= 1".into()));
        }
        Ok(Self { samples, seeds })
    }
}

/// A group of turbines in identical state (same component ages at the
/// window start). Grouping lets the model carry one copy of the variables
/// for the whole group.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineClass {
    /// Turbine indices, ascending; the first is the sampling representative.
    pub members: Vec<u32>,
    /// Component ages (months) at the window start, one per component type.
    pub ages: Vec<f64>,
}

impl TurbineClass {
    pub fn representative(&self) -> u32 {
        self.members[0]
    }

    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn is_fresh(&self) -> bool {
        self.ages.iter().all(|&a| a == 0.0)
    }
}

/// Partition of the farm's turbines into identical-state classes.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmState {
    pub classes: Vec<TurbineClass>,
}

impl FarmState {
    /// All turbines as-good-as-new: a single class.
    pub fn fresh(farm: &FarmSpec) -> Self {
        Self {
            classes: vec![TurbineClass {
                members: (0..farm.turbines).collect(),
                ages: vec![0.0; farm.components.len()],
            }],
        }
    }

    /// Groups turbines by identical age vectors (bit-exact comparison).
    pub fn from_ages(ages: &[Vec<f64>]) -> Self {
        let mut order: Vec<usize> = (0..ages.len()).collect();
        order.sort_by_key(|&i| i);
        let mut classes: Vec<TurbineClass> = Vec::new();
        for i in order {
            match classes.iter_mut().find(|c| {
                c.ages.len() == ages[i].len()
                    && c.ages.iter().zip(&ages[i]).all(|(a, b)| a.to_bits() == b.to_bits())
            }) {
                Some(c) => c.members.push(i as u32),
                None => classes.push(TurbineClass { members: vec![i as u32], ages: ages[i].clone() }),
            }
        }
        Self { classes }
    }

    pub fn turbine_count(&self) -> u32 {
        self.classes.iter().map(|c| c.size()).sum()
    }

    pub fn validate(&self, farm: &FarmSpec) -> Result<()> {
        let mut seen = vec![false; farm.turbines as usize];
        for class in &self.classes {
            if class.members.is_empty() {
                return Err(Error::Config("turbine class without members".into()));
            }
            if class.ages.len() != farm.components.len() {
                return Err(Error::Config("class age vector length differs from component count".into()));
            }
            if let Some(a) = class.ages.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
                return Err(Error::Config(format!("component age must be finite and >= 0, got {a}")));
            }
            for &i in &class.members {
                let slot = seen
                    .get_mut(i as usize)
                    .ok_or_else(|| Error::Config(format!("turbine index {i} out of range")))?;
                if *slot {
                    return Err(Error::Config(format!("turbine {i} assigned to two classes")));
                }
                *slot = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("farm state does not cover every turbine".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Contract/phase variants
// ---------------------------------------------------------------------------

/// Contract/phase combination that fixes the interval-cost form.
///
/// `delta` is the probability that an insurer pays the component share of a
/// corrective replacement; it reduces each corrective cost from
/// `cm_total_cost` to `cm_total_cost - delta * cm_component_cost`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariantKind {
    /// Planning to the end of a full-service contract: no responsibility
    /// past the window, no PM in the virtual end column.
    FullContract,
    /// Full-service contract with an upper limit `epsilon` on the expected
    /// revenue share lost to downtime.
    FullContractProdAvail { epsilon: f64 },
    /// Full-service contract with an upper limit `epsilon` on the expected
    /// share of time lost to downtime.
    FullContractTimeAvail { epsilon: f64 },
    /// Long remaining life: components left aged at the window end are
    /// penalized by their extra expected corrective cost out to `T`.
    NormalPhase { delta: f64 },
    /// Window ends at the end of life: a failure is repaired only when the
    /// remaining revenue exceeds the repair cost.
    EndOfLife { delta: f64 },
    /// Full-contract cost form with an insurance discount on failures.
    DeltaInsurance { delta: f64 },
}

impl VariantKind {
    /// Insurance level applied to corrective costs.
    pub fn delta(&self) -> f64 {
        match *self {
            VariantKind::NormalPhase { delta }
            | VariantKind::EndOfLife { delta }
            | VariantKind::DeltaInsurance { delta } => delta,
            _ => 0.0,
        }
    }

    /// Same kind with the insurance level replaced, for pricing sweeps.
    pub fn with_delta(&self, delta: f64) -> VariantKind {
        match *self {
            VariantKind::NormalPhase { .. } => VariantKind::NormalPhase { delta },
            VariantKind::EndOfLife { .. } => VariantKind::EndOfLife { delta },
            VariantKind::FullContract | VariantKind::DeltaInsurance { .. } => {
                VariantKind::DeltaInsurance { delta }
            }
            other => other,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            VariantKind::FullContract => "full_contract",
            VariantKind::FullContractProdAvail { .. } => "full_contract_prod_avail",
            VariantKind::FullContractTimeAvail { .. } => "full_contract_time_avail",
            VariantKind::NormalPhase { .. } => "normal_phase",
            VariantKind::EndOfLife { .. } => "end_of_life",
            VariantKind::DeltaInsurance { .. } => "delta_insurance",
        }
    }
}

/// A variant kind pinned to a planning window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSpec {
    pub kind: VariantKind,
    pub window: Window,
}

impl VariantSpec {
    pub fn validate(&self, life: u32) -> Result<()> {
        let w = self.window;
        if w.end > life {
            return Err(Error::Config(format!("window end {} exceeds life {life}", w.end)));
        }
        match self.kind {
            VariantKind::FullContractProdAvail { epsilon }
            | VariantKind::FullContractTimeAvail { epsilon } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1]")));
                }
            }
            VariantKind::NormalPhase { delta }
            | VariantKind::EndOfLife { delta }
            | VariantKind::DeltaInsurance { delta } => {
                if !(0.0..=1.0).contains(&delta) {
                    return Err(Error::Config(format!("delta {delta} outside [0, 1]")));
                }
                if matches!(self.kind, VariantKind::EndOfLife { .. }) && w.end != life {
                    return Err(Error::Config(format!(
                        "end-of-life window must end at the end of life {life}, got {}",
                        w.end
                    )));
                }
            }
            VariantKind::FullContract => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// Interval costs `[class][component][arc]`, k$ per single turbine.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTensor {
    pub variant: VariantSpec,
    pub arcs: PairIndex,
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Failure-free fractions on occasion arcs `(u, t)`, `t <= window end`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionTensors {
    pub window: Window,
    pub arcs: PairIndex,
    pub p_component: Vec<Vec<Vec<f64>>>,
    pub p_turbine: Vec<Vec<f64>>,
    pub p_farm: Vec<f64>,
}

/// Expected downtime ingredients for the availability constraints, per
/// single turbine, with failures capped at the window end.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityTensors {
    pub window: Window,
    pub arcs: PairIndex,
    /// Expected revenue lost to corrective downtime inside each interval.
    pub cm_loss: Vec<Vec<Vec<f64>>>,
    /// Expected number of failures inside each interval.
    pub cm_count: Vec<Vec<Vec<f64>>>,
}

// ---------------------------------------------------------------------------
// Lifetime pools
// ---------------------------------------------------------------------------

/// Presampled consecutive lifetimes for one `(turbine, component)` pair:
/// replication `l` holds fresh lives summing past the coverage horizon.
struct LifePool {
    offsets: Vec<u32>,
    lives: Vec<f64>,
}

impl LifePool {
    fn sample(params: WeibullParams, seeds: &SeedPolicy, turbine: u32, component: u32, samples: u32, horizon: f64) -> Self {
        let mut offsets = Vec::with_capacity(samples as usize + 1);
        let mut lives = Vec::new();
        for l in 0..samples {
            offsets.push(lives.len() as u32);
            let mut rng = seeds.path_stream(turbine, component, l);
            let mut acc = 0.0;
            while acc <= horizon {
                let life = crate::stochastic::sample_residual_total_life(params, 0.0, &mut rng)
                    .expect("age 0 is valid")
                    .max(f64::MIN_POSITIVE);
                lives.push(life);
                acc += life;
            }
        }
        offsets.push(lives.len() as u32);
        Self { offsets, lives }
    }

    fn replication(&self, l: u32) -> &[f64] {
        &self.lives[self.offsets[l as usize] as usize..self.offsets[l as usize + 1] as usize]
    }
}

/// First failure time after `u` of an individual aged `age`, reusing the
/// replication's first fresh life as the underlying exponential draw.
fn conditioned_first_failure(params: WeibullParams, u: f64, age: f64, first_life: f64) -> f64 {
    if age == 0.0 {
        return u + first_life;
    }
    let b = params.shape;
    let total = params.scale
        * ((age / params.scale).powf(b) + (first_life / params.scale).powf(b)).powf(1.0 / b);
    let t = u - age + total;
    if t > u {
        t
    } else {
        f64::from_bits(u.to_bits() + 1)
    }
}

/// Prefix lookup over a span array indexed `t - u - 1`; empty intervals
/// (`t <= u`) carry zero.
fn pref(arr: &[f64], u: u32, t: u32) -> f64 {
    if t <= u {
        0.0
    } else {
        arr[(t - u - 1) as usize]
    }
}

/// Walks the failure times in `(u, t_end]` of one replication.
fn walk_cell(lives: &[f64], params: WeibullParams, u: f64, age: f64, t_end: f64, mut visit: impl FnMut(f64)) {
    if lives.is_empty() {
        return;
    }
    let mut time = conditioned_first_failure(params, u, age, lives[0]);
    let mut k = 1;
    while time <= t_end {
        visit(time);
        if k >= lives.len() {
            debug_assert!(false, "lifetime pool exhausted before horizon");
            return;
        }
        time += lives[k];
        k += 1;
    }
}

// ---------------------------------------------------------------------------
// Cached per-cell statistics
// ---------------------------------------------------------------------------

/// Per-`(component, u, age)` prefix statistics over `t = u+1 ..= life`:
/// index `t - u - 1` carries the estimate for the interval `(u, t]`.
struct BaseStats {
    /// Expected number of failures at or before `t`.
    count: Vec<f64>,
    /// Expected sum of per-failure revenue losses at or before `t`.
    loss: Vec<f64>,
    /// Expected advance of the last failure over `u` (numerator of `1 - p`).
    p_num: Vec<f64>,
}

type AgeBits = u64;

#[derive(Default)]
struct Caches {
    base: HashMap<(u32, u32, u32, AgeBits), Arc<BaseStats>>,
    eol: HashMap<(u32, u32, u32, AgeBits, u64), Arc<Vec<f64>>>,
    turbine: HashMap<(u32, u32, Vec<AgeBits>), Arc<Vec<f64>>>,
    farm: HashMap<(u32, Vec<AgeBits>), Arc<Vec<f64>>>,
}

/// Monte Carlo estimator bound to one farm, revenue function, and seed.
pub struct Estimator<'a> {
    farm: &'a FarmSpec,
    revenue: &'a RevenueFunction,
    mc: McSettings,
    life: u32,
    pools: Vec<LifePool>, // indexed turbine * n + component
    caches: Mutex<Caches>,
}

impl<'a> Estimator<'a> {
    /// Builds the estimator and its lifetime pools. `age_slack` must bound
    /// every component age the caller will ever query (0 for fresh farms).
    pub fn new(farm: &'a FarmSpec, revenue: &'a RevenueFunction, mc: McSettings, age_slack: f64) -> Result<Self> {
        farm.validate()?;
        let life = revenue.life() as u32;
        let horizon = life as f64 + age_slack;
        let n = farm.components.len() as u32;
        let pools: Vec<LifePool> = (0..farm.turbines * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                LifePool::sample(
                    farm.components[j as usize].weibull,
                    &mc.seeds,
                    i,
                    j,
                    mc.samples,
                    horizon,
                )
            })
            .collect();
        Ok(Self { farm, revenue, mc, life, pools, caches: Mutex::new(Caches::default()) })
    }

    pub fn farm(&self) -> &FarmSpec {
        self.farm
    }

    pub fn revenue(&self) -> &RevenueFunction {
        self.revenue
    }

    pub fn mc(&self) -> McSettings {
        self.mc
    }

    pub fn life(&self) -> u32 {
        self.life
    }

    fn pool(&self, turbine: u32, component: u32) -> &LifePool {
        &self.pools[(turbine * self.farm.components.len() as u32 + component) as usize]
    }

    fn span_arrays(&self, u: u32) -> usize {
        (self.life - u) as usize
    }

    /// Bucket of a failure time: the smallest step `t` with `time <= t`.
    fn bucket(u: u32, time: f64, len: usize) -> usize {
        let b = time.ceil() as i64 - u as i64 - 1;
        (b.max(0) as usize).min(len - 1)
    }

    fn base_stats(&self, turbine: u32, component: u32, u: u32, age: f64) -> Arc<BaseStats> {
        let key = (turbine, component, u, age.to_bits());
        if let Some(hit) = self.caches.lock().unwrap().base.get(&key) {
            return Arc::clone(hit);
        }
        let len = self.span_arrays(u);
        let params = self.farm.components[component as usize].weibull;
        let gamma = self.farm.components[component as usize].cm_duration;
        let pool = self.pool(turbine, component);
        let m = self.mc.samples;
        let mut count = vec![0.0; len];
        let mut loss = vec![0.0; len];
        let mut p_num = vec![0.0; len];
        for l in 0..m {
            let mut prev = u as f64;
            walk_cell(pool.replication(l), params, u as f64, age, self.life as f64, |time| {
                let b = Self::bucket(u, time, len);
                count[b] += 1.0;
                loss[b] += self.revenue.loss(time, gamma);
                p_num[b] += time - prev;
                prev = time;
            });
        }
        let inv = 1.0 / m as f64;
        for arr in [&mut count, &mut loss, &mut p_num] {
            let mut acc = 0.0;
            for v in arr.iter_mut() {
                acc += *v;
                *v = acc * inv;
            }
        }
        let stats = Arc::new(BaseStats { count, loss, p_num });
        self.caches.lock().unwrap().base.entry(key).or_insert_with(|| Arc::clone(&stats));
        stats
    }

    /// Expected summed failure costs with the end-of-life repair rule: each
    /// failure costs the cheaper of repairing and forgoing the remaining
    /// revenue.
    fn eol_stats(&self, turbine: u32, component: u32, u: u32, age: f64, delta: f64) -> Arc<Vec<f64>> {
        let key = (turbine, component, u, age.to_bits(), delta.to_bits());
        if let Some(hit) = self.caches.lock().unwrap().eol.get(&key) {
            return Arc::clone(hit);
        }
        let len = self.span_arrays(u);
        let spec = &self.farm.components[component as usize];
        let params = spec.weibull;
        let gamma = spec.cm_duration;
        let repair_base = spec.cm_total_cost - delta * spec.cm_component_cost;
        let pool = self.pool(turbine, component);
        let m = self.mc.samples;
        let mut phi = vec![0.0; len];
        for l in 0..m {
            walk_cell(pool.replication(l), params, u as f64, age, self.life as f64, |time| {
                let repair = repair_base + self.revenue.loss(time, gamma);
                let forgo = self.revenue.value(time + gamma);
                phi[Self::bucket(u, time, len)] += repair.min(forgo);
            });
        }
        let inv = 1.0 / m as f64;
        let mut acc = 0.0;
        for v in phi.iter_mut() {
            acc += *v;
            *v = acc * inv;
        }
        let stats = Arc::new(phi);
        self.caches.lock().unwrap().eol.entry(key).or_insert_with(|| Arc::clone(&stats));
        stats
    }

    /// Merged last-failure statistics over a set of components walking
    /// their shared pools; `parts` lists `(turbine, component, age)`.
    fn merged_p_num(&self, u: u32, parts: &[(u32, u32, f64)]) -> Vec<f64> {
        let len = self.span_arrays(u);
        let m = self.mc.samples;
        let mut num = vec![0.0; len];
        let mut buf: Vec<f64> = Vec::new();
        for l in 0..m {
            buf.clear();
            for &(i, j, age) in parts {
                let params = self.farm.components[j as usize].weibull;
                walk_cell(self.pool(i, j).replication(l), params, u as f64, age, self.life as f64, |t| {
                    buf.push(t)
                });
            }
            buf.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = u as f64;
            for &t in &buf {
                num[Self::bucket(u, t, len)] += t - prev;
                prev = t;
            }
        }
        let inv = 1.0 / m as f64;
        let mut acc = 0.0;
        for v in num.iter_mut() {
            acc += *v;
            *v = acc * inv;
        }
        num
    }

    fn turbine_stats(&self, turbine: u32, u: u32, ages: &[f64]) -> Arc<Vec<f64>> {
        let key = (turbine, u, ages.iter().map(|a| a.to_bits()).collect::<Vec<_>>());
        if let Some(hit) = self.caches.lock().unwrap().turbine.get(&key) {
            return Arc::clone(hit);
        }
        let parts: Vec<(u32, u32, f64)> =
            ages.iter().enumerate().map(|(j, &a)| (turbine, j as u32, a)).collect();
        let stats = Arc::new(self.merged_p_num(u, &parts));
        self.caches.lock().unwrap().turbine.entry(key).or_insert_with(|| Arc::clone(&stats));
        stats
    }

    /// Farm-level merged stats; `ages_by_turbine[i][j]` is the age of
    /// component `j` on turbine `i` at step `u`.
    fn farm_stats(&self, u: u32, ages_by_turbine: &[Vec<f64>]) -> Arc<Vec<f64>> {
        let key: Vec<AgeBits> =
            ages_by_turbine.iter().flat_map(|v| v.iter().map(|a| a.to_bits())).collect();
        if let Some(hit) = self.caches.lock().unwrap().farm.get(&(u, key.clone())) {
            return Arc::clone(hit);
        }
        let mut parts = Vec::new();
        for (i, ages) in ages_by_turbine.iter().enumerate() {
            for (j, &a) in ages.iter().enumerate() {
                parts.push((i as u32, j as u32, a));
            }
        }
        let stats = Arc::new(self.merged_p_num(u, &parts));
        self.caches.lock().unwrap().farm.entry((u, key)).or_insert_with(|| Arc::clone(&stats));
        stats
    }

    // -- Single-cell estimates ------------------------------------------------

    /// Expected corrective cost over `(u, t]` for component `(turbine, j)`
    /// aged `age` at `u`: failures before `t` each cost the full corrective
    /// replacement plus the downtime revenue loss.
    pub fn phi(&self, turbine: u32, component: u32, u: u32, t: u32, age: f64) -> f64 {
        self.phi_insured(turbine, component, u, t, age, 0.0)
    }

    pub fn phi_insured(&self, turbine: u32, component: u32, u: u32, t: u32, age: f64, delta: f64) -> f64 {
        debug_assert!(u < t && t <= self.life);
        let spec = &self.farm.components[component as usize];
        let s = self.base_stats(turbine, component, u, age);
        (spec.cm_total_cost - delta * spec.cm_component_cost) * pref(&s.count, u, t) + pref(&s.loss, u, t)
    }

    /// Expected failure-free fraction of the right end of `(u, t]`.
    pub fn p_component(&self, turbine: u32, component: u32, u: u32, t: u32, age: f64) -> f64 {
        debug_assert!(u < t && t <= self.life);
        let s = self.base_stats(turbine, component, u, age);
        1.0 - s.p_num[(t - u - 1) as usize] / (t - u) as f64
    }

    /// Turbine-level failure-free fraction (any component of the turbine).
    pub fn p_turbine(&self, turbine: u32, u: u32, t: u32, ages: &[f64]) -> f64 {
        debug_assert!(u < t && t <= self.life);
        let s = self.turbine_stats(turbine, u, ages);
        1.0 - s[(t - u - 1) as usize] / (t - u) as f64
    }

    /// Farm-level failure-free fraction (any component of any turbine).
    pub fn p_farm(&self, u: u32, t: u32, ages_by_turbine: &[Vec<f64>]) -> f64 {
        debug_assert!(u < t && t <= self.life);
        let s = self.farm_stats(u, ages_by_turbine);
        1.0 - s[(t - u - 1) as usize] / (t - u) as f64
    }

    /// Expected revenue lost to corrective downtime over `(u, min(t, cap)]`.
    pub fn cm_downtime_loss(&self, turbine: u32, component: u32, u: u32, t: u32, cap: u32, age: f64) -> f64 {
        let s = self.base_stats(turbine, component, u, age);
        pref(&s.loss, u, t.min(cap))
    }

    /// Expected number of failures in `(u, min(t, cap)]`.
    pub fn expected_failure_count(&self, turbine: u32, component: u32, u: u32, t: u32, cap: u32, age: f64) -> f64 {
        let s = self.base_stats(turbine, component, u, age);
        pref(&s.count, u, t.min(cap))
    }

    /// Expected cost of running `(start, end]` with no preventive care at
    /// all, summed over the farm.
    pub fn pure_cm_total(&self, window: Window, state: &FarmState) -> Result<f64> {
        state.validate(self.farm)?;
        let mut total = 0.0;
        for class in &state.classes {
            let rep = class.representative();
            for j in 0..self.farm.components.len() as u32 {
                total += class.size() as f64
                    * self.phi(rep, j, window.start, window.end, class.ages[j as usize]);
            }
        }
        Ok(total)
    }

    // -- Tensor assembly -------------------------------------------------------

    fn cell_key(&self, class: &TurbineClass, window: Window, u: u32, j: u32) -> (u32, f64) {
        // Interval starts after the window start imply a PM at `u`, so the
        // component is fresh there; only the first column carries real ages.
        if u == window.start {
            (class.representative(), class.ages[j as usize])
        } else {
            (0, 0.0)
        }
    }

    /// Builds the interval-cost tensor and the failure-free fractions for
    /// one variant. Values are per single turbine of each class.
    pub fn build_cost_tensor(
        &self,
        variant: VariantSpec,
        state: &FarmState,
    ) -> Result<(CostTensor, FractionTensors)> {
        variant.validate(self.life)?;
        state.validate(self.farm)?;
        if state.turbine_count() != self.farm.turbines {
            return Err(Error::Config("farm state turbine count differs from farm spec".into()));
        }
        let window = variant.window;
        let (s, e) = (window.start, window.end);
        let n = self.farm.components.len();
        let x_arcs = PairIndex::new(s, e + 1);
        let yz_arcs = PairIndex::new(s, e);
        let delta = variant.kind.delta();
        let pm_floor = self.farm.shared.pm_duration.floor() as u32;
        let is_eol = matches!(variant.kind, VariantKind::EndOfLife { .. });
        let is_normal = matches!(variant.kind, VariantKind::NormalPhase { .. });
        let fresh_ages: Vec<Vec<f64>> = (0..self.farm.turbines).map(|_| vec![0.0; n]).collect();
        let zeros = vec![0.0; n];

        // Warm every cache entry the assembly needs, parallel over the
        // interval start; assembly below then runs on cache hits.
        let starts: Vec<u32> = (s..=e).collect();
        starts.par_iter().for_each(|&u| {
            for j in 0..n as u32 {
                if u == s {
                    for class in &state.classes {
                        let rep = class.representative();
                        let age = class.ages[j as usize];
                        let _ = self.base_stats(rep, j, u, age);
                        if is_eol {
                            let _ = self.eol_stats(rep, j, u, age, delta);
                        }
                    }
                } else {
                    let _ = self.base_stats(0, j, u, 0.0);
                    if is_eol {
                        let _ = self.eol_stats(0, j, u, 0.0, delta);
                    }
                }
            }
            if u < e {
                if u == s {
                    for class in &state.classes {
                        let _ = self.turbine_stats(class.representative(), u, &class.ages);
                    }
                    let _ = self.farm_stats(u, &self.state_ages(state));
                } else {
                    let _ = self.turbine_stats(0, u, &zeros);
                    let _ = self.farm_stats(u, &fresh_ages);
                }
            }
        });

        let mut values = Vec::with_capacity(state.classes.len());
        let mut p_component = Vec::with_capacity(state.classes.len());
        let mut p_turbine = Vec::with_capacity(state.classes.len());
        for class in &state.classes {
            let mut class_vals = Vec::with_capacity(n);
            let mut class_p = Vec::with_capacity(n);
            for j in 0..n as u32 {
                let spec = &self.farm.components[j as usize];
                let lambda_pm = spec.pm_cost;
                let cm_cost = spec.cm_total_cost - delta * spec.cm_component_cost;
                let mut xv = vec![0.0; x_arcs.len()];
                let mut pv = vec![0.0; yz_arcs.len()];
                for u in s..=e {
                    let (rep, age) = self.cell_key(class, window, u, j);
                    let base = self.base_stats(rep, j, u, age);
                    let eol = is_eol.then(|| self.eol_stats(rep, j, u, age, delta));
                    let phi_at = |t: u32| cm_cost * pref(&base.count, u, t) + pref(&base.loss, u, t);
                    for t in u + 1..=e + 1 {
                        let p = if t <= e {
                            let p = 1.0 - pref(&base.p_num, u, t) / (t - u) as f64;
                            pv[yz_arcs.index(u, t)] = p;
                            p
                        } else {
                            0.0
                        };
                        let cost = if is_eol {
                            let phi = pref(eol.as_ref().unwrap(), u, t.min(e));
                            if t <= e {
                                phi + lambda_pm * p
                            } else {
                                phi
                            }
                        } else if is_normal && t + pm_floor > e {
                            // Tail columns: corrective cost out to the end of
                            // life minus that of a component fresh at t - 1,
                            // i.e. the penalty for handing over an aged part.
                            let whole = phi_at(self.life);
                            let f = self.base_stats(0, j, t - 1, 0.0);
                            let fresh = cm_cost * pref(&f.count, t - 1, self.life)
                                + pref(&f.loss, t - 1, self.life);
                            whole - fresh
                        } else if t <= e {
                            phi_at(t) + lambda_pm * p
                        } else {
                            // No responsibility past the window: the end
                            // column prices failures only up to the end.
                            phi_at(e)
                        };
                        xv[x_arcs.index(u, t)] = cost;
                    }
                }
                class_vals.push(xv);
                class_p.push(pv);
            }
            values.push(class_vals);

            let mut tv = vec![0.0; yz_arcs.len()];
            for u in s..e {
                let stats = if u == s {
                    self.turbine_stats(class.representative(), u, &class.ages)
                } else {
                    self.turbine_stats(0, u, &zeros)
                };
                for t in u + 1..=e {
                    tv[yz_arcs.index(u, t)] = 1.0 - stats[(t - u - 1) as usize] / (t - u) as f64;
                }
            }
            p_turbine.push(tv);
            p_component.push(class_p);
        }

        let mut p_farm = vec![0.0; yz_arcs.len()];
        for u in s..e {
            let stats = if u == s {
                self.farm_stats(u, &self.state_ages(state))
            } else {
                self.farm_stats(u, &fresh_ages)
            };
            for t in u + 1..=e {
                p_farm[yz_arcs.index(u, t)] = 1.0 - stats[(t - u - 1) as usize] / (t - u) as f64;
            }
        }

        Ok((
            CostTensor { variant, arcs: x_arcs, values },
            FractionTensors { window, arcs: yz_arcs, p_component, p_turbine, p_farm },
        ))
    }

    /// Expands the class structure to per-turbine age vectors at the window
    /// start, indexed by turbine.
    fn state_ages(&self, state: &FarmState) -> Vec<Vec<f64>> {
        let mut ages = vec![Vec::new(); self.farm.turbines as usize];
        for class in &state.classes {
            for &i in &class.members {
                ages[i as usize] = class.ages.clone();
            }
        }
        ages
    }

    /// Builds the downtime ingredients of the availability constraints,
    /// capping failures at the window end.
    pub fn build_availability(&self, window: Window, state: &FarmState) -> Result<AvailabilityTensors> {
        state.validate(self.farm)?;
        let (s, e) = (window.start, window.end);
        let n = self.farm.components.len();
        let arcs = PairIndex::new(s, e + 1);
        let mut cm_loss = Vec::with_capacity(state.classes.len());
        let mut cm_count = Vec::with_capacity(state.classes.len());
        for class in &state.classes {
            let mut loss_j = Vec::with_capacity(n);
            let mut count_j = Vec::with_capacity(n);
            for j in 0..n as u32 {
                let mut lv = vec![0.0; arcs.len()];
                let mut cv = vec![0.0; arcs.len()];
                for u in s..=e {
                    let (rep, age) = self.cell_key(class, window, u, j);
                    let base = self.base_stats(rep, j, u, age);
                    for t in u + 1..=e + 1 {
                        lv[arcs.index(u, t)] = pref(&base.loss, u, t.min(e));
                        cv[arcs.index(u, t)] = pref(&base.count, u, t.min(e));
                    }
                }
                loss_j.push(lv);
                count_j.push(cv);
            }
            cm_loss.push(loss_j);
            cm_count.push(count_j);
        }
        Ok(AvailabilityTensors { window, arcs, cm_loss, cm_count })
    }
}

// ---------------------------------------------------------------------------
// CSV dump/load
// ---------------------------------------------------------------------------

/// Writes cost and fraction tensors as CSV rows
/// `tensor,i,j,u,t,value`, where `i` is the class representative turbine
/// and `j` is the component index (blank where not applicable).
pub fn write_tensor_csv<W: std::io::Write>(
    out: &mut W,
    tensor: &CostTensor,
    fractions: &FractionTensors,
    state: &FarmState,
) -> std::io::Result<()> {
    writeln!(out, "tensor,i,j,u,t,value")?;
    let label = tensor.variant.kind.label();
    for (c, class) in state.classes.iter().enumerate() {
        let rep = class.representative();
        for (j, vals) in tensor.values[c].iter().enumerate() {
            for (u, t) in tensor.arcs.pairs() {
                writeln!(out, "{label},{rep},{j},{u},{t},{}", vals[tensor.arcs.index(u, t)])?;
            }
        }
        for (j, vals) in fractions.p_component[c].iter().enumerate() {
            for (u, t) in fractions.arcs.pairs() {
                writeln!(out, "p_component,{rep},{j},{u},{t},{}", vals[fractions.arcs.index(u, t)])?;
            }
        }
        for (u, t) in fractions.arcs.pairs() {
            writeln!(out, "p_turbine,{rep},,{u},{t},{}", fractions.p_turbine[c][fractions.arcs.index(u, t)])?;
        }
    }
    for (u, t) in fractions.arcs.pairs() {
        writeln!(out, "p_farm,,,{u},{t},{}", fractions.p_farm[fractions.arcs.index(u, t)])?;
    }
    Ok(())
}

/// Reads tensors written by [`write_tensor_csv`] back into memory.
pub fn read_tensor_csv<R: std::io::BufRead>(
    input: R,
    variant: VariantSpec,
    state: &FarmState,
    components: usize,
) -> Result<(CostTensor, FractionTensors)> {
    let window = variant.window;
    let x_arcs = PairIndex::new(window.start, window.end + 1);
    let yz_arcs = PairIndex::new(window.start, window.end);
    let classes = state.classes.len();
    let mut values = vec![vec![vec![0.0; x_arcs.len()]; components]; classes];
    let mut p_component = vec![vec![vec![0.0; yz_arcs.len()]; components]; classes];
    let mut p_turbine = vec![vec![0.0; yz_arcs.len()]; classes];
    let mut p_farm = vec![0.0; yz_arcs.len()];
    let rep_to_class: HashMap<u32, usize> = state
        .classes
        .iter()
        .enumerate()
        .map(|(c, class)| (class.representative(), c))
        .collect();
    let parse = |field: &str, line: usize| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("tensor csv line {line}: bad number {field:?}")))
    };
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("tensor csv read error: {e}")))?;
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Config(format!("tensor csv line {lineno}: expected 6 fields")));
        }
        let tag = fields[0];
        let u: u32 = fields[3]
            .parse()
            .map_err(|_| Error::Config(format!("tensor csv line {lineno}: bad u")))?;
        let t: u32 = fields[4]
            .parse()
            .map_err(|_| Error::Config(format!("tensor csv line {lineno}: bad t")))?;
        let value = parse(fields[5], lineno)?;
        let class_of = |f: &str| -> Result<usize> {
            let i: u32 =
                f.parse().map_err(|_| Error::Config(format!("tensor csv line {lineno}: bad i")))?;
            rep_to_class
                .get(&i)
                .copied()
                .ok_or_else(|| Error::Config(format!("tensor csv line {lineno}: unknown class representative {i}")))
        };
        match tag {
            "p_farm" => p_farm[yz_arcs.index(u, t)] = value,
            "p_turbine" => {
                let c = class_of(fields[1])?;
                p_turbine[c][yz_arcs.index(u, t)] = value;
            }
            "p_component" => {
                let c = class_of(fields[1])?;
                let j: usize = fields[2]
                    .parse()
                    .map_err(|_| Error::Config(format!("tensor csv line {lineno}: bad j")))?;
                p_component[c][j][yz_arcs.index(u, t)] = value;
            }
            _ if tag == variant.kind.label() => {
                let c = class_of(fields[1])?;
                let j: usize = fields[2]
                    .parse()
                    .map_err(|_| Error::Config(format!("tensor csv line {lineno}: bad j")))?;
                values[c][j][x_arcs.index(u, t)] = value;
            }
            other => {
                return Err(Error::Config(format!(
                    "tensor csv line {lineno}: tensor {other:?} does not match variant {}",
                    variant.kind.label()
                )))
            }
        }
    }
    Ok((
        CostTensor { variant, arcs: x_arcs, values },
        FractionTensors { window, arcs: yz_arcs, p_component, p_turbine, p_farm },
    ))
}
