//! Rolling-horizon replanning under sampled failures, baseline policies,
//! and cost/downtime/availability metrics.
//!
//! A simulation run executes one failure realization of the farm. Component
//! lifetimes are drawn per *individual* — keyed by simulation replication,
//! turbine, component, and renewal index — so every policy sees the same
//! underlying draws and differs only in when it replaces parts. The
//! optimized policy executes its planned PM months until a failure occurs,
//! performs corrective maintenance (unless the end-of-life rule says the
//! repair is not worth the remaining revenue), replans from the failure
//! month, and repeats to the end of the horizon.

use std::collections::BTreeMap;

use crate::costs::{Estimator, FarmSpec, FarmState, VariantKind, VariantSpec, Window};
use crate::model::{build_model, ClassSchedule, Schedule};
use crate::revenue::RevenueFunction;
use crate::solver::{solve_exact, SolveStatus, SolverConfig};
use crate::stochastic::{total_life_from_exponential, SeedPolicy};
use crate::{Error, Result};

/// Maintenance policy driving a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Replan at every failure: full-contract planning to `contract_end`
    /// when set, otherwise rolling windows of `window` months that switch
    /// to the end-of-life model once they reach the end of life.
    OptimizedRolling { window: u32, contract_end: Option<u32> },
    /// Corrective maintenance only.
    PureCm,
    /// PM for component type `j` every `intervals[j]` months, farm-wide.
    ConstantInterval { intervals: Vec<u32> },
}

/// A forced failure for replaying recorded trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedFailure {
    pub month: f64,
    pub turbine: u32,
    pub component: u32,
}

/// One simulation scenario; `replication` selects the failure realization.
pub struct Scenario<'a> {
    pub farm: &'a FarmSpec,
    pub revenue: &'a RevenueFunction,
    /// Simulation horizon in months (contract end or end of life).
    pub horizon: u32,
    pub policy: PolicyKind,
    pub seeds: SeedPolicy,
    pub replication: u32,
    pub solver: SolverConfig,
    /// Replace sampled failures with this exact list.
    pub scripted: Option<Vec<ScriptedFailure>>,
    /// Skip repairs that cost more than the remaining revenue (lifetime
    /// planning close to the end of life).
    pub end_of_life_rule: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Pm,
    Cm,
    FailureSkipped,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Pm => "PM",
            EventKind::Cm => "CM",
            EventKind::FailureSkipped => "failure_skipped",
        }
    }
}

/// One maintenance event. Occasion-level costs (farm mobilization, turbine
/// downtime) are carried by the first event of the stop they belong to, so
/// event sums equal run totals exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub turbine: u32,
    pub component: u32,
    pub kind: EventKind,
    pub cost: f64,
    pub downtime: f64,
}

/// Snapshot taken at each replanning point: costs realized so far plus the
/// expected cost of the plan ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplanRecord {
    pub month: u32,
    pub window_end: u32,
    pub committed_and_planned: f64,
    pub cost_per_month: f64,
    pub optimal: bool,
}

/// Timestamped event log of one run with its totals.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub events: Vec<TraceEvent>,
    pub replans: Vec<ReplanRecord>,
    pub total_cost: f64,
    pub total_downtime: f64,
}

impl SimulationTrace {
    fn push(&mut self, event: TraceEvent) {
        debug_assert!(self.events.last().map(|e| e.time <= event.time + 1e-9).unwrap_or(true));
        self.total_cost += event.cost;
        self.total_downtime += event.downtime;
        self.events.push(event);
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Aggregate run metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub total_cost: f64,
    pub downtime_per_turbine: f64,
    pub availability: f64,
    pub pm_events: usize,
    pub cm_events: usize,
    pub skipped_failures: usize,
}

/// Downtime and availability of a trace: availability is the share of
/// turbine-months the farm was not held down by maintenance.
pub fn compute_metrics(trace: &SimulationTrace, farm: &FarmSpec, horizon: u32) -> Metrics {
    let m = farm.turbines as f64;
    Metrics {
        total_cost: trace.total_cost,
        downtime_per_turbine: trace.total_downtime / m,
        availability: 1.0 - trace.total_downtime / (m * horizon as f64),
        pm_events: trace.count(EventKind::Pm),
        cm_events: trace.count(EventKind::Cm),
        skipped_failures: trace.count(EventKind::FailureSkipped),
    }
}

/// Whether a failure at time `v` is worth repairing: the revenue the
/// repaired turbine can still produce must cover the corrective cost.
pub fn end_of_life_cm_decision(
    component: &crate::costs::ComponentTypeSpec,
    v: f64,
    revenue: &RevenueFunction,
) -> bool {
    revenue.value(v + component.cm_duration)
        >= component.cm_total_cost + revenue.loss(v, component.cm_duration)
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct ComponentSlot {
    install: f64,
    individual: u32,
    fail_at: f64,
}

struct Engine<'a, 's> {
    scenario: &'s Scenario<'a>,
    estimator: Option<&'s Estimator<'a>>,
    slots: Vec<ComponentSlot>, // turbine-major
    alive: Vec<bool>,
    script: Vec<ScriptedFailure>, // ascending by month; consumed front to back
    next_script: usize,
    trace: SimulationTrace,
    plan: BTreeMap<u32, Vec<(u32, u32)>>,
}

impl<'a, 's> Engine<'a, 's> {
    fn new(scenario: &'s Scenario<'a>, estimator: Option<&'s Estimator<'a>>) -> Result<Self> {
        scenario.farm.validate()?;
        if scenario.horizon == 0 || scenario.horizon as f64 > scenario.revenue.life() {
            return Err(Error::Config(format!(
                "horizon {} outside (0, {}]",
                scenario.horizon,
                scenario.revenue.life()
            )));
        }
        let m = scenario.farm.turbines;
        let n = scenario.farm.components.len() as u32;
        let mut script = scenario.scripted.clone().unwrap_or_default();
        script.sort_by(|a, b| a.month.total_cmp(&b.month));
        for f in &script {
            if f.turbine >= m || f.component >= n {
                return Err(Error::Config(format!(
                    "scripted failure references turbine {} component {} outside the farm",
                    f.turbine, f.component
                )));
            }
        }
        let mut engine = Self {
            scenario,
            estimator,
            slots: Vec::with_capacity((m * n) as usize),
            alive: vec![true; m as usize],
            script,
            next_script: 0,
            trace: SimulationTrace {
                events: Vec::new(),
                replans: Vec::new(),
                total_cost: 0.0,
                total_downtime: 0.0,
            },
            plan: BTreeMap::new(),
        };
        for i in 0..m {
            for j in 0..n {
                let slot = engine.fresh_slot(i, j, 0.0, 0);
                engine.slots.push(slot);
            }
        }
        Ok(engine)
    }

    fn slot_index(&self, turbine: u32, component: u32) -> usize {
        (turbine * self.scenario.farm.components.len() as u32 + component) as usize
    }

    /// Installs individual `index` of `(turbine, component)` at `time`,
    /// drawing its lifetime from the individual-keyed stream (scripted runs
    /// fail only on script entries).
    fn fresh_slot(&self, turbine: u32, component: u32, time: f64, index: u32) -> ComponentSlot {
        let fail_at = if self.scenario.scripted.is_some() {
            f64::INFINITY
        } else {
            let params = self.scenario.farm.components[component as usize].weibull;
            let mut rng = self.scenario.seeds.life_stream(
                self.scenario.replication,
                turbine,
                component,
                index,
            );
            let u: f64 = rand::Rng::random(&mut rng);
            let life = total_life_from_exponential(params, 0.0, -(-u).ln_1p()).max(f64::MIN_POSITIVE);
            time + life
        };
        ComponentSlot { install: time, individual: index, fail_at }
    }

    fn set_plan(&mut self, schedule: &Schedule, from: f64) {
        self.plan.clear();
        for (i, comps) in schedule.months.iter().enumerate() {
            if !self.alive[i] {
                continue;
            }
            for (j, months) in comps.iter().enumerate() {
                for &t in months {
                    if (t as f64) > from && t <= self.scenario.horizon {
                        self.plan.entry(t).or_default().push((i as u32, j as u32));
                    }
                }
            }
        }
        for stops in self.plan.values_mut() {
            stops.sort_unstable();
        }
    }

    /// Next sampled or scripted failure strictly before `cutoff` (ties with
    /// a planned PM month resolve PM-first). Scripted entries are consumed
    /// in order by index, so a failure in the same month as an executed PM
    /// fires right after it.
    fn next_failure(&self, after: f64, cutoff: f64) -> Option<(f64, u32, u32)> {
        if self.scenario.scripted.is_some() {
            let f = self.script.get(self.next_script)?;
            if f.month < cutoff && f.month < self.scenario.horizon as f64 {
                return Some((f.month.max(after), f.turbine, f.component));
            }
            return None;
        }
        let mut best: Option<(f64, u32, u32)> = None;
        let n = self.scenario.farm.components.len() as u32;
        for (idx, slot) in self.slots.iter().enumerate() {
            let i = idx as u32 / n;
            if !self.alive[i as usize] {
                continue;
            }
            if slot.fail_at > after && slot.fail_at < cutoff && slot.fail_at < self.scenario.horizon as f64
            {
                let candidate = (slot.fail_at, i, idx as u32 % n);
                if best.map(|b| candidate.0 < b.0).unwrap_or(true) {
                    best = Some(candidate);
                }
            }
        }
        best
    }

    /// Executes the PM stop at month `t`: every live planned component is
    /// replaced; the turbine pays its occasion cost and downtime once, the
    /// farm its mobilization once.
    fn execute_stop(&mut self, t: u32) {
        let Some(stops) = self.plan.remove(&t) else { return };
        let shared = self.scenario.farm.shared;
        let mut farm_paid = false;
        let mut turbine_paid: Option<u32> = None;
        for (i, j) in stops {
            if !self.alive[i as usize] {
                continue;
            }
            let spec = &self.scenario.farm.components[j as usize];
            let mut cost = spec.pm_cost;
            let mut downtime = 0.0;
            if turbine_paid != Some(i) {
                cost += shared.turbine_occasion
                    + self.scenario.revenue.loss(t as f64, shared.pm_duration);
                downtime += shared.pm_duration;
                turbine_paid = Some(i);
            }
            if !farm_paid {
                cost += shared.farm_occasion;
                farm_paid = true;
            }
            let idx = self.slot_index(i, j);
            let next = self.slots[idx].individual + 1;
            self.slots[idx] = self.fresh_slot(i, j, t as f64, next);
            self.trace.push(TraceEvent {
                time: t as f64,
                turbine: i,
                component: j,
                kind: EventKind::Pm,
                cost,
                downtime,
            });
        }
    }

    /// Handles a failure: corrective replacement, or a skipped repair that
    /// leaves the turbine down for the rest of its life.
    /// Returns whether the turbine is still running.
    fn execute_failure(&mut self, time: f64, turbine: u32, component: u32) -> bool {
        let spec = &self.scenario.farm.components[component as usize];
        let repair_worth = !self.scenario.end_of_life_rule
            || end_of_life_cm_decision(spec, time, self.scenario.revenue);
        if repair_worth {
            let cost = spec.cm_total_cost + self.scenario.revenue.loss(time, spec.cm_duration);
            let idx = self.slot_index(turbine, component);
            let next = self.slots[idx].individual + 1;
            self.slots[idx] = self.fresh_slot(turbine, component, time, next);
            self.trace.push(TraceEvent {
                time,
                turbine,
                component,
                kind: EventKind::Cm,
                cost,
                downtime: spec.cm_duration,
            });
            true
        } else {
            let life = self.scenario.revenue.life();
            self.trace.push(TraceEvent {
                time,
                turbine,
                component,
                kind: EventKind::FailureSkipped,
                cost: self.scenario.revenue.value(time),
                downtime: life - time,
            });
            self.alive[turbine as usize] = false;
            false
        }
    }

    /// Builds and solves the planning model from month `s`, classed by the
    /// component ages at `s`. Returns the plan and its expected cost.
    fn plan_from(&mut self, s: u32) -> Result<Option<(Schedule, f64, bool, u32)>> {
        let PolicyKind::OptimizedRolling { window, contract_end } = &self.scenario.policy else {
            return Ok(None);
        };
        let estimator = self
            .estimator
            .ok_or_else(|| Error::Config("optimized policy needs an estimator".into()))?;
        let life = self.scenario.revenue.life() as u32;
        let (window_spec, kind) = match contract_end {
            Some(e_c) => {
                if s + 1 > *e_c {
                    return Ok(None);
                }
                (Window::new(s, *e_c)?, VariantKind::FullContract)
            }
            None => {
                if s + *window >= life {
                    (Window::new(s, life)?, VariantKind::EndOfLife { delta: 0.0 })
                } else {
                    (Window::new(s, s + *window)?, VariantKind::NormalPhase { delta: 0.0 })
                }
            }
        };
        let n = self.scenario.farm.components.len();
        let ages: Vec<Vec<f64>> = (0..self.scenario.farm.turbines)
            .map(|i| {
                (0..n as u32)
                    .map(|j| {
                        let slot = &self.slots[self.slot_index(i, j)];
                        (s as f64 - slot.install).max(0.0)
                    })
                    .collect()
            })
            .collect();
        let state = FarmState::from_ages(&ages);
        let variant = VariantSpec { kind, window: window_spec };
        let (tensor, fractions) = estimator.build_cost_tensor(variant, &state)?;
        let model = build_model(
            self.scenario.farm,
            self.scenario.revenue,
            &state,
            &tensor,
            &fractions,
            None,
        )?;
        let solution = solve_exact(&model, &self.scenario.solver)?;
        if solution.status == SolveStatus::Infeasible {
            return Err(Error::Config(format!("replanning from {s} is infeasible")));
        }
        Ok(Some((
            solution.schedule.expand(&state),
            solution.objective,
            solution.status == SolveStatus::Optimal,
            window_spec.end,
        )))
    }

    fn record_replan(&mut self, s: u32, window_end: u32, planned: f64, optimal: bool) {
        let committed_and_planned = self.trace.total_cost + planned;
        self.trace.replans.push(ReplanRecord {
            month: s,
            window_end,
            committed_and_planned,
            cost_per_month: committed_and_planned / window_end as f64,
            optimal,
        });
    }

    fn run(&mut self) -> Result<()> {
        // Initial plan.
        match &self.scenario.policy {
            PolicyKind::OptimizedRolling { .. } => {
                if let Some((schedule, planned, optimal, window_end)) = self.plan_from(0)? {
                    self.set_plan(&schedule, 0.0);
                    self.record_replan(0, window_end, planned, optimal);
                }
            }
            PolicyKind::PureCm => {}
            PolicyKind::ConstantInterval { intervals } => {
                if intervals.len() != self.scenario.farm.components.len() {
                    return Err(Error::Config(
                        "constant-interval policy needs one interval per component type".into(),
                    ));
                }
                if let Some(zero) = intervals.iter().find(|i| **i == 0) {
                    return Err(Error::Config(format!("constant interval {zero} must be >= 1")));
                }
                let months: Vec<Vec<Vec<u32>>> = (0..self.scenario.farm.turbines)
                    .map(|_| {
                        intervals
                            .iter()
                            .map(|&step| {
                                (1..=self.scenario.horizon / step).map(|k| k * step).collect()
                            })
                            .collect()
                    })
                    .collect();
                self.set_plan(&Schedule { months }, 0.0);
            }
        }

        let mut now = 0.0f64;
        loop {
            let next_pm = self.plan.keys().next().copied();
            let cutoff = next_pm.map(|t| t as f64).unwrap_or(self.scenario.horizon as f64);
            match self.next_failure(now, cutoff) {
                Some((time, turbine, component)) => {
                    if self.scenario.scripted.is_some() {
                        self.next_script += 1;
                        if !self.alive[turbine as usize] {
                            continue; // stale entry for a turbine already down
                        }
                    }
                    now = time;
                    let running = self.execute_failure(time, turbine, component);
                    if running && matches!(self.scenario.policy, PolicyKind::OptimizedRolling { .. })
                    {
                        let s = time.ceil() as u32;
                        if let Some((schedule, planned, optimal, window_end)) = self.plan_from(s)? {
                            self.set_plan(&schedule, time);
                            self.record_replan(s, window_end, planned, optimal);
                        }
                    }
                    if !running {
                        // The turbine is down for good; its pending PMs die.
                        let alive = &self.alive;
                        for stops in self.plan.values_mut() {
                            stops.retain(|&(i, _)| alive[i as usize]);
                        }
                        self.plan.retain(|_, stops| !stops.is_empty());
                    }
                }
                None => match next_pm {
                    Some(t) => {
                        self.execute_stop(t);
                        now = t as f64;
                    }
                    None => break,
                },
            }
        }
        Ok(())
    }
}

/// Runs one scenario replication and returns its trace.
/// `estimator` must be supplied for the optimized rolling policy and is
/// shared across replications so cost-tensor caches persist.
pub fn run_scenario<'a>(
    scenario: &Scenario<'a>,
    estimator: Option<&Estimator<'a>>,
) -> Result<SimulationTrace> {
    let mut engine = Engine::new(scenario, estimator)?;
    engine.run()?;
    Ok(engine.trace)
}

/// Pure corrective baseline: every failure is repaired, nothing is planned.
pub fn run_pure_cm(scenario: &Scenario<'_>) -> Result<SimulationTrace> {
    let s = Scenario { policy: PolicyKind::PureCm, ..clone_scenario(scenario) };
    run_scenario(&s, None)
}

/// Rolling-horizon optimized policy.
pub fn run_rolling_horizon<'a>(
    scenario: &Scenario<'a>,
    estimator: &Estimator<'a>,
) -> Result<SimulationTrace> {
    if !matches!(scenario.policy, PolicyKind::OptimizedRolling { .. }) {
        return Err(Error::Config("scenario policy is not optimized rolling".into()));
    }
    run_scenario(scenario, Some(estimator))
}

/// Constant-interval baseline.
pub fn run_constant_interval(scenario: &Scenario<'_>) -> Result<SimulationTrace> {
    if !matches!(scenario.policy, PolicyKind::ConstantInterval { .. }) {
        return Err(Error::Config("scenario policy is not constant interval".into()));
    }
    run_scenario(scenario, None)
}

fn clone_scenario<'a>(s: &Scenario<'a>) -> Scenario<'a> {
    Scenario {
        farm: s.farm,
        revenue: s.revenue,
        horizon: s.horizon,
        policy: s.policy.clone(),
        seeds: s.seeds,
        replication: s.replication,
        solver: s.solver,
        scripted: s.scripted.clone(),
        end_of_life_rule: s.end_of_life_rule,
    }
}

/// Picks one PM interval per component type by minimizing the expected
/// plan cost of the induced farm-wide constant-interval schedule: a common
/// grid sweep followed by per-type coordinate refinement.
pub fn tune_constant_intervals(
    estimator: &Estimator<'_>,
    horizon: u32,
    grid: std::ops::RangeInclusive<u32>,
) -> Result<Vec<u32>> {
    let farm = estimator.farm();
    let state = FarmState::fresh(farm);
    let window = Window::new(0, horizon)?;
    let variant = VariantSpec { kind: VariantKind::FullContract, window };
    let (tensor, fractions) = estimator.build_cost_tensor(variant, &state)?;
    let model = build_model(farm, estimator.revenue(), &state, &tensor, &fractions, None)?;
    let n = farm.components.len();
    let cost_of = |intervals: &[u32]| -> f64 {
        let months: Vec<Vec<u32>> = intervals
            .iter()
            .map(|&step| (1..=horizon / step).map(|k| k * step).filter(|&t| t <= horizon).collect())
            .collect();
        let schedule = ClassSchedule { months: vec![months] };
        model.evaluate(&schedule).unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = (*grid.start(), *grid.end());
    let mut best = vec![lo; n];
    let mut best_cost = f64::INFINITY;
    for common in lo..=hi {
        let candidate = vec![common; n];
        let cost = cost_of(&candidate);
        if cost < best_cost {
            best_cost = cost;
            best = candidate;
        }
    }
    let mut improved = true;
    while improved {
        improved = false;
        for j in 0..n {
            for step in lo..=hi {
                let mut candidate = best.clone();
                candidate[j] = step;
                let cost = cost_of(&candidate);
                if cost < best_cost - 1e-9 {
                    best_cost = cost;
                    best = candidate;
                    improved = true;
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests;
