//! Assembly of the scheduling integer linear program.
//!
//! The decision variables follow the interval formulation: `x[c][j][(u,t)]`
//! is 1 when component `j` of turbine class `c` has consecutive PM at steps
//! `u` and `t` (with the window start standing for "never maintained before"
//! and `end + 1` for "never again"), `y[c][(u,t)]` is 1 when any component
//! of the class does, and `z[(u,t)]` when any component of any class does.
//! Flow-balance rows make each component's `x` arcs a chain; linking rows
//! tie `y` and `z` from above. Occasion costs sit on `y` and `z`, interval
//! costs on `x`, so with positive occasion costs `y = max_j x` and
//! `z = max_c y` at any optimum and both may be relaxed to `[0, 1]`.
//!
//! Identical turbines are carried as one class with a multiplicity:
//! per-turbine costs are scaled by the class size while the farm-shared
//! `z` costs are not. Any optimum of the class model expands to an optimum
//! of the full model because copying the cheapest member schedule across a
//! class never increases per-turbine costs and only shrinks the set of
//! farm occasions.

use crate::costs::{
    AvailabilityTensors, CostTensor, FarmSpec, FarmState, FractionTensors, PairIndex, VariantKind,
    VariantSpec, Window,
};
use crate::revenue::RevenueFunction;
use crate::{Error, Result};

/// PM months per `[turbine][component]`, strictly increasing, inside
/// `(window start, window end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub months: Vec<Vec<Vec<u32>>>,
}

/// PM months per `[class][component]`; the class layer is what the solver
/// works on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClassSchedule {
    pub months: Vec<Vec<Vec<u32>>>,
}

impl ClassSchedule {
    pub fn pure_cm(classes: usize, components: usize) -> Self {
        Self { months: vec![vec![Vec::new(); components]; classes] }
    }

    /// Replicates each class schedule onto its member turbines.
    pub fn expand(&self, state: &FarmState) -> Schedule {
        let m: u32 = state.classes.iter().map(|c| c.size()).sum();
        let mut months = vec![Vec::new(); m as usize];
        for (c, class) in state.classes.iter().enumerate() {
            for &i in &class.members {
                months[i as usize] = self.months[c].clone();
            }
        }
        Schedule { months }
    }
}

/// Checks that every month list is strictly increasing inside the window.
pub fn validate_schedule(months: &[Vec<u32>], window: Window) -> Result<()> {
    for list in months {
        let mut prev = window.start;
        for &t in list {
            if t <= prev || t > window.end {
                return Err(Error::Domain(format!(
                    "PM month {t} not strictly increasing inside ({}, {}]",
                    window.start, window.end
                )));
            }
            prev = t;
        }
    }
    Ok(())
}

/// The chain of interval arcs induced by a component's PM months.
pub fn chain_arcs(window: Window, months: &[u32]) -> Vec<(u32, u32)> {
    let mut arcs = Vec::with_capacity(months.len() + 1);
    let mut prev = window.start;
    for &t in months {
        arcs.push((prev, t));
        prev = t;
    }
    arcs.push((prev, window.end + 1));
    arcs
}

/// Availability constraint flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvailabilityKind {
    /// Cap on the expected revenue share lost to downtime.
    Production,
    /// Cap on the expected time share lost to downtime.
    Time,
}

/// One `<=` row over the `x` and `y` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityRow {
    pub kind: AvailabilityKind,
    pub epsilon: f64,
    /// Coefficients per `[class][component][x arc]`, class-scaled.
    pub x_coeff: Vec<Vec<Vec<f64>>>,
    /// Coefficients per `[class][yz arc]`, class-scaled.
    pub y_coeff: Vec<Vec<f64>>,
    pub rhs: f64,
}

/// Turbine classes of the model: member turbines and multiplicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelClass {
    pub members: Vec<u32>,
}

impl ModelClass {
    pub fn size(&self) -> f64 {
        self.members.len() as f64
    }
}

/// The assembled integer linear program.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpModel {
    pub window: Window,
    pub x_arcs: PairIndex,
    pub yz_arcs: PairIndex,
    pub classes: Vec<ModelClass>,
    pub components: usize,
    /// Objective coefficients per `[class][component][x arc]`, class-scaled.
    pub x_cost: Vec<Vec<Vec<f64>>>,
    /// Objective coefficients per `[class][yz arc]`, class-scaled.
    pub y_cost: Vec<Vec<f64>>,
    /// Objective coefficients per `[yz arc]` (farm-shared, unscaled).
    pub z_cost: Vec<f64>,
    pub availability: Option<AvailabilityRow>,
    pub variant: Option<VariantSpec>,
}

/// Builds the schedule polytope (constraints only, zero objective) for the
/// classes of `state` with `components` component types each.
pub fn build_polytope(window: Window, state: &FarmState, components: usize) -> Result<IlpModel> {
    if components == 0 {
        return Err(Error::Config("model needs at least one component type".into()));
    }
    if state.classes.is_empty() {
        return Err(Error::Config("model needs at least one turbine class".into()));
    }
    let x_arcs = PairIndex::new(window.start, window.end + 1);
    let yz_arcs = PairIndex::new(window.start, window.end);
    let classes: Vec<ModelClass> =
        state.classes.iter().map(|c| ModelClass { members: c.members.clone() }).collect();
    let x_cost = vec![vec![vec![0.0; x_arcs.len()]; components]; classes.len()];
    let y_cost = vec![vec![0.0; yz_arcs.len()]; classes.len()];
    let z_cost = vec![0.0; yz_arcs.len()];
    Ok(IlpModel {
        window,
        x_arcs,
        yz_arcs,
        classes,
        components,
        x_cost,
        y_cost,
        z_cost,
        availability: None,
        variant: None,
    })
}

impl IlpModel {
    /// Installs the variant objective: interval costs on `x`, occasion
    /// costs discounted by the failure-free fractions on `y` and `z`.
    pub fn attach_objective(
        mut self,
        tensor: &CostTensor,
        fractions: &FractionTensors,
        farm: &FarmSpec,
        revenue: &RevenueFunction,
    ) -> Result<IlpModel> {
        if tensor.variant.window != self.window {
            return Err(Error::Config("tensor window differs from model window".into()));
        }
        if tensor.values.len() != self.classes.len()
            || fractions.p_turbine.len() != self.classes.len()
            || tensor.values.iter().any(|c| c.len() != self.components)
        {
            return Err(Error::Config("tensor class/component shape differs from model".into()));
        }
        let gamma_pm = farm.shared.pm_duration;
        for (c, class) in self.classes.iter().enumerate() {
            let mult = class.size();
            for j in 0..self.components {
                for a in 0..self.x_arcs.len() {
                    self.x_cost[c][j][a] = mult * tensor.values[c][j][a];
                }
            }
            for (u, t) in self.yz_arcs.pairs() {
                let a = self.yz_arcs.index(u, t);
                let occasion = farm.shared.turbine_occasion + revenue.loss(t as f64, gamma_pm);
                self.y_cost[c][a] = mult * occasion * fractions.p_turbine[c][a];
            }
        }
        for (u, t) in self.yz_arcs.pairs() {
            let a = self.yz_arcs.index(u, t);
            self.z_cost[a] = farm.shared.farm_occasion * fractions.p_farm[a];
        }
        self.variant = Some(tensor.variant);
        Ok(self)
    }

    /// Adds the availability row. The bound is farm-wide: downtime summed
    /// over all turbines against `epsilon` times the farm's fully
    /// functioning total (revenue or time).
    pub fn attach_availability(
        mut self,
        kind: AvailabilityKind,
        epsilon: f64,
        avail: &AvailabilityTensors,
        fractions: &FractionTensors,
        farm: &FarmSpec,
        revenue: &RevenueFunction,
    ) -> Result<IlpModel> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1]")));
        }
        if avail.window != self.window {
            return Err(Error::Config("availability window differs from model window".into()));
        }
        let (s, e) = (self.window.start, self.window.end);
        let turbines: f64 = self.classes.iter().map(|c| c.size()).sum();
        let gamma_pm = farm.shared.pm_duration;
        let mut x_coeff = Vec::with_capacity(self.classes.len());
        let mut y_coeff = Vec::with_capacity(self.classes.len());
        for (c, class) in self.classes.iter().enumerate() {
            let mult = class.size();
            let mut xc = Vec::with_capacity(self.components);
            for j in 0..self.components {
                let gamma_cm = farm.components[j].cm_duration;
                let per_arc: Vec<f64> = (0..self.x_arcs.len())
                    .map(|a| match kind {
                        AvailabilityKind::Production => mult * avail.cm_loss[c][j][a],
                        AvailabilityKind::Time => mult * gamma_cm * avail.cm_count[c][j][a],
                    })
                    .collect();
                xc.push(per_arc);
            }
            x_coeff.push(xc);
            let mut yc = vec![0.0; self.yz_arcs.len()];
            for (u, t) in self.yz_arcs.pairs() {
                let a = self.yz_arcs.index(u, t);
                let per_stop = match kind {
                    AvailabilityKind::Production => revenue.loss(t as f64, gamma_pm),
                    AvailabilityKind::Time => gamma_pm,
                };
                yc[a] = mult * per_stop * fractions.p_turbine[c][a];
            }
            y_coeff.push(yc);
        }
        let rhs = match kind {
            AvailabilityKind::Production => epsilon * turbines * revenue.loss(s as f64, (e - s) as f64),
            AvailabilityKind::Time => epsilon * turbines * (e - s) as f64,
        };
        self.availability = Some(AvailabilityRow { kind, epsilon, x_coeff, y_coeff, rhs });
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn turbine_count(&self) -> f64 {
        self.classes.iter().map(|c| c.size()).sum()
    }

    // -- Explicit column/row view ------------------------------------------

    pub fn num_x(&self) -> usize {
        self.classes.len() * self.components * self.x_arcs.len()
    }

    pub fn num_y(&self) -> usize {
        self.classes.len() * self.yz_arcs.len()
    }

    pub fn num_z(&self) -> usize {
        self.yz_arcs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.num_x() + self.num_y() + self.num_z()
    }

    pub fn x_col(&self, class: usize, component: usize, arc: usize) -> usize {
        (class * self.components + component) * self.x_arcs.len() + arc
    }

    pub fn y_col(&self, class: usize, arc: usize) -> usize {
        self.num_x() + class * self.yz_arcs.len() + arc
    }

    pub fn z_col(&self, arc: usize) -> usize {
        self.num_x() + self.num_y() + arc
    }

    /// Objective coefficient of an explicit column.
    pub fn objective_coeff(&self, col: usize) -> f64 {
        let nx = self.num_x();
        if col < nx {
            let arc = col % self.x_arcs.len();
            let cj = col / self.x_arcs.len();
            self.x_cost[cj / self.components][cj % self.components][arc]
        } else if col < nx + self.num_y() {
            let rel = col - nx;
            self.y_cost[rel / self.yz_arcs.len()][rel % self.yz_arcs.len()]
        } else {
            self.z_cost[col - nx - self.num_y()]
        }
    }

    /// Streams every constraint row as `(name, entries, relation, rhs)`.
    /// Relations: `0` for equality, `-1` for `<=`.
    pub fn for_each_row(&self, mut visit: impl FnMut(&str, &[(usize, f64)], i8, f64)) {
        let (s, e) = (self.window.start, self.window.end);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (c, class) in self.classes.iter().enumerate() {
            let rep = class.members[0];
            for j in 0..self.components {
                // One departure from the window start.
                entries.clear();
                for t in s + 1..=e + 1 {
                    entries.push((self.x_col(c, j, self.x_arcs.index(s, t)), 1.0));
                }
                visit(&format!("src_{rep}_{j}"), &entries, 0, 1.0);
                // Flow balance at interior steps.
                for t in s + 1..=e {
                    entries.clear();
                    for u in s..t {
                        entries.push((self.x_col(c, j, self.x_arcs.index(u, t)), 1.0));
                    }
                    for v in t + 1..=e + 1 {
                        entries.push((self.x_col(c, j, self.x_arcs.index(t, v)), -1.0));
                    }
                    visit(&format!("bal_{rep}_{j}_{t}"), &entries, 0, 0.0);
                }
            }
        }
        for (c, class) in self.classes.iter().enumerate() {
            let rep = class.members[0];
            for j in 0..self.components {
                for (u, t) in self.yz_arcs.pairs() {
                    let a = self.yz_arcs.index(u, t);
                    let row =
                        [(self.x_col(c, j, self.x_arcs.index(u, t)), 1.0), (self.y_col(c, a), -1.0)];
                    visit(&format!("lnk_{rep}_{j}_{u}_{t}"), &row, -1, 0.0);
                }
            }
            for (u, t) in self.yz_arcs.pairs() {
                let a = self.yz_arcs.index(u, t);
                let row = [(self.y_col(c, a), 1.0), (self.z_col(a), -1.0)];
                visit(&format!("frm_{rep}_{u}_{t}"), &row, -1, 0.0);
            }
        }
        if let Some(av) = &self.availability {
            entries.clear();
            for c in 0..self.classes.len() {
                for j in 0..self.components {
                    for a in 0..self.x_arcs.len() {
                        let coeff = av.x_coeff[c][j][a];
                        if coeff != 0.0 {
                            entries.push((self.x_col(c, j, a), coeff));
                        }
                    }
                }
                for a in 0..self.yz_arcs.len() {
                    let coeff = av.y_coeff[c][a];
                    if coeff != 0.0 {
                        entries.push((self.y_col(c, a), coeff));
                    }
                }
            }
            visit("avail", &entries, -1, av.rhs);
        }
    }

    /// Deterministic explicit column name.
    pub fn col_name(&self, col: usize) -> String {
        let nx = self.num_x();
        let ny = self.num_y();
        if col < nx {
            let arc = col % self.x_arcs.len();
            let cj = col / self.x_arcs.len();
            let (c, j) = (cj / self.components, cj % self.components);
            let (u, t) = self.arc_pair(&self.x_arcs, arc);
            format!("x_{}_{}_{}_{}", self.classes[c].members[0], j, u, t)
        } else if col < nx + ny {
            let rel = col - nx;
            let (c, arc) = (rel / self.yz_arcs.len(), rel % self.yz_arcs.len());
            let (u, t) = self.arc_pair(&self.yz_arcs, arc);
            format!("y_{}_{}_{}", self.classes[c].members[0], u, t)
        } else {
            let (u, t) = self.arc_pair(&self.yz_arcs, col - nx - ny);
            format!("z_{u}_{t}")
        }
    }

    fn arc_pair(&self, arcs: &PairIndex, idx: usize) -> (u32, u32) {
        // Inverse of PairIndex::index by scanning the starts; fine for the
        // name-generation paths where this is used.
        let mut lo = arcs.start();
        let mut acc = 0usize;
        loop {
            let width = (arcs.last() - lo) as usize;
            if idx < acc + width {
                return (lo, lo + 1 + (idx - acc) as u32);
            }
            acc += width;
            lo += 1;
        }
    }

    // -- Schedules and assignments ------------------------------------------

    /// Encodes a class schedule into the binary assignment with tight
    /// linking (`y = max_j x`, `z = max_c y`).
    pub fn encode(&self, schedule: &ClassSchedule) -> Result<Assignment> {
        if schedule.months.len() != self.classes.len()
            || schedule.months.iter().any(|c| c.len() != self.components)
        {
            return Err(Error::Config("schedule shape differs from model".into()));
        }
        let mut x = vec![false; self.num_x()];
        let mut y = vec![false; self.num_y()];
        let mut z = vec![false; self.num_z()];
        for (c, comps) in schedule.months.iter().enumerate() {
            for (j, months) in comps.iter().enumerate() {
                validate_schedule(std::slice::from_ref(months), self.window)?;
                for (u, t) in chain_arcs(self.window, months) {
                    x[self.x_col(c, j, self.x_arcs.index(u, t))] = true;
                    if t <= self.window.end {
                        let a = self.yz_arcs.index(u, t);
                        y[c * self.yz_arcs.len() + a] = true;
                        z[a] = true;
                    }
                }
            }
        }
        Ok(Assignment { x, y, z })
    }

    /// Decodes an x-assignment back into PM months by walking each chain.
    pub fn decode(&self, assignment: &Assignment) -> Result<ClassSchedule> {
        let mut months = Vec::with_capacity(self.classes.len());
        for c in 0..self.classes.len() {
            let mut comps = Vec::with_capacity(self.components);
            for j in 0..self.components {
                let mut list = Vec::new();
                let mut node = self.window.start;
                while node != self.window.end + 1 {
                    let mut next = None;
                    for t in node + 1..=self.window.end + 1 {
                        if assignment.x[self.x_col(c, j, self.x_arcs.index(node, t))] {
                            if next.is_some() {
                                return Err(Error::Domain(format!(
                                    "component ({c}, {j}) has two intervals starting at {node}"
                                )));
                            }
                            next = Some(t);
                        }
                    }
                    let t = next.ok_or_else(|| {
                        Error::Domain(format!("component ({c}, {j}) chain breaks at {node}"))
                    })?;
                    if t <= self.window.end {
                        list.push(t);
                    }
                    node = t;
                }
                comps.push(list);
            }
            months.push(comps);
        }
        Ok(ClassSchedule { months })
    }

    /// Exact objective of a class schedule, including the max-linked
    /// occasion costs.
    pub fn evaluate(&self, schedule: &ClassSchedule) -> Result<f64> {
        let mut total = 0.0;
        let mut z_used = vec![false; self.yz_arcs.len()];
        for (c, comps) in schedule.months.iter().enumerate() {
            let mut y_used = vec![false; self.yz_arcs.len()];
            for (j, months) in comps.iter().enumerate() {
                validate_schedule(std::slice::from_ref(months), self.window)?;
                for (u, t) in chain_arcs(self.window, months) {
                    total += self.x_cost[c][j][self.x_arcs.index(u, t)];
                    if t <= self.window.end {
                        y_used[self.yz_arcs.index(u, t)] = true;
                    }
                }
            }
            for (a, used) in y_used.iter().enumerate() {
                if *used {
                    total += self.y_cost[c][a];
                    z_used[a] = true;
                }
            }
        }
        for (a, used) in z_used.iter().enumerate() {
            if *used {
                total += self.z_cost[a];
            }
        }
        Ok(total)
    }

    /// Left-hand side of the availability row for a schedule, if present.
    pub fn availability_lhs(&self, schedule: &ClassSchedule) -> Option<f64> {
        let av = self.availability.as_ref()?;
        let mut lhs = 0.0;
        for (c, comps) in schedule.months.iter().enumerate() {
            let mut y_used = vec![false; self.yz_arcs.len()];
            for (j, months) in comps.iter().enumerate() {
                for (u, t) in chain_arcs(self.window, months) {
                    lhs += av.x_coeff[c][j][self.x_arcs.index(u, t)];
                    if t <= self.window.end {
                        y_used[self.yz_arcs.index(u, t)] = true;
                    }
                }
            }
            for (a, used) in y_used.iter().enumerate() {
                if *used {
                    lhs += av.y_coeff[c][a];
                }
            }
        }
        Some(lhs)
    }

    /// Verifies an assignment against every constraint row exactly (integer
    /// arithmetic on the binary assignment; the availability row at `tol`).
    pub fn check_assignment(&self, assignment: &Assignment, tol: f64) -> Result<()> {
        if assignment.x.len() != self.num_x()
            || assignment.y.len() != self.num_y()
            || assignment.z.len() != self.num_z()
        {
            return Err(Error::Domain("assignment size differs from model".into()));
        }
        let value = |col: usize| -> f64 {
            let nx = self.num_x();
            let ny = self.num_y();
            let on = if col < nx {
                assignment.x[col]
            } else if col < nx + ny {
                assignment.y[col - nx]
            } else {
                assignment.z[col - nx - ny]
            };
            if on {
                1.0
            } else {
                0.0
            }
        };
        let mut violation: Option<String> = None;
        self.for_each_row(|name, entries, rel, rhs| {
            if violation.is_some() {
                return;
            }
            let lhs: f64 = entries.iter().map(|&(col, coeff)| coeff * value(col)).sum();
            let ok = match rel {
                0 => (lhs - rhs).abs() <= tol,
                _ => lhs <= rhs + tol,
            };
            if !ok {
                violation = Some(format!("row {name}: lhs {lhs} vs rhs {rhs}"));
            }
        });
        match violation {
            Some(v) => Err(Error::Domain(v)),
            None => Ok(()),
        }
    }
}

/// Binary assignment of all model variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
    pub z: Vec<bool>,
}

/// Collapses a farm whose turbines are all in identical state into a single
/// multiplicity class; refuses mixed states. The returned state carries the
/// member lists needed to expand a class schedule back to the farm.
pub fn symmetry_reduce(state: &FarmState) -> Result<FarmState> {
    if state.classes.is_empty() {
        return Err(Error::Config("empty farm state".into()));
    }
    let first = &state.classes[0];
    for class in &state.classes[1..] {
        let same = class.ages.len() == first.ages.len()
            && class.ages.iter().zip(&first.ages).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::Config("turbines are not in identical states".into()));
        }
    }
    let mut members: Vec<u32> = state.classes.iter().flat_map(|c| c.members.iter().copied()).collect();
    members.sort_unstable();
    Ok(FarmState {
        classes: vec![crate::costs::TurbineClass { members, ages: first.ages.clone() }],
    })
}

/// Convenience assembly: polytope, objective, and (for the availability
/// variants) the guarantee row, from one estimator pass.
pub fn build_model(
    farm: &FarmSpec,
    revenue: &RevenueFunction,
    state: &FarmState,
    tensor: &CostTensor,
    fractions: &FractionTensors,
    availability: Option<&AvailabilityTensors>,
) -> Result<IlpModel> {
    let model = build_polytope(tensor.variant.window, state, farm.components.len())?
        .attach_objective(tensor, fractions, farm, revenue)?;
    match tensor.variant.kind {
        VariantKind::FullContractProdAvail { epsilon } => {
            let avail = availability.ok_or_else(|| {
                Error::Config("production availability variant needs availability tensors".into())
            })?;
            model.attach_availability(AvailabilityKind::Production, epsilon, avail, fractions, farm, revenue)
        }
        VariantKind::FullContractTimeAvail { epsilon } => {
            let avail = availability.ok_or_else(|| {
                Error::Config("time availability variant needs availability tensors".into())
            })?;
            model.attach_availability(AvailabilityKind::Time, epsilon, avail, fractions, farm, revenue)
        }
        _ => Ok(model),
    }
}

#[cfg(test)]
mod tests;
