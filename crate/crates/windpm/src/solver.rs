//! Exact optimization of the scheduling program.
//!
//! The program couples independent per-component interval chains only
//! through the occasion variables `y` (turbine class level) and `z` (farm
//! level), both linked from above with positive costs. The solver exploits
//! that structure: lower bounds come from a Lagrangian decomposition that
//! prices the occasion costs onto the component arcs, turning every bound
//! evaluation into one shortest-path sweep per component chain. Any
//! nonnegative price vector yields a valid bound, and the price optimum
//! coincides with the LP relaxation of the explicit program (the chain
//! subproblems are integral and `y`, `z` relax to `[0, 1]`).
//!
//! Branch and bound then fixes, per component, whether a month carries a
//! PM, shrinking the chain DAGs until either the bound prunes the node or
//! the schedule is fully determined and evaluated exactly; exhausting the
//! tree therefore proves optimality independently of how tight the price
//! bound got. Upper bounds come from decoding subproblem paths, from an
//! all-aligned schedule sweep, and from coordinate-descent polish. The
//! search is deterministic: best-bound node order with depth/sequence
//! tie-breaks, fixed iteration budgets, and a lexicographic tie-break on
//! equal-cost schedules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{chain_arcs, ClassSchedule, IlpModel};
use crate::{Error, Result};

mod brute;
mod mps;
#[cfg(test)]
mod tests;

pub use brute::brute_force_solve;
pub use mps::{export_mps, parse_mps, ParsedMps};

/// Termination and tolerance knobs. With `time_limit_secs` unset the
/// search is fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the incumbent is provably within this absolute gap.
    pub abs_gap: f64,
    /// ... or within this relative gap.
    pub rel_gap: f64,
    /// Maximum processed nodes before returning the incumbent.
    pub node_limit: u64,
    /// Optional wall-clock limit (trades determinism for a hard stop).
    pub time_limit_secs: Option<f64>,
    /// Price-ascent iterations at the root.
    pub root_iterations: u32,
    /// Price-ascent iterations per search node.
    pub node_iterations: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abs_gap: 1e-6,
            rel_gap: 1e-9,
            node_limit: 500_000,
            time_limit_secs: None,
            root_iterations: 1500,
            node_iterations: 80,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.abs_gap < 0.0 || self.rel_gap < 0.0 {
            return Err(Error::Config("gap tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Incumbent proven within the configured gap.
    Optimal,
    /// A limit was hit; the incumbent and the reported bound stand.
    FeasibleLimit,
    /// The constraints admit no schedule.
    Infeasible,
}

/// Best schedule found with its exact objective and proof data.
#[derive(Debug, Clone)]
pub struct Solution {
    pub schedule: ClassSchedule,
    pub objective: f64,
    pub bound: f64,
    pub status: SolveStatus,
    pub nodes: u64,
}

impl Solution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound).max(0.0)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Lower bound from the price relaxation alone (no branching): the
/// decomposition analogue of the root LP relaxation. Always a valid bound
/// on the integer optimum, and exact dual-feasible at every iterate.
pub fn lp_relax(model: &IlpModel) -> f64 {
    let config = SolverConfig::default();
    let mut s = Searcher::new(model, &config);
    let root = NodeConstraints::root(&s.dims);
    s.seed_incumbents(&root);
    s.ascend(&root, config.root_iterations)
}

/// Exact branch-and-bound optimization.
pub fn solve_exact(model: &IlpModel, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let mut searcher = Searcher::new(model, config);
    Ok(searcher.run())
}

// ---------------------------------------------------------------------------
// Month bitsets and node constraints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
struct Bits {
    words: Vec<u64>,
}

impl Bits {
    fn empty(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)] }
    }

    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Per-component branching state: months forced into or out of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeConstraints {
    required: Vec<Bits>,
    forbidden: Vec<Bits>,
}

impl NodeConstraints {
    fn root(dims: &Dims) -> Self {
        let slots = dims.k * dims.n;
        Self {
            required: (0..slots).map(|_| Bits::empty(dims.w)).collect(),
            forbidden: (0..slots).map(|_| Bits::empty(dims.w)).collect(),
        }
    }

    fn decided(&self, dims: &Dims) -> bool {
        (0..dims.k * dims.n)
            .all(|s| (self.required[s].count() + self.forbidden[s].count()) as usize == dims.w)
    }

    fn undecided(&self, slot: usize, month_idx: usize) -> bool {
        !self.required[slot].get(month_idx) && !self.forbidden[slot].get(month_idx)
    }
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    k: usize,
    n: usize,
    w: usize,
    a_yz: usize,
}

struct HeapNode {
    bound: f64,
    depth: u32,
    seq: u64,
    constraints: NodeConstraints,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: order so the lowest bound pops first,
        // ties broken by greater depth, then earlier creation.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

// ---------------------------------------------------------------------------
// The searcher
// ---------------------------------------------------------------------------

struct Searcher<'m> {
    model: &'m IlpModel,
    config: SolverConfig,
    dims: Dims,
    /// Occasion-cost prices per component slot and occasion arc.
    mu: Vec<f64>,
    /// Farm-cost prices per class and occasion arc.
    nu: Vec<f64>,
    /// Price of the availability row, when present.
    lam: f64,
    incumbent: Option<(f64, ClassSchedule)>,
    // Reusable buffers.
    dp: Vec<f64>,
    pred: Vec<u32>,
    next_req: Vec<u32>,
    paths: Vec<Vec<u32>>,
    path_arcs: Vec<bool>,
    y_coef: Vec<f64>,
    z_coef: Vec<f64>,
    y_star: Vec<bool>,
    z_star: Vec<bool>,
    visit_freq: Vec<f64>,
    started: std::time::Instant,
}

impl<'m> Searcher<'m> {
    fn new(model: &'m IlpModel, config: &SolverConfig) -> Self {
        let dims = Dims {
            k: model.classes.len(),
            n: model.components,
            w: model.window.len() as usize,
            a_yz: model.yz_arcs.len(),
        };
        let slots = dims.k * dims.n;
        let mut s = Self {
            model,
            config: *config,
            dims,
            mu: vec![0.0; slots * dims.a_yz],
            nu: vec![0.0; dims.k * dims.a_yz],
            lam: 0.0,
            incumbent: None,
            dp: vec![0.0; dims.w + 2],
            pred: vec![0; dims.w + 2],
            next_req: vec![0; dims.w + 2],
            paths: vec![Vec::new(); slots],
            path_arcs: vec![false; slots * dims.a_yz],
            y_coef: vec![0.0; dims.k * dims.a_yz],
            z_coef: vec![0.0; dims.a_yz],
            y_star: vec![false; dims.k * dims.a_yz],
            z_star: vec![false; dims.a_yz],
            visit_freq: vec![0.0; slots * dims.w],
            started: std::time::Instant::now(),
        };
        // Even-split warm start: price each occasion cost uniformly onto
        // the components able to trigger it; penalty terms start at zero.
        for c in 0..dims.k {
            for a in 0..dims.a_yz {
                let share = (model.y_cost[c][a] + model.z_cost[a] / dims.k as f64) / dims.n as f64;
                for j in 0..dims.n {
                    s.mu[(c * dims.n + j) * dims.a_yz + a] = share.max(0.0);
                }
                s.nu[c * dims.a_yz + a] = (model.z_cost[a] / dims.k as f64).max(0.0);
            }
        }
        s
    }

    fn gap_threshold(&self, ub: f64) -> f64 {
        self.config.abs_gap.max(self.config.rel_gap * ub.abs())
    }

    fn ub(&self) -> f64 {
        self.incumbent.as_ref().map(|(v, _)| *v).unwrap_or(f64::INFINITY)
    }

    fn out_of_time(&self) -> bool {
        self.config
            .time_limit_secs
            .map(|limit| self.started.elapsed().as_secs_f64() > limit)
            .unwrap_or(false)
    }

    // -- Chain shortest paths under node constraints --------------------------

    /// Shortest chain for one component slot given the current prices;
    /// records the chosen PM months and occasion-arc usage. Returns the
    /// chain length (infinite when the constraints are contradictory).
    fn chain_dp(&mut self, slot: usize, constraints: &NodeConstraints) -> f64 {
        let model = self.model;
        let dims = self.dims;
        let (c, j) = (slot / dims.n, slot % dims.n);
        let w = dims.w;
        let cost_x = &model.x_cost[c][j];
        let av = model.availability.as_ref();
        let required = &constraints.required[slot];
        let forbidden = &constraints.forbidden[slot];

        // next_req[node] = smallest required node > node (w + 1 when none):
        // no interval may jump over a required PM month.
        let mut next = (w + 1) as u32;
        self.next_req[w + 1] = next;
        for node in (0..=w).rev() {
            self.next_req[node] = next;
            if node >= 1 && required.get(node - 1) {
                next = node as u32;
            }
        }
        // Node 0 is the window start, nodes 1..=w the schedulable months,
        // node w + 1 the end column.
        self.dp[0] = 0.0;
        for v in self.dp.iter_mut().skip(1) {
            *v = f64::INFINITY;
        }
        let mu_row = &self.mu[slot * dims.a_yz..(slot + 1) * dims.a_yz];
        let mut x_off = 0usize; // index of arc (u, u+1) in the x arcs
        let mut yz_off = 0usize;
        for u in 0..=w {
            let du = self.dp[u];
            let u_allowed = u == 0 || !forbidden.get(u - 1);
            if du.is_finite() && u_allowed {
                let cap = self.next_req[u] as usize;
                let last_t = cap.min(w);
                for t in u + 1..=last_t {
                    if forbidden.get(t - 1) {
                        continue;
                    }
                    let xi = x_off + (t - u - 1);
                    let mut cost = cost_x[xi] + mu_row[yz_off + (t - u - 1)];
                    if let Some(av) = av {
                        cost += self.lam * av.x_coeff[c][j][xi];
                    }
                    let cand = du + cost;
                    if cand < self.dp[t] {
                        self.dp[t] = cand;
                        self.pred[t] = u as u32;
                    }
                }
                if cap >= w + 1 {
                    let xi = x_off + (w - u);
                    let mut cost = cost_x[xi];
                    if let Some(av) = av {
                        cost += self.lam * av.x_coeff[c][j][xi];
                    }
                    let cand = du + cost;
                    if cand < self.dp[w + 1] {
                        self.dp[w + 1] = cand;
                        self.pred[w + 1] = u as u32;
                    }
                }
            }
            x_off += w + 1 - u;
            if u < w {
                yz_off += w - u;
            }
        }

        // Refresh the slot's path and occasion-arc bitmap.
        let base = slot * dims.a_yz;
        let mut months = std::mem::take(&mut self.paths[slot]);
        let mut prev = model.window.start;
        for &m in &months {
            self.path_arcs[base + model.yz_arcs.index(prev, m)] = false;
            prev = m;
        }
        months.clear();
        if self.dp[w + 1].is_finite() {
            let mut node = w + 1;
            while node != 0 {
                let p = self.pred[node] as usize;
                if node != w + 1 {
                    months.push(model.window.start + node as u32);
                }
                node = p;
            }
            months.reverse();
        }
        let mut prev = model.window.start;
        for &m in &months {
            self.path_arcs[base + model.yz_arcs.index(prev, m)] = true;
            prev = m;
        }
        self.paths[slot] = months;
        self.dp[w + 1]
    }

    /// One price-relaxation evaluation under node constraints. Returns the
    /// bound; subproblem paths land in `self.paths`.
    fn evaluate(&mut self, constraints: &NodeConstraints) -> f64 {
        let dims = self.dims;
        let mut total = 0.0;
        for slot in 0..dims.k * dims.n {
            let sp = self.chain_dp(slot, constraints);
            if !sp.is_finite() {
                return f64::INFINITY;
            }
            total += sp;
        }
        for c in 0..dims.k {
            let base = c * dims.a_yz;
            for a in 0..dims.a_yz {
                let mut coef = self.model.y_cost[c][a] + self.nu[base + a];
                for j in 0..dims.n {
                    coef -= self.mu[(c * dims.n + j) * dims.a_yz + a];
                }
                if let Some(av) = self.model.availability.as_ref() {
                    coef += self.lam * av.y_coeff[c][a];
                }
                self.y_coef[base + a] = coef;
                let on = coef < 0.0;
                self.y_star[base + a] = on;
                if on {
                    total += coef;
                }
            }
        }
        for a in 0..dims.a_yz {
            let mut coef = self.model.z_cost[a];
            for c in 0..dims.k {
                coef -= self.nu[c * dims.a_yz + a];
            }
            self.z_coef[a] = coef;
            let on = coef < 0.0;
            self.z_star[a] = on;
            if on {
                total += coef;
            }
        }
        if let Some(av) = self.model.availability.as_ref() {
            total -= self.lam * av.rhs;
        }
        total
    }

    /// Projected-subgradient ascent from the current prices. Keeps the
    /// best bound seen, feeds decoded paths into the incumbent pool, and
    /// tallies month-visit frequencies over the tail iterations for the
    /// branching rule. Returns the best (valid) bound of the run.
    fn ascend(&mut self, constraints: &NodeConstraints, iterations: u32) -> f64 {
        let dims = self.dims;
        let slots = dims.k * dims.n;
        let mut best = f64::NEG_INFINITY;
        let mut rho = 1.0f64;
        let mut stall = 0u32;
        for v in self.visit_freq.iter_mut() {
            *v = 0.0;
        }
        let tail_window = (iterations / 4).max(8);
        for it in 0..iterations {
            let bound = self.evaluate(constraints);
            if !bound.is_finite() {
                return f64::INFINITY;
            }
            if bound > best + 1e-12 {
                best = bound;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 25 {
                    rho *= 0.6;
                    stall = 0;
                }
            }
            self.offer_current_paths();
            if it + tail_window >= iterations {
                for slot in 0..slots {
                    for &m in &self.paths[slot] {
                        let idx = (m - self.model.window.start - 1) as usize;
                        self.visit_freq[slot * dims.w + idx] += 1.0 / tail_window as f64;
                    }
                }
            }
            let ub = self.ub();
            if ub.is_finite() && best >= ub - self.gap_threshold(ub) {
                break;
            }

            // Subgradient of the dual at the current primal argmins.
            let mut norm2 = 0.0;
            for c in 0..dims.k {
                for a in 0..dims.a_yz {
                    let y_on = self.y_star[c * dims.a_yz + a];
                    for j in 0..dims.n {
                        let slot = c * dims.n + j;
                        let g =
                            f64::from(self.path_arcs[slot * dims.a_yz + a]) - f64::from(y_on);
                        norm2 += g * g;
                    }
                    let g = f64::from(y_on) - f64::from(self.z_star[a]);
                    norm2 += g * g;
                }
            }
            let mut g_lam = 0.0;
            if let Some(av) = self.model.availability.as_ref() {
                let mut lhs = 0.0;
                for c in 0..dims.k {
                    for j in 0..dims.n {
                        let slot = c * dims.n + j;
                        let mut prev = self.model.window.start;
                        for &m in &self.paths[slot] {
                            lhs += av.x_coeff[c][j][self.model.x_arcs.index(prev, m)];
                            prev = m;
                        }
                        lhs += av.x_coeff[c][j]
                            [self.model.x_arcs.index(prev, self.model.window.end + 1)];
                    }
                    for a in 0..dims.a_yz {
                        if self.y_star[c * dims.a_yz + a] {
                            lhs += av.y_coeff[c][a];
                        }
                    }
                }
                g_lam = lhs - av.rhs;
                norm2 += g_lam * g_lam;
            }
            if norm2 < 1e-30 {
                break; // primal argmins consistent: the bound is tight here
            }
            let target = if ub.is_finite() { ub } else { bound.abs() * 1.05 + 100.0 };
            let step = rho * ((target - bound).max(self.gap_threshold(target.abs() + 1.0))) / norm2;
            for c in 0..dims.k {
                for a in 0..dims.a_yz {
                    let y_on = f64::from(self.y_star[c * dims.a_yz + a]);
                    for j in 0..dims.n {
                        let slot = c * dims.n + j;
                        let idx = slot * dims.a_yz + a;
                        let g = f64::from(self.path_arcs[idx]) - y_on;
                        if g != 0.0 {
                            self.mu[idx] = (self.mu[idx] + step * g).max(0.0);
                        }
                    }
                    let idx = c * dims.a_yz + a;
                    let g = y_on - f64::from(self.z_star[a]);
                    if g != 0.0 {
                        self.nu[idx] = (self.nu[idx] + step * g).max(0.0);
                    }
                }
            }
            if self.model.availability.is_some() {
                self.lam = (self.lam + step * g_lam).max(0.0);
            }
        }
        best
    }

    // -- Incumbents ------------------------------------------------------------

    fn offer_current_paths(&mut self) {
        let schedule = ClassSchedule {
            months: (0..self.dims.k)
                .map(|c| {
                    (0..self.dims.n).map(|j| self.paths[c * self.dims.n + j].clone()).collect()
                })
                .collect(),
        };
        self.offer(schedule);
    }

    /// Exact evaluation plus incumbent update with the lexicographic
    /// tie-break on (near-)equal objectives.
    fn offer(&mut self, schedule: ClassSchedule) {
        let objective = match self.model.evaluate(&schedule) {
            Ok(v) => v,
            Err(_) => return,
        };
        if let Some(lhs) = self.model.availability_lhs(&schedule) {
            let rhs = self.model.availability.as_ref().unwrap().rhs;
            if lhs > rhs + 1e-6 * (1.0 + rhs.abs()) {
                return;
            }
        }
        let tie = 1e-9 * (1.0 + objective.abs());
        match &mut self.incumbent {
            Some((best, best_sched)) => {
                if objective < *best - tie {
                    *best = objective;
                    *best_sched = schedule;
                } else if objective <= *best + tie && schedule < *best_sched {
                    *best = objective.min(*best);
                    *best_sched = schedule;
                }
            }
            None => self.incumbent = Some((objective, schedule)),
        }
    }

    /// Root incumbents: the pure-CM point, the best fully aligned
    /// schedule, and its coordinate-descent polish.
    fn seed_incumbents(&mut self, constraints: &NodeConstraints) {
        let _ = constraints;
        let dims = self.dims;
        self.offer(ClassSchedule::pure_cm(dims.k, dims.n));
        self.offer(self.aligned_schedule());
        self.coordinate_descent();
    }

    /// Best schedule with every component of every class maintained at the
    /// same months: a single chain DP with aggregated costs.
    fn aligned_schedule(&self) -> ClassSchedule {
        let dims = self.dims;
        let model = self.model;
        let w = dims.w;
        let mut dp = vec![f64::INFINITY; w + 2];
        let mut pred = vec![0u32; w + 2];
        dp[0] = 0.0;
        for u in 0..=w {
            if !dp[u].is_finite() {
                continue;
            }
            let su = model.window.start + u as u32;
            for t in u + 1..=w + 1 {
                let st = model.window.start + t as u32;
                let xi = model.x_arcs.index(su, st);
                let mut cost = 0.0;
                for c in 0..dims.k {
                    for j in 0..dims.n {
                        cost += model.x_cost[c][j][xi];
                    }
                }
                if t <= w {
                    let a = model.yz_arcs.index(su, st);
                    for c in 0..dims.k {
                        cost += model.y_cost[c][a];
                    }
                    cost += model.z_cost[a];
                }
                if dp[u] + cost < dp[t] {
                    dp[t] = dp[u] + cost;
                    pred[t] = u as u32;
                }
            }
        }
        let mut months = Vec::new();
        let mut node = w + 1;
        while node != 0 {
            let p = pred[node] as usize;
            if node != w + 1 {
                months.push(model.window.start + node as u32);
            }
            node = p;
        }
        months.reverse();
        ClassSchedule {
            months: vec![vec![months; dims.n]; dims.k],
        }
    }

    /// Re-optimizes one component's chain at a time against the marginal
    /// occasion costs induced by the rest of the incumbent, until a full
    /// pass brings no improvement.
    fn coordinate_descent(&mut self) {
        let Some((_, start)) = self.incumbent.clone() else { return };
        let dims = self.dims;
        let model = self.model;
        let mut schedule = start;
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < 6 {
            improved = false;
            rounds += 1;
            for c in 0..dims.k {
                for j in 0..dims.n {
                    // Usage of occasion arcs by everyone else.
                    let mut class_other = vec![false; dims.a_yz];
                    let mut farm_other = vec![0u32; dims.a_yz];
                    for (c2, comps) in schedule.months.iter().enumerate() {
                        let mut class_used = vec![false; dims.a_yz];
                        for (j2, months) in comps.iter().enumerate() {
                            if c2 == c && j2 == j {
                                continue;
                            }
                            for (u, t) in chain_arcs(model.window, months) {
                                if t <= model.window.end {
                                    class_used[model.yz_arcs.index(u, t)] = true;
                                }
                            }
                        }
                        for a in 0..dims.a_yz {
                            if class_used[a] {
                                if c2 == c {
                                    class_other[a] = true;
                                }
                                farm_other[a] += 1;
                            }
                        }
                    }
                    // Chain DP against marginal costs.
                    let w = dims.w;
                    let mut dp = vec![f64::INFINITY; w + 2];
                    let mut pred = vec![0u32; w + 2];
                    dp[0] = 0.0;
                    for u in 0..=w {
                        if !dp[u].is_finite() {
                            continue;
                        }
                        let su = model.window.start + u as u32;
                        for t in u + 1..=w + 1 {
                            let st = model.window.start + t as u32;
                            let mut cost = model.x_cost[c][j][model.x_arcs.index(su, st)];
                            if t <= w {
                                let a = model.yz_arcs.index(su, st);
                                if !class_other[a] {
                                    cost += model.y_cost[c][a];
                                    if farm_other[a] == 0 {
                                        cost += model.z_cost[a];
                                    }
                                }
                            }
                            if dp[u] + cost < dp[t] {
                                dp[t] = dp[u] + cost;
                                pred[t] = u as u32;
                            }
                        }
                    }
                    let mut months = Vec::new();
                    let mut node = w + 1;
                    while node != 0 {
                        let p = pred[node] as usize;
                        if node != w + 1 {
                            months.push(model.window.start + node as u32);
                        }
                        node = p;
                    }
                    months.reverse();
                    if months != schedule.months[c][j] {
                        let mut candidate = schedule.clone();
                        candidate.months[c][j] = months;
                        let old = model.evaluate(&schedule).unwrap_or(f64::INFINITY);
                        let new = model.evaluate(&candidate).unwrap_or(f64::INFINITY);
                        if new < old - 1e-12 {
                            schedule = candidate;
                            improved = true;
                        }
                    }
                }
            }
        }
        self.offer(schedule);
    }

    // -- Branch and bound -------------------------------------------------------

    fn run(&mut self) -> Solution {
        let dims = self.dims;
        let root = NodeConstraints::root(&dims);
        self.seed_incumbents(&root);
        let root_bound = self.ascend(&root, self.config.root_iterations);
        self.coordinate_descent();

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        if root_bound.is_finite() {
            heap.push(HeapNode { bound: root_bound, depth: 0, seq, constraints: root });
        }
        let mut nodes = 0u64;
        let mut best_open = root_bound;
        let mut limit_hit = false;

        while let Some(node) = heap.pop() {
            best_open = node.bound;
            let ub = self.ub();
            if ub.is_finite() && node.bound >= ub - self.gap_threshold(ub) {
                // Best-bound order: everything still open is no better.
                return self.finish(SolveStatus::Optimal, ub.min(node.bound), nodes.max(1));
            }
            nodes += 1;
            if nodes > self.config.node_limit || self.out_of_time() {
                limit_hit = true;
                break;
            }

            let mut bound = self.ascend(&node.constraints, self.config.node_iterations);
            bound = bound.max(node.bound);
            let ub = self.ub();
            if !bound.is_finite() || (ub.is_finite() && bound >= ub - self.gap_threshold(ub)) {
                continue;
            }
            if node.constraints.decided(&dims) {
                // Unique schedule: evaluate exactly and close the node.
                let schedule = ClassSchedule {
                    months: (0..dims.k)
                        .map(|c| {
                            (0..dims.n)
                                .map(|j| {
                                    (1..=dims.w)
                                        .filter(|&m| {
                                            node.constraints.required[c * dims.n + j].get(m - 1)
                                        })
                                        .map(|m| self.model.window.start + m as u32)
                                        .collect()
                                })
                                .collect()
                        })
                        .collect(),
                };
                self.offer(schedule);
                continue;
            }

            let (slot, month_idx) = self.pick_branch(&node.constraints);
            for force_in in [true, false] {
                let mut child = node.constraints.clone();
                if force_in {
                    child.required[slot].set(month_idx);
                } else {
                    child.forbidden[slot].set(month_idx);
                }
                seq += 1;
                heap.push(HeapNode { bound, depth: node.depth + 1, seq, constraints: child });
            }
        }

        if limit_hit {
            let bound = heap.iter().map(|n| n.bound).fold(best_open, f64::min);
            return self.finish(SolveStatus::FeasibleLimit, bound, nodes);
        }
        // Tree exhausted: the incumbent is exactly optimal, or the model is
        // infeasible (possible only with the availability row).
        match &self.incumbent {
            Some((obj, _)) => {
                let obj = *obj;
                self.finish(SolveStatus::Optimal, obj, nodes.max(1))
            }
            None => Solution {
                schedule: ClassSchedule::pure_cm(dims.k, dims.n),
                objective: f64::INFINITY,
                bound: f64::INFINITY,
                status: SolveStatus::Infeasible,
                nodes: nodes.max(1),
            },
        }
    }

    fn finish(&self, status: SolveStatus, bound: f64, nodes: u64) -> Solution {
        match &self.incumbent {
            Some((obj, schedule)) => Solution {
                schedule: schedule.clone(),
                objective: *obj,
                bound: bound.min(*obj),
                status,
                nodes,
            },
            None => Solution {
                schedule: ClassSchedule::pure_cm(self.dims.k, self.dims.n),
                objective: f64::INFINITY,
                bound,
                status: if status == SolveStatus::Optimal {
                    SolveStatus::Infeasible
                } else {
                    status
                },
                nodes,
            },
        }
    }

    /// Branching variable: the (component, month) with the most fractional
    /// visit frequency over the tail iterations; falls back to a month on
    /// the current path, then to the first undecided month.
    fn pick_branch(&self, constraints: &NodeConstraints) -> (usize, usize) {
        let dims = self.dims;
        let slots = dims.k * dims.n;
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..slots {
            for m in 0..dims.w {
                if !constraints.undecided(slot, m) {
                    continue;
                }
                let f = self.visit_freq[slot * dims.w + m].clamp(0.0, 1.0);
                let score = f.min(1.0 - f);
                if best.map(|(s, _, _)| score > s + 1e-12).unwrap_or(true) {
                    best = Some((score, slot, m));
                }
            }
        }
        match best {
            Some((score, slot, m)) if score > 1e-9 => (slot, m),
            _ => {
                // All tail paths agree: branch on an undecided month the
                // current paths actually use, else the first undecided.
                for slot in 0..slots {
                    for &month in &self.paths[slot] {
                        let m = (month - self.model.window.start - 1) as usize;
                        if constraints.undecided(slot, m) {
                            return (slot, m);
                        }
                    }
                }
                for slot in 0..slots {
                    for m in 0..dims.w {
                        if constraints.undecided(slot, m) {
                            return (slot, m);
                        }
                    }
                }
                unreachable!("pick_branch called on a fully decided node")
            }
        }
    }
}

