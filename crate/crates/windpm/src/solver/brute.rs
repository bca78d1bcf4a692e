//! Exhaustive oracle for small instances.

use super::{SolveStatus, Solution};
use crate::model::{ClassSchedule, IlpModel};
use crate::{Error, Result};

/// Enumerates every per-component PM subset chain, evaluates the exact
/// objective (including the max-linked occasion costs), and returns the
/// minimum under the same lexicographic tie-break as the search solver.
///
/// Refuses instances with more than `10^7` candidate schedules.
pub fn brute_force_solve(model: &IlpModel) -> Result<Solution> {
    let k = model.classes.len();
    let n = model.components;
    let w = model.window.len() as usize;
    let slots = k * n;
    let bits = w.checked_mul(slots).ok_or_else(|| Error::Config("instance too large".into()))?;
    if bits > 23 {
        return Err(Error::Config(format!(
            "brute force refuses {slots} chains over {w} steps (> 10^7 schedules)"
        )));
    }
    let per_slot = 1u64 << w;
    let total = per_slot.pow(slots as u32);
    let mut best: Option<(f64, ClassSchedule)> = None;
    let mut masks = vec![0u64; slots];
    for counter in 0..total {
        let mut rest = counter;
        for m in masks.iter_mut() {
            *m = rest % per_slot;
            rest /= per_slot;
        }
        let schedule = ClassSchedule {
            months: (0..k)
                .map(|c| {
                    (0..n)
                        .map(|j| {
                            let mask = masks[c * n + j];
                            (0..w as u32)
                                .filter(|i| mask >> i & 1 == 1)
                                .map(|i| model.window.start + i + 1)
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        };
        let objective = model.evaluate(&schedule)?;
        if let Some(lhs) = model.availability_lhs(&schedule) {
            let rhs = model.availability.as_ref().unwrap().rhs;
            if lhs > rhs + 1e-6 * (1.0 + rhs.abs()) {
                continue;
            }
        }
        let tie = 1e-9 * (1.0 + objective.abs());
        let replace = match &best {
            Some((obj, sched)) => {
                objective < *obj - tie || (objective <= *obj + tie && schedule < *sched)
            }
            None => true,
        };
        if replace {
            let floor = best.map(|(obj, _)| obj).unwrap_or(f64::INFINITY);
            best = Some((objective.min(floor), schedule));
        }
    }
    match best {
        Some((objective, schedule)) => Ok(Solution {
            schedule,
            objective,
            bound: objective,
            status: SolveStatus::Optimal,
            nodes: total,
        }),
        None => Ok(Solution {
            schedule: ClassSchedule::pure_cm(k, n),
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            status: SolveStatus::Infeasible,
            nodes: total,
        }),
    }
}
