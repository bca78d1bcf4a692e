use super::*;
use crate::costs::{ComponentTypeSpec, McSettings, SharedCosts, TurbineClass};
use crate::revenue::{build_revenue_function, RevenueCurve};
use crate::stochastic::{SeedPolicy, WeibullParams};
use rand::{Rng, SeedableRng};

fn tiny_farm(turbines: u32, components: usize) -> FarmSpec {
    FarmSpec {
        turbines,
        components: (0..components)
            .map(|j| ComponentTypeSpec {
                name: format!("c{j}"),
                weibull: WeibullParams::new(60.0 + 10.0 * j as f64, 2.0).unwrap(),
                cm_total_cost: 150.0,
                cm_component_cost: 100.0,
                pm_cost: 20.0,
                cm_duration: 1.0,
            })
            .collect(),
        shared: SharedCosts { pm_duration: 1.0 / 6.0, turbine_occasion: 2.0, farm_occasion: 50.0 },
    }
}

fn constant_revenue(rate: f64, life: u32) -> crate::revenue::RevenueFunction {
    build_revenue_function(&RevenueCurve::new(vec![rate; life as usize]).unwrap(), 1.0).unwrap()
}

/// Hand-built tensor with deterministic pseudo-random nonnegative costs.
fn crafted_tensor(
    window: Window,
    classes: usize,
    components: usize,
    seed: u64,
) -> (CostTensor, FractionTensors) {
    let x_arcs = PairIndex::new(window.start, window.end + 1);
    let yz_arcs = PairIndex::new(window.start, window.end);
    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(seed);
    let mut x_vals = Vec::new();
    let mut p_comp = Vec::new();
    let mut p_turb = Vec::new();
    for _ in 0..classes {
        let mut per_class = Vec::new();
        let mut per_class_p = Vec::new();
        for _ in 0..components {
            per_class.push((0..x_arcs.len()).map(|_| rng.random::<f64>() * 100.0).collect());
            per_class_p.push((0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect());
        }
        x_vals.push(per_class);
        p_comp.push(per_class_p);
        p_turb.push((0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect());
    }
    let p_farm = (0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect();
    (
        CostTensor {
            variant: VariantSpec { kind: VariantKind::FullContract, window },
            arcs: x_arcs,
            values: x_vals,
        },
        FractionTensors { window, arcs: yz_arcs, p_component: p_comp, p_turbine: p_turb, p_farm },
    )
}

fn singleton_state(m: u32, components: usize) -> FarmState {
    FarmState {
        classes: (0..m)
            .map(|i| TurbineClass { members: vec![i], ages: vec![0.0; components] })
            .collect(),
    }
}

#[test]
fn polytope_dimensions_match_pair_counts() {
    // Three schedulable steps: 10 interval variables, 6 turbine-level and
    // 6 farm-level occasion variables.
    let window = Window::new(0, 3).unwrap();
    let model = build_polytope(window, &singleton_state(1, 1), 1).unwrap();
    assert_eq!(model.num_x(), 10);
    assert_eq!(model.num_y(), 6);
    assert_eq!(model.num_z(), 6);
    let mut rows = 0;
    let mut eq_rows = 0;
    model.for_each_row(|_, _, rel, _| {
        rows += 1;
        if rel == 0 {
            eq_rows += 1;
        }
    });
    // 1 departure + 3 balance rows, 6 x-y links, 6 y-z links.
    assert_eq!(eq_rows, 4);
    assert_eq!(rows, 16);
}

#[test]
fn pure_cm_point_is_feasible_and_costs_the_end_column() {
    let window = Window::new(2, 8).unwrap();
    let (tensor, fractions) = crafted_tensor(window, 2, 3, 9);
    let farm = tiny_farm(5, 3);
    let revenue = constant_revenue(20.0, 12);
    let state = FarmState {
        classes: vec![
            TurbineClass { members: vec![0, 1, 2], ages: vec![0.0; 3] },
            TurbineClass { members: vec![3, 4], ages: vec![0.0; 3] },
        ],
    };
    let model = build_polytope(window, &state, 3)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap();
    let pure = ClassSchedule::pure_cm(2, 3);
    let assignment = model.encode(&pure).unwrap();
    model.check_assignment(&assignment, 1e-12).unwrap();
    let expected: f64 = (0..2)
        .map(|c| {
            let mult = state.classes[c].size() as f64;
            (0..3)
                .map(|j| mult * tensor.values[c][j][tensor.arcs.index(2, 9)])
                .sum::<f64>()
        })
        .sum();
    assert!((model.evaluate(&pure).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn single_stop_adds_exactly_the_occasion_costs() {
    // One turbine, one component, fractions pinned to 1: scheduling PM at t
    // adds the turbine occasion cost, the PM downtime loss, and the farm
    // occasion cost on top of the interval costs.
    let window = Window::new(0, 6).unwrap();
    let (mut tensor, mut fractions) = crafted_tensor(window, 1, 1, 31);
    for p in fractions.p_turbine[0].iter_mut().chain(fractions.p_farm.iter_mut()) {
        *p = 1.0;
    }
    let farm = tiny_farm(1, 1);
    let revenue = constant_revenue(24.0, 12);
    tensor.values[0][0].iter_mut().for_each(|v| *v = 10.0);
    let model = build_polytope(window, &singleton_state(1, 1), 1)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap();
    let t = 4u32;
    let stop = ClassSchedule { months: vec![vec![vec![t]]] };
    let pure = ClassSchedule::pure_cm(1, 1);
    let diff = model.evaluate(&stop).unwrap() - model.evaluate(&pure).unwrap();
    // x-cost change: two 10.0 arcs replace one, +10; occasions: 2 + 4 + 50.
    let pm_loss = revenue.loss(t as f64, farm.shared.pm_duration);
    assert!((diff - (10.0 + 2.0 + pm_loss + 50.0)).abs() < 1e-9);
}

#[test]
fn decode_encode_roundtrip_on_random_chains() {
    let window = Window::new(3, 15).unwrap();
    let (tensor, fractions) = crafted_tensor(window, 2, 2, 5);
    let farm = tiny_farm(4, 2);
    let revenue = constant_revenue(20.0, 20);
    let state = FarmState {
        classes: vec![
            TurbineClass { members: vec![0, 3], ages: vec![0.0; 2] },
            TurbineClass { members: vec![1, 2], ages: vec![0.0; 2] },
        ],
    };
    let model = build_polytope(window, &state, 2)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap();
    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(77);
    for _ in 0..200 {
        let mut schedule = ClassSchedule::pure_cm(2, 2);
        for c in 0..2 {
            for j in 0..2 {
                for t in window.start + 1..=window.end {
                    if rng.random::<f64>() < 0.3 {
                        schedule.months[c][j].push(t);
                    }
                }
            }
        }
        let assignment = model.encode(&schedule).unwrap();
        model.check_assignment(&assignment, 1e-12).unwrap();
        assert_eq!(model.decode(&assignment).unwrap(), schedule);

        // Objective from explicit columns agrees with evaluate().
        let explicit: f64 = assignment
            .x
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(col, _)| model.objective_coeff(col))
            .chain(
                assignment
                    .y
                    .iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(a, _)| model.objective_coeff(model.num_x() + a)),
            )
            .chain(
                assignment
                    .z
                    .iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(a, _)| model.objective_coeff(model.num_x() + model.num_y() + a)),
            )
            .sum();
        assert!((explicit - model.evaluate(&schedule).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn invalid_schedules_are_rejected() {
    let window = Window::new(0, 6).unwrap();
    assert!(validate_schedule(&[vec![2, 2]], window).is_err());
    assert!(validate_schedule(&[vec![3, 1]], window).is_err());
    assert!(validate_schedule(&[vec![7]], window).is_err());
    assert!(validate_schedule(&[vec![0]], window).is_err());
    assert!(validate_schedule(&[vec![1, 4, 6]], window).is_ok());
}

#[test]
fn class_model_matches_expanded_singleton_model() {
    // Scheduling the class model and the exploded per-turbine model with
    // replicated tensors must price identical schedules identically.
    let window = Window::new(0, 10).unwrap();
    let m = 4u32;
    let farm = tiny_farm(m, 2);
    let revenue = constant_revenue(22.0, 16);
    let (tensor, fractions) = crafted_tensor(window, 1, 2, 13);
    let grouped = FarmState {
        classes: vec![TurbineClass { members: (0..m).collect(), ages: vec![0.0; 2] }],
    };
    let reduced = build_polytope(window, &grouped, 2)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap();

    let expanded_tensor = CostTensor {
        variant: tensor.variant,
        arcs: tensor.arcs.clone(),
        values: (0..m).map(|_| tensor.values[0].clone()).collect(),
    };
    let expanded_fractions = FractionTensors {
        window,
        arcs: fractions.arcs.clone(),
        p_component: (0..m).map(|_| fractions.p_component[0].clone()).collect(),
        p_turbine: (0..m).map(|_| fractions.p_turbine[0].clone()).collect(),
        p_farm: fractions.p_farm.clone(),
    };
    let full = build_polytope(window, &singleton_state(m, 2), 2)
        .unwrap()
        .attach_objective(&expanded_tensor, &expanded_fractions, &farm, &revenue)
        .unwrap();

    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(3);
    for _ in 0..50 {
        let mut class_schedule = ClassSchedule::pure_cm(1, 2);
        for j in 0..2 {
            for t in 1..=10u32 {
                if rng.random::<f64>() < 0.25 {
                    class_schedule.months[0][j].push(t);
                }
            }
        }
        let replicated = ClassSchedule {
            months: (0..m).map(|_| class_schedule.months[0].clone()).collect(),
        };
        let a = reduced.evaluate(&class_schedule).unwrap();
        let b = full.evaluate(&replicated).unwrap();
        assert!((a - b).abs() < 1e-9, "reduced {a} vs expanded {b}");
    }
}

#[test]
fn symmetry_reduce_requires_identical_turbines() {
    let identical = FarmState::from_ages(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
    let reduced = symmetry_reduce(&identical).unwrap();
    assert_eq!(reduced.classes.len(), 1);
    assert_eq!(reduced.classes[0].members, vec![0, 1]);
    let mixed = FarmState::from_ages(&[vec![0.0, 1.0], vec![2.0, 1.0]]);
    assert!(symmetry_reduce(&mixed).is_err());
    // A single turbine reduces to itself.
    let single = FarmState::from_ages(&[vec![0.5]]);
    let same = symmetry_reduce(&single).unwrap();
    assert_eq!(same, single);
}

#[test]
fn availability_row_scales_with_the_farm() {
    let life = 60u32;
    let farm = tiny_farm(3, 2);
    let revenue = constant_revenue(20.0, life);
    let mc = McSettings::new(400, SeedPolicy::new(1)).unwrap();
    let est = crate::costs::Estimator::new(&farm, &revenue, mc, 0.0).unwrap();
    let state = FarmState::fresh(&farm);
    let window = Window::new(0, 24).unwrap();
    let variant = VariantSpec { kind: VariantKind::FullContractProdAvail { epsilon: 0.5 }, window };
    let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
    let avail = est.build_availability(window, &state).unwrap();
    let model =
        build_model(&farm, &revenue, &state, &tensor, &fractions, Some(&avail)).unwrap();
    let row = model.availability.as_ref().unwrap();
    // Farm-wide bound: epsilon * turbines * window revenue.
    assert!((row.rhs - 0.5 * 3.0 * revenue.loss(0.0, 24.0)).abs() < 1e-9);
    // The pure-CM point's downtime must show up in the row's LHS.
    let pure = ClassSchedule::pure_cm(1, 2);
    let lhs = model.availability_lhs(&pure).unwrap();
    assert!(lhs > 0.0);
    // Epsilon = 1 must admit the pure-CM point for this mild farm.
    assert!(lhs <= row.rhs / 0.5);
}
