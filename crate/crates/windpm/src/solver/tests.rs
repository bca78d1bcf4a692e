use super::*;
use crate::costs::{
    ComponentTypeSpec, CostTensor, Estimator, FarmSpec, FarmState, FractionTensors, McSettings,
    PairIndex, SharedCosts, VariantKind, VariantSpec, Window,
};
use crate::model::{build_model, build_polytope, ClassSchedule};
use crate::revenue::{build_revenue_function, RevenueCurve};
use crate::stochastic::{SeedPolicy, WeibullParams};
use rand::{Rng, SeedableRng};

fn constant_revenue(rate: f64, life: u32) -> crate::revenue::RevenueFunction {
    build_revenue_function(&RevenueCurve::new(vec![rate; life as usize]).unwrap(), 1.0).unwrap()
}

fn small_farm(turbines: u32, components: usize, scale: f64) -> FarmSpec {
    FarmSpec {
        turbines,
        components: (0..components)
            .map(|j| ComponentTypeSpec {
                name: format!("c{j}"),
                weibull: WeibullParams::new(scale + 5.0 * j as f64, 2.0).unwrap(),
                cm_total_cost: 160.0 + 10.0 * j as f64,
                cm_component_cost: 100.0,
                pm_cost: 22.0,
                cm_duration: 1.0,
            })
            .collect(),
        shared: SharedCosts { pm_duration: 1.0 / 6.0, turbine_occasion: 1.0, farm_occasion: 40.0 },
    }
}

/// Random instance with the structure of the real tensors but synthetic
/// nonnegative costs, plus the model built on it.
fn random_instance(window: Window, classes: &[u32], components: usize, seed: u64) -> crate::model::IlpModel {
    let x_arcs = PairIndex::new(window.start, window.end + 1);
    let yz_arcs = PairIndex::new(window.start, window.end);
    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(seed);
    let k = classes.len();
    let mut values = Vec::with_capacity(k);
    let mut p_component = Vec::with_capacity(k);
    let mut p_turbine = Vec::with_capacity(k);
    for _ in 0..k {
        let mut per_class = Vec::with_capacity(components);
        let mut per_class_p = Vec::with_capacity(components);
        for _ in 0..components {
            // Interval costs that grow with length keep instances realistic.
            let per_arc: Vec<f64> = x_arcs
                .pairs()
                .map(|(u, t)| (t - u) as f64 * (2.0 + 6.0 * rng.random::<f64>()))
                .collect();
            per_class.push(per_arc);
            per_class_p.push((0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect());
        }
        values.push(per_class);
        p_component.push(per_class_p);
        p_turbine.push((0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect());
    }
    let p_farm: Vec<f64> = (0..yz_arcs.len()).map(|_| rng.random::<f64>()).collect();
    let tensor = CostTensor {
        variant: VariantSpec { kind: VariantKind::FullContract, window },
        arcs: x_arcs,
        values,
    };
    let fractions = FractionTensors { window, arcs: yz_arcs, p_component, p_turbine, p_farm };
    let farm = small_farm(classes.iter().sum(), components, 60.0);
    let revenue = constant_revenue(20.0, window.end + 2);
    let mut next = 0u32;
    let state = FarmState {
        classes: classes
            .iter()
            .map(|&size| {
                let members: Vec<u32> = (next..next + size).collect();
                next += size;
                crate::costs::TurbineClass { members, ages: vec![0.0; components] }
            })
            .collect(),
    };
    build_polytope(window, &state, components)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap()
}

#[test]
fn no_failure_instance_solves_to_pure_cm_at_the_root() {
    let farm = FarmSpec {
        turbines: 2,
        components: vec![ComponentTypeSpec {
            name: "granite".into(),
            weibull: WeibullParams::new(1.0e9, 3.0).unwrap(),
            cm_total_cost: 100.0,
            cm_component_cost: 80.0,
            pm_cost: 10.0,
            cm_duration: 1.0,
        }],
        shared: SharedCosts { pm_duration: 1.0 / 6.0, turbine_occasion: 0.0, farm_occasion: 50.0 },
    };
    let revenue = constant_revenue(25.0, 36);
    let est = Estimator::new(&farm, &revenue, McSettings::new(200, SeedPolicy::new(1)).unwrap(), 0.0)
        .unwrap();
    let state = FarmState::fresh(&farm);
    let variant = VariantSpec { kind: VariantKind::FullContract, window: Window::new(0, 36).unwrap() };
    let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
    let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
    let solution = solve_exact(&model, &SolverConfig::default()).unwrap();
    assert_eq!(solution.status, SolveStatus::Optimal);
    assert!(solution.objective.abs() < 1e-9);
    assert_eq!(solution.schedule, ClassSchedule::pure_cm(1, 1));
    assert_eq!(solution.nodes, 1, "no branching needed");
}

#[test]
fn matches_brute_force_on_random_instances() {
    for seed in 0..25u64 {
        let window = Window::new(0, 6).unwrap();
        let model = random_instance(window, &[1], 2, seed);
        let exact = solve_exact(&model, &SolverConfig::default()).unwrap();
        let oracle = brute_force_solve(&model).unwrap();
        let tol = 1e-9 * (1.0 + oracle.objective.abs());
        assert!(
            (exact.objective - oracle.objective).abs() <= tol,
            "seed {seed}: {} vs oracle {}",
            exact.objective,
            oracle.objective
        );
        assert_eq!(exact.schedule, oracle.schedule, "seed {seed}");
        assert_eq!(exact.status, SolveStatus::Optimal);
        // The relaxation bound never exceeds the optimum.
        assert!(lp_relax(&model) <= oracle.objective + tol, "seed {seed}");
    }
}

#[test]
fn matches_brute_force_with_two_classes() {
    for seed in 100..110u64 {
        let window = Window::new(3, 8).unwrap();
        let model = random_instance(window, &[2, 1], 1, seed);
        let exact = solve_exact(&model, &SolverConfig::default()).unwrap();
        let oracle = brute_force_solve(&model).unwrap();
        let tol = 1e-9 * (1.0 + oracle.objective.abs());
        assert!((exact.objective - oracle.objective).abs() <= tol, "seed {seed}");
        assert_eq!(exact.schedule, oracle.schedule, "seed {seed}");
    }
}

#[test]
fn search_is_deterministic() {
    let window = Window::new(0, 8).unwrap();
    let model = random_instance(window, &[2], 2, 77);
    let a = solve_exact(&model, &SolverConfig::default()).unwrap();
    let b = solve_exact(&model, &SolverConfig::default()).unwrap();
    assert_eq!(a.schedule, b.schedule);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn availability_row_binds_and_infeasibility_is_detected() {
    let farm = small_farm(2, 1, 30.0);
    let revenue = constant_revenue(25.0, 30);
    let est = Estimator::new(&farm, &revenue, McSettings::new(400, SeedPolicy::new(5)).unwrap(), 0.0)
        .unwrap();
    let state = FarmState::fresh(&farm);
    let window = Window::new(0, 12).unwrap();
    let base = VariantSpec { kind: VariantKind::FullContract, window };
    let (tensor, fractions) = est.build_cost_tensor(base, &state).unwrap();
    let avail = est.build_availability(window, &state).unwrap();
    let plain = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
    let plain_solution = solve_exact(&plain, &SolverConfig::default()).unwrap();

    // A slack bound leaves the optimum unchanged.
    let relaxed = build_polytope(window, &state, 1)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap()
        .attach_availability(
            crate::model::AvailabilityKind::Production,
            1.0,
            &avail,
            &fractions,
            &farm,
            &revenue,
        )
        .unwrap();
    let relaxed_solution = solve_exact(&relaxed, &SolverConfig::default()).unwrap();
    assert!((relaxed_solution.objective - plain_solution.objective).abs() < 1e-9);
    assert_eq!(relaxed_solution.schedule, plain_solution.schedule);

    // A vanishing allowance admits no schedule: failures are certain.
    let choked = build_polytope(window, &state, 1)
        .unwrap()
        .attach_objective(&tensor, &fractions, &farm, &revenue)
        .unwrap()
        .attach_availability(
            crate::model::AvailabilityKind::Production,
            1e-9,
            &avail,
            &fractions,
            &farm,
            &revenue,
        )
        .unwrap();
    let infeasible = solve_exact(&choked, &SolverConfig::default()).unwrap();
    assert_eq!(infeasible.status, SolveStatus::Infeasible);
}

#[test]
fn node_limit_reports_a_gap() {
    let window = Window::new(0, 10).unwrap();
    let model = random_instance(window, &[2, 1], 2, 11);
    let config = SolverConfig { node_limit: 1, node_iterations: 5, root_iterations: 10, ..Default::default() };
    let solution = solve_exact(&model, &config).unwrap();
    if solution.status == SolveStatus::FeasibleLimit {
        assert!(solution.gap() >= 0.0);
        assert!(solution.bound <= solution.objective + 1e-9);
    }
}

#[test]
fn mps_roundtrip_reproduces_the_model() {
    let window = Window::new(0, 5).unwrap();
    let model = random_instance(window, &[2], 2, 3);
    let mut buf = Vec::new();
    export_mps(&model, &mut buf, "roundtrip").unwrap();
    let parsed = parse_mps(std::str::from_utf8(&buf).unwrap()).unwrap();
    mps::verify_roundtrip(&model, &parsed).unwrap();
}

#[test]
fn mps_golden_snapshot_is_stable() {
    let window = Window::new(0, 2).unwrap();
    let model = random_instance(window, &[1], 1, 2024);
    let mut buf = Vec::new();
    export_mps(&model, &mut buf, "tiny").unwrap();
    let written = String::from_utf8(buf).unwrap();
    let golden = include_str!("golden_tiny.mps");
    assert_eq!(written, golden, "MPS layout drifted from the golden snapshot");
}

#[test]
fn malformed_mps_is_rejected() {
    assert!(parse_mps("COLUMNS\n    x  COST  nan?\n").is_err());
    assert!(parse_mps("ROWS\n Q  bad\nENDATA\n").is_err());
    assert!(parse_mps("NAME  x\nENDATA\n").is_err(), "objective row required");
}

#[test]
fn doubling_pm_costs_never_adds_stops() {
    // Regression harness on a small instance: with doubled per-component
    // PM costs the optimal stop count cannot grow.
    let farm = small_farm(1, 2, 40.0);
    let mut dearer = farm.clone();
    for c in &mut dearer.components {
        c.pm_cost *= 2.0;
    }
    let revenue = constant_revenue(25.0, 40);
    let window = Window::new(0, 24).unwrap();
    let variant = VariantSpec { kind: VariantKind::FullContract, window };
    let mc = McSettings::new(2000, SeedPolicy::new(9)).unwrap();
    let count_stops = |farm: &FarmSpec| {
        let est = Estimator::new(farm, &revenue, mc, 0.0).unwrap();
        let state = FarmState::fresh(farm);
        let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
        let model = build_model(farm, &revenue, &state, &tensor, &fractions, None).unwrap();
        let solution = solve_exact(&model, &SolverConfig::default()).unwrap();
        assert_eq!(solution.status, SolveStatus::Optimal);
        let mut months: Vec<u32> =
            solution.schedule.months[0].iter().flatten().copied().collect();
        months.sort_unstable();
        months.dedup();
        months.len()
    };
    assert!(count_stops(&dearer) <= count_stops(&farm));
}

#[test]
#[ignore]
fn probe_case_study_scale() {
    let farm = crate::costs::tests::reference_farm(10);
    let curve = RevenueCurve::default_seasonal(240);
    let revenue = build_revenue_function(&curve, 1.0).unwrap();
    let t0 = std::time::Instant::now();
    let est = Estimator::new(&farm, &revenue, McSettings::new(10_000, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
    let state = FarmState::fresh(&farm);
    let variant = VariantSpec { kind: VariantKind::FullContract, window: Window::new(0, 120).unwrap() };
    let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
    eprintln!("tensor build: {:.1}s", t0.elapsed().as_secs_f64());
    let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
    let t1 = std::time::Instant::now();
    let cfg = SolverConfig { node_limit: 3000, ..Default::default() };
    let sol = solve_exact(&model, &cfg).unwrap();
    eprintln!("solve: {:.1}s status={:?} nodes={} obj={:.1} bound={:.1} gap={:.4}%",
        t1.elapsed().as_secs_f64(), sol.status, sol.nodes, sol.objective, sol.bound,
        100.0 * sol.gap() / sol.objective);
    eprintln!("schedule: {:?}", sol.schedule.months);
}

#[test]
#[ignore]
fn probe_end_of_life_scale() {
    let farm = crate::costs::tests::reference_farm(10);
    let curve = RevenueCurve::default_seasonal(240);
    let revenue = build_revenue_function(&curve, 1.0).unwrap();
    let t0 = std::time::Instant::now();
    let est = Estimator::new(&farm, &revenue, McSettings::new(10_000, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
    let state = FarmState::fresh(&farm);
    for delta in [0.0, 1.0] {
        let variant = VariantSpec { kind: VariantKind::EndOfLife { delta }, window: Window::new(0, 240).unwrap() };
        let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
        let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
        let t1 = std::time::Instant::now();
        let cfg = SolverConfig { node_limit: 3000, ..Default::default() };
        let sol = solve_exact(&model, &cfg).unwrap();
        eprintln!("delta={delta} est+solve: {:.1}s/{:.1}s status={:?} nodes={} obj={:.1} gap={:.4}%",
            t0.elapsed().as_secs_f64(), t1.elapsed().as_secs_f64(), sol.status, sol.nodes, sol.objective,
            100.0 * sol.gap() / sol.objective);
        eprintln!("  gearbox: {:?}", sol.schedule.months[0][2]);
        eprintln!("  rotor:   {:?}", sol.schedule.months[0][0]);
    }
}

#[test]
#[ignore]
fn probe_structures() {
    let farm = crate::costs::tests::reference_farm(10);
    let curve = RevenueCurve::default_seasonal(240);
    let revenue = build_revenue_function(&curve, 1.0).unwrap();
    let est = Estimator::new(&farm, &revenue, McSettings::new(10_000, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
    let state = FarmState::fresh(&farm);
    for delta in [0.0f64, 1.0] {
        let variant = VariantSpec { kind: VariantKind::EndOfLife { delta }, window: Window::new(0, 240).unwrap() };
        let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
        let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
        if delta == 0.0 {
            let paper = ClassSchedule { months: vec![vec![
                vec![49,99,148,198], vec![49,99,148,198], vec![39,78,119,159,198], vec![49,99,148,198]]] };
            let aligned5 = ClassSchedule { months: vec![vec![
                vec![39,78,119,158,197]; 4]] };
            let aligned4 = ClassSchedule { months: vec![vec![
                vec![49,99,148,198]; 4]] };
            eprintln!("d0 paper-interleaved: {:.1}", model.evaluate(&paper).unwrap());
            eprintln!("d0 aligned-5:         {:.1}", model.evaluate(&aligned5).unwrap());
            eprintln!("d0 aligned-4:         {:.1}", model.evaluate(&aligned4).unwrap());
        } else {
            let paper = ClassSchedule { months: vec![vec![vec![90,181]; 4]] };
            let mine = ClassSchedule { months: vec![vec![
                vec![87,171], vec![87,171], vec![87,184], vec![87,171]]] };
            eprintln!("d1 paper-aligned-2: {:.1}", model.evaluate(&paper).unwrap());
            eprintln!("d1 solver-answer:   {:.1}", model.evaluate(&mine).unwrap());
        }
    }
}

#[test]
#[ignore]
fn probe_interval_economics() {
    let farm = crate::costs::tests::reference_farm(10);
    let curve = RevenueCurve::default_seasonal(240);
    let revenue = build_revenue_function(&curve, 1.0).unwrap();
    let est = Estimator::new(&farm, &revenue, McSettings::new(10_000, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
    eprintln!("pure CM [0,120] farm total: {:.0}", est.pure_cm_total(Window::new(0,120).unwrap(), &FarmState::fresh(&farm)).unwrap());
    for (j, name) in ["rotor","bearing","gearbox","generator"].iter().enumerate() {
        let lambda = farm.components[j].pm_cost;
        let mut best = (0u32, f64::INFINITY);
        for len in 10..=120u32 {
            let phi = est.phi(0, j as u32, 0, len, 0.0);
            let p = est.p_component(0, j as u32, 0, len, 0.0);
            let per_month = (phi + lambda * p) / len as f64;
            if per_month < best.1 { best = (len, per_month); }
        }
        eprintln!("{name}: min per-month interval cost at len={} ({:.3} k$/mo)", best.0, best.1);
    }
}

#[test]
#[ignore]
fn probe_curve_and_seed_sensitivity() {
    let farm = crate::costs::tests::reference_farm(10);
    // Candidate curve shapes, all anchored at 15 (Feb) / 30 (Sep).
    let cosine = RevenueCurve::default_seasonal(240);
    let flat_winter: Vec<f64> = {
        // Dec..Mar pinned at the floor, cosine ramps between.
        let year = [15.5, 15.0, 15.0, 17.0, 20.5, 24.0, 27.0, 29.0, 30.0, 27.0, 21.0, 16.0];
        (0..240).map(|t| year[(t % 12) as usize]).collect()
    };
    let curves: Vec<(&str, RevenueCurve)> = vec![
        ("cosine", cosine),
        ("flat_winter", RevenueCurve::new(flat_winter).unwrap()),
    ];
    for (name, curve) in &curves {
        let revenue = build_revenue_function(curve, 1.0).unwrap();
        for seed in [20240601u64, 7, 99] {
            let est = Estimator::new(&farm, &revenue, McSettings::new(10_000, SeedPolicy::new(seed)).unwrap(), 0.0).unwrap();
            let state = FarmState::fresh(&farm);
            let variant = VariantSpec { kind: VariantKind::EndOfLife { delta: 0.0 }, window: Window::new(0, 240).unwrap() };
            let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
            let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
            let cfg = SolverConfig { node_limit: 2000, ..Default::default() };
            let sol = solve_exact(&model, &cfg).unwrap();
            let stops: std::collections::BTreeSet<u32> = sol.schedule.months[0].iter().flatten().copied().collect();
            eprintln!("{name} seed={seed}: obj={:.0} status={:?} gearbox={:?} rotor={:?} farm_stops={}",
                sol.objective, sol.status, sol.schedule.months[0][2], sol.schedule.months[0][0], stops.len());
        }
    }
}

#[test]
#[ignore]
fn probe_high_m_limit() {
    let farm = crate::costs::tests::reference_farm(10);
    let curve = RevenueCurve::default_seasonal(240);
    let revenue = build_revenue_function(&curve, 1.0).unwrap();
    for (m, seed) in [(100_000u32, 20240601u64), (100_000, 7)] {
        let t0 = std::time::Instant::now();
        let est = Estimator::new(&farm, &revenue, McSettings::new(m, SeedPolicy::new(seed)).unwrap(), 0.0).unwrap();
        let state = FarmState::fresh(&farm);
        let variant = VariantSpec { kind: VariantKind::EndOfLife { delta: 0.0 }, window: Window::new(0, 240).unwrap() };
        let (tensor, fractions) = est.build_cost_tensor(variant, &state).unwrap();
        let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
        let cfg = SolverConfig { node_limit: 2000, ..Default::default() };
        let sol = solve_exact(&model, &cfg).unwrap();
        let paper = ClassSchedule { months: vec![vec![
            vec![49,99,148,198], vec![49,99,148,198], vec![39,78,119,159,198], vec![49,99,148,198]]] };
        eprintln!("M={m} seed={seed} ({:.0}s): obj={:.0} {:?} gearbox={:?} rotor={:?} | paper-struct={:.0}",
            t0.elapsed().as_secs_f64(), sol.objective, sol.status, sol.schedule.months[0][2], sol.schedule.months[0][0],
            model.evaluate(&paper).unwrap());
    }
}

#[test]
#[ignore]
fn probe_full_matrix() {
    let farm = crate::costs::tests::reference_farm(10);
    let flat_winter: Vec<f64> = {
        let year = [15.5, 15.0, 15.0, 17.0, 20.5, 24.0, 27.0, 29.0, 30.0, 27.0, 21.0, 16.0];
        (0..240).map(|t| year[(t % 12) as usize]).collect()
    };
    let curves: Vec<(&str, RevenueCurve)> = vec![
        ("cosine", RevenueCurve::default_seasonal(240)),
        ("flatw", RevenueCurve::new(flat_winter).unwrap()),
    ];
    let m = 100_000u32;
    for (name, curve) in &curves {
        let revenue = build_revenue_function(curve, 1.0).unwrap();
        let est = Estimator::new(&farm, &revenue, McSettings::new(m, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
        let state = FarmState::fresh(&farm);
        // Case study 1: 120-month full contract.
        let w120 = Window::new(0, 120).unwrap();
        let (tensor, fractions) = est
            .build_cost_tensor(VariantSpec { kind: VariantKind::FullContract, window: w120 }, &state)
            .unwrap();
        let model = build_model(&farm, &revenue, &state, &tensor, &fractions, None).unwrap();
        let sol = solve_exact(&model, &SolverConfig { node_limit: 2000, ..Default::default() }).unwrap();
        let stops: std::collections::BTreeSet<u32> = sol.schedule.months[0].iter().flatten().copied().collect();
        eprintln!("{name} CS1: obj={:.0} stops={:?} {:?}", sol.objective, stops, sol.status);
        // Doubled PM costs.
        let mut dearer = farm.clone();
        for c in &mut dearer.components { c.pm_cost *= 2.0; }
        let est2 = Estimator::new(&dearer, &revenue, McSettings::new(m, SeedPolicy::new(20240601)).unwrap(), 0.0).unwrap();
        let (tensor2, fractions2) = est2
            .build_cost_tensor(VariantSpec { kind: VariantKind::FullContract, window: w120 }, &state)
            .unwrap();
        let model2 = build_model(&dearer, &revenue, &state, &tensor2, &fractions2, None).unwrap();
        let sol2 = solve_exact(&model2, &SolverConfig { node_limit: 2000, ..Default::default() }).unwrap();
        let stops2: std::collections::BTreeSet<u32> = sol2.schedule.months[0].iter().flatten().copied().collect();
        eprintln!("{name} CS1-doubled: obj={:.0} stops={:?} {:?}", sol2.objective, stops2, sol2.status);
        // Insurance grid on the end-of-life model.
        let w240 = Window::new(0, 240).unwrap();
        for delta in [0.0, 0.4, 1.0] {
            let (t3, f3) = est
                .build_cost_tensor(VariantSpec { kind: VariantKind::EndOfLife { delta }, window: w240 }, &state)
                .unwrap();
            let m3 = build_model(&farm, &revenue, &state, &t3, &f3, None).unwrap();
            let s3 = solve_exact(&m3, &SolverConfig { node_limit: 2000, ..Default::default() }).unwrap();
            let st3: std::collections::BTreeSet<u32> = s3.schedule.months[0].iter().flatten().copied().collect();
            eprintln!("{name} EOL d={delta}: obj={:.0} nstops={} gearbox={:?} rotor={:?} {:?}",
                s3.objective, st3.len(), s3.schedule.months[0][2], s3.schedule.months[0][0], s3.status);
        }
    }
}
