mod common;

use common::*;
use olahgp::objective::{path_length, CostWeights, CurrentField, EnvForcing, Objective};
use olahgp::planner::{
    greedy_plan, initial_guess_ngon, shift_warm_start, solve_ocp, static_plan, Plan, PlannerConfig,
};
use olahgp::{GpModel, GridDomain, Point2, PriorField, VarianceMode};
use rand::Rng;

const GAMMA: f64 = 2.0;

fn close(a: Point2, b: Point2) -> bool {
    (a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9
}

#[test]
fn ngon_examples() {
    let sq = initial_guess_ngon(Point2::ORIGIN, 4, 4800.0);
    let want = [(1200.0, 0.0), (0.0, 1200.0), (-1200.0, 0.0), (0.0, -1200.0)];
    for (p, w) in sq.iter().zip(want) {
        assert!(close(*p, Point2::new(w.0, w.1)), "{p:?}");
    }
    assert_eq!(initial_guess_ngon(Point2::ORIGIN, 1, 4800.0), vec![Point2::new(1200.0, 0.0)]);
    for p in initial_guess_ngon(Point2::new(300.0, 0.0), 7, 4800.0) {
        assert!((p.dist(Point2::ORIGIN) - 1200.0).abs() < 1e-9);
    }
}

fn plan_of(w: Vec<Point2>) -> Plan {
    Plan {
        waypoints: w,
        objective: 0.0,
        path_len: 0.0,
        iterations: 0,
        solve_time: 0.0,
        converged: true,
        kkt: 0.0,
    }
}

#[test]
fn shift_examples() {
    let (a, b, c) = (Point2::new(1.0, 0.0), Point2::new(2.0, 0.0), Point2::new(3.0, 0.0));
    assert_eq!(shift_warm_start(&plan_of(vec![a, b, c])), vec![b, c, c]);
    assert_eq!(shift_warm_start(&plan_of(vec![a])), vec![a]);
    for n in 1..8 {
        assert_eq!(shift_warm_start(&plan_of(vec![a; n])).len(), n);
    }
}

/// Start the solver would use: box projection then shrink toward r0.
fn feasible_start(cfg: &PlannerConfig, r0: Point2, warm: &[Point2]) -> Vec<Point2> {
    let r: Vec<Point2> = warm.iter().map(|&p| cfg.bounds.project(p)).collect();
    let len = path_length(r0, &r);
    if len <= cfg.l_max {
        return r;
    }
    let a = cfg.l_max / len * (1.0 - 1e-12);
    r.iter()
        .map(|p| Point2::new(r0.x + a * (p.x - r0.x), r0.y + a * (p.y - r0.y)))
        .collect()
}

fn check_plan(plan: &Plan, cfg: &PlannerConfig, r0: Point2) {
    assert_eq!(plan.waypoints.len(), cfg.horizon_n);
    assert!(plan.waypoints.iter().all(|&p| cfg.bounds.contains(p)));
    let len = path_length(r0, &plan.waypoints);
    assert!(len <= cfg.l_max + cfg.constraint_tol, "length {len} > {}", cfg.l_max);
    assert!((plan.path_len - len).abs() < 1e-9);
}

#[test]
fn plans_are_feasible_and_descend_with_forcing_and_warm_starts() {
    let grid = table1_grid();
    let mut rng = rng(77);
    for trial in 0..12 {
        let n_data = rng.gen_range(0..20);
        let model = random_model(&mut rng, grid, table1_kernel(), n_data);
        let mut cfg = PlannerConfig::new(grid);
        cfg.horizon_n = rng.gen_range(1..=5);
        cfg.l_max = rng.gen_range(500.0..8000.0);
        cfg.variance_mode = if trial % 2 == 0 { VarianceMode::Exact } else { VarianceMode::Bcm };
        let r0 = random_point(&mut rng, &grid);
        let forcing = (trial % 3 == 0).then(|| EnvForcing {
            current: CurrentField::new(
                olahgp::GridField::from_fn(4800.0, 16, |p| 0.3 * (p.x / 1000.0).sin()).unwrap(),
                olahgp::GridField::from_fn(4800.0, 16, |p| 0.2 * (p.y / 800.0).cos()).unwrap(),
            )
            .unwrap(),
            wind: [2.0, -1.0],
        });
        let warm: Vec<Point2> = (0..cfg.horizon_n).map(|_| random_point(&mut rng, &grid)).collect();
        let w = CostWeights::new(GAMMA);
        let plan = solve_ocp(&model, &cfg, w, forcing.as_ref(), r0, Some(&warm)).unwrap();
        check_plan(&plan, &cfg, r0);
        let obj = Objective::new(&model, r0, w, forcing, cfg.variance_mode, cfg.lookahead_noise_sd).unwrap();
        let f0 = obj.value(&feasible_start(&cfg, r0, &warm)).unwrap();
        assert!(plan.objective <= f0 + 1e-9, "trial {trial}: {} > {f0}", plan.objective);
        assert!((obj.value(&plan.waypoints).unwrap() - plan.objective).abs() < 1e-9);
    }
}

#[test]
fn warm_restart_is_a_fixed_point() {
    let grid = table1_grid();
    let mut rng = rng(8);
    let w = CostWeights::new(GAMMA);
    for _ in 0..5 {
        let model = random_model(&mut rng, grid, table1_kernel(), 10);
        let cfg = PlannerConfig::new(grid);
        let plan = solve_ocp(&model, &cfg, w, None, Point2::ORIGIN, None).unwrap();
        // re-solve from the answer alone, without the extra starts
        let again_cfg = PlannerConfig {
            multi_start: false,
            greedy_seed: false,
            ..cfg.clone()
        };
        let again = solve_ocp(&model, &again_cfg, w, None, Point2::ORIGIN, Some(&plan.waypoints)).unwrap();
        assert!(again.iterations <= 5, "{} iterations (kkt {})", again.iterations, plan.kkt);
        assert!((again.objective - plan.objective).abs() <= 1e-6);
    }
}

#[test]
fn zero_budget_keeps_every_waypoint_at_start() {
    let grid = table1_grid();
    let model = random_model(&mut rng(1), grid, table1_kernel(), 5);
    let mut cfg = PlannerConfig::new(grid);
    cfg.l_max = 0.0;
    let r0 = Point2::new(-500.0, 250.0);
    let plan = solve_ocp(&model, &cfg, CostWeights::new(GAMMA), None, r0, None).unwrap();
    assert_eq!(plan.waypoints, vec![r0; 5]);
    assert_eq!(plan.path_len, 0.0);
}

#[test]
fn coverage_saturates_budget_without_length_penalty() {
    let grid = table1_grid();
    let prior = PriorField::constant(grid, GAMMA + 0.5).unwrap();
    let model = GpModel::new(prior, table1_kernel()).unwrap();
    let mut w = CostWeights::new(GAMMA);
    w.lambda1 = 0.0;
    let mut rng = rng(10);
    for _ in 0..10 {
        let mut cfg = PlannerConfig::new(grid);
        cfg.l_max = rng.gen_range(1000.0..4000.0);
        let r0 = Point2::new(rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
        let plan = solve_ocp(&model, &cfg, w, None, r0, None).unwrap();
        assert!(
            (plan.path_len - cfg.l_max).abs() <= cfg.constraint_tol,
            "length {} budget {}",
            plan.path_len,
            cfg.l_max
        );
    }
}

#[test]
fn greedy_delegates_to_single_waypoint_solve() {
    let grid = table1_grid();
    let model = random_model(&mut rng(2), grid, table1_kernel(), 12);
    let cfg = PlannerConfig::new(grid);
    let w = CostWeights::new(GAMMA);
    let r0 = Point2::new(100.0, -100.0);
    let g = greedy_plan(&model, &cfg, w, None, r0, None).unwrap();
    let one = PlannerConfig {
        horizon_n: 1,
        ..cfg.clone()
    };
    let s = solve_ocp(&model, &one, w, None, r0, None).unwrap();
    assert_eq!(g.waypoints.len(), 1);
    assert_eq!(g.waypoints, s.waypoints);
    assert_eq!(g.objective.to_bits(), s.objective.to_bits());
}

#[test]
fn static_plan_ignores_data_and_scales() {
    let grid = table1_grid();
    let with_data = random_model(&mut rng(3), grid, table1_kernel(), 12);
    let prior_only = GpModel::new(with_data.prior().clone(), table1_kernel()).unwrap();
    let cfg = PlannerConfig::new(grid);
    let w = CostWeights::new(GAMMA);

    let s1 = static_plan(&with_data, &cfg, w, None, Point2::ORIGIN, 1).unwrap();
    let g = greedy_plan(&prior_only, &cfg, w, None, Point2::ORIGIN, None).unwrap();
    assert_eq!(s1.waypoints, g.waypoints);

    let big = PlannerConfig {
        l_max: cfg.l_max * 4.0,
        ..cfg.clone()
    };
    let s20 = static_plan(&with_data, &big, w, None, Point2::ORIGIN, 20).unwrap();
    check_plan(&s20, &PlannerConfig { horizon_n: 20, ..big }, Point2::ORIGIN);
    let n5 = solve_ocp(&prior_only, &cfg, w, None, Point2::ORIGIN, None).unwrap();
    assert!(s20.solve_time > n5.solve_time, "static {} s vs N=5 {} s", s20.solve_time, n5.solve_time);
}

#[test]
fn identical_inputs_give_identical_plans() {
    let grid = GridDomain::new(4800.0, 16, 32).unwrap();
    let model = random_model(&mut rng(4), grid, table1_kernel(), 6);
    let cfg = PlannerConfig::new(grid);
    let w = CostWeights::new(GAMMA);
    let a = solve_ocp(&model, &cfg, w, None, Point2::ORIGIN, None).unwrap();
    let b = solve_ocp(&model, &cfg, w, None, Point2::ORIGIN, None).unwrap();
    assert_eq!(a.waypoints, b.waypoints);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn two_opt_never_worsens() {
    let grid = table1_grid();
    let model = random_model(&mut rng(5), grid, table1_kernel(), 8);
    let cfg = PlannerConfig::new(grid);
    let w = CostWeights::new(GAMMA);
    let plain = solve_ocp(&model, &cfg, w, None, Point2::ORIGIN, None).unwrap();
    let with = solve_ocp(&model, &PlannerConfig { two_opt: true, ..cfg.clone() }, w, None, Point2::ORIGIN, None)
        .unwrap();
    assert!(with.objective <= plain.objective + 1e-12);
    check_plan(&with, &cfg, Point2::ORIGIN);
}
