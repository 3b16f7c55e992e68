use heatplan::geometry::Pose;
use heatplan::scenario::{
    generate_scenario, scenario_from_str, scenario_to_string, GeneratorConfig, Scenario, ScenarioCategory,
    Trajectory, FRAME_DT, HORIZON_FRAMES,
};
use heatplan::sim::{
    evaluate_suite, make_ood_suite, simulate, CollisionKind, ExpertReplay, FullStop, OodConfig, OraclePlanner,
    PlanInput, Planner, SimConfig,
};

fn suite(c: ScenarioCategory, seeds: std::ops::Range<u64>) -> Vec<Scenario> {
    let g = GeneratorConfig::default();
    seeds.map(|s| generate_scenario(c, s, &g).unwrap()).collect()
}

/// Keeps the current heading and speed, ignoring everything else.
struct Straight;

impl Planner for Straight {
    fn name(&self) -> &str {
        "straight"
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        let v = input.speed.max(3.0);
        let poses = (1..=HORIZON_FRAMES)
            .map(|k| input.ego.compose(&Pose::new(v * FRAME_DT * k as f64, 0.0, 0.0)))
            .collect();
        Trajectory::new(poses, FRAME_DT).ok()
    }
}

/// Returns a non-finite waypoint.
struct Broken;

impl Planner for Broken {
    fn name(&self) -> &str {
        "broken"
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        Some(Trajectory {
            poses: vec![Pose::new(f64::NAN, input.ego.y, 0.0)],
            dt: FRAME_DT,
        })
    }
}

#[test]
fn expert_and_oracle_pass_lane_following() {
    let s = suite(ScenarioCategory::LaneFollowing, 300..306);
    let cfg = SimConfig::default();
    for p in [&ExpertReplay as &dyn Planner, &OraclePlanner::default()] {
        let r = evaluate_suite(&s, p, &cfg).unwrap();
        assert_eq!(r.passed, s.len(), "{}", r.summary_table());
        assert_eq!(r.collisions, 0);
    }
}

#[test]
fn ignoring_a_parked_car_is_an_at_fault_collision() {
    let s = suite(ScenarioCategory::Flexibility, 0..6);
    let r = evaluate_suite(&s, &Straight, &SimConfig::default()).unwrap();
    assert_eq!(r.passed, 0, "{}", r.summary_table());
    for row in &r.rows {
        assert!(row.collisions > row.rear_end, "{row:?}");
    }
}

#[test]
fn full_stop_is_stuck_not_at_fault() {
    let s = suite(ScenarioCategory::LaneFollowing, 0..6);
    let cfg = SimConfig::default();
    for sc in &s {
        let ep = simulate(sc, &FullStop, &cfg).unwrap();
        assert!(ep.metrics.stuck);
        assert!(!ep.metrics.pass);
        assert!(ep.metrics.collisions.iter().all(|c| c.kind == CollisionKind::RearEnd));
        assert!(ep.trace.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn non_finite_plans_are_faults() {
    let s = &suite(ScenarioCategory::LaneChanging, 1..2)[0];
    let ep = simulate(s, &Broken, &SimConfig::default()).unwrap();
    assert_eq!(ep.metrics.planner_faults, SimConfig::default().steps());
    assert!(!ep.metrics.pass);
}

#[test]
fn reloaded_scenarios_simulate_identically() {
    let s = suite(ScenarioCategory::Intersection, 7..9);
    let back: Vec<Scenario> = s
        .iter()
        .map(|x| scenario_from_str(&scenario_to_string(x)).unwrap())
        .collect();
    let cfg = SimConfig::default();
    let a = evaluate_suite(&s, &OraclePlanner::default(), &cfg).unwrap();
    let b = evaluate_suite(&back, &OraclePlanner::default(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ood_suite_is_deterministic_and_differs_from_source() {
    let s = suite(ScenarioCategory::LaneFollowing, 0..8);
    let cfg = OodConfig::default();
    let a = make_ood_suite(&s, &cfg).unwrap();
    assert_eq!(a, make_ood_suite(&s, &cfg).unwrap());
    assert!(!a.is_empty());
    for p in &a {
        let orig = s.iter().find(|o| o.name() == p.name()).unwrap();
        assert_ne!(p.ego.poses[5], orig.ego.poses[5]);
        assert_eq!(p.ego.poses.last(), orig.ego.poses.last());
    }
    let other = make_ood_suite(&s, &OodConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a, other);
    let r = evaluate_suite(&a, &ExpertReplay, &SimConfig::default()).unwrap();
    assert_eq!(r.total, a.len());
}
