//! Acceptance checks. Prints one PASS/FAIL line per criterion and a count
//! of failures. With `AMRFLEET_STRICT_ACCEPTANCE=1` any failure also makes
//! the process exit non-zero. Pass criterion numbers as arguments to run a
//! subset (`cargo test --test acceptance -- 3 7`).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use amrfleet::core::auction::{bid, ranking_accuracy, run_auction_from_depots, BidContext, BidMetric};
use amrfleet::core::baselines::{enumerate_optimal, EnumerationGuard};
use amrfleet::core::collision::{
    detect_conflicts, min_separation, penalty_integral, proximity_penalty, refine, RefineConfig, Track,
};
use amrfleet::core::dubins::{DubinsPath, Pose};
use amrfleet::core::energy::{route_energy_closed_form, FrictionField};
use amrfleet::core::model::{
    validate_partition, BatteryParams, ControlInput, CostWeights, LayoutKind, Robot, RobotParams, RobotState,
    Task, TaskId,
};
use amrfleet::core::physics::{integrate, OpenLoop, Trajectory, DEFAULT_DT};
use amrfleet::core::reschedule::DisruptionKind;
use amrfleet::core::scenario::{energy_distance_correlation, generate_scenario, DisruptionRates, Scenario, ScenarioSpec};
use amrfleet::core::stats::{average_ranks, mean, spearman, wilcoxon_signed_rank};
use amrfleet::core::trajectory::{optimize_route, PhaseContext, PhaseSpec, PlannerConfig, RouteTrajectory};
use amrfleet::core::Point;
use amrfleet::pipeline::{allocate, run_pipeline, Allocator, RescheduleMode, RunOptions, RunResult, Variant};
use amrfleet::report::savings_pct;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// A proptest runner with a fixed seed, so every corpus is the same on
/// every run.
fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn corpus<S: Strategy>(strategy: S, count: usize) -> Vec<S::Value> {
    let mut r = runner();
    (0..count).map(|_| strategy.new_tree(&mut r).expect("strategy").current()).collect()
}

fn scenario(spec: ScenarioSpec) -> Scenario {
    generate_scenario(&spec).expect("scenario generates")
}

fn all_ids(s: &Scenario) -> Vec<TaskId> {
    s.tasks.iter().map(|t| t.id).collect()
}

fn within(limit_s: u64, elapsed: Duration) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

// 1. Partition and determinism.

const ALLOCATORS: [Allocator; 6] = [
    Allocator::Auction(BidMetric::EnergyClosedForm),
    Allocator::Auction(BidMetric::EuclideanDistance),
    Allocator::Auction(BidMetric::ZoneAwareEnergy),
    Allocator::NearestTask,
    Allocator::NearestPair,
    Allocator::NearestRobot,
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let layouts = [LayoutKind::Grid, LayoutKind::Random, LayoutKind::Clustered];
    let cases = corpus((2usize..=20, 10usize..=100, 0usize..3, any::<bool>(), any::<u64>()), 200);
    let (mut invalid, mut drift, mut checked) = (0, 0, 0);
    for (n, m, layout, zoned, seed) in cases {
        let spec = ScenarioSpec {
            robots: n,
            tasks: m,
            layout: layouts[layout],
            mu_range: if zoned { (0.005, 0.08) } else { (0.02, 0.02) },
            seed,
            ..Default::default()
        };
        let (a, b) = (scenario(spec.clone()), scenario(spec));
        if format!("{a:?}") != format!("{b:?}") {
            drift += 1;
        }
        for allocator in ALLOCATORS {
            let first = allocate(&a, allocator).expect("allocation");
            let second = allocate(&b, allocator).expect("allocation");
            checked += 1;
            if !validate_partition(&first.0, &all_ids(&a)) {
                invalid += 1;
            }
            // Debug output prints every float exactly, so equal text is
            // bit-identical output.
            if format!("{first:?}") != format!("{second:?}") {
                drift += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        invalid == 0 && drift == 0 && within(120, elapsed),
        format!(
            "{checked} allocations over 200 scenarios, {invalid} invalid partitions, {drift} non-identical reruns, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

// 2. Auction optimality gap against assignment enumeration.

fn closed_form_cost(robot: &Robot, seq: &[&Task], field: &FrictionField) -> f64 {
    route_energy_closed_form(robot.depot, seq, &robot.params, field, false, false).expect("finite")
}

/// Orders a robot's tasks the way its auction sequence is built: from the
/// current end, the cheapest bid next (ties to the lower task id).
fn bid_order<'t>(robot: &Robot, tasks: &[&'t Task], ctx: &BidContext) -> Vec<&'t Task> {
    let mut left = tasks.to_vec();
    let mut at = robot.depot;
    let mut out = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let price = |t: &Task| bid(robot, at, t, BidMetric::EnergyClosedForm, ctx).expect("bid");
        let best = (0..left.len())
            .min_by(|a, b| price(left[*a]).total_cmp(&price(left[*b])).then(left[*a].id.cmp(&left[*b].id)))
            .expect("non-empty");
        let t = left.remove(best);
        at = t.dropoff;
        out.push(t);
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut gaps = Vec::new();
    let mut below = 0;
    for k in 0..50u64 {
        let s = scenario(ScenarioSpec {
            robots: 2 + (k % 2) as usize,
            tasks: 4 + (k % 5) as usize,
            layout: LayoutKind::Random,
            seed: 1000 + k,
            ..Default::default()
        });
        let ctx = BidContext::new(&s.friction, &s.weights, &s.planner);
        let (schedule, _) =
            run_auction_from_depots(&s.robots, &s.tasks, BidMetric::EnergyClosedForm, &ctx).expect("auction");
        let auction: f64 = s
            .robots
            .iter()
            .map(|r| {
                let seq: Vec<&Task> = schedule
                    .sequence(r.id)
                    .iter()
                    .map(|id| s.tasks.iter().find(|t| t.id == *id).expect("task"))
                    .collect();
                closed_form_cost(r, &seq, &s.friction)
            })
            .sum();
        let (_, best) = enumerate_optimal(&s.robots, &s.tasks, &EnumerationGuard::default(), |r, seq| {
            Ok(closed_form_cost(r, &bid_order(r, seq, &ctx), &s.friction))
        })
        .expect("enumeration");
        if auction < best {
            below += 1;
        }
        gaps.push((auction - best) / best);
    }
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let avg = mean(&gaps).unwrap_or(0.0);
    let elapsed = start.elapsed();
    Outcome::new(
        below == 0 && worst <= 0.10 && avg <= 0.05 && within(300, elapsed),
        format!(
            "50 instances, worst gap {:.2}%, mean gap {:.2}%, auction below enumeration {below} times, {:.1} s",
            worst * 100.0,
            avg * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

// 3. Savings over the nearest-task and nearest-robot baselines.

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let sizes = [5usize, 10, 15, 20];
    let variants = [("energy", Variant::auction(BidMetric::EnergyClosedForm)), ("distance", Variant::B3)];
    let options = RunOptions {
        disruptions: false,
        ..Default::default()
    };
    // savings[(variant, baseline)][size index] = per-seed savings, %.
    let mut savings: BTreeMap<(&str, &str), Vec<Vec<f64>>> = BTreeMap::new();
    for (si, &n) in sizes.iter().enumerate() {
        for seed in 0..5 {
            let s = scenario(ScenarioSpec {
                robots: n,
                tasks: 50,
                layout: LayoutKind::Random,
                seed,
                ..Default::default()
            });
            let energy = |v: Variant| run_pipeline(&s, v, &options).expect("run").fleet_energy;
            let (b1, b2) = (energy(Variant::B1), energy(Variant::B2));
            for (name, v) in variants {
                let e = energy(v);
                for (base, value) in [("b1", b1), ("b2", b2)] {
                    let per_size = savings.entry((name, base)).or_insert_with(|| vec![Vec::new(); sizes.len()]);
                    per_size[si].push(savings_pct(value, e));
                }
            }
        }
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, _) in variants {
        let vs_b1 = &savings[&(name, "b1")];
        let vs_b2 = &savings[&(name, "b2")];
        let all: Vec<f64> = vs_b1.iter().flatten().copied().collect();
        let pooled: Vec<f64> = vs_b1[1..].iter().flatten().copied().collect();
        let p = wilcoxon_signed_rank(&pooled).map(|w| w.p_value).unwrap_or(1.0);
        let means_b1: Vec<f64> = vs_b1.iter().map(|v| mean(v).unwrap_or(0.0)).collect();
        let means_b2: Vec<f64> = vs_b2.iter().map(|v| mean(v).unwrap_or(0.0)).collect();
        let ns: Vec<f64> = sizes.iter().map(|n| *n as f64).collect();
        let rho = spearman(&ns, &means_b1).unwrap_or(0.0);
        let ok = mean(&all).unwrap_or(0.0) > 0.0
            && mean(&pooled).unwrap_or(0.0) > 0.0
            && p < 0.05
            && means_b2.iter().all(|m| *m > 0.0)
            && rho > 0.0;
        pass &= ok;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join("/");
        notes.push(format!(
            "{name}: vs b1 {}% (mean {:.1}%, n>=10 p={p:.4}, rho={rho:.2}), vs b2 {}%",
            fmt(&means_b1),
            mean(&all).unwrap_or(0.0),
            fmt(&means_b2)
        ));
    }
    Outcome::new(
        pass,
        format!("{}; n=5/10/15/20, {:.1} s", notes.join("; "), start.elapsed().as_secs_f64()),
    )
}

// 4. Energy and distance bids under uniform and zoned friction.

fn criterion_4() -> Outcome {
    // Uniform friction, all payloads zero: the energy bid is a positive
    // multiple of the distance bid, so every round has the same winner.
    let (mut rounds, mut agree, mut same_schedule) = (0, 0, 0);
    for seed in 0..25 {
        let s = scenario(ScenarioSpec {
            robots: 5,
            tasks: 30,
            layout: LayoutKind::Random,
            payload_range: (0.0, 0.0),
            seed,
            ..Default::default()
        });
        let ctx = BidContext::new(&s.friction, &s.weights, &s.planner);
        let acc = ranking_accuracy(&s.robots, &s.tasks, BidMetric::EuclideanDistance, BidMetric::EnergyClosedForm, &ctx)
            .expect("accuracy");
        rounds += acc.rounds;
        agree += (acc.winner_accuracy * acc.rounds as f64).round() as usize;
        let (a, _) = run_auction_from_depots(&s.robots, &s.tasks, BidMetric::EuclideanDistance, &ctx).expect("auction");
        let (b, _) = run_auction_from_depots(&s.robots, &s.tasks, BidMetric::EnergyClosedForm, &ctx).expect("auction");
        if a.sequences == b.sequences {
            same_schedule += 1;
        }
    }
    let uniform_ok = agree == rounds && same_schedule == 25;

    let options = RunOptions {
        disruptions: false,
        ..Default::default()
    };
    let (mut wins, mut r_uniform, mut r_zoned, mut gaps) = (0, Vec::new(), Vec::new(), Vec::new());
    for seed in 0..25 {
        let spec = |mu_range| ScenarioSpec {
            robots: 10,
            tasks: 50,
            layout: LayoutKind::Random,
            mu_range,
            seed,
            ..Default::default()
        };
        let zoned = scenario(spec((0.005, 0.08)));
        let uniform = scenario(spec((0.02, 0.02)));
        let z = run_pipeline(&zoned, Variant::auction(BidMetric::ZoneAwareEnergy), &options).expect("run");
        let d = run_pipeline(&zoned, Variant::B3, &options).expect("run");
        if z.fleet_energy <= d.fleet_energy {
            wins += 1;
        }
        gaps.push(savings_pct(d.fleet_energy, z.fleet_energy));
        let r = |s: &Scenario| {
            energy_distance_correlation(&s.stations, &s.tasks, &s.robots[0].params, &s.friction, 200, seed)
                .expect("correlation")
        };
        r_zoned.push(r(&zoned));
        r_uniform.push(r(&uniform));
    }
    let (ru, rz) = (mean(&r_uniform).unwrap_or(0.0), mean(&r_zoned).unwrap_or(0.0));
    let zoned_ok = wins * 100 >= 60 * 25 && ru - rz >= 0.05;
    Outcome::new(
        uniform_ok && zoned_ok,
        format!(
            "uniform: {agree}/{rounds} rounds agree, {same_schedule}/25 identical schedules; zoned [0.005, 0.08]: zone-aware <= distance on {wins}/25 seeds (mean saving {:.2}%), r uniform {ru:.3} vs zoned {rz:.3}",
            mean(&gaps).unwrap_or(0.0)
        ),
    )
}

// 5. Closed-form bids against the trajectory oracle.

fn criterion_5() -> Outcome {
    // Winner accuracy is a per-round rate, so the bids are pooled over
    // enough small instances to give it more than a handful of rounds.
    let (mut err_sum, mut bids, mut agree, mut rounds) = (0.0, 0usize, 0.0, 0usize);
    for seed in 0..20 {
        let s = scenario(ScenarioSpec {
            robots: 3,
            tasks: 6,
            layout: LayoutKind::Random,
            seed: 500 + seed,
            ..Default::default()
        });
        let ctx = BidContext::new(&s.friction, &s.weights, &s.planner);
        let acc = ranking_accuracy(&s.robots, &s.tasks, BidMetric::EnergyClosedForm, BidMetric::ExactOcpOracle, &ctx)
            .expect("accuracy");
        err_sum += acc.mean_abs_rel_error.unwrap_or(0.0) * acc.bids_compared as f64;
        bids += acc.bids_compared;
        agree += acc.winner_accuracy * acc.rounds as f64;
        rounds += acc.rounds;
    }
    let err = err_sum / bids as f64;
    let accuracy = agree / rounds as f64;
    Outcome::new(
        bids >= 100 && (0.05..=0.40).contains(&err) && (0.75..=1.0).contains(&accuracy),
        format!(
            "{bids} bids over 20 scenarios: mean |relative error| {:.1}%, winner accuracy {:.3} over {rounds} rounds",
            err * 100.0,
            accuracy
        ),
    )
}

// 6. Rescheduling on scripted disruption streams.

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let rates = DisruptionRates {
        fault_rate: 0.02,
        priority_rate: 0.03,
        deviation_rate: 0.03,
        ..Default::default()
    };
    let (mut over_budget, mut invalid, mut bad_priority) = (0, 0, 0);
    let mut events: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut warm_total, mut cold_total, mut worst) = (0.0, 0.0, f64::NEG_INFINITY);
    for seed in 0..50 {
        let s = scenario(ScenarioSpec {
            robots: 4,
            tasks: 12,
            layout: LayoutKind::Random,
            disruptions: Some(rates),
            seed,
            ..Default::default()
        });
        let mut ids = all_ids(&s);
        ids.extend(s.disruptions.iter().filter_map(|e| e.task.as_ref().map(|t| t.id)));
        let run = |mode| -> RunResult {
            run_pipeline(
                &s,
                Variant::auction(BidMetric::EnergyClosedForm),
                &RunOptions {
                    mode,
                    ..Default::default()
                },
            )
            .expect("run")
        };
        let (warm, cold) = (run(RescheduleMode::Warm), run(RescheduleMode::Cold));
        for r in [&warm, &cold] {
            if r.reschedules() as u64 > r.zeno_budget {
                over_budget += 1;
            }
            if !validate_partition(&r.schedule, &ids) {
                invalid += 1;
            }
        }
        for e in &warm.event_log {
            *events.entry(e.kind.name()).or_default() += 1;
            if e.kind == DisruptionKind::PriorityTask && e.tasks_reassigned != 1 {
                bad_priority += 1;
            }
        }
        warm_total += warm.fleet_energy;
        cold_total += cold.fleet_energy;
        worst = worst.max(savings_pct(cold.fleet_energy, warm.fleet_energy) * -1.0);
    }
    let overhead = (warm_total / cold_total - 1.0) * 100.0;
    let elapsed = start.elapsed();
    let counts = events.iter().map(|(k, v)| format!("{v} {k}")).collect::<Vec<_>>().join(", ");
    Outcome::new(
        over_budget == 0 && invalid == 0 && bad_priority == 0 && overhead <= 15.0 && within(180, elapsed),
        format!(
            "50 streams ({counts}): {over_budget} over budget, {invalid} invalid partitions, {bad_priority} priority events not reassigning exactly 1; warm vs cold {overhead:+.2}% overall (worst stream {worst:+.2}%), {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

// 7. Physics invariants.

fn smooth_run(dt: f64) -> Trajectory {
    let (p, b) = (RobotParams::default(), BatteryParams::default());
    let policy = OpenLoop(|t: f64| ControlInput {
        steer: 0.1 * t.sin(),
        voltage: 8.0 + 2.0 * (0.5 * t).sin(),
        brake: 0.0,
    });
    let s0 = RobotState::at_rest(Point::new(0.0, 0.0), 0.0, 1.0);
    integrate(s0, &policy, &p, &b, &FrictionField::uniform(0.02), 5.0, (0.0, 20.0), dt).expect("integrates")
}

fn power_balance_error(samples: impl Iterator<Item = amrfleet::core::physics::PowerRecord>) -> f64 {
    samples
        .map(|p| (p.p_battery - p.p_demand - p.p_loss).abs() / p.p_battery.abs().max(p.p_demand.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let coarse = smooth_run(DEFAULT_DT);
    let fine = smooth_run(DEFAULT_DT / 2.0);
    let route_s = scenario(ScenarioSpec {
        robots: 1,
        tasks: 4,
        seed: 3,
        ..Default::default()
    });
    let robot = &route_s.robots[0];
    let seq: Vec<&Task> = route_s.tasks.iter().collect();
    let route = optimize_route(robot, &seq, &route_s.friction, &route_s.weights, None, &route_s.planner).expect("route");
    let balance = power_balance_error(
        coarse
            .samples
            .iter()
            .chain(&fine.samples)
            .chain(route.samples())
            .map(|s| s.power),
    );
    let (e1, e2) = (coarse.energy(), fine.energy());
    let convergence = (e1 - e2).abs() / e2.abs();

    let p = RobotParams::default();
    let voltage = 9.6;
    let c = ControlInput {
        steer: 0.0,
        voltage,
        brake: 0.0,
    };
    let s0 = RobotState::at_rest(Point::new(0.0, 0.0), 0.0, 1.0);
    let traj = integrate(
        s0,
        &OpenLoop(move |_| c),
        &p,
        &BatteryParams::default(),
        &FrictionField::uniform(0.0),
        0.0,
        (0.0, 30.0),
        DEFAULT_DT,
    )
    .expect("integrates");
    let expect = voltage * p.wheel_radius / p.motor_constant;
    let speed_err = (traj.final_state().expect("samples").speed - expect).abs() / expect;
    Outcome::new(
        balance < 1e-6 && convergence < 1e-3 && speed_err < 5e-3,
        format!(
            "power balance max {balance:.2e} (relative), energy dt vs dt/2 {:.4}%, steady speed error {:.3}%",
            convergence * 100.0,
            speed_err * 100.0
        ),
    )
}

// 8. Collision refinement on two crossing lanes.

fn lane(id: u32, from: (f64, f64), to: (f64, f64), field: &FrictionField) -> (Robot, Track) {
    let robot = Robot::new(id, Point::new(from.0, from.1));
    let heading = (to.1 - from.1).atan2(to.0 - from.0);
    let weights = CostWeights::default();
    let config = PlannerConfig::default();
    let ctx = PhaseContext {
        params: &robot.params,
        battery: &robot.battery,
        field,
        weights: &weights,
        workspace: None,
        config: &config,
    };
    let spec = PhaseSpec {
        start: Pose::new(from.0, from.1, heading),
        end: Pose::new(to.0, to.1, heading),
        payload: 0.0,
        v0: 0.0,
        vf: 0.0,
    };
    let mut route = RouteTrajectory {
        segments: vec![ctx.plan_phase(&spec, robot.battery.soc_max, 0.0).expect("phase")],
        ..Default::default()
    };
    route.recompute_totals();
    let track = Track { robot: robot.id, route };
    (robot, track)
}

fn criterion_8() -> Outcome {
    let o = Point::new(0.0, 0.0);
    let penalties = [
        proximity_penalty(o, Point::new(0.5, 0.0), 0.5),
        proximity_penalty(o, o, 0.5),
        proximity_penalty(o, Point::new(0.25, 0.0), 0.5),
    ];
    let penalty_ok = (penalties[0] - 0.0).abs() <= 1e-12
        && (penalties[1] - 1.0).abs() <= 1e-12
        && (penalties[2] - 0.25).abs() <= 1e-12;

    let field = FrictionField::uniform(0.02);
    let (ra, ta) = lane(1, (0.0, 5.0), (10.0, 5.0), &field);
    let (rb, tb) = lane(2, (5.0, 0.0), (5.0, 10.0), &field);
    let mut tracks = vec![ta, tb];
    let config = RefineConfig::default();
    let conflicts = detect_conflicts(&tracks, config.d_safe, config.dt).expect("detect").len();
    let (pen0, sep0) = (penalty_integral(&tracks, config.d_safe, config.dt), min_separation(&tracks, config.dt));
    refine(
        &mut tracks,
        &[ra, rb],
        &field,
        &CostWeights::default(),
        &PlannerConfig::default(),
        &config,
    )
    .expect("refine");
    let (pen1, sep1) = (penalty_integral(&tracks, config.d_safe, config.dt), min_separation(&tracks, config.dt));
    Outcome::new(
        penalty_ok && conflicts > 0 && pen1 < pen0 && sep1 > sep0,
        format!(
            "penalty at d_safe/contact/half = {}/{}/{}; crossing: {conflicts} conflict window(s), penalty integral {pen0:.4} -> {pen1:.4}, min separation {sep0:.3} -> {sep1:.3} m",
            penalties[0], penalties[1], penalties[2]
        ),
    )
}

// 9. Exact Wilcoxon p-values against enumeration of every sign pattern.

/// Two-sided p-value by listing all 2^n sign patterns of the non-zero
/// differences' ranks.
fn enumerated_p(diffs: &[f64]) -> Option<f64> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    // Average ranks by counting: rank = (#smaller) + (#equal + 1) / 2.
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let smaller = abs.iter().filter(|b| *b < a).count() as f64;
            let equal = abs.iter().filter(|b| *b == a).count() as f64;
            smaller + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if w <= observed {
            le += 1;
        }
        if w >= observed {
            ge += 1;
        }
    }
    Some((2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0))
}

fn criterion_9() -> Outcome {
    let value = prop_oneof![(-4i32..=4).prop_map(f64::from), -10.0..10.0f64];
    let cases = corpus(prop::collection::vec(value, 1..=10), 1000);
    let (mut worst, mut mismatched, mut degenerate) = (0.0f64, 0, 0);
    for diffs in &cases {
        match (wilcoxon_signed_rank(diffs), enumerated_p(diffs)) {
            (Ok(w), Some(p)) => worst = worst.max((w.p_value - p).abs()),
            (Err(_), None) => degenerate += 1,
            _ => mismatched += 1,
        }
    }
    // The implementation's own rank helper must agree with the counting
    // definition used above.
    let ranks_ok = cases.iter().all(|d| {
        let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
        average_ranks(&abs)
            .iter()
            .zip(&abs)
            .all(|(r, a)| *r == abs.iter().filter(|b| *b < a).count() as f64 + (abs.iter().filter(|b| *b == a).count() as f64 + 1.0) / 2.0)
    });
    Outcome::new(
        worst == 0.0 && mismatched == 0 && ranks_ok,
        format!("1000 cases (n <= 10, {degenerate} all-zero), max p-value discrepancy {worst:e}, {mismatched} mismatched outcomes"),
    )
}

// 10. Dubins path lengths.

fn criterion_10() -> Outcome {
    let rho = RobotParams::default().turn_radius();
    let pose = (-20.0..20.0f64, -20.0..20.0f64, -std::f64::consts::PI..std::f64::consts::PI);
    let cases = corpus((pose.clone(), pose), 1000);
    let mut short = 0;
    for ((ax, ay, ah), (bx, by, bh)) in &cases {
        let dl = DubinsPath::shortest(Pose::new(*ax, *ay, *ah), Pose::new(*bx, *by, *bh), rho).length();
        if dl < Point::new(*ax, *ay).distance(Point::new(*bx, *by)) {
            short += 1;
        }
    }
    let straight = DubinsPath::shortest(Pose::new(1.0, 2.0, 0.0), Pose::new(8.5, 2.0, 0.0), rho).length();
    let semicircle = DubinsPath::shortest(Pose::new(0.0, 0.0, 0.0), Pose::new(0.0, 2.0 * rho, std::f64::consts::PI), rho).length();
    let (e_straight, e_semi) = ((straight - 7.5).abs(), (semicircle - std::f64::consts::PI * rho).abs());
    Outcome::new(
        short == 0 && e_straight <= 1e-9 && e_semi <= 1e-9,
        format!("1000 pose pairs, {short} shorter than Euclidean; straight error {e_straight:e}, semicircle error {e_semi:e} (rho = {rho} m)"),
    )
}

const CRITERIA: [(&str, fn() -> Outcome); 10] = [
    ("partition and determinism", criterion_1),
    ("auction optimality gap", criterion_2),
    ("savings over baselines", criterion_3),
    ("bid-metric crossover", criterion_4),
    ("closed-form bid error", criterion_5),
    ("rescheduling", criterion_6),
    ("physics invariants", criterion_7),
    ("collision refinement", criterion_8),
    ("Wilcoxon exactness", criterion_9),
    ("Dubins lengths", criterion_10),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let outcome = check();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {number:>2} {verdict} {name}: {}", outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("{failed} criterion(s) failed");
    let strict = std::env::var("AMRFLEET_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
