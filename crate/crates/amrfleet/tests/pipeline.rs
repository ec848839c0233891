use amrfleet::core::auction::BidMetric;
use amrfleet::core::model::{validate_partition, LayoutKind};
use amrfleet::core::reschedule::{DisruptionEvent, DisruptionKind};
use amrfleet::core::scenario::{generate_scenario, Scenario, ScenarioSpec};
use amrfleet::core::trajectory::optimize_route;
use amrfleet::core::{Point, RobotId, Task, TaskId};
use amrfleet::pipeline::{run_pipeline, RescheduleMode, RunError, RunOptions, Variant};

fn scenario(robots: usize, tasks: usize, seed: u64) -> Scenario {
    generate_scenario(&ScenarioSpec {
        robots,
        tasks,
        layout: LayoutKind::Random,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn energy() -> Variant {
    Variant::auction(BidMetric::EnergyClosedForm)
}

fn all_ids(s: &Scenario) -> Vec<TaskId> {
    s.tasks.iter().map(|t| t.id).collect()
}

#[test]
fn single_robot_energy_is_its_route_energy() {
    let s = scenario(1, 6, 3);
    let r = run_pipeline(&s, energy(), &RunOptions::default()).unwrap();
    assert!(r.event_log.is_empty());
    let robot = &s.robots[0];
    let seq: Vec<&Task> = r
        .schedule
        .sequence(robot.id)
        .iter()
        .map(|id| s.tasks.iter().find(|t| t.id == *id).unwrap())
        .collect();
    let route = optimize_route(robot, &seq, &s.friction, &s.weights, Some(&s.workspace), &s.planner).unwrap();
    assert_eq!(r.fleet_energy, route.total_energy);
    assert_eq!(r.tasks_served, 6);
}

#[test]
fn scripted_fault_is_one_reschedule() {
    let mut s = scenario(3, 9, 5);
    s.disruptions = vec![DisruptionEvent::fault(8.0, RobotId(1))];
    let r = run_pipeline(&s, energy(), &RunOptions::default()).unwrap();
    let faults: Vec<_> = r.event_log.iter().filter(|e| e.kind == DisruptionKind::Fault).collect();
    assert_eq!(faults.len(), 1);
    assert_eq!(faults[0].robot, Some(RobotId(1)));
    assert!(validate_partition(&r.schedule, &all_ids(&s)));
    assert!(r.reschedules() as u64 <= r.zeno_budget);
    assert_eq!(r.tasks_served, r.tasks_total);
}

#[test]
fn priority_task_reassigns_exactly_one() {
    let mut s = scenario(3, 8, 6);
    let id = s.next_task_id();
    let task = Task::new(id, Point::new(6.0, 6.0), Point::new(14.0, 12.0), 5.0);
    s.disruptions = vec![DisruptionEvent::priority(10.0, task)];
    for mode in [RescheduleMode::Warm, RescheduleMode::Cold] {
        let opts = RunOptions {
            mode,
            ..Default::default()
        };
        let r = run_pipeline(&s, energy(), &opts).unwrap();
        assert_eq!(r.event_log.len(), 1);
        if mode == RescheduleMode::Warm {
            assert_eq!(r.event_log[0].tasks_reassigned, 1);
        }
        let mut ids = all_ids(&s);
        ids.push(TaskId(id));
        assert!(validate_partition(&r.schedule, &ids));
        assert_eq!(r.tasks_served, 9);
    }
}

#[test]
fn clustered_fleet_serves_every_task() {
    let s = generate_scenario(&ScenarioSpec {
        robots: 4,
        tasks: 50,
        layout: LayoutKind::Clustered,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let r = run_pipeline(&s, energy(), &RunOptions::default()).unwrap();
    assert_eq!((r.tasks_served, r.tasks_total), (50, 50));
}

#[test]
fn reruns_are_identical() {
    let s = generate_scenario(&ScenarioSpec {
        robots: 4,
        tasks: 16,
        layout: LayoutKind::Random,
        disruptions: Some(Default::default()),
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let a = run_pipeline(&s, energy(), &RunOptions::default()).unwrap();
    let b = run_pipeline(&s, energy(), &RunOptions::default()).unwrap();
    assert_eq!(a.fleet_energy.to_bits(), b.fleet_energy.to_bits());
    assert_eq!(a.schedule, b.schedule);
    assert_eq!(a.tracks, b.tracks);
    assert_eq!(a.event_log.len(), b.event_log.len());
}

#[test]
fn baselines_run_and_partition() {
    let s = scenario(4, 20, 12);
    for v in [Variant::B1, Variant::B2, Variant::B3, Variant::parse("nearest-pair").unwrap()] {
        let r = run_pipeline(
            &s,
            v,
            &RunOptions {
                disruptions: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(validate_partition(&r.schedule, &all_ids(&s)), "{}", r.variant);
        assert_eq!(r.tracks.len(), 4);
        assert!(r.fleet_energy > 0.0);
    }
}

#[test]
fn constant_velocity_costs_more_than_optimized_on_the_same_schedule() {
    let s = scenario(3, 12, 4);
    let opts = RunOptions {
        disruptions: false,
        refine: false,
        ..Default::default()
    };
    let optimized = run_pipeline(
        &s,
        Variant {
            execution: amrfleet::pipeline::Execution::Optimized,
            ..Variant::B2
        },
        &opts,
    )
    .unwrap();
    let cv = run_pipeline(&s, Variant::B2, &opts).unwrap();
    assert_eq!(optimized.schedule, cv.schedule);
    assert!(cv.fleet_energy > optimized.fleet_energy);
}

#[test]
fn constant_velocity_rejects_disruption_replay() {
    let mut s = scenario(2, 4, 1);
    s.disruptions = vec![DisruptionEvent::fault(3.0, RobotId(0))];
    assert!(matches!(
        run_pipeline(&s, Variant::B2, &RunOptions::default()),
        Err(RunError::Unsupported(_))
    ));
}
