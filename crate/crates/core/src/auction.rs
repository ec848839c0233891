//! Sequential single-item auction.
//!
//! Every round each available robot bids on every unassigned task from the
//! position where its current sequence ends. The globally cheapest
//! (robot, task) pair wins; the winner's end position moves to the task's
//! dropoff and the round repeats until no tasks remain. Ties go to the lower
//! robot id, then the lower task id.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::{bid_energy_approx, bid_energy_zoned, FrictionField};
use crate::geometry::Point;
use crate::model::{CostWeights, Robot, RobotId, Schedule, Task, TaskId};
use crate::trajectory::{oracle_bid, PlannerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidMetric {
    EnergyClosedForm,
    EuclideanDistance,
    ZoneAwareEnergy,
    ExactOcpOracle,
}

impl BidMetric {
    pub const ALL: [BidMetric; 4] = [
        BidMetric::EnergyClosedForm,
        BidMetric::EuclideanDistance,
        BidMetric::ZoneAwareEnergy,
        BidMetric::ExactOcpOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BidMetric::EnergyClosedForm => "energy",
            BidMetric::EuclideanDistance => "distance",
            BidMetric::ZoneAwareEnergy => "zoned",
            BidMetric::ExactOcpOracle => "oracle",
        }
    }

    /// Whether bids are in joules (as opposed to metres).
    pub fn is_energy(self) -> bool {
        self != BidMetric::EuclideanDistance
    }
}

/// Instance-size limit for the trajectory-oracle metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGuard {
    pub max_robots: usize,
    pub max_tasks: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        Self {
            max_robots: 10,
            max_tasks: 30,
        }
    }
}

impl OracleGuard {
    pub fn check(&self, robots: usize, tasks: usize) -> Result<()> {
        if robots > self.max_robots {
            return Err(Error::SizeGuard {
                what: "trajectory-oracle bids (robots)",
                size: robots as u64,
                limit: self.max_robots as u64,
            });
        }
        if tasks > self.max_tasks {
            return Err(Error::SizeGuard {
                what: "trajectory-oracle bids (tasks)",
                size: tasks as u64,
                limit: self.max_tasks as u64,
            });
        }
        Ok(())
    }
}

/// What a bid needs beyond the robot and task.
#[derive(Debug, Clone, Copy)]
pub struct BidContext<'a> {
    pub field: &'a FrictionField,
    pub weights: &'a CostWeights,
    pub planner: &'a PlannerConfig,
    pub guard: OracleGuard,
    /// Per-robot multipliers on energy bids (observed/predicted energy).
    pub calibration: Option<&'a BTreeMap<RobotId, f64>>,
}

impl<'a> BidContext<'a> {
    pub fn new(field: &'a FrictionField, weights: &'a CostWeights, planner: &'a PlannerConfig) -> Self {
        Self {
            field,
            weights,
            planner,
            guard: OracleGuard::default(),
            calibration: None,
        }
    }
}

/// Cost for `robot`, currently ending at `robot_end`, to serve `task`.
pub fn bid(robot: &Robot, robot_end: Point, task: &Task, metric: BidMetric, ctx: &BidContext) -> Result<f64> {
    let raw = match metric {
        BidMetric::EuclideanDistance => robot_end.distance(task.pickup) + task.loaded_length(),
        BidMetric::EnergyClosedForm => bid_energy_approx(robot_end, task, &robot.params, ctx.field.mu_at(robot_end)),
        BidMetric::ZoneAwareEnergy => bid_energy_zoned(robot_end, task, &robot.params, ctx.field),
        BidMetric::ExactOcpOracle => {
            oracle_bid(robot_end, task, robot, ctx.field, ctx.weights, ctx.planner)?
        }
    };
    let scale = match (metric.is_energy(), ctx.calibration) {
        (true, Some(c)) => c.get(&robot.id).copied().unwrap_or(1.0),
        _ => 1.0,
    };
    Ok(raw * scale)
}

/// A robot taking part in an auction and where its sequence currently ends.
#[derive(Debug, Clone, Copy)]
pub struct Bidder<'a> {
    pub robot: &'a Robot,
    pub position: Point,
}

impl<'a> Bidder<'a> {
    pub fn at_depot(robot: &'a Robot) -> Self {
        Self {
            robot,
            position: robot.depot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub robot: RobotId,
    pub task: TaskId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRound {
    pub winner: RobotId,
    pub task: TaskId,
    pub winning_bid: f64,
    pub second_best: Option<f64>,
    pub bids: Vec<BidRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuctionTrace {
    pub rounds: Vec<AuctionRound>,
    /// Bid evaluations actually computed (unchanged bids are reused).
    pub bid_count: u64,
}

impl AuctionTrace {
    /// Sum of the winning bids.
    pub fn total_cost(&self) -> f64 {
        self.rounds.iter().map(|r| r.winning_bid).sum()
    }

    /// Mean magnitude of every bid seen.
    pub fn mean_bid(&self) -> f64 {
        let (sum, n) = self
            .rounds
            .iter()
            .flat_map(|r| &r.bids)
            .fold((0.0, 0usize), |(s, n), b| (s + b.value.abs(), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Winning pair among `(robot index, task index, bid)` candidates.
pub(crate) fn pick_winner(
    candidates: impl Iterator<Item = (RobotId, TaskId, f64)>,
) -> Option<(RobotId, TaskId, f64)> {
    candidates.fold(None, |best, c| match best {
        None => Some(c),
        Some(b) => {
            if (c.2, c.0, c.1) < (b.2, b.0, b.1) {
                Some(c)
            } else {
                Some(b)
            }
        }
    })
}

/// Runs the auction over `tasks` with the given bidders. Only the awarded
/// tasks appear in the returned schedule, in award order.
pub fn run_auction(
    bidders: &[Bidder],
    tasks: &[Task],
    metric: BidMetric,
    ctx: &BidContext,
) -> Result<(Schedule, AuctionTrace)> {
    if bidders.is_empty() && !tasks.is_empty() {
        return Err(Error::NoAvailableRobots {
            orphans: tasks.iter().map(|t| t.id).collect(),
        });
    }
    if metric == BidMetric::ExactOcpOracle {
        ctx.guard.check(bidders.len(), tasks.len())?;
    }
    let mut schedule = Schedule::new(bidders.iter().map(|b| b.robot.id));
    let mut trace = AuctionTrace::default();
    let mut ends: Vec<Point> = bidders.iter().map(|b| b.position).collect();
    let mut open: Vec<bool> = alloc::vec![true; tasks.len()];
    // cache[r][t]: bid of bidder r on task t from its current end.
    let mut cache: Vec<Vec<Option<f64>>> = alloc::vec![alloc::vec![None; tasks.len()]; bidders.len()];

    for _ in 0..tasks.len() {
        let mut bids = Vec::new();
        for (ri, b) in bidders.iter().enumerate() {
            for (ti, task) in tasks.iter().enumerate() {
                if !open[ti] {
                    continue;
                }
                let value = match cache[ri][ti] {
                    Some(v) => v,
                    None => {
                        let v = bid(b.robot, ends[ri], task, metric, ctx)?;
                        if !v.is_finite() {
                            return Err(Error::NonFinite("bid"));
                        }
                        trace.bid_count += 1;
                        cache[ri][ti] = Some(v);
                        v
                    }
                };
                bids.push(BidRecord {
                    robot: b.robot.id,
                    task: task.id,
                    value,
                });
            }
        }
        let (winner, task_id, value) = pick_winner(bids.iter().map(|b| (b.robot, b.task, b.value)))
            .expect("an open task and a bidder exist");
        let second_best = bids
            .iter()
            .filter(|b| !(b.robot == winner && b.task == task_id))
            .map(|b| b.value)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
        let ri = bidders.iter().position(|b| b.robot.id == winner).expect("winner bid");
        let ti = tasks.iter().position(|t| t.id == task_id).expect("task exists");
        open[ti] = false;
        ends[ri] = tasks[ti].dropoff;
        cache[ri].iter_mut().for_each(|c| *c = None);
        schedule.push(winner, task_id);
        *schedule.predicted_energy.entry(winner).or_insert(0.0) += value;
        trace.rounds.push(AuctionRound {
            winner,
            task: task_id,
            winning_bid: value,
            second_best,
            bids,
        });
    }
    Ok((schedule, trace))
}

/// [`run_auction`] with every robot starting at its depot.
pub fn run_auction_from_depots(
    robots: &[Robot],
    tasks: &[Task],
    metric: BidMetric,
    ctx: &BidContext,
) -> Result<(Schedule, AuctionTrace)> {
    let bidders: Vec<_> = robots.iter().map(Bidder::at_depot).collect();
    run_auction(&bidders, tasks, metric, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingAccuracy {
    /// Share of rounds in which both metrics pick the same (robot, task).
    pub winner_accuracy: f64,
    /// Mean `|b_cheap − b_oracle| / b_oracle` over all compared bids; `None`
    /// when the cheap metric is not in energy units.
    pub mean_abs_rel_error: Option<f64>,
    pub rounds: usize,
    pub bids_compared: usize,
}

/// Replays the auction under `cheap` and, at every round, prices the same
/// candidate set with `oracle`.
pub fn ranking_accuracy(
    robots: &[Robot],
    tasks: &[Task],
    cheap: BidMetric,
    oracle: BidMetric,
    ctx: &BidContext,
) -> Result<RankingAccuracy> {
    if oracle == BidMetric::ExactOcpOracle || cheap == BidMetric::ExactOcpOracle {
        ctx.guard.check(robots.len(), tasks.len())?;
    }
    let (_, trace) = run_auction_from_depots(robots, tasks, cheap, ctx)?;
    let mut ends: BTreeMap<RobotId, Point> = robots.iter().map(|r| (r.id, r.depot)).collect();
    let by_id: BTreeMap<RobotId, &Robot> = robots.iter().map(|r| (r.id, r)).collect();
    let task_by_id: BTreeMap<TaskId, &Task> = tasks.iter().map(|t| (t.id, t)).collect();
    let mut oracle_cache: BTreeMap<(RobotId, TaskId), f64> = BTreeMap::new();
    let (mut agree, mut err_sum, mut compared) = (0usize, 0.0, 0usize);
    for round in &trace.rounds {
        let mut priced = Vec::with_capacity(round.bids.len());
        for b in &round.bids {
            let v = match oracle_cache.get(&(b.robot, b.task)) {
                Some(v) => *v,
                None => {
                    let v = bid(by_id[&b.robot], ends[&b.robot], task_by_id[&b.task], oracle, ctx)?;
                    oracle_cache.insert((b.robot, b.task), v);
                    v
                }
            };
            if cheap.is_energy() && v != 0.0 {
                err_sum += ((b.value - v) / v).abs();
                compared += 1;
            }
            priced.push((b.robot, b.task, v));
        }
        let (r, t, _) = pick_winner(priced.into_iter()).expect("round has bids");
        if (r, t) == (round.winner, round.task) {
            agree += 1;
        }
        ends.insert(round.winner, task_by_id[&round.task].dropoff);
        oracle_cache.retain(|k, _| k.0 != round.winner);
    }
    let rounds = trace.rounds.len();
    Ok(RankingAccuracy {
        winner_accuracy: if rounds == 0 { 1.0 } else { agree as f64 / rounds as f64 },
        mean_abs_rel_error: (cheap.is_energy() && compared > 0).then(|| err_sum / compared as f64),
        rounds,
        bids_compared: compared,
    })
}

/// Checks `auction_cost ≤ reference_cost + 2·m·ε̄·scale`, with `scale` the
/// mean bid magnitude of the trace (the bound is additive in bid units).
pub fn suboptimality_bound_check(
    trace: &AuctionTrace,
    auction_cost: f64,
    eps_bar: f64,
    reference_cost: f64,
) -> bool {
    let m = trace.rounds.len() as f64;
    auction_cost <= reference_cost + 2.0 * m * eps_bar * trace.mean_bid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_partition;

    fn ctx_parts() -> (FrictionField, CostWeights, PlannerConfig) {
        (FrictionField::uniform(0.02), CostWeights::default(), PlannerConfig::default())
    }

    #[test]
    fn distance_bid_by_hand() {
        let (f, w, p) = ctx_parts();
        let ctx = BidContext::new(&f, &w, &p);
        let r = Robot::new(1, Point::new(0.0, 0.0));
        let t = Task::new(1, Point::new(3.0, 4.0), Point::new(3.0, 8.0), 5.0);
        assert_eq!(bid(&r, r.depot, &t, BidMetric::EuclideanDistance, &ctx).unwrap(), 9.0);
        assert_eq!(
            bid(&r, r.depot, &t, BidMetric::EnergyClosedForm, &ctx).unwrap(),
            bid_energy_approx(r.depot, &t, &r.params, 0.02)
        );
    }

    #[test]
    fn trivial_instances() {
        let (f, w, p) = ctx_parts();
        let ctx = BidContext::new(&f, &w, &p);
        let robots = [Robot::new(1, Point::new(0.0, 0.0))];
        let t = [Task::new(7, Point::new(1.0, 1.0), Point::new(2.0, 2.0), 0.0)];
        let (s, trace) = run_auction_from_depots(&robots, &t, BidMetric::EnergyClosedForm, &ctx).unwrap();
        assert_eq!(s.sequence(RobotId(1)), &[TaskId(7)]);
        assert_eq!(trace.rounds.len(), 1);
        let (s, trace) = run_auction_from_depots(&robots, &[], BidMetric::EnergyClosedForm, &ctx).unwrap();
        assert_eq!(s.task_count(), 0);
        assert!(trace.rounds.is_empty());
        assert!(matches!(
            run_auction_from_depots(&[], &t, BidMetric::EnergyClosedForm, &ctx),
            Err(Error::NoAvailableRobots { .. })
        ));
    }

    #[test]
    fn two_corner_robots() {
        let (f, w, p) = ctx_parts();
        let ctx = BidContext::new(&f, &w, &p);
        let robots = [Robot::new(1, Point::new(0.0, 0.0)), Robot::new(2, Point::new(20.0, 20.0))];
        let tasks = [
            Task::new(1, Point::new(1.0, 1.0), Point::new(2.0, 1.0), 5.0),
            Task::new(2, Point::new(19.0, 19.0), Point::new(18.0, 19.0), 5.0),
        ];
        for metric in [BidMetric::EnergyClosedForm, BidMetric::EuclideanDistance] {
            let (s, _) = run_auction_from_depots(&robots, &tasks, metric, &ctx).unwrap();
            assert_eq!(s.sequence(RobotId(1)), &[TaskId(1)]);
            assert_eq!(s.sequence(RobotId(2)), &[TaskId(2)]);
            assert!(validate_partition(&s, &[TaskId(1), TaskId(2)]));
        }
    }

    #[test]
    fn ties_go_to_lower_ids() {
        let (f, w, p) = ctx_parts();
        let ctx = BidContext::new(&f, &w, &p);
        let robots = [Robot::new(2, Point::new(0.0, 0.0)), Robot::new(1, Point::new(0.0, 0.0))];
        let tasks = [
            Task::new(5, Point::new(1.0, 0.0), Point::new(2.0, 0.0), 0.0),
            Task::new(3, Point::new(-1.0, 0.0), Point::new(-2.0, 0.0), 0.0),
        ];
        let (_, trace) = run_auction_from_depots(&robots, &tasks, BidMetric::EuclideanDistance, &ctx).unwrap();
        assert_eq!((trace.rounds[0].winner, trace.rounds[0].task), (RobotId(1), TaskId(3)));
    }

    #[test]
    fn self_comparison_is_exact() {
        let (f, w, p) = ctx_parts();
        let ctx = BidContext::new(&f, &w, &p);
        let robots = [Robot::new(1, Point::new(0.0, 0.0)), Robot::new(2, Point::new(10.0, 3.0))];
        let tasks: Vec<_> = (0..5)
            .map(|i| {
                let x = i as f64 * 2.0;
                Task::new(i, Point::new(x, 5.0), Point::new(12.0 - x, 1.0), 4.0 * i as f64)
            })
            .collect();
        let acc = ranking_accuracy(&robots, &tasks, BidMetric::EnergyClosedForm, BidMetric::EnergyClosedForm, &ctx)
            .unwrap();
        assert_eq!(acc.winner_accuracy, 1.0);
        assert_eq!(acc.mean_abs_rel_error, Some(0.0));
        let d = ranking_accuracy(&robots, &tasks, BidMetric::EuclideanDistance, BidMetric::EnergyClosedForm, &ctx)
            .unwrap();
        assert!(d.mean_abs_rel_error.is_none());
    }

    #[test]
    fn calibration_scales_energy_bids_only() {
        let (f, w, p) = ctx_parts();
        let mut cal = BTreeMap::new();
        cal.insert(RobotId(1), 2.0);
        let mut ctx = BidContext::new(&f, &w, &p);
        ctx.calibration = Some(&cal);
        let r = Robot::new(1, Point::new(0.0, 0.0));
        let t = Task::new(1, Point::new(3.0, 4.0), Point::new(3.0, 8.0), 5.0);
        assert_eq!(bid(&r, r.depot, &t, BidMetric::EuclideanDistance, &ctx).unwrap(), 9.0);
        assert_eq!(
            bid(&r, r.depot, &t, BidMetric::EnergyClosedForm, &ctx).unwrap(),
            2.0 * bid_energy_approx(r.depot, &t, &r.params, 0.02)
        );
    }

    #[test]
    fn oracle_guard_applies() {
        let (f, w, p) = ctx_parts();
        let mut ctx = BidContext::new(&f, &w, &p);
        ctx.guard.max_tasks = 1;
        let robots = [Robot::new(1, Point::new(0.0, 0.0))];
        let tasks = [
            Task::new(1, Point::new(1.0, 0.0), Point::new(2.0, 0.0), 0.0),
            Task::new(2, Point::new(3.0, 0.0), Point::new(4.0, 0.0), 0.0),
        ];
        assert!(matches!(
            run_auction_from_depots(&robots, &tasks, BidMetric::ExactOcpOracle, &ctx),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn zero_error_bound_collapses() {
        let trace = AuctionTrace {
            rounds: alloc::vec![AuctionRound {
                winner: RobotId(1),
                task: TaskId(1),
                winning_bid: 10.0,
                second_best: None,
                bids: alloc::vec![BidRecord { robot: RobotId(1), task: TaskId(1), value: 10.0 }],
            }],
            bid_count: 1,
        };
        assert!(suboptimality_bound_check(&trace, 10.0, 0.0, 10.0));
        assert!(!suboptimality_bound_check(&trace, 10.5, 0.0, 10.0));
        assert!(suboptimality_bound_check(&trace, 10.5, 0.05, 10.0));
    }

    fn instance(n: usize, pts: &[(f64, f64, f64, f64, f64)]) -> (Vec<Robot>, Vec<Task>) {
        let robots = (0..n).map(|i| Robot::new(i as u32, Point::new(2.0 * i as f64, 1.0))).collect();
        let tasks = pts
            .iter()
            .enumerate()
            .map(|(i, (a, b, c, d, w))| Task::new(i as u32, Point::new(*a, *b), Point::new(*c, *d), *w))
            .collect();
        (robots, tasks)
    }

    proptest::proptest! {
        #[test]
        fn partition_round_count_and_bid_bound(
            n in 1usize..6,
            pts in proptest::collection::vec((0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64), 0..20),
            metric in proptest::sample::select(alloc::vec![
                BidMetric::EnergyClosedForm,
                BidMetric::EuclideanDistance,
                BidMetric::ZoneAwareEnergy,
            ]),
        ) {
            let (f, w, p) = ctx_parts();
            let ctx = BidContext::new(&f, &w, &p);
            let (robots, tasks) = instance(n, &pts);
            let (s, trace) = run_auction_from_depots(&robots, &tasks, metric, &ctx).unwrap();
            let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
            proptest::prop_assert!(validate_partition(&s, &ids));
            proptest::prop_assert_eq!(trace.rounds.len(), tasks.len());
            let m = tasks.len();
            proptest::prop_assert!(trace.bid_count <= (n * m * (m + 1) / 2) as u64);
            for r in &trace.rounds {
                proptest::prop_assert!(r.bids.iter().all(|b| b.value >= r.winning_bid));
            }
        }

        #[test]
        fn distance_auction_is_scale_invariant(
            n in 1usize..5,
            pts in proptest::collection::vec((0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64), 1..15),
            k in 1u32..4,
        ) {
            // Scaling every coordinate by a power of two is exact in floating
            // point, so the winners cannot change.
            let (f, w, p) = ctx_parts();
            let ctx = BidContext::new(&f, &w, &p);
            let (robots, tasks) = instance(n, &pts);
            let c = f64::from(1u32 << k);
            let scaled_robots: Vec<Robot> = robots.iter().map(|r| Robot::new(r.id.0, Point::new(r.depot.x * c, r.depot.y * c))).collect();
            let scaled_tasks: Vec<Task> = tasks
                .iter()
                .map(|t| Task::new(t.id.0, Point::new(t.pickup.x * c, t.pickup.y * c), Point::new(t.dropoff.x * c, t.dropoff.y * c), t.payload))
                .collect();
            let (a, _) = run_auction_from_depots(&robots, &tasks, BidMetric::EuclideanDistance, &ctx).unwrap();
            let (b, _) = run_auction_from_depots(&scaled_robots, &scaled_tasks, BidMetric::EuclideanDistance, &ctx).unwrap();
            proptest::prop_assert_eq!(a.sequences, b.sequences);
        }
    }
}
