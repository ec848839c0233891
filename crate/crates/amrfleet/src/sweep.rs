//! Grid sweeps: every cell of fleet sizes × task counts × layouts × friction
//! ranges, each over a run of seeds, with every variant run on the same
//! scenario.

use std::path::Path;

use amrfleet_core::auction::{ranking_accuracy, BidContext, BidMetric, RankingAccuracy};
use amrfleet_core::model::LayoutKind;
use amrfleet_core::scenario::{energy_distance_correlation, generate_scenario, DisruptionRates, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_csv_file, write_json, IoError};
use crate::pipeline::{run_pipeline, RescheduleMode, RunOptions, Variant};
use crate::report::{build_reports, summary_rows, CellKey, MetricsReport, RunRow, TimingRow};

/// Environment variable holding the worker budget.
pub const WORKERS_ENV: &str = "FLEET_WORKERS";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid is empty ({0})")]
    EmptyGrid(&'static str),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fleet_sizes: Vec<usize>,
    pub task_counts: Vec<usize>,
    pub layouts: Vec<LayoutKind>,
    pub friction_ranges: Vec<(f64, f64)>,
    /// Variants whose savings are reported.
    pub variants: Vec<String>,
    /// Variants the savings are measured against.
    pub baselines: Vec<String>,
    pub seeds: u64,
    pub base_seed: u64,
    pub payload_range: (f64, f64),
    pub zone_grid: usize,
    pub disruptions: Option<DisruptionRates>,
    pub refine: bool,
    /// Also run each variant with cold re-auction on the same stream.
    pub cold_comparison: bool,
    /// Compare closed-form bids against the trajectory oracle.
    pub accuracy: bool,
    /// Bid samples for the energy/distance correlation (0 disables it).
    pub correlation_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fleet_sizes: vec![5],
            task_counts: vec![20],
            layouts: vec![LayoutKind::Random],
            friction_ranges: vec![(0.02, 0.02)],
            variants: vec!["energy".into(), "distance".into()],
            baselines: vec!["b1".into(), "b2".into()],
            seeds: 5,
            base_seed: 0,
            payload_range: (0.0, 20.0),
            zone_grid: 4,
            disruptions: None,
            refine: true,
            cold_comparison: false,
            accuracy: false,
            correlation_samples: 200,
        }
    }
}

impl SweepConfig {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &robots in &self.fleet_sizes {
            for &tasks in &self.task_counts {
                for &layout in &self.layouts {
                    for &(mu_lo, mu_hi) in &self.friction_ranges {
                        out.push(CellKey {
                            robots,
                            tasks,
                            layout,
                            mu_lo,
                            mu_hi,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn spec(&self, cell: &CellKey, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            robots: cell.robots,
            tasks: cell.tasks,
            layout: cell.layout,
            payload_range: self.payload_range,
            mu_range: (cell.mu_lo, cell.mu_hi),
            zone_grid: self.zone_grid,
            disruptions: self.disruptions,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<Vec<(String, Variant)>, SweepError> {
        if self.cells().is_empty() {
            return Err(SweepError::EmptyGrid("no cells"));
        }
        if self.seeds == 0 {
            return Err(SweepError::EmptyGrid("no seeds"));
        }
        if self.variants.is_empty() {
            return Err(SweepError::EmptyGrid("no variants"));
        }
        self.variants
            .iter()
            .chain(&self.baselines)
            .map(|n| {
                Variant::parse(n)
                    .map(|v| (n.clone(), v))
                    .ok_or_else(|| SweepError::UnknownVariant(n.clone()))
            })
            .collect()
    }
}

/// Everything a sweep produces, in deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
    pub reports: Vec<MetricsReport>,
}

struct JobOutput {
    rows: Vec<RunRow>,
    timings: Vec<TimingRow>,
    correlation: Option<(CellKey, u64, f64)>,
    accuracy: Option<(CellKey, RankingAccuracy)>,
}

fn run_job(config: &SweepConfig, variants: &[(String, Variant)], cell: CellKey, seed: u64) -> JobOutput {
    let mut out = JobOutput {
        rows: Vec::new(),
        timings: Vec::new(),
        correlation: None,
        accuracy: None,
    };
    let scenario = match generate_scenario(&config.spec(&cell, seed)) {
        Ok(s) => s,
        Err(e) => {
            for (name, _) in variants {
                out.rows.push(RunRow::failed(cell, seed, name.clone(), cell.tasks, e.to_string()));
            }
            return out;
        }
    };
    let mut modes = vec![(RescheduleMode::Warm, "")];
    if config.cold_comparison && config.disruptions.is_some() {
        modes.push((RescheduleMode::Cold, "-cold"));
    }
    for (name, variant) in variants {
        for &(mode, suffix) in &modes {
            let options = RunOptions {
                disruptions: config.disruptions.is_some(),
                refine: config.refine,
                mode,
            };
            let label = format!("{name}{suffix}");
            match run_pipeline(&scenario, *variant, &options) {
                Ok(mut r) => {
                    r.variant = label;
                    out.rows.push(RunRow::from_result(cell, &r));
                    out.timings.extend(TimingRow::from_result(cell, &r));
                }
                Err(e) => out
                    .rows
                    .push(RunRow::failed(cell, seed, label, scenario.tasks.len(), e.to_string())),
            }
        }
    }
    if config.correlation_samples >= 2 {
        if let Some(robot) = scenario.robots.first() {
            out.correlation = energy_distance_correlation(
                &scenario.stations,
                &scenario.tasks,
                &robot.params,
                &scenario.friction,
                config.correlation_samples,
                seed,
            )
            .ok()
            .map(|r| (cell, seed, r));
        }
    }
    if config.accuracy {
        let ctx = BidContext::new(&scenario.friction, &scenario.weights, &scenario.planner);
        out.accuracy = ranking_accuracy(
            &scenario.robots,
            &scenario.tasks,
            BidMetric::EnergyClosedForm,
            BidMetric::ExactOcpOracle,
            &ctx,
        )
        .ok()
        .map(|a| (cell, a));
    }
    out
}

/// Runs the whole grid on at most `workers` threads (all cores when `None`).
/// Individual run failures are recorded as rows and never stop the sweep.
pub fn sweep(config: &SweepConfig, workers: Option<usize>) -> Result<SweepOutput, SweepError> {
    let variants = config.validate()?;
    let jobs: Vec<(CellKey, u64)> = config
        .cells()
        .into_iter()
        .flat_map(|c| (0..config.seeds).map(move |k| (c, config.base_seed + k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()?;
    let outputs: Vec<JobOutput> =
        pool.install(|| jobs.par_iter().map(|&(c, s)| run_job(config, &variants, c, s)).collect());
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut correlations = Vec::new();
    let mut accuracy = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        timings.extend(o.timings);
        correlations.extend(o.correlation);
        accuracy.extend(o.accuracy);
    }
    let with_cold = config.cold_comparison && config.disruptions.is_some();
    let suffixed = |names: &[String]| -> Vec<String> {
        let mut out = names.to_vec();
        if with_cold {
            out.extend(names.iter().map(|n| format!("{n}-cold")));
        }
        out
    };
    let cold: Vec<(String, String)> = if with_cold {
        variants.iter().map(|(n, _)| (n.clone(), format!("{n}-cold"))).collect()
    } else {
        Vec::new()
    };
    let reports = build_reports(
        &rows,
        &suffixed(&config.variants),
        &suffixed(&config.baselines),
        &cold,
        &correlations,
        &accuracy,
    );
    Ok(SweepOutput { rows, timings, reports })
}

/// Writes `runs.csv`, `summary.csv`, `report.json` and `timings.csv` into
/// `dir`.
pub fn write_sweep(dir: &Path, output: &SweepOutput) -> Result<(), SweepError> {
    write_csv_file(&dir.join("runs.csv"), output.rows.iter().cloned())?;
    write_csv_file(&dir.join("summary.csv"), summary_rows(&output.reports))?;
    write_json(&dir.join("report.json"), &output.reports)?;
    write_csv_file(&dir.join("timings.csv"), output.timings.iter().cloned())?;
    Ok(())
}

/// Worker budget from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            fleet_sizes: vec![2],
            task_counts: vec![4],
            seeds: 1,
            refine: false,
            correlation_samples: 0,
            baselines: vec!["b1".into()],
            variants: vec!["energy".into()],
            ..Default::default()
        }
    }

    #[test]
    fn one_cell_one_seed_is_a_single_report() {
        let out = sweep(&tiny(), Some(1)).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.error.is_none()));
        assert_eq!(summary_rows(&out.reports).len(), 2);
    }

    #[test]
    fn rejects_empty_and_unknown() {
        let mut c = tiny();
        c.fleet_sizes.clear();
        assert!(matches!(sweep(&c, Some(1)), Err(SweepError::EmptyGrid(_))));
        let mut c = tiny();
        c.variants = vec!["nope".into()];
        assert!(matches!(sweep(&c, Some(1)), Err(SweepError::UnknownVariant(_))));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = tiny();
        c.seeds = 3;
        let (a, b) = (sweep(&c, Some(1)).unwrap(), sweep(&c, Some(2)).unwrap());
        assert_eq!((a.rows, a.reports), (b.rows, b.reports));
    }

    #[test]
    fn cell_count_is_the_cartesian_product() {
        let c = SweepConfig {
            fleet_sizes: vec![2, 5, 10, 15, 20],
            friction_ranges: vec![(0.02, 0.02), (0.005, 0.08)],
            ..Default::default()
        };
        assert_eq!(c.cells().len(), 10);
    }
}
