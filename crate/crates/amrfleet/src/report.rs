//! Per-run rows and their aggregation into savings, significance and
//! rescheduling statistics.
//!
//! Everything here is a deterministic function of the runs. Wall-clock
//! latencies are kept in [`TimingRow`]s and never enter a [`MetricsReport`],
//! so the same configuration always produces a byte-identical report.

use std::collections::BTreeMap;

use amrfleet_core::auction::RankingAccuracy;
use amrfleet_core::model::LayoutKind;
use amrfleet_core::stats::{mean, std_dev, wilcoxon_paired};
use serde::{Deserialize, Serialize};

use crate::pipeline::RunResult;

/// `(E_base − E_variant) / E_base × 100`.
pub fn savings_pct(base: f64, variant: f64) -> f64 {
    (base - variant) / base * 100.0
}

/// The scenario family a run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub robots: usize,
    pub tasks: usize,
    pub layout: LayoutKind,
    pub mu_lo: f64,
    pub mu_hi: f64,
}

impl CellKey {
    fn sort_key(&self) -> (usize, usize, u8, u64, u64) {
        let layout = match self.layout {
            LayoutKind::Grid => 0,
            LayoutKind::Random => 1,
            LayoutKind::Clustered => 2,
        };
        (self.robots, self.tasks, layout, self.mu_lo.to_bits(), self.mu_hi.to_bits())
    }
}

/// One variant on one seeded scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRow {
    pub robots: usize,
    pub tasks: usize,
    pub layout: LayoutKind,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub seed: u64,
    pub variant: String,
    pub fleet_energy: Option<f64>,
    pub makespan: Option<f64>,
    pub tasks_served: Option<usize>,
    pub tasks_total: usize,
    pub reschedules: Option<usize>,
    pub zeno_budget: Option<u64>,
    pub tasks_reassigned: Option<usize>,
    pub retimings: Option<usize>,
    pub residual_conflicts: Option<usize>,
    pub error: Option<String>,
}

impl RunRow {
    pub fn cell(&self) -> CellKey {
        CellKey {
            robots: self.robots,
            tasks: self.tasks,
            layout: self.layout,
            mu_lo: self.mu_lo,
            mu_hi: self.mu_hi,
        }
    }

    pub fn from_result(cell: CellKey, r: &RunResult) -> Self {
        Self {
            robots: cell.robots,
            tasks: cell.tasks,
            layout: cell.layout,
            mu_lo: cell.mu_lo,
            mu_hi: cell.mu_hi,
            seed: r.seed,
            variant: r.variant.clone(),
            fleet_energy: Some(r.fleet_energy),
            makespan: Some(r.makespan),
            tasks_served: Some(r.tasks_served),
            tasks_total: r.tasks_total,
            reschedules: Some(r.reschedules()),
            zeno_budget: Some(r.zeno_budget),
            tasks_reassigned: Some(r.event_log.iter().map(|e| e.tasks_reassigned).sum()),
            retimings: r.refine.as_ref().map(|x| x.retimings),
            residual_conflicts: r.refine.as_ref().map(|x| x.residual.len()),
            error: None,
        }
    }

    pub fn failed(cell: CellKey, seed: u64, variant: String, tasks_total: usize, error: String) -> Self {
        Self {
            robots: cell.robots,
            tasks: cell.tasks,
            layout: cell.layout,
            mu_lo: cell.mu_lo,
            mu_hi: cell.mu_hi,
            seed,
            variant,
            fleet_energy: None,
            makespan: None,
            tasks_served: None,
            tasks_total,
            reschedules: None,
            zeno_budget: None,
            tasks_reassigned: None,
            retimings: None,
            residual_conflicts: None,
            error: Some(error),
        }
    }
}

/// Wall-clock cost of each reschedule, reported separately from metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingRow {
    pub robots: usize,
    pub tasks: usize,
    pub layout: LayoutKind,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub seed: u64,
    pub variant: String,
    pub t: f64,
    pub kind: String,
    pub latency_ms: f64,
}

impl TimingRow {
    pub fn from_result(cell: CellKey, r: &RunResult) -> Vec<Self> {
        r.event_log
            .iter()
            .map(|e| Self {
                robots: cell.robots,
                tasks: cell.tasks,
                layout: cell.layout,
                mu_lo: cell.mu_lo,
                mu_hi: cell.mu_hi,
                seed: r.seed,
                variant: r.variant.clone(),
                t: e.t,
                kind: e.kind.name().into(),
                latency_ms: e.latency * 1e3,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub failures: usize,
    pub energy_mean: Option<f64>,
    pub energy_std: Option<f64>,
    pub makespan_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsSummary {
    pub variant: String,
    pub baseline: String,
    pub pairs: usize,
    pub mean_pct: Option<f64>,
    pub std_pct: Option<f64>,
    pub wilcoxon_w_plus: Option<f64>,
    pub wilcoxon_p: Option<f64>,
}

/// Savings of `variant` over `baseline` from seed-paired energies.
pub fn paired_savings(variant: &str, baseline: &str, pairs: &[(f64, f64)]) -> SavingsSummary {
    let pct: Vec<f64> = pairs.iter().map(|(b, v)| savings_pct(*b, *v)).collect();
    let (base, var): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let test = wilcoxon_paired(&base, &var).ok();
    SavingsSummary {
        variant: variant.into(),
        baseline: baseline.into(),
        pairs: pairs.len(),
        mean_pct: mean(&pct),
        std_pct: std_dev(&pct),
        wilcoxon_w_plus: test.map(|t| t.w_plus),
        wilcoxon_p: test.map(|t| t.p_value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub samples: usize,
    pub winner_accuracy: f64,
    pub mean_abs_rel_error: Option<f64>,
}

impl AccuracySummary {
    /// Pools per-seed accuracies weighted by rounds and bids compared.
    pub fn pool(items: &[RankingAccuracy]) -> Option<Self> {
        let rounds: usize = items.iter().map(|a| a.rounds).sum();
        if rounds == 0 {
            return None;
        }
        let agree: f64 = items.iter().map(|a| a.winner_accuracy * a.rounds as f64).sum();
        let bids: usize = items.iter().map(|a| a.bids_compared).sum();
        let err: f64 = items
            .iter()
            .filter_map(|a| a.mean_abs_rel_error.map(|e| e * a.bids_compared as f64))
            .sum();
        Some(Self {
            samples: bids,
            winner_accuracy: agree / rounds as f64,
            mean_abs_rel_error: (bids > 0).then(|| err / bids as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescheduleSummary {
    pub variant: String,
    pub runs: usize,
    pub mean_count: f64,
    pub max_count: usize,
    /// Runs whose reschedule count exceeded the Zeno budget.
    pub budget_violations: usize,
    pub mean_tasks_reassigned: f64,
    /// Mean energy overhead of warm-start over cold re-auction, %.
    pub overhead_vs_cold_pct: Option<f64>,
}

/// Aggregate of one scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cell: CellKey,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    pub savings: Vec<SavingsSummary>,
    /// Pearson r between closed-form bid energy and distance, mean over seeds.
    pub energy_distance_r: Option<f64>,
    pub accuracy: Option<AccuracySummary>,
    pub reschedule: Vec<RescheduleSummary>,
}

/// Builds one report per cell. `cold` maps a variant name to the name of its
/// cold re-auction counterpart.
pub fn build_reports(
    rows: &[RunRow],
    variants: &[String],
    baselines: &[String],
    cold: &[(String, String)],
    correlations: &[(CellKey, u64, f64)],
    accuracy: &[(CellKey, RankingAccuracy)],
) -> Vec<MetricsReport> {
    let mut cells: Vec<CellKey> = Vec::new();
    for r in rows {
        if !cells.contains(&r.cell()) {
            cells.push(r.cell());
        }
    }
    cells.sort_by_key(|c| c.sort_key());
    cells
        .into_iter()
        .map(|cell| {
            let in_cell: Vec<&RunRow> = rows.iter().filter(|r| r.cell() == cell).collect();
            let energy: BTreeMap<(&str, u64), f64> = in_cell
                .iter()
                .filter_map(|r| Some(((r.variant.as_str(), r.seed), r.fleet_energy?)))
                .collect();
            let mut seeds: Vec<u64> = in_cell.iter().map(|r| r.seed).collect();
            seeds.sort();
            seeds.dedup();
            let names: Vec<&String> = variants.iter().chain(baselines).collect();
            let summaries = names
                .iter()
                .map(|v| {
                    let runs: Vec<&&RunRow> = in_cell.iter().filter(|r| &r.variant == *v).collect();
                    let e: Vec<f64> = runs.iter().filter_map(|r| r.fleet_energy).collect();
                    let mk: Vec<f64> = runs.iter().filter_map(|r| r.makespan).filter(|m| m.is_finite()).collect();
                    VariantSummary {
                        variant: (*v).clone(),
                        runs: runs.len(),
                        failures: runs.iter().filter(|r| r.error.is_some()).count(),
                        energy_mean: mean(&e),
                        energy_std: std_dev(&e),
                        makespan_mean: mean(&mk),
                    }
                })
                .collect();
            let mut savings = Vec::new();
            for v in variants {
                for b in baselines.iter().filter(|b| *b != v) {
                    let pairs: Vec<(f64, f64)> = seeds
                        .iter()
                        .filter_map(|s| Some((*energy.get(&(b.as_str(), *s))?, *energy.get(&(v.as_str(), *s))?)))
                        .collect();
                    savings.push(paired_savings(v, b, &pairs));
                }
            }
            let rs: Vec<f64> = correlations.iter().filter(|c| c.0 == cell).map(|c| c.2).collect();
            let acc: Vec<RankingAccuracy> = accuracy.iter().filter(|a| a.0 == cell).map(|a| a.1).collect();
            let reschedule = names
                .iter()
                .filter_map(|v| {
                    let runs: Vec<&&RunRow> = in_cell
                        .iter()
                        .filter(|r| &r.variant == *v && r.reschedules.is_some())
                        .collect();
                    if runs.is_empty() || runs.iter().all(|r| r.reschedules == Some(0)) {
                        return None;
                    }
                    let counts: Vec<f64> = runs.iter().filter_map(|r| r.reschedules).map(|c| c as f64).collect();
                    let reassigned: Vec<f64> = runs
                        .iter()
                        .filter_map(|r| Some(r.tasks_reassigned? as f64 / r.reschedules?.max(1) as f64))
                        .collect();
                    let overhead = cold.iter().find(|(w, _)| w == *v).and_then(|(_, c)| {
                        let pct: Vec<f64> = seeds
                            .iter()
                            .filter_map(|s| {
                                let w = energy.get(&(v.as_str(), *s))?;
                                let c = energy.get(&(c.as_str(), *s))?;
                                Some((w - c) / c * 100.0)
                            })
                            .collect();
                        mean(&pct)
                    });
                    Some(RescheduleSummary {
                        variant: (*v).clone(),
                        runs: runs.len(),
                        mean_count: mean(&counts).unwrap_or(0.0),
                        max_count: runs.iter().filter_map(|r| r.reschedules).max().unwrap_or(0),
                        budget_violations: runs
                            .iter()
                            .filter(|r| matches!((r.reschedules, r.zeno_budget), (Some(c), Some(b)) if c as u64 > b))
                            .count(),
                        mean_tasks_reassigned: mean(&reassigned).unwrap_or(0.0),
                        overhead_vs_cold_pct: overhead,
                    })
                })
                .collect();
            MetricsReport {
                cell,
                seeds,
                variants: summaries,
                savings,
                energy_distance_r: mean(&rs),
                accuracy: AccuracySummary::pool(&acc),
                reschedule,
            }
        })
        .collect()
}

/// Flat summary table: one row per (cell, variant, baseline).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SummaryRow {
    pub robots: usize,
    pub tasks: usize,
    pub layout: LayoutKind,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub variant: String,
    pub energy_mean: Option<f64>,
    pub energy_std: Option<f64>,
    pub baseline: Option<String>,
    pub savings_mean_pct: Option<f64>,
    pub savings_std_pct: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    pub energy_distance_r: Option<f64>,
    pub winner_accuracy: Option<f64>,
    pub mean_abs_rel_error: Option<f64>,
}

pub fn summary_rows(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for rep in reports {
        for v in &rep.variants {
            let row = |b: Option<&SavingsSummary>| SummaryRow {
                robots: rep.cell.robots,
                tasks: rep.cell.tasks,
                layout: rep.cell.layout,
                mu_lo: rep.cell.mu_lo,
                mu_hi: rep.cell.mu_hi,
                variant: v.variant.clone(),
                energy_mean: v.energy_mean,
                energy_std: v.energy_std,
                baseline: b.map(|s| s.baseline.clone()),
                savings_mean_pct: b.and_then(|s| s.mean_pct),
                savings_std_pct: b.and_then(|s| s.std_pct),
                wilcoxon_p: b.and_then(|s| s.wilcoxon_p),
                energy_distance_r: rep.energy_distance_r,
                winner_accuracy: rep.accuracy.map(|a| a.winner_accuracy),
                mean_abs_rel_error: rep.accuracy.and_then(|a| a.mean_abs_rel_error),
            };
            let against: Vec<&SavingsSummary> = rep.savings.iter().filter(|s| s.variant == v.variant).collect();
            if against.is_empty() {
                out.push(row(None));
            } else {
                out.extend(against.into_iter().map(|s| row(Some(s))));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(robots: usize) -> CellKey {
        CellKey {
            robots,
            tasks: 10,
            layout: LayoutKind::Grid,
            mu_lo: 0.02,
            mu_hi: 0.02,
        }
    }

    fn row(c: CellKey, seed: u64, variant: &str, e: f64) -> RunRow {
        RunRow {
            robots: c.robots,
            tasks: c.tasks,
            layout: c.layout,
            mu_lo: c.mu_lo,
            mu_hi: c.mu_hi,
            seed,
            variant: variant.into(),
            fleet_energy: Some(e),
            makespan: Some(10.0),
            tasks_served: Some(10),
            tasks_total: 10,
            reschedules: Some(0),
            zeno_budget: Some(5),
            tasks_reassigned: Some(0),
            retimings: None,
            residual_conflicts: None,
            error: None,
        }
    }

    #[test]
    fn savings_definition() {
        assert_eq!(savings_pct(200.0, 150.0), 25.0);
        assert_eq!(savings_pct(100.0, 110.0), -10.0);
    }

    #[test]
    fn single_cell_single_seed_is_one_row_per_pair() {
        let c = cell(2);
        let rows = [row(c, 1, "energy", 90.0), row(c, 1, "b1", 100.0)];
        let reps = build_reports(&rows, &["energy".into()], &["b1".into()], &[], &[], &[]);
        assert_eq!(reps.len(), 1);
        let s = &reps[0].savings[0];
        assert_eq!((s.pairs, s.mean_pct, s.std_pct), (1, Some(10.0), None));
        assert_eq!(summary_rows(&reps).len(), 2);
    }

    #[test]
    fn pairs_match_by_seed_and_skip_failures() {
        let c = cell(3);
        let mut rows = vec![];
        for s in 0..5 {
            rows.push(row(c, s, "energy", 90.0 - s as f64));
            rows.push(row(c, s, "b1", 100.0));
        }
        rows.push(RunRow::failed(c, 5, "energy".into(), 10, "boom".into()));
        rows.push(row(c, 5, "b1", 100.0));
        let reps = build_reports(&rows, &["energy".into()], &["b1".into()], &[], &[], &[]);
        let s = &reps[0].savings[0];
        assert_eq!(s.pairs, 5);
        assert_eq!(s.wilcoxon_p, Some(0.0625));
        assert_eq!(reps[0].variants[0].failures, 1);
    }

    #[test]
    fn cells_are_ordered() {
        let rows = [row(cell(5), 0, "energy", 1.0), row(cell(2), 0, "energy", 1.0)];
        let reps = build_reports(&rows, &["energy".into()], &[], &[], &[], &[]);
        assert_eq!(reps.iter().map(|r| r.cell.robots).collect::<Vec<_>>(), [2, 5]);
    }

    #[test]
    fn cold_overhead() {
        let c = cell(2);
        let mut rows = vec![];
        for s in 0..2 {
            let mut w = row(c, s, "energy", 106.0);
            w.reschedules = Some(2);
            w.tasks_reassigned = Some(2);
            let mut k = row(c, s, "energy-cold", 100.0);
            k.reschedules = Some(2);
            rows.extend([w, k]);
        }
        let reps = build_reports(
            &rows,
            &["energy".into(), "energy-cold".into()],
            &[],
            &[("energy".into(), "energy-cold".into())],
            &[],
            &[],
        );
        let r = &reps[0].reschedule[0];
        assert_eq!(r.variant, "energy");
        assert!((r.overhead_vs_cold_pct.unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(r.mean_tasks_reassigned, 1.0);
        assert_eq!(r.budget_violations, 0);
    }
}
