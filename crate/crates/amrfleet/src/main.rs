use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amrfleet::core::auction::BidMetric;
use amrfleet::core::model::LayoutKind;
use amrfleet::core::scenario::{generate_scenario, DisruptionRates, Scenario, ScenarioSpec};
use amrfleet::core::stats::wilcoxon_paired;
use amrfleet::io::{
    auction_rows, conflict_rows, energy_series, event_rows, phase_rows, read_json, read_scenario, trajectory_rows,
    write_csv_file, write_json, write_scenario,
};
use amrfleet::core::collision::detect_conflicts;
use amrfleet::pipeline::{
    allocate, drive_routes, plan_routes, refine_config, run_pipeline, Execution, RescheduleMode, RunOptions, RunResult, Variant,
};
use amrfleet::report::{savings_pct, CellKey, RunRow, TimingRow};
use amrfleet::sweep::{sweep, write_sweep, SweepConfig, WORKERS_ENV};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amrfleet", version, about = "Energy-aware AMR fleet allocation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Generate(GenerateArgs),
    /// Run one pipeline and write its results.
    Run(RunArgs),
    /// Run a grid of scenarios and variants.
    Sweep(SweepArgs),
    /// Paired Wilcoxon test over two result files.
    Stats(StatsArgs),
    /// Dump trajectories, phases, conflicts, auction rounds and events.
    ///
    /// `conflicts.csv` lists the conflicts of the planned routes and
    /// `residual_conflicts.csv` those left after refinement.
    Trace(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Grid,
    Random,
    Clustered,
}

impl From<Layout> for LayoutKind {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Grid => LayoutKind::Grid,
            Layout::Random => LayoutKind::Random,
            Layout::Clustered => LayoutKind::Clustered,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Energy,
    Distance,
    Zoned,
    Oracle,
}

impl From<Metric> for BidMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Energy => BidMetric::EnergyClosedForm,
            Metric::Distance => BidMetric::EuclideanDistance,
            Metric::Zoned => BidMetric::ZoneAwareEnergy,
            Metric::Oracle => BidMetric::ExactOcpOracle,
        }
    }
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 4)]
    robots: usize,
    #[arg(long, default_value_t = 20)]
    tasks: usize,
    #[arg(long, value_enum, default_value = "grid")]
    layout: Layout,
    /// Friction coefficient range; equal bounds give a uniform floor.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.02, 0.02])]
    mu_range: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    zone_grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScenarioArgs {
    fn spec(&self, disruptions: bool) -> ScenarioSpec {
        ScenarioSpec {
            robots: self.robots,
            tasks: self.tasks,
            layout: self.layout.into(),
            mu_range: (self.mu_range[0], self.mu_range[1]),
            zone_grid: self.zone_grid,
            disruptions: disruptions.then(DisruptionRates::default),
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Include a seeded disruption stream.
    #[arg(long)]
    disruptions: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; generated from the scenario flags when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    generate: ScenarioArgs,
    #[arg(long, value_enum, default_value = "energy")]
    bid_metric: Metric,
    /// Run a named variant instead (b1, b2, nearest-pair, ...).
    #[arg(long)]
    variant: Option<String>,
    /// Replay the scenario's disruption stream.
    #[arg(long)]
    disruptions: bool,
    /// Re-auction every unstarted task on each event.
    #[arg(long)]
    cold: bool,
    /// Skip collision refinement.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, short)]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(p) => read_scenario(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(generate_scenario(&self.generate.spec(self.disruptions))?),
        }
    }

    fn variant(&self) -> Result<Variant> {
        match &self.variant {
            Some(n) => Variant::parse(n).with_context(|| format!("unknown variant {n:?}")),
            None => Ok(Variant::auction(self.bid_metric.into())),
        }
    }

    fn execute(&self) -> Result<(Scenario, RunResult)> {
        let scenario = self.load()?;
        let options = RunOptions {
            disruptions: self.disruptions,
            refine: !self.no_refine,
            mode: if self.cold {
                RescheduleMode::Cold
            } else {
                RescheduleMode::Warm
            },
        };
        let result = run_pipeline(&scenario, self.variant()?, &options)?;
        Ok((scenario, result))
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed count of the grid file.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads (all cores when unset).
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    /// Baseline results (runs.csv, a run row JSON, or an array of them).
    baseline: PathBuf,
    /// Variant results, paired with the baseline by scenario and seed.
    variant: PathBuf,
    /// Keep only rows of this variant from the baseline file.
    #[arg(long)]
    baseline_name: Option<String>,
    /// Keep only rows of this variant from the variant file.
    #[arg(long)]
    variant_name: Option<String>,
}

fn cell_of(s: &Scenario) -> CellKey {
    let (mu_lo, mu_hi) = s.friction.mu_range();
    CellKey {
        robots: s.robots.len(),
        tasks: s.tasks.len(),
        layout: s.layout.unwrap_or(LayoutKind::Grid),
        mu_lo,
        mu_hi,
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let scenario = generate_scenario(&args.scenario.spec(args.disruptions))?;
    write_scenario(&args.out, &scenario)?;
    println!(
        "wrote {} ({} robots, {} tasks, {} disruptions)",
        args.out.display(),
        scenario.robots.len(),
        scenario.tasks.len(),
        scenario.disruptions.len()
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let (scenario, result) = args.execute()?;
    let cell = cell_of(&scenario);
    write_json(&args.out.join("result.json"), &result)?;
    write_json(&args.out.join("row.json"), &RunRow::from_result(cell, &result))?;
    write_csv_file(&args.out.join("events.csv"), event_rows(&result.event_log))?;
    write_csv_file(&args.out.join("timings.csv"), TimingRow::from_result(cell, &result))?;
    println!(
        "{}: fleet energy {:.1} J, makespan {:.1} s, {}/{} tasks served, {} reschedules",
        result.variant,
        result.fleet_energy,
        result.makespan,
        result.tasks_served,
        result.tasks_total,
        result.reschedules()
    );
    Ok(())
}

fn trace(args: &RunArgs) -> Result<()> {
    let (scenario, result) = args.execute()?;
    let dir = &args.out;
    write_csv_file(&dir.join("trajectory.csv"), trajectory_rows(&result.tracks))?;
    write_csv_file(&dir.join("phases.csv"), phase_rows(&result.tracks))?;
    write_csv_file(&dir.join("energy.csv"), energy_series(&result.tracks))?;
    let variant = args.variant()?;
    let (schedule, _) = allocate(&scenario, variant.allocator)?;
    let planned = match variant.execution {
        Execution::Optimized => plan_routes(&scenario, &schedule)?,
        Execution::ConstantVelocity => drive_routes(&scenario, &schedule)?,
    };
    let before = detect_conflicts(&planned, scenario.d_safe, refine_config(&scenario).dt)?;
    write_csv_file(&dir.join("conflicts.csv"), conflict_rows(&before))?;
    let residual = result.refine.as_ref().map(|r| r.residual.as_slice()).unwrap_or_default();
    write_csv_file(&dir.join("residual_conflicts.csv"), conflict_rows(residual))?;
    if let Some(trace) = &result.auction {
        write_csv_file(&dir.join("auction.csv"), auction_rows(trace))?;
    }
    write_csv_file(&dir.join("events.csv"), event_rows(&result.event_log))?;
    println!("wrote traces for {} to {}", result.variant, dir.display());
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: SweepConfig = serde_json::from_str(&text).context("parsing the grid file")?;
    if let Some(s) = args.seeds {
        config.seeds = s;
    }
    let out = sweep(&config, args.workers.filter(|n| *n > 0))?;
    write_sweep(&args.out_dir, &out)?;
    let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} runs over {} cells written to {} ({} failed)",
        out.rows.len(),
        out.reports.len(),
        args.out_dir.display(),
        failed
    );
    for r in out.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "n={} m={} seed={} {}: {}",
            r.robots,
            r.tasks,
            r.seed,
            r.variant,
            r.error.as_deref().unwrap_or_default()
        );
    }
    Ok(failed == 0)
}

fn load_rows(path: &Path, name: Option<&str>) -> Result<Vec<RunRow>> {
    let rows: Vec<RunRow> = if path.extension().is_some_and(|e| e == "csv") {
        csv::Reader::from_path(path)?
            .deserialize()
            .collect::<Result<_, _>>()
            .with_context(|| format!("reading {}", path.display()))?
    } else {
        let v: serde_json::Value = read_json(path)?;
        if v.is_array() {
            serde_json::from_value(v)?
        } else {
            vec![serde_json::from_value(v)?]
        }
    };
    Ok(rows
        .into_iter()
        .filter(|r| name.is_none_or(|n| r.variant == n))
        .collect())
}

fn stats(args: &StatsArgs) -> Result<()> {
    type Key = (usize, usize, String, u64, u64, u64);
    let key = |r: &RunRow| -> Key {
        (
            r.robots,
            r.tasks,
            format!("{:?}", r.layout),
            r.mu_lo.to_bits(),
            r.mu_hi.to_bits(),
            r.seed,
        )
    };
    let index = |rows: Vec<RunRow>| -> Result<BTreeMap<Key, f64>> {
        let mut out = BTreeMap::new();
        for r in rows {
            let Some(e) = r.fleet_energy else { continue };
            if out.insert(key(&r), e).is_some() {
                bail!("several rows for n={} m={} seed={}; select one with --*-name", r.robots, r.tasks, r.seed);
            }
        }
        Ok(out)
    };
    let base = index(load_rows(&args.baseline, args.baseline_name.as_deref())?)?;
    let var = index(load_rows(&args.variant, args.variant_name.as_deref())?)?;
    let pairs: Vec<(f64, f64)> = base
        .iter()
        .filter_map(|(k, b)| Some((*b, *var.get(k)?)))
        .collect();
    if pairs.is_empty() {
        bail!("no paired rows");
    }
    let (b, v): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let test = wilcoxon_paired(&b, &v)?;
    let pct: Vec<f64> = pairs.iter().map(|(b, v)| savings_pct(*b, *v)).collect();
    println!("pairs: {}", pairs.len());
    println!("mean savings: {:.3} %", pct.iter().sum::<f64>() / pct.len() as f64);
    println!("W+ = {}, n = {}, p = {:.6} ({:?})", test.w_plus, test.n, test.p_value, test.method);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => run_sweep(a),
        Command::Stats(a) => stats(a).map(|_| true),
        Command::Trace(a) => trace(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
