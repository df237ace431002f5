//! Experiment matrices: execution, per-run metrics and reports, summaries,
//! latency comparison and re-analysis of existing output directories.
//!
//! Layout of an output directory:
//!
//! ```text
//! runs/{scenario}__{strategy}__{seed}.csv      per-interval metrics
//! reports/{scenario}__{strategy}__{seed}.json  bound and convergence report
//! plot/{scenario}__{strategy}.csv              loss mean/min/max across seeds
//! summary.csv                                  one row per (scenario, strategy)
//! latency.csv                                  written by the latency verb
//! ```

mod config;

pub use config::{Cell, ConstantOverrides, EmitFlags, LatencySweep, RunConfig, ScenarioRef};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_bound, heterogeneity_degree, verify_convergence, BoundReport, ConvergenceReport};
use crate::error::{Error, Result};
use crate::scheduler::{participation_frequency, run, run_sfl, Scenario, Strategy};
use crate::types::{validate_constants, ConstantSources, RunLog, SystemConstants};

/// Bumped whenever a column is added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Column names of a per-run metrics file for `n` clients.
pub fn metrics_header(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "wall_clock", "global_loss", "grad_norm_sq"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=n {
        cols.push(format!("tau_{i}"));
        cols.push(format!("beta_{i}"));
        cols.push(format!("rho_{i}"));
    }
    cols
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "scenario",
    "strategy",
    "runs",
    "failed",
    "mean_final_loss",
    "mean_wall_clock",
    "participation",
];

pub const LATENCY_HEADER: [&str; 6] = [
    "scenario",
    "heterogeneity",
    "required_iterations",
    "sfl_wall_clock",
    "tsfl_wall_clock",
    "ratio",
];

/// Per-interval metrics as stored in a run CSV. Everything the summary needs
/// is recoverable from this table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub t: Vec<usize>,
    pub wall_clock: Vec<f64>,
    pub global_loss: Vec<f64>,
    pub grad_norm_sq: Vec<f64>,
    pub tau: Vec<Vec<u32>>,
    pub beta: Vec<Vec<bool>>,
    pub rho: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn from_log(log: &RunLog) -> Self {
        let r = &log.records;
        Self {
            t: r.iter().map(|x| x.t).collect(),
            wall_clock: r.iter().map(|x| x.wall_clock).collect(),
            global_loss: r.iter().map(|x| x.global_loss).collect(),
            grad_norm_sq: r.iter().map(|x| x.global_grad_norm_sq).collect(),
            tau: r.iter().map(|x| x.tau.clone()).collect(),
            beta: r.iter().map(|x| x.beta.clone()).collect(),
            rho: r.iter().map(|x| x.rho.clone()).collect(),
        }
    }

    pub fn num_clients(&self) -> usize {
        self.tau.first().map_or(0, Vec::len)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.global_loss.last().copied()
    }

    pub fn final_wall_clock(&self) -> Option<f64> {
        self.wall_clock.last().copied()
    }

    /// Fraction of rows in which each client participated.
    pub fn participation(&self) -> Vec<f64> {
        let n = self.num_clients();
        let rows = self.beta.len().max(1) as f64;
        (0..n)
            .map(|i| self.beta.iter().filter(|b| b[i]).count() as f64 / rows)
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(metrics_header(self.num_clients()))?;
        for k in 0..self.t.len() {
            let mut row = vec![
                self.t[k].to_string(),
                self.wall_clock[k].to_string(),
                self.global_loss[k].to_string(),
                self.grad_norm_sq[k].to_string(),
            ];
            for i in 0..self.tau[k].len() {
                row.push(self.tau[k][i].to_string());
                row.push(u8::from(self.beta[k][i]).to_string());
                row.push(self.rho[k][i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 4 || !(header.len() - 4).is_multiple_of(3) {
            return Err(Error::Config(format!("{}: unexpected column count {}", path.display(), header.len())));
        }
        let n = (header.len() - 4) / 3;
        if header != metrics_header(n) {
            return Err(Error::Config(format!("{}: header does not match schema {CSV_SCHEMA_VERSION}", path.display())));
        }
        let mut table = Self {
            t: Vec::new(),
            wall_clock: Vec::new(),
            global_loss: Vec::new(),
            grad_norm_sq: Vec::new(),
            tau: Vec::new(),
            beta: Vec::new(),
            rho: Vec::new(),
        };
        let bad = |what: &str| Error::Config(format!("{}: malformed {what}", path.display()));
        for rec in r.records() {
            let rec = rec?;
            let f = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(&header[j]));
            table.t.push(rec[0].parse().map_err(|_| bad("t"))?);
            table.wall_clock.push(f(1)?);
            table.global_loss.push(f(2)?);
            table.grad_norm_sq.push(f(3)?);
            let (mut tau, mut beta, mut rho) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let j = 4 + 3 * i;
                tau.push(rec[j].parse().map_err(|_| bad(&header[j]))?);
                beta.push(match &rec[j + 1] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad(&header[j + 1])),
                });
                rho.push(f(j + 2)?);
            }
            table.tau.push(tau);
            table.beta.push(beta);
            table.rho.push(rho);
        }
        Ok(table)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Per-run JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub constants: Option<SystemConstants>,
    pub constant_sources: Option<ConstantSources>,
    pub warnings: Vec<String>,
    pub bound: Option<BoundReport>,
    pub convergence: Option<ConvergenceReport>,
    pub participation: Vec<f64>,
    /// Intervals in which some weight exceeded θ/N. Recorded, never clamped.
    pub weight_cap_violations: usize,
    pub heterogeneity_degree: Option<f64>,
    pub final_loss: Option<f64>,
    pub optimal_loss: Option<f64>,
    pub total_wall_clock: Option<f64>,
}

impl RunReport {
    fn failed(cell: &Cell, error: &Error) -> Self {
        Self {
            schema_version: CSV_SCHEMA_VERSION,
            scenario: cell.scenario.name.clone(),
            strategy: cell.strategy.to_string(),
            seed: cell.seed,
            status: CellStatus::Failed,
            error: Some(error.to_string()),
            constants: None,
            constant_sources: None,
            warnings: Vec::new(),
            bound: None,
            convergence: None,
            participation: Vec::new(),
            weight_cap_violations: 0,
            heterogeneity_degree: None,
            final_loss: None,
            optimal_loss: None,
            total_wall_clock: None,
        }
    }

    /// Analyses a finished log. The task is rebuilt from the seed to recover
    /// w* and F*.
    pub fn analyse(cell: &Cell, log: &RunLog) -> Result<Self> {
        let task = cell.scenario.build_task(cell.seed)?;
        let sigma: Vec<f64> = log.clients.iter().map(|c| c.sigma).collect();
        let noniid: Vec<f64> = log.clients.iter().map(|c| c.noniid).collect();
        let bound = evaluate_bound(log, &log.constants, &sigma, &noniid, task.global_optimum())?;
        let f_star = task.optimal_loss();
        let convergence = verify_convergence(log, &log.constants, log.initial_loss, f_star);
        let tau_mean = crate::analysis::mean_tau(log);
        let cap = log.constants.weight_cap();
        Ok(Self {
            schema_version: CSV_SCHEMA_VERSION,
            scenario: log.scenario.clone(),
            strategy: log.strategy.clone(),
            seed: log.seed,
            status: CellStatus::Ok,
            error: None,
            constants: Some(log.constants.clone()),
            constant_sources: Some(log.constant_sources.clone()),
            warnings: validate_constants(&log.constants).iter().map(ToString::to_string).collect(),
            bound: Some(bound),
            convergence: Some(convergence),
            participation: participation_frequency(log),
            weight_cap_violations: log
                .records
                .iter()
                .filter(|r| r.rho.iter().any(|&x| x > cap + 1e-15))
                .count(),
            heterogeneity_degree: heterogeneity_degree(&tau_mean).ok(),
            final_loss: Some(log.final_loss()),
            optimal_loss: Some(f_star),
            total_wall_clock: Some(log.total_wall_clock()),
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Result of one cell of the matrix.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub id: String,
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub metrics: Option<MetricsTable>,
}

/// Aggregate over the seeds of one (scenario, strategy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub strategy: String,
    /// Successful runs.
    pub runs: usize,
    pub failed: usize,
    pub mean_final_loss: Option<f64>,
    pub mean_wall_clock: Option<f64>,
    pub participation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }
}

/// Entry per cell: (scenario, strategy, seed, failed, metrics).
type SummaryInput = (String, String, u64, bool, Option<MetricsTable>);

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Groups by (scenario, strategy) in lexicographic order; within a group
/// seeds are summed in increasing numeric order so that the result does not
/// depend on how the inputs were enumerated.
fn summarize(mut inputs: Vec<SummaryInput>) -> Vec<SummaryRow> {
    inputs.sort_by(|a, b| (&a.0, &a.1, a.2).cmp(&(&b.0, &b.1, b.2)));
    let mut groups: BTreeMap<(String, String), Vec<SummaryInput>> = BTreeMap::new();
    for input in inputs {
        groups.entry((input.0.clone(), input.1.clone())).or_default().push(input);
    }
    groups
        .into_iter()
        .map(|((scenario, strategy), cells)| {
            let failed = cells.iter().filter(|c| c.3).count();
            let tables: Vec<&MetricsTable> = cells.iter().filter(|c| !c.3).filter_map(|c| c.4.as_ref()).collect();
            let losses: Vec<f64> = tables.iter().filter_map(|t| t.final_loss()).collect();
            let clocks: Vec<f64> = tables.iter().filter_map(|t| t.final_wall_clock()).collect();
            let n = tables.first().map_or(0, |t| t.num_clients());
            let freqs: Vec<Vec<f64>> = tables.iter().map(|t| t.participation()).collect();
            let participation = (0..n)
                .map(|i| mean(&freqs.iter().map(|f| f[i]).collect::<Vec<_>>()).unwrap_or(0.0))
                .collect();
            SummaryRow {
                scenario,
                strategy,
                runs: tables.len(),
                failed,
                mean_final_loss: mean(&losses),
                mean_wall_clock: mean(&clocks),
                participation,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let participation: Vec<String> = r.participation.iter().map(f64::to_string).collect();
        w.write_record([
            r.scenario.clone(),
            r.strategy.clone(),
            r.runs.to_string(),
            r.failed.to_string(),
            opt(r.mean_final_loss),
            opt(r.mean_wall_clock),
            participation.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-interval loss statistics across seeds for each (scenario, strategy).
fn write_plot_data(cells: &[CellOutcome], dir: &Path) -> Result<()> {
    let mut groups: BTreeMap<(&str, &str), Vec<&MetricsTable>> = BTreeMap::new();
    for c in cells {
        if let Some(m) = &c.metrics {
            groups.entry((&c.scenario, &c.strategy)).or_default().push(m);
        }
    }
    for ((scenario, strategy), tables) in groups {
        let mut w = csv_writer(&dir.join(format!("{scenario}__{strategy}.csv")))?;
        w.write_record(["t", "wall_clock", "loss_mean", "loss_min", "loss_max", "grad_norm_sq_mean"])?;
        let rows = tables.iter().map(|t| t.t.len()).min().unwrap_or(0);
        for k in 0..rows {
            let losses: Vec<f64> = tables.iter().map(|t| t.global_loss[k]).collect();
            let grads: Vec<f64> = tables.iter().map(|t| t.grad_norm_sq[k]).collect();
            let clocks: Vec<f64> = tables.iter().map(|t| t.wall_clock[k]).collect();
            w.write_record([
                tables[0].t[k].to_string(),
                opt(mean(&clocks)),
                opt(mean(&losses)),
                losses.iter().copied().fold(f64::INFINITY, f64::min).to_string(),
                losses.iter().copied().fold(f64::NEG_INFINITY, f64::max).to_string(),
                opt(mean(&grads)),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_cell(cell: &Cell, config: &RunConfig) -> Result<(RunLog, RunReport)> {
    let constants = config.constants(cell.scenario.num_clients());
    let opts = config.run_options();
    let log = run(&cell.scenario, cell.strategy, &constants, cell.seed, &opts)?;
    log.check_invariants()?;
    let report = RunReport::analyse(cell, &log)?;
    Ok((log, report))
}

/// Runs `f` over `items` on up to `parallel` threads; results keep item order.
fn parallel_map<T: Sync, R: Send>(items: &[T], parallel: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = parallel.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                *slots[k].lock().expect("slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled"))
        .collect()
}

fn prepare_dirs(out_dir: &Path, emit: &EmitFlags) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    if emit.csv {
        fs::create_dir_all(out_dir.join("runs"))?;
    }
    if emit.json {
        fs::create_dir_all(out_dir.join("reports"))?;
    }
    if emit.plot_data {
        fs::create_dir_all(out_dir.join("plot"))?;
    }
    Ok(())
}

/// Executes every cell of `config`, writing outputs under `out_dir`.
///
/// The config is validated before anything touches the filesystem. A cell
/// that fails is reported as such and the others still run; the summary is
/// written once every cell has finished.
pub fn run_experiment(config: &RunConfig, out_dir: &Path, parallel: usize) -> Result<ExperimentOutcome> {
    let cells = config.cells()?;
    prepare_dirs(out_dir, &config.emit)?;
    let emit = config.emit;

    let outcomes = parallel_map(&cells, parallel, |cell| -> Result<CellOutcome> {
        let id = cell.id();
        let (status, error, metrics, report) = match run_cell(cell, config) {
            Ok((log, report)) => (CellStatus::Ok, None, Some(MetricsTable::from_log(&log)), report),
            Err(e) => (CellStatus::Failed, Some(e.to_string()), None, RunReport::failed(cell, &e)),
        };
        if emit.csv {
            if let Some(m) = &metrics {
                m.write(&out_dir.join("runs").join(format!("{id}.csv")))?;
            }
        }
        if emit.json {
            report.write(&out_dir.join("reports").join(format!("{id}.json")))?;
        }
        Ok(CellOutcome {
            id,
            scenario: cell.scenario.name.clone(),
            strategy: cell.strategy.to_string(),
            seed: cell.seed,
            status,
            error,
            metrics,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let summary = summarize(
        outcomes
            .iter()
            .map(|c| (c.scenario.clone(), c.strategy.clone(), c.seed, c.status == CellStatus::Failed, c.metrics.clone()))
            .collect(),
    );
    write_summary(&summary, &out_dir.join("summary.csv"))?;
    if emit.plot_data {
        write_plot_data(&outcomes, &out_dir.join("plot"))?;
    }
    Ok(ExperimentOutcome { cells: outcomes, summary })
}

fn parse_id(stem: &str) -> Option<(String, String, u64)> {
    let mut parts = stem.split("__");
    let (scenario, strategy, seed) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    Some((scenario.to_string(), strategy.to_string(), seed.parse().ok()?))
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == ext));
    paths.sort();
    Ok(paths)
}

/// Recomputes `summary.csv` from the run CSVs in `out_dir`. Failures are
/// read from the report files when present.
pub fn report(out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let runs = out_dir.join("runs");
    let reports = out_dir.join("reports");
    if !runs.is_dir() && !reports.is_dir() {
        return Err(Error::Config(format!("{} holds no runs/ or reports/ directory", out_dir.display())));
    }
    let mut inputs: BTreeMap<(String, String, u64), SummaryInput> = BTreeMap::new();
    for path in sorted_entries(&runs, "csv")? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some(key) = parse_id(stem) else { continue };
        let table = MetricsTable::read(&path)?;
        inputs.insert(key.clone(), (key.0, key.1, key.2, false, Some(table)));
    }
    for path in sorted_entries(&reports, "json")? {
        let report: RunReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if report.status == CellStatus::Failed {
            let key = (report.scenario, report.strategy, report.seed);
            inputs.insert(key.clone(), (key.0, key.1, key.2, true, None));
        }
    }
    let rows = summarize(inputs.into_values().collect());
    write_summary(&rows, &out_dir.join("summary.csv"))?;
    Ok(rows)
}

/// One heterogeneity level of a latency comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub scenario: String,
    pub heterogeneity: f64,
    pub required_iterations: u32,
    pub sfl_wall_clock: f64,
    pub tsfl_wall_clock: f64,
    pub ratio: f64,
}

/// Scenarios of a latency comparison paired with their heterogeneity degree.
fn latency_scenarios(config: &RunConfig) -> Result<Vec<(Scenario, f64)>> {
    let sweep = &config.latency;
    if sweep.heterogeneity.is_empty() {
        return config
            .scenario_list()?
            .into_iter()
            .map(|s| {
                let delta = heterogeneity_degree(&s.nominal_rates())?;
                Ok((s, delta))
            })
            .collect();
    }
    let mean_rate = sweep.mean_rate.unwrap_or(2.5);
    sweep
        .heterogeneity
        .iter()
        .map(|&delta| {
            let mut s = config.customize_preset(Scenario::two_tier(config.preset_clients(), mean_rate, delta)?);
            s.name = format!("two_tier_{delta}");
            Ok((s, delta))
        })
        .collect()
}

/// Total wall-clock of conventional synchronous rounds against the interval
/// clock, per heterogeneity level. Both sides run the configured number of
/// aggregations. SFL uses one iteration count across all levels: the
/// configured one, else the largest default over the compared scenarios.
pub fn compare_latency(config: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<LatencyRow>> {
    let strategies = config.strategy_list()?;
    if !strategies.contains(&Strategy::Sfl) || !strategies.contains(&Strategy::TsflDms) {
        return Err(Error::Config(
            "line 1, column 1: latency comparison needs strategies sfl and tsfl-dms".into(),
        ));
    }
    let scenarios = latency_scenarios(config)?;
    let opts = config.run_options();
    let required = match opts.required_iterations {
        Some(r) => r,
        None => scenarios.iter().map(|(s, _)| opts.required_iterations_for(s)).max().unwrap_or(1),
    };
    let seed = config.seed_list()[0];
    let mut rows = Vec::with_capacity(scenarios.len());
    for (scenario, delta) in scenarios {
        let c = config.constants(scenario.num_clients());
        let sfl = run_sfl(&scenario, required, &c, seed, &opts)?.total_wall_clock();
        let tsfl = run(&scenario, Strategy::TsflDms, &c, seed, &opts)?.total_wall_clock();
        rows.push(LatencyRow {
            scenario: scenario.name.clone(),
            heterogeneity: delta,
            required_iterations: required,
            sfl_wall_clock: sfl,
            tsfl_wall_clock: tsfl,
            ratio: tsfl / sfl,
        });
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv_writer(&dir.join("latency.csv"))?;
        w.write_record(LATENCY_HEADER)?;
        for r in &rows {
            w.write_record([
                r.scenario.clone(),
                r.heterogeneity.to_string(),
                r.required_iterations.to_string(),
                r.sfl_wall_clock.to_string(),
                r.tsfl_wall_clock.to_string(),
                r.ratio.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        assert_eq!(
            parse_id("case1__tsfl-dms__42"),
            Some(("case1".into(), "tsfl-dms".into(), 42))
        );
        assert_eq!(parse_id("case1__tsfl-dms"), None);
        assert_eq!(parse_id("a__b__c__1"), None);
    }

    #[test]
    fn header_interleaves_clients() {
        assert_eq!(
            metrics_header(2).join(","),
            "t,wall_clock,global_loss,grad_norm_sq,tau_1,beta_1,rho_1,tau_2,beta_2,rho_2"
        );
    }

    #[test]
    fn summary_ignores_input_order() {
        let table = |loss: f64| MetricsTable {
            t: vec![0],
            wall_clock: vec![1.0],
            global_loss: vec![loss],
            grad_norm_sq: vec![0.0],
            tau: vec![vec![1, 2]],
            beta: vec![vec![true, false]],
            rho: vec![vec![1.0, 0.0]],
        };
        let a = vec![
            ("s".to_string(), "x".to_string(), 2, false, Some(table(0.1))),
            ("s".to_string(), "x".to_string(), 1, false, Some(table(0.7))),
            ("s".to_string(), "x".to_string(), 3, true, None),
        ];
        let mut b = a.clone();
        b.reverse();
        let rows = summarize(a);
        assert_eq!(rows, summarize(b));
        assert_eq!((rows[0].runs, rows[0].failed), (2, 1));
        assert_eq!(rows[0].participation, vec![1.0, 0.0]);
        assert_eq!(rows[0].mean_final_loss, Some((0.7 + 0.1) / 2.0));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(parallel_map(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
