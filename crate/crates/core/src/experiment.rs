//! Multi-seed comparisons: paired runs of several planners on the same
//! scenarios, per-step cost statistics, solver timing tables and CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mission::{
    load_scenario, method_label, run_mission, MissionLog, MissionOptions, PlannerKind, Scenario, ScenarioConfig,
    StepRecord,
};
use crate::objective::CostWeights;
use crate::planner::PlannerConfig;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "OLAHGP_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub planner: PlannerKind,
    /// Horizon for olah; ignored by greedy (1) and static (`n_static`).
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Overrides the comparison's seed count for this method.
    #[serde(default)]
    pub n_seeds: Option<usize>,
}

fn default_horizon() -> usize {
    5
}

impl MethodSpec {
    pub fn new(planner: PlannerKind, horizon: usize) -> Self {
        MethodSpec {
            planner,
            horizon,
            n_seeds: None,
        }
    }

    pub fn label(&self, opts: &MissionOptions) -> String {
        match self.planner {
            PlannerKind::Olah => method_label(PlannerKind::Olah, self.horizon),
            PlannerKind::Greedy => method_label(PlannerKind::Greedy, 1),
            PlannerKind::Static => method_label(PlannerKind::Static, opts.n_static),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonSpec {
    /// `scenario.seed` is the first seed.
    pub scenario: ScenarioConfig,
    pub planner: PlannerConfig,
    pub weights: CostWeights,
    pub options: MissionOptions,
    pub methods: Vec<MethodSpec>,
    pub n_seeds: usize,
    /// Relative scenario file paths resolve against this directory.
    pub base_dir: PathBuf,
    /// CSVs and logs are written here when set.
    pub out_dir: Option<PathBuf>,
}

impl ComparisonSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        for m in &self.methods {
            if m.horizon == 0 || m.n_seeds == Some(0) {
                return Err(Error::invalid("method horizon and seed count must be >= 1"));
            }
        }
        let mut labels: Vec<String> = self.methods.iter().map(|m| m.label(&self.options)).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return Err(Error::invalid("duplicate methods in comparison"));
        }
        self.scenario.validate()?;
        self.planner.validate()
    }

    pub fn seeds_for(&self, m: &MethodSpec) -> Vec<u64> {
        let n = m.n_seeds.unwrap_or(self.n_seeds);
        (0..n as u64).map(|k| self.scenario.seed + k).collect()
    }
}

/// One CSV row per (method, seed, step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub seed: u64,
    pub step: usize,
    pub total_p: f64,
    pub binary_rate: f64,
    pub path_len_cum: f64,
    pub gpupdate_ms: Option<f64>,
    pub setup_s: Option<f64>,
    pub solve_s: Option<f64>,
    pub iters: Option<usize>,
    pub converged: Option<bool>,
}

impl RunRow {
    fn from_step(method: &str, seed: u64, s: &StepRecord) -> Self {
        RunRow {
            method: method.to_string(),
            seed,
            step: s.step,
            total_p: s.total_p,
            binary_rate: s.binary_rate,
            path_len_cum: s.path_len_cum,
            gpupdate_ms: s.gpupdate_ms,
            setup_s: s.setup_s,
            solve_s: s.solve_s,
            iters: s.plan.as_ref().map(|p| p.iterations),
            converged: s.plan.as_ref().map(|p| p.converged),
        }
    }
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for `n = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { n, mean, std })
    }

    /// `std / sqrt(n)`, absent for fewer than two samples.
    pub fn stderr(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.std / (self.n as f64).sqrt())
    }
}

/// Cost statistics at one step of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    pub method: String,
    pub step: usize,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: Option<f64>,
}

/// Final-step cost difference `b - a` over the seeds both methods share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStat {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub mean_diff: f64,
    pub std: f64,
    pub stderr: Option<f64>,
}

/// Solver statistics per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub gpupdate_ms: Option<MeanStd>,
    pub setup_s: Option<MeanStd>,
    pub solve_s: Option<MeanStd>,
    pub iterations: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

pub const TIMING_COLUMNS: [&str; 4] = ["gpupdate_ms", "setup_s", "solve_s", "iterations"];

impl TimingTable {
    /// Aligned `mean ± std` text.
    pub fn to_text(&self) -> String {
        let fmt = |m: &Option<MeanStd>| match m {
            Some(m) => format!("{:.4} ± {:.4}", m.mean, m.std),
            None => "n/a".to_string(),
        };
        let mut cells = vec![std::iter::once("method".to_string())
            .chain(TIMING_COLUMNS.iter().map(|c| c.to_string()))
            .collect::<Vec<_>>()];
        for r in &self.rows {
            cells.push(vec![
                r.method.clone(),
                fmt(&r.gpupdate_ms),
                fmt(&r.setup_s),
                fmt(&r.solve_s),
                fmt(&r.iterations),
            ]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}", w = *w))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<TimingCsvRow> = self
            .rows
            .iter()
            .flat_map(|r| {
                [
                    ("gpupdate_ms", r.gpupdate_ms),
                    ("setup_s", r.setup_s),
                    ("solve_s", r.solve_s),
                    ("iterations", r.iterations),
                ]
                .into_iter()
                .map(|(column, m)| TimingCsvRow {
                    method: r.method.clone(),
                    column: column.to_string(),
                    n: m.map_or(0, |m| m.n),
                    mean: m.map(|m| m.mean),
                    std: m.map(|m| m.std),
                })
            })
            .collect();
        write_csv_string(&rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<TimingCsvRow> = read_csv_str(text, "timing.csv")?;
        let mut by_method: Vec<TimingRow> = Vec::new();
        for r in rows {
            if by_method.last().map_or(true, |t| t.method != r.method) {
                by_method.push(TimingRow {
                    method: r.method.clone(),
                    gpupdate_ms: None,
                    setup_s: None,
                    solve_s: None,
                    iterations: None,
                });
            }
            let row = by_method.last_mut().expect("pushed above");
            let m = match (r.mean, r.std) {
                (Some(mean), Some(std)) => Some(MeanStd { n: r.n, mean, std }),
                _ => None,
            };
            match r.column.as_str() {
                "gpupdate_ms" => row.gpupdate_ms = m,
                "setup_s" => row.setup_s = m,
                "solve_s" => row.solve_s = m,
                "iterations" => row.iterations = m,
                other => return Err(Error::invalid(format!("unknown timing column `{other}`"))),
            }
        }
        Ok(TimingTable { rows: by_method })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingCsvRow {
    method: String,
    column: String,
    n: usize,
    mean: Option<f64>,
    std: Option<f64>,
}

/// Table of solver statistics over the steps of each method's logs.
pub fn timing_table<'a>(logs: impl IntoIterator<Item = (&'a str, &'a [StepRecord])>) -> TimingTable {
    let mut acc: BTreeMap<String, [Vec<f64>; 4]> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (method, steps) in logs {
        if !acc.contains_key(method) {
            order.push(method.to_string());
        }
        let cols = acc.entry(method.to_string()).or_default();
        for s in steps {
            cols[0].extend(s.gpupdate_ms);
            cols[1].extend(s.setup_s);
            cols[2].extend(s.solve_s);
            cols[3].extend(s.plan.as_ref().map(|p| p.iterations as f64));
        }
    }
    let rows = order
        .into_iter()
        .map(|m| {
            let c = &acc[&m];
            TimingRow {
                gpupdate_ms: MeanStd::of(&c[0]),
                setup_s: MeanStd::of(&c[1]),
                solve_s: MeanStd::of(&c[2]),
                iterations: MeanStd::of(&c[3]),
                method: m,
            }
        })
        .collect();
    TimingTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub steps: Vec<StepStat>,
    pub paired: Vec<PairedStat>,
    pub timing: TimingTable,
    /// Failed missions per method, excluded from the statistics.
    pub failures: BTreeMap<String, usize>,
}

impl SummaryStats {
    /// Per-step statistics from run rows, in order of first appearance of
    /// each method.
    pub fn from_rows(rows: &[RunRow]) -> Vec<StepStat> {
        let mut order: Vec<&str> = Vec::new();
        let mut acc: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
        for r in rows {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
            acc.entry((&r.method, r.step)).or_default().push(r.total_p);
        }
        let mut out = Vec::new();
        for m in order {
            for ((_, step), v) in acc.range((m, 0)..=(m, usize::MAX)) {
                let ms = MeanStd::of(v).expect("non-empty group");
                out.push(StepStat {
                    method: m.to_string(),
                    step: *step,
                    n: ms.n,
                    mean: ms.mean,
                    std: ms.std,
                    stderr: ms.stderr(),
                });
            }
        }
        out
    }

    /// Paired final-step differences for every pair of methods.
    pub fn paired_from_rows(rows: &[RunRow]) -> Vec<PairedStat> {
        let mut order: Vec<&str> = Vec::new();
        let mut last: BTreeMap<(&str, u64), (usize, f64)> = BTreeMap::new();
        for r in rows {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
            let e = last.entry((&r.method, r.seed)).or_insert((r.step, r.total_p));
            if r.step >= e.0 {
                *e = (r.step, r.total_p);
            }
        }
        let mut out = Vec::new();
        for (i, a) in order.iter().enumerate() {
            for b in &order[i + 1..] {
                let diffs: Vec<f64> = last
                    .iter()
                    .filter(|((m, _), _)| m == a)
                    .filter_map(|((_, seed), (_, pa))| last.get(&(*b, *seed)).map(|(_, pb)| pb - pa))
                    .collect();
                if let Some(ms) = MeanStd::of(&diffs) {
                    out.push(PairedStat {
                        a: a.to_string(),
                        b: b.to_string(),
                        n: ms.n,
                        mean_diff: ms.mean,
                        std: ms.std,
                        stderr: ms.stderr(),
                    });
                }
            }
        }
        out
    }

    pub fn step(&self, method: &str, step: usize) -> Option<&StepStat> {
        self.steps.iter().find(|s| s.method == method && s.step == step)
    }

    pub fn final_step(&self, method: &str) -> Option<&StepStat> {
        self.steps.iter().filter(|s| s.method == method).max_by_key(|s| s.step)
    }

    /// `b - a` at the final step, whichever order the pair was stored in.
    pub fn paired(&self, a: &str, b: &str) -> Option<PairedStat> {
        self.paired.iter().find_map(|p| {
            if p.a == a && p.b == b {
                Some(p.clone())
            } else if p.a == b && p.b == a {
                Some(PairedStat {
                    a: a.to_string(),
                    b: b.to_string(),
                    mean_diff: -p.mean_diff,
                    ..p.clone()
                })
            } else {
                None
            }
        })
    }

    pub fn steps_to_csv(&self) -> Result<String> {
        write_csv_string(&self.steps)
    }

    pub fn steps_from_csv(text: &str) -> Result<Vec<StepStat>> {
        read_csv_str(text, "summary.csv")
    }

    pub fn paired_to_csv(&self) -> Result<String> {
        write_csv_string(&self.paired)
    }

    pub fn paired_from_csv(text: &str) -> Result<Vec<PairedStat>> {
        read_csv_str(text, "paired.csv")
    }
}

pub fn rows_to_csv(rows: &[RunRow]) -> Result<String> {
    write_csv_string(rows)
}

pub fn rows_from_csv(text: &str) -> Result<Vec<RunRow>> {
    read_csv_str(text, "runs.csv")
}

fn write_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

fn read_csv_str<T: for<'de> Deserialize<'de>>(text: &str, name: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e| Error::Parse {
                path: name.to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// One finished (or failed) mission.
#[derive(Debug)]
pub struct RunOutcome {
    pub method: String,
    pub seed: u64,
    pub result: std::result::Result<MissionLog, Error>,
}

#[derive(Debug)]
pub struct ComparisonResult {
    pub stats: SummaryStats,
    pub rows: Vec<RunRow>,
    pub runs: Vec<RunOutcome>,
}

/// Worker count from `OLAHGP_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every (method, seed) mission, in parallel, on shared per-seed
/// scenarios, and aggregates the results.
pub fn run_comparison(spec: &ComparisonSpec) -> Result<ComparisonResult> {
    spec.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_comparison_inner(spec))
}

fn run_comparison_inner(spec: &ComparisonSpec) -> Result<ComparisonResult> {
    let mut seeds: Vec<u64> = spec.methods.iter().flat_map(|m| spec.seeds_for(m)).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let scenarios: BTreeMap<u64, Scenario> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig {
                seed,
                ..spec.scenario.clone()
            };
            load_scenario(&cfg, &spec.base_dir).map(|s| (seed, s))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(&MethodSpec, u64)> = spec
        .methods
        .iter()
        .flat_map(|m| spec.seeds_for(m).into_iter().map(move |s| (m, s)))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let cfg = PlannerConfig {
                horizon_n: m.horizon,
                ..spec.planner.clone()
            };
            let label = m.label(&spec.options);
            let result = run_mission(&scenarios[&seed], m.planner, &cfg, spec.weights, &spec.options);
            if let Err(e) = &result {
                log::error!("{label} seed {seed} failed: {e}");
            }
            RunOutcome {
                method: label,
                seed,
                result,
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures: BTreeMap<String, usize> = spec.methods.iter().map(|m| (m.label(&spec.options), 0)).collect();
    for r in &runs {
        match &r.result {
            Ok(log) => rows.extend(log.steps.iter().map(|s| RunRow::from_step(&r.method, r.seed, s))),
            Err(_) => *failures.entry(r.method.clone()).or_default() += 1,
        }
    }
    let timing = timing_table(
        runs.iter()
            .filter_map(|r| r.result.as_ref().ok().map(|l| (r.method.as_str(), l.steps.as_slice()))),
    );
    let stats = SummaryStats {
        steps: SummaryStats::from_rows(&rows),
        paired: SummaryStats::paired_from_rows(&rows),
        timing,
        failures,
    };
    let result = ComparisonResult { stats, rows, runs };
    if let Some(dir) = &spec.out_dir {
        write_outputs(spec, &result, dir)?;
    }
    Ok(result)
}

#[derive(Serialize)]
struct Metadata<'a> {
    paired_seeds: bool,
    seeds: BTreeMap<String, Vec<u64>>,
    methods: &'a [MethodSpec],
    scenario: &'a ScenarioConfig,
    planner: &'a PlannerConfig,
    weights: &'a CostWeights,
    options: &'a MissionOptions,
    failures: &'a BTreeMap<String, usize>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `runs.csv`, `summary.csv`, `paired.csv`, `timing.csv`, `timing.txt`,
/// `comparison.json` and `logs/<method>_seed<seed>.jsonl`.
pub fn write_outputs(spec: &ComparisonSpec, result: &ComparisonResult, dir: &Path) -> Result<()> {
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    write_file(&dir.join("runs.csv"), &rows_to_csv(&result.rows)?)?;
    write_file(&dir.join("summary.csv"), &result.stats.steps_to_csv()?)?;
    write_file(&dir.join("paired.csv"), &result.stats.paired_to_csv()?)?;
    write_file(&dir.join("timing.csv"), &result.stats.timing.to_csv()?)?;
    write_file(&dir.join("timing.txt"), &result.stats.timing.to_text())?;
    for r in &result.runs {
        if let Ok(log) = &r.result {
            log.write(&logs.join(format!("{}_seed{}.jsonl", r.method, r.seed)))?;
        }
    }
    let meta = Metadata {
        paired_seeds: true,
        seeds: spec
            .methods
            .iter()
            .map(|m| (m.label(&spec.options), spec.seeds_for(m)))
            .collect(),
        methods: &spec.methods,
        scenario: &spec.scenario,
        planner: &spec.planner,
        weights: &spec.weights,
        options: &spec.options,
        failures: &result.stats.failures,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
        context: "comparison metadata".into(),
        source,
    })?;
    write_file(&dir.join("comparison.json"), &(json + "\n"))
}
