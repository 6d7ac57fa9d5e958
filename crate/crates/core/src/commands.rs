//! Operations behind the `olahgp` command line, and its config file.
//!
//! The config is one JSON document with sections `scenario`, `planner`,
//! `cost` and `experiment`. Only `scenario` is required. Values given as
//! [`Overrides`] (command-line flags) take precedence over the file, which
//! takes precedence over built-in defaults. Relative paths inside the file
//! resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{run_comparison, ComparisonResult, ComparisonSpec, MethodSpec};
use crate::fgrid;
use crate::geometry::{GridField, Point2};
use crate::gp_field::{GpModel, VarianceMode};
use crate::mission::{
    evaluate, load_scenario, make_scenario, method_label, read_log, run_mission, MissionLog, MissionOptions,
    PlannerKind, ScenarioConfig, TruthSource,
};
use crate::objective::{CostBreakdown, CostWeights, Objective};
use crate::planner::{solve_objective, Plan, PlannerConfig};
use crate::render::{self, heatmap, overlay_path, Style};

fn d_horizon() -> usize {
    5
}
fn d_lmax() -> f64 {
    6160.0
}
fn d_max_iters() -> usize {
    200
}
fn d_kkt() -> f64 {
    1e-6
}
fn d_ctol() -> f64 {
    1e-3
}
fn d_true() -> bool {
    true
}
fn d_static() -> usize {
    20
}
fn d_seeds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default = "default_kind")]
    pub kind: PlannerKind,
    #[serde(default = "d_horizon")]
    pub horizon_n: usize,
    #[serde(default = "d_lmax")]
    pub l_max: f64,
    #[serde(default)]
    pub variance_mode: VarianceMode,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_kkt")]
    pub kkt_tol: f64,
    #[serde(default = "d_ctol")]
    pub constraint_tol: f64,
    /// Defaults to the scenario's measurement noise.
    #[serde(default)]
    pub lookahead_noise_sd: Option<f64>,
    #[serde(default = "d_true")]
    pub multi_start: bool,
    #[serde(default)]
    pub two_opt: bool,
    #[serde(default = "d_true")]
    pub greedy_seed: bool,
    #[serde(default = "d_static")]
    pub n_static: usize,
    #[serde(default)]
    pub static_l_max: Option<f64>,
}

fn default_kind() -> PlannerKind {
    PlannerKind::Olah
}

impl Default for PlannerSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Cost weights other than the threshold, which lives in the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub leaky_slope: Option<f64>,
    pub eps_current: Option<f64>,
    pub gate_tau: Option<f64>,
    #[serde(default)]
    pub gate_on_destination: bool,
}

impl Default for CostSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields optional")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "d_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub record_timings: bool,
}

fn default_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(PlannerKind::Olah, 5),
        MethodSpec::new(PlannerKind::Greedy, 1),
        MethodSpec::new(PlannerKind::Static, 20),
    ]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub planner: Option<PlannerKind>,
    pub horizon: Option<usize>,
    pub steps: Option<usize>,
    pub variance_mode: Option<VarianceMode>,
    pub timings: bool,
}

impl Config {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Reads a config file; returns it with the directory relative paths
    /// resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.scenario.seed = s;
        }
        if let Some(k) = o.planner {
            self.planner.kind = k;
        }
        if let Some(h) = o.horizon {
            self.planner.horizon_n = h;
        }
        if let Some(n) = o.steps {
            self.scenario.n_steps = n;
        }
        if let Some(m) = o.variance_mode {
            self.planner.variance_mode = m;
        }
        if o.timings {
            self.experiment.record_timings = true;
        }
    }

    pub fn weights(&self) -> CostWeights {
        let mut w = CostWeights::new(self.scenario.gamma);
        let c = &self.cost;
        w.lambda1 = c.lambda1.unwrap_or(w.lambda1);
        w.lambda2 = c.lambda2.unwrap_or(w.lambda2);
        w.lambda3 = c.lambda3.unwrap_or(w.lambda3);
        w.leaky_slope = c.leaky_slope.unwrap_or(w.leaky_slope);
        w.eps_current = c.eps_current.unwrap_or(w.eps_current);
        w.gate_tau = c.gate_tau.unwrap_or(w.gate_tau);
        w.gate_on_destination = c.gate_on_destination;
        w
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let p = &self.planner;
        PlannerConfig {
            horizon_n: p.horizon_n,
            l_max: p.l_max,
            bounds: self.scenario.grid,
            variance_mode: p.variance_mode,
            max_iters: p.max_iters,
            kkt_tol: p.kkt_tol,
            constraint_tol: p.constraint_tol,
            lookahead_noise_sd: p.lookahead_noise_sd.unwrap_or(self.scenario.measurement_noise_sd),
            multi_start: p.multi_start,
            two_opt: p.two_opt,
            greedy_seed: p.greedy_seed,
        }
    }

    pub fn mission_options(&self) -> MissionOptions {
        MissionOptions {
            record_timings: self.experiment.record_timings,
            n_static: self.planner.n_static,
            static_l_max: self.planner.static_l_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.weights().validate()?;
        self.planner_config().validate()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T, context: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|source| Error::Json {
        context: context.to_string(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `truth.fgrid`, `prior.fgrid` and `scenario.json` to `out`.
pub fn cmd_scenario(cfg: &Config, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let source = match &cfg.scenario.truth_file {
        Some(p) => TruthSource::File(base.join(p)),
        None => TruthSource::Synthetic,
    };
    let (truth, prior) = make_scenario(&cfg.scenario, &source)?;
    create_dir(out)?;
    let paths = [out.join("truth.fgrid"), out.join("prior.fgrid"), out.join("scenario.json")];
    fgrid::write(&paths[0], &truth.field)?;
    fgrid::write(&paths[1], prior.field())?;
    write_json(&paths[2], &cfg.scenario, "scenario config")?;
    Ok(paths.to_vec())
}

/// File name of a mission log.
pub fn log_name(method: &str, seed: u64) -> String {
    format!("{method}_seed{seed}.jsonl")
}

/// Runs one mission with the configured planner and writes its log.
pub fn cmd_run(cfg: &Config, base: &Path, out: &Path) -> Result<(MissionLog, PathBuf)> {
    cfg.validate()?;
    let scenario = load_scenario(&cfg.scenario, base)?;
    let pc = cfg.planner_config();
    let log = run_mission(&scenario, cfg.planner.kind, &pc, cfg.weights(), &cfg.mission_options())?;
    create_dir(out)?;
    let path = out.join(log_name(&log.summary.method, cfg.scenario.seed));
    log.write(&path)?;
    Ok((log, path))
}

/// Runs the configured comparison and writes CSVs and logs under `out`.
pub fn cmd_compare(cfg: &Config, base: &Path, out: &Path) -> Result<ComparisonResult> {
    cfg.validate()?;
    let spec = ComparisonSpec {
        scenario: cfg.scenario.clone(),
        planner: cfg.planner_config(),
        weights: cfg.weights(),
        options: cfg.mission_options(),
        methods: cfg.experiment.methods.clone(),
        n_seeds: cfg.experiment.n_seeds,
        base_dir: base.to_path_buf(),
        out_dir: Some(out.to_path_buf()),
    };
    create_dir(out)?;
    run_comparison(&spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub method: String,
    pub r0: Point2,
    pub plan: Plan,
    pub cost: CostBreakdown,
}

/// One solve on the prior-only belief from the scenario's start point;
/// writes `plan.json`.
pub fn cmd_plan(cfg: &Config, base: &Path, out: &Path) -> Result<PlanReport> {
    cfg.validate()?;
    let scenario = load_scenario(&cfg.scenario, base)?;
    let model = scenario.prior_model()?;
    let mut pc = cfg.planner_config();
    let horizon = match cfg.planner.kind {
        PlannerKind::Olah => pc.horizon_n,
        PlannerKind::Greedy => 1,
        PlannerKind::Static => {
            pc.l_max = cfg
                .planner
                .static_l_max
                .unwrap_or(pc.l_max * cfg.planner.n_static as f64 / pc.horizon_n as f64);
            cfg.planner.n_static
        }
    };
    pc.horizon_n = horizon;
    let obj = Objective::new(
        &model,
        cfg.scenario.r0,
        cfg.weights(),
        scenario.forcing.clone(),
        pc.variance_mode,
        pc.lookahead_noise_sd,
    )?;
    let mut plan = solve_objective(&obj, &pc, None)?;
    if !cfg.experiment.record_timings {
        plan.solve_time = 0.0;
    }
    let report = PlanReport {
        method: method_label(cfg.planner.kind, horizon),
        r0: cfg.scenario.r0,
        cost: obj.breakdown(&plan.waypoints)?,
        plan,
    };
    create_dir(out)?;
    write_json(&out.join("plan.json"), &report, "plan report")?;
    Ok(report)
}

fn is_fgrid(path: &Path) -> Result<bool> {
    if path.extension().is_some_and(|e| e == "fgrid") {
        return Ok(true);
    }
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(text.starts_with(b"FGRID"))
}

/// Renders a log (refitting the belief from its data and the scenario in
/// `cfg`) or an FGRID file (mean style only) to a PPM image plus range
/// sidecar.
pub fn cmd_render(input: &Path, style: Style, out: &Path, cfg: Option<(&Config, &Path)>) -> Result<PathBuf> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    if is_fgrid(input)? {
        if style != Style::Mean {
            return Err(Error::invalid(format!(
                "style `{style}` needs a mission log; FGRID input supports `mean` only"
            )));
        }
        let field = fgrid::read(input)?;
        let (img, range) = heatmap(&field, None);
        render::write_with_sidecar(&img, range, style, out)?;
        return Ok(out.to_path_buf());
    }

    let (cfg, base) = cfg.ok_or_else(|| Error::invalid("rendering a log needs --config for the scenario"))?;
    let (steps, summary) = read_log(input)?;
    let scenario_cfg = ScenarioConfig {
        seed: summary.seed,
        ..cfg.scenario.clone()
    };
    let scenario = load_scenario(&scenario_cfg, base)?;
    let model = GpModel::fit(scenario.prior.clone(), scenario_cfg.kernel, &summary.data)?;
    let ev = evaluate(&model, &scenario.truth, scenario_cfg.gamma)?;
    let (field, range): (&GridField, Option<(f64, f64)>) = match style {
        Style::Mean | Style::PathOverlay => (&ev.mean, None),
        Style::Var => (&ev.var, Some((0.0, scenario_cfg.kernel.sigma2))),
        Style::P => (&ev.p_map, Some((0.0, 0.5))),
        Style::ClassError => (&ev.class_error, Some((0.0, 1.0))),
    };
    let (mut img, range) = heatmap(field, range);
    if style == Style::PathOverlay {
        let mut path: Vec<Point2> = steps.iter().map(|s| s.position).collect();
        if let Some(last) = steps.last() {
            path.push(last.target);
        }
        overlay_path(&mut img, &path, field.side(), field.res());
    }
    render::write_with_sidecar(&img, range, style, out)?;
    Ok(out.to_path_buf())
}
