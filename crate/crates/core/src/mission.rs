//! Scenarios, simulated sensing and the sense-update-replan-move loop.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgrid;
use crate::geometry::{GridDomain, GridField, GridKind, Point2};
use crate::gp_field::{sample_correlated_field_with, GpModel, KernelParams, Measurement, PriorField};
use crate::objective::{misclass_prob, CostWeights, CurrentField, EnvForcing, Objective};
use crate::planner::{self, initial_guess_ngon, shift_warm_start, Plan, PlannerConfig};

/// Random sub-streams of a mission seed.
pub mod streams {
    pub const TRUTH: u64 = 0;
    pub const PRIOR_NOISE: u64 = 1;
    pub const MEASUREMENT: u64 = 2;
}

/// Generator for one sub-stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How the corrupting prior noise is made non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSign {
    /// `truth + |n|`
    #[default]
    Abs,
    /// `truth + max(n, 0)`
    Clamp,
}

/// Parameters of the synthetic bloom field: a flat background plus
/// Gaussian patches with random centers, amplitudes and widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTruth {
    pub background: f64,
    pub n_patches: usize,
    pub amplitude: [f64; 2],
    /// Patch standard deviation range (m).
    pub width: [f64; 2],
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        SyntheticTruth {
            background: 1.0,
            n_patches: 5,
            amplitude: [1.5, 3.0],
            width: [300.0, 700.0],
        }
    }
}

/// Current and wind files for the field-campaign cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub current_east: PathBuf,
    pub current_north: PathBuf,
    pub wind: [f64; 2],
}

impl ForcingSpec {
    pub fn load(&self, base: &Path) -> Result<EnvForcing> {
        let east = fgrid::read(&base.join(&self.current_east))?;
        let north = fgrid::read(&base.join(&self.current_north))?;
        if !(self.wind[0].is_finite() && self.wind[1].is_finite()) {
            return Err(Error::invalid("wind must be finite"));
        }
        Ok(EnvForcing {
            current: CurrentField::new(east, north)?,
            wind: self.wind,
        })
    }
}

fn default_noise_sd() -> f64 {
    0.05
}
fn default_noise_var() -> f64 {
    0.2
}
fn default_steps() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridDomain,
    pub kernel: KernelParams,
    pub gamma: f64,
    #[serde(default = "default_noise_sd")]
    pub measurement_noise_sd: f64,
    /// Variance of the correlated noise added to the truth to form the prior.
    #[serde(default = "default_noise_var")]
    pub noise_prior_variance: f64,
    /// Length scale of that noise; `side / 8` when absent.
    #[serde(default)]
    pub noise_prior_length: Option<f64>,
    #[serde(default)]
    pub noise_sign: NoiseSign,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub r0: Point2,
    /// FGRID ground truth; synthetic when absent.
    #[serde(default)]
    pub truth_file: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SyntheticTruth,
    #[serde(default)]
    pub forcing: Option<ForcingSpec>,
}

impl ScenarioConfig {
    /// Defaults for a region of side `side` with the given kernel.
    pub fn new(grid: GridDomain, kernel: KernelParams, gamma: f64) -> Self {
        ScenarioConfig {
            grid,
            kernel,
            gamma,
            measurement_noise_sd: default_noise_sd(),
            noise_prior_variance: default_noise_var(),
            noise_prior_length: None,
            noise_sign: NoiseSign::Abs,
            n_steps: default_steps(),
            seed: 0,
            r0: Point2::ORIGIN,
            truth_file: None,
            synthetic: SyntheticTruth::default(),
            forcing: None,
        }
    }

    pub fn noise_length(&self) -> f64 {
        self.noise_prior_length.unwrap_or(self.grid.side / 8.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.kernel.validate()?;
        self.grid.check_spacing(self.kernel.ell);
        self.grid.check(self.r0)?;
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be >= 1"));
        }
        if !(self.measurement_noise_sd >= 0.0 && self.measurement_noise_sd.is_finite()) {
            return Err(Error::invalid("measurement_noise_sd must be >= 0"));
        }
        if !(self.noise_prior_variance >= 0.0 && self.noise_prior_variance.is_finite()) {
            return Err(Error::invalid("noise_prior_variance must be >= 0"));
        }
        if !(self.noise_length() > 0.0) {
            return Err(Error::invalid("noise_prior_length must be > 0"));
        }
        let s = &self.synthetic;
        if s.amplitude[0] > s.amplitude[1] || s.width[0] > s.width[1] || !(s.width[0] > 0.0) {
            return Err(Error::invalid("synthetic ranges must be ordered with positive widths"));
        }
        Ok(())
    }
}

/// Where the ground truth comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    File(PathBuf),
    Synthetic,
}

/// Reference field on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub field: GridField,
}

impl GroundTruth {
    pub fn new(field: GridField) -> Result<Self> {
        if field.values().iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("ground truth must be non-negative"));
        }
        Ok(GroundTruth { field })
    }

    pub fn value_at(&self, x: Point2) -> Result<f64> {
        self.field.value_at(x)
    }
}

/// Everything a mission needs besides the planner settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
    pub prior: PriorField,
    pub forcing: Option<EnvForcing>,
}

impl Scenario {
    pub fn prior_model(&self) -> Result<GpModel> {
        GpModel::new(self.prior.clone(), self.config.kernel)
    }
}

/// Background plus Gaussian patches, drawn from the truth sub-stream.
pub fn synthetic_truth(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    let mut rng = stream_rng(cfg.seed, streams::TRUTH);
    let s = &cfg.synthetic;
    let half = cfg.grid.half();
    let patches: Vec<(Point2, f64, f64)> = (0..s.n_patches)
        .map(|_| {
            let c = Point2::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half));
            let a = lerp(s.amplitude, rng.gen::<f64>());
            let w = lerp(s.width, rng.gen::<f64>());
            (c, a, w)
        })
        .collect();
    let field = GridField::from_fn(cfg.grid.side, cfg.grid.res_eval, |p| {
        let bumps: f64 = patches
            .iter()
            .map(|&(c, a, w)| a * (-0.5 * p.dist_sq(c) / (w * w)).exp())
            .sum();
        (s.background + bumps).max(0.0)
    })?;
    GroundTruth::new(field)
}

fn lerp(range: [f64; 2], t: f64) -> f64 {
    range[0] + t * (range[1] - range[0])
}

/// Ground truth plus the prior formed by corrupting it with non-negative
/// correlated noise.
pub fn make_scenario(cfg: &ScenarioConfig, source: &TruthSource) -> Result<(GroundTruth, PriorField)> {
    cfg.validate()?;
    let truth = match source {
        TruthSource::Synthetic => synthetic_truth(cfg)?,
        TruthSource::File(path) => {
            let f = fgrid::read(path)?;
            if (f.side() - cfg.grid.side).abs() > 1e-9 * cfg.grid.side {
                return Err(Error::invalid(format!(
                    "{}: side {} does not match scenario side {}",
                    path.display(),
                    f.side(),
                    cfg.grid.side
                )));
            }
            GroundTruth::new(f.resample(cfg.grid.res_eval)?)?
        }
    };
    let values: Vec<f64> = if cfg.noise_prior_variance == 0.0 {
        truth.field.values().to_vec()
    } else {
        let noise_kernel = KernelParams::new(cfg.noise_prior_variance, cfg.noise_length())?;
        let mut rng = stream_rng(cfg.seed, streams::PRIOR_NOISE);
        let noise = sample_correlated_field_with(&noise_kernel, &cfg.grid, &mut rng)?;
        truth
            .field
            .values()
            .iter()
            .zip(noise)
            .map(|(t, n)| match cfg.noise_sign {
                NoiseSign::Abs => t + n.abs(),
                NoiseSign::Clamp => t + n.max(0.0),
            })
            .collect()
    };
    let prior = PriorField::new(cfg.grid, values)?;
    Ok((truth, prior))
}

/// Builds the full scenario; relative paths resolve against `base`.
pub fn load_scenario(cfg: &ScenarioConfig, base: &Path) -> Result<Scenario> {
    let source = match &cfg.truth_file {
        Some(p) => TruthSource::File(base.join(p)),
        None => TruthSource::Synthetic,
    };
    let (truth, prior) = make_scenario(cfg, &source)?;
    let forcing = cfg.forcing.as_ref().map(|f| f.load(base)).transpose()?;
    Ok(Scenario {
        config: cfg.clone(),
        truth,
        prior,
        forcing,
    })
}

/// Noisy sample of the truth at `x`.
pub fn take_measurement<R: Rng + ?Sized>(
    truth: &GroundTruth,
    x: Point2,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Measurement> {
    let clean = truth.value_at(x)?;
    let noise = if noise_sd > 0.0 {
        Normal::new(0.0, noise_sd)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    Ok(Measurement::new(x, clean + noise, noise_sd))
}

/// Metrics of a belief against the truth on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Summed misclassification probability.
    pub total_p: f64,
    /// Fraction of nodes whose thresholded mean disagrees with the truth.
    pub binary_rate: f64,
    pub mean: GridField,
    pub var: GridField,
    pub p_map: GridField,
    /// 1 where the classification is wrong, else 0.
    pub class_error: GridField,
}

/// Scores `model` against `truth` on the evaluation grid. A node counts as
/// bloom when its value is at least `gamma`.
pub fn evaluate(model: &GpModel, truth: &GroundTruth, gamma: f64) -> Result<Evaluation> {
    let post = model.posterior_field(GridKind::Eval);
    let truth_vals = truth.field.resample(post.res)?;
    let p: Vec<f64> = post
        .mean
        .iter()
        .zip(&post.var)
        .map(|(&m, &v)| misclass_prob(m, v.sqrt(), gamma))
        .collect();
    let err: Vec<f64> = post
        .mean
        .iter()
        .zip(truth_vals.values())
        .map(|(&m, &t)| if (m >= gamma) != (t >= gamma) { 1.0 } else { 0.0 })
        .collect();
    let n = p.len() as f64;
    Ok(Evaluation {
        total_p: p.iter().sum(),
        binary_rate: err.iter().sum::<f64>() / n,
        mean: post.mean_field()?,
        var: post.var_field()?,
        p_map: GridField::new(post.side, post.res, p)?,
        class_error: GridField::new(post.side, post.res, err)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Olah,
    Greedy,
    Static,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "olah" => Ok(PlannerKind::Olah),
            "greedy" => Ok(PlannerKind::Greedy),
            "static" => Ok(PlannerKind::Static),
            other => Err(Error::invalid(format!("unknown planner `{other}`"))),
        }
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlannerKind::Olah => "olah",
            PlannerKind::Greedy => "greedy",
            PlannerKind::Static => "static",
        })
    }
}

/// Mission settings not covered by the planner config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOptions {
    /// Record wall-clock timings. Off keeps logs byte-reproducible.
    pub record_timings: bool,
    /// Waypoints in the static plan.
    pub n_static: usize,
    /// Static path budget; `l_max * n_static / horizon_n` when absent.
    pub static_l_max: Option<f64>,
}

impl Default for MissionOptions {
    fn default() -> Self {
        MissionOptions {
            record_timings: false,
            n_static: 20,
            static_l_max: None,
        }
    }
}

/// Plan as logged (without wall time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedPlan {
    pub waypoints: Vec<Point2>,
    pub objective: f64,
    pub path_len: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: f64,
}

impl From<&Plan> for LoggedPlan {
    fn from(p: &Plan) -> Self {
        LoggedPlan {
            waypoints: p.waypoints.clone(),
            objective: p.objective,
            path_len: p.path_len,
            iterations: p.iterations,
            converged: p.converged,
            kkt: p.kkt,
        }
    }
}

/// One step of a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub position: Point2,
    pub measurement: Measurement,
    /// Plan produced at this step (the static planner plans only at step 0).
    pub plan: Option<LoggedPlan>,
    pub solver_error: Option<String>,
    /// Next position.
    pub target: Point2,
    /// Evaluation-grid cost after this step's measurement is assimilated.
    pub total_p: f64,
    pub binary_rate: f64,
    /// Distance travelled before this step's measurement.
    pub path_len_cum: f64,
    pub gp_updates: usize,
    pub gpupdate_ms: Option<f64>,
    pub setup_s: Option<f64>,
    pub solve_s: Option<f64>,
    /// Seconds since the mission started.
    pub elapsed_s: Option<f64>,
}

/// Final record of a mission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub summary: bool,
    pub method: String,
    pub planner: PlannerKind,
    pub horizon: usize,
    pub seed: u64,
    pub n_steps: usize,
    pub final_total_p: f64,
    pub final_binary_rate: f64,
    pub path_len_total: f64,
    pub solver_failures: usize,
    /// Dataset of the final belief.
    pub data: Vec<Measurement>,
}

#[derive(Debug, Clone)]
pub struct MissionLog {
    pub steps: Vec<StepRecord>,
    pub summary: MissionSummary,
    pub final_model: GpModel,
}

impl MissionLog {
    /// One JSON object per step, then the summary.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&to_json(s, "step record")?);
            out.push('\n');
        }
        out.push_str(&to_json(&self.summary, "summary record")?);
        out.push('\n');
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_jsonl()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn to_json<T: Serialize>(v: &T, context: &'static str) -> Result<String> {
    serde_json::to_string(v).map_err(|source| Error::Json {
        context: context.to_string(),
        source,
    })
}

/// Step records and summary read back from a log file.
pub fn read_log(path: &Path) -> Result<(Vec<StepRecord>, MissionSummary)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut steps = Vec::new();
    let mut summary = None;
    for (k, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.display().to_string(),
            line: k + 1,
            msg: e.to_string(),
        };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
        if v.get("summary").is_some() {
            summary = Some(serde_json::from_value(v).map_err(parse_err)?);
        } else {
            steps.push(serde_json::from_value(v).map_err(parse_err)?);
        }
    }
    let summary = summary.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "missing summary record".into(),
    })?;
    Ok((steps, summary))
}

/// Display name of a planner setting, e.g. `olah-n5`.
pub fn method_label(kind: PlannerKind, horizon: usize) -> String {
    match kind {
        PlannerKind::Olah => format!("olah-n{horizon}"),
        other => other.to_string(),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one mission. Olah and greedy measure, update the belief, replan
/// and move to the first waypoint each step; static plans once on the
/// prior and then visits its waypoints without updating, holding at the
/// last one if the plan runs out. Costs are recorded after each
/// measurement (post hoc for static).
pub fn run_mission(
    scenario: &Scenario,
    kind: PlannerKind,
    config: &PlannerConfig,
    weights: CostWeights,
    opts: &MissionOptions,
) -> Result<MissionLog> {
    config.validate()?;
    let sc = &scenario.config;
    if config.bounds != sc.grid {
        return Err(Error::invalid("planner bounds must equal the scenario grid"));
    }
    let mut cfg = config.clone();
    if kind == PlannerKind::Greedy {
        cfg.horizon_n = 1;
    }
    match kind {
        PlannerKind::Static => run_static(scenario, &cfg, weights, opts),
        _ => run_receding(scenario, kind, &cfg, weights, opts),
    }
}

fn run_receding(
    scenario: &Scenario,
    kind: PlannerKind,
    cfg: &PlannerConfig,
    weights: CostWeights,
    opts: &MissionOptions,
) -> Result<MissionLog> {
    let sc = &scenario.config;
    let clock = Instant::now();
    let timed = opts.record_timings;
    let mut rng = stream_rng(sc.seed, streams::MEASUREMENT);
    let mut model = scenario.prior_model()?;
    let mut pos = sc.r0;
    let mut warm = initial_guess_ngon(pos, cfg.horizon_n, sc.grid.side);
    let mut travelled = 0.0;
    let mut failures = 0;
    let mut steps = Vec::with_capacity(sc.n_steps);

    for step in 0..sc.n_steps {
        let m = take_measurement(&scenario.truth, pos, sc.measurement_noise_sd, &mut rng)?;

        let t = Instant::now();
        model = model.add_measurement(m)?;
        let _ = model.posterior_field(GridKind::Opt);
        let gpupdate_ms = ms(t);

        let t = Instant::now();
        let obj = Objective::new(
            &model,
            pos,
            weights,
            scenario.forcing.clone(),
            cfg.variance_mode,
            cfg.lookahead_noise_sd,
        )?;
        let setup_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let solved = planner::solve_objective(&obj, cfg, Some(&warm));
        let solve_s = t.elapsed().as_secs_f64();

        let (plan, solver_error) = match solved {
            Ok(p) => {
                warm = shift_warm_start(&p);
                (Some(p), None)
            }
            Err(e) => {
                failures += 1;
                log::warn!("{kind} step {step}: solver failed ({e}); keeping the previous target");
                (None, Some(e.to_string()))
            }
        };
        let target = match &plan {
            Some(p) => p.waypoints[0],
            None => {
                let t = warm[0];
                warm = shift_warm_start(&Plan {
                    waypoints: warm.clone(),
                    objective: f64::NAN,
                    path_len: 0.0,
                    iterations: 0,
                    solve_time: 0.0,
                    converged: false,
                    kkt: f64::NAN,
                });
                t
            }
        };

        let ev = evaluate(&model, &scenario.truth, sc.gamma)?;
        steps.push(StepRecord {
            step,
            position: pos,
            measurement: m,
            plan: plan.as_ref().map(LoggedPlan::from),
            solver_error,
            target,
            total_p: ev.total_p,
            binary_rate: ev.binary_rate,
            path_len_cum: travelled,
            gp_updates: model.len(),
            gpupdate_ms: timed.then_some(gpupdate_ms),
            setup_s: timed.then_some(setup_s),
            solve_s: timed.then_some(solve_s),
            elapsed_s: timed.then(|| clock.elapsed().as_secs_f64()),
        });
        travelled += pos.dist(target);
        pos = target;
    }
    finish(scenario, kind, cfg.horizon_n, steps, model, failures)
}

fn run_static(
    scenario: &Scenario,
    cfg: &PlannerConfig,
    weights: CostWeights,
    opts: &MissionOptions,
) -> Result<MissionLog> {
    let sc = &scenario.config;
    let clock = Instant::now();
    let timed = opts.record_timings;
    let prior_model = scenario.prior_model()?;
    let budget = opts
        .static_l_max
        .unwrap_or(cfg.l_max * opts.n_static as f64 / cfg.horizon_n as f64);
    let static_cfg = PlannerConfig {
        l_max: budget,
        ..cfg.clone()
    };

    let t = Instant::now();
    let obj = Objective::new(
        &prior_model,
        sc.r0,
        weights,
        scenario.forcing.clone(),
        cfg.variance_mode,
        cfg.lookahead_noise_sd,
    )?;
    let setup_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let static_cfg = PlannerConfig {
        horizon_n: opts.n_static,
        ..static_cfg
    };
    let solved = planner::solve_objective(&obj, &static_cfg, None);
    let solve_s = t.elapsed().as_secs_f64();
    let (route, plan, solver_error, failures) = match solved {
        Ok(p) => (p.waypoints.clone(), Some(p), None, 0),
        Err(e) => {
            log::warn!("static plan failed ({e}); holding at the start");
            (Vec::new(), None, Some(e.to_string()), 1)
        }
    };

    // execution: measurements only
    let mut rng = stream_rng(sc.seed, streams::MEASUREMENT);
    let mut pos = sc.r0;
    let mut visits = Vec::with_capacity(sc.n_steps);
    let mut travelled = 0.0;
    for step in 0..sc.n_steps {
        let m = take_measurement(&scenario.truth, pos, sc.measurement_noise_sd, &mut rng)?;
        let target = route.get(step).copied().unwrap_or(pos);
        visits.push((pos, m, target, travelled));
        travelled += pos.dist(target);
        pos = target;
    }

    // post-hoc evaluation
    let mut model = prior_model;
    let mut steps = Vec::with_capacity(sc.n_steps);
    for (step, (pos, m, target, travelled)) in visits.into_iter().enumerate() {
        model = model.add_measurement(m)?;
        let ev = evaluate(&model, &scenario.truth, sc.gamma)?;
        let first = step == 0;
        steps.push(StepRecord {
            step,
            position: pos,
            measurement: m,
            plan: if first { plan.as_ref().map(LoggedPlan::from) } else { None },
            solver_error: if first { solver_error.clone() } else { None },
            target,
            total_p: ev.total_p,
            binary_rate: ev.binary_rate,
            path_len_cum: travelled,
            gp_updates: 0,
            gpupdate_ms: None,
            setup_s: (timed && first).then_some(setup_s),
            solve_s: (timed && first).then_some(solve_s),
            elapsed_s: timed.then(|| clock.elapsed().as_secs_f64()),
        });
    }
    finish(scenario, PlannerKind::Static, opts.n_static, steps, model, failures)
}

fn finish(
    scenario: &Scenario,
    kind: PlannerKind,
    horizon: usize,
    steps: Vec<StepRecord>,
    model: GpModel,
    failures: usize,
) -> Result<MissionLog> {
    let last = steps.last().expect("n_steps >= 1");
    let summary = MissionSummary {
        summary: true,
        method: method_label(kind, horizon),
        planner: kind,
        horizon,
        seed: scenario.config.seed,
        n_steps: steps.len(),
        final_total_p: last.total_p,
        final_binary_rate: last.binary_rate,
        path_len_total: last.path_len_cum + last.position.dist(last.target),
        solver_failures: failures,
        data: model.data().to_vec(),
    };
    Ok(MissionLog {
        steps,
        summary,
        final_model: model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        let grid = GridDomain::new(2400.0, 8, 16).unwrap();
        let mut c = ScenarioConfig::new(grid, KernelParams::new(1.0, 600.0).unwrap(), 2.0);
        c.n_steps = 3;
        c.seed = 4;
        c
    }

    #[test]
    fn zero_noise_prior_equals_truth() {
        let mut c = cfg();
        c.noise_prior_variance = 0.0;
        let (truth, prior) = make_scenario(&c, &TruthSource::Synthetic).unwrap();
        assert_eq!(truth.field.values(), prior.values());
    }

    #[test]
    fn scenario_is_seed_deterministic() {
        let c = cfg();
        let a = make_scenario(&c, &TruthSource::Synthetic).unwrap();
        let b = make_scenario(&c, &TruthSource::Synthetic).unwrap();
        assert_eq!(a, b);
        let mut c2 = c.clone();
        c2.seed = 5;
        assert_ne!(a.1, make_scenario(&c2, &TruthSource::Synthetic).unwrap().1);
    }

    #[test]
    fn noiseless_measurement_at_node() {
        let (truth, _) = make_scenario(&cfg(), &TruthSource::Synthetic).unwrap();
        let node = truth.field.nodes()[37];
        let mut rng = stream_rng(1, streams::MEASUREMENT);
        let m = take_measurement(&truth, node, 0.0, &mut rng).unwrap();
        assert_eq!(m.value, truth.field.values()[37]);
        let a = take_measurement(&truth, node, 0.1, &mut rng).unwrap();
        let b = take_measurement(&truth, node, 0.1, &mut rng).unwrap();
        assert_ne!(a.value, b.value);
        assert!(take_measurement(&truth, Point2::new(5000.0, 0.0), 0.1, &mut rng).is_err());
    }

    #[test]
    fn perfect_model_scores_zero() {
        let c = cfg();
        let (truth, _) = make_scenario(&c, &TruthSource::Synthetic).unwrap();
        let prior = PriorField::new(c.grid, truth.field.values().to_vec()).unwrap();
        // every node observed without noise pins the variance to the jitter floor
        let data: Vec<Measurement> = truth
            .field
            .nodes()
            .into_iter()
            .zip(truth.field.values())
            .map(|(p, &v)| Measurement::new(p, v, 0.0))
            .collect();
        let model = GpModel::fit(prior, KernelParams::new(1.0, 150.0).unwrap(), &data).unwrap();
        let ev = evaluate(&model, &truth, 2.0).unwrap();
        assert_eq!(ev.binary_rate, 0.0);
        assert!(ev.total_p < 1e-6);
    }

    #[test]
    fn mean_at_threshold_gives_half_per_node() {
        let c = cfg();
        let (truth, _) = make_scenario(&c, &TruthSource::Synthetic).unwrap();
        let model = GpModel::new(PriorField::constant(c.grid, 2.0).unwrap(), c.kernel).unwrap();
        let ev = evaluate(&model, &truth, 2.0).unwrap();
        assert_eq!(ev.total_p, 0.5 * 256.0);
    }

    #[test]
    fn mission_logs_have_one_entry_per_step() {
        let c = cfg();
        let sc = load_scenario(&c, Path::new(".")).unwrap();
        let mut pc = PlannerConfig::new(c.grid);
        pc.horizon_n = 2;
        pc.l_max = 1200.0;
        for kind in [PlannerKind::Olah, PlannerKind::Greedy, PlannerKind::Static] {
            let opts = MissionOptions {
                n_static: 4,
                ..Default::default()
            };
            let log = run_mission(&sc, kind, &pc, CostWeights::new(2.0), &opts).unwrap();
            assert_eq!(log.steps.len(), 3);
            assert_eq!(log.to_jsonl().unwrap().lines().count(), 4);
            assert_eq!(log.final_model.len(), 3);
            if kind != PlannerKind::Static {
                assert!(log.steps.iter().all(|s| s.plan.is_some()));
            }
        }
    }
}
