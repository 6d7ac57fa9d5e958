use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use olahgp::commands::{self, Config, Overrides};
use olahgp::mission::PlannerKind;
use olahgp::render::Style;
use olahgp::{Error, VarianceMode};
use serde_json::json;

/// Look-ahead GP path planning: scenario generation, missions,
/// comparisons and rendering.
///
/// Command-line flags override values from the --config file, which
/// override built-in defaults. OLAHGP_THREADS caps the worker count of
/// `compare`.
#[derive(Debug, Parser)]
#[command(name = "olahgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write truth.fgrid, prior.fgrid and scenario.json for one seed.
    Scenario {
        #[command(flatten)]
        common: Common,
    },
    /// Run one mission and write its JSONL log.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerFlags,
        /// Number of sense-replan-move steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Record wall-clock timings in the log (breaks byte-identical reruns).
        #[arg(long)]
        timings: bool,
    },
    /// Run every configured method over paired seeds and write CSV summaries.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Look-ahead variance used by all methods.
        #[arg(long, value_parser = parse_mode)]
        variance_mode: Option<VarianceMode>,
        /// Number of sense-replan-move steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Record wall-clock timings (breaks byte-identical reruns).
        #[arg(long)]
        timings: bool,
    },
    /// Solve a single plan on the prior belief and write plan.json.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerFlags,
    },
    /// Render a mission log or FGRID file as a PPM heatmap.
    Render {
        /// Mission log (.jsonl) or FGRID file.
        input: PathBuf,
        /// Layer to draw.
        #[arg(long, default_value = "mean", value_parser = parse_style)]
        style: Style,
        /// Output image path.
        #[arg(long)]
        out: PathBuf,
        /// Scenario config; required for log input.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config with sections scenario, planner, cost, experiment.
    #[arg(long)]
    config: PathBuf,
    /// Scenario seed (first seed for `compare`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlannerFlags {
    #[arg(long, value_parser = parse_kind)]
    planner: Option<PlannerKind>,
    /// Waypoints per plan (olah).
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    variance_mode: Option<VarianceMode>,
}

fn parse_kind(s: &str) -> Result<PlannerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<VarianceMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_style(s: &str) -> Result<Style, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(common: &Common, o: Overrides) -> olahgp::Result<(Config, PathBuf)> {
    let (mut cfg, base) = Config::load(&common.config)?;
    cfg.apply(&Overrides { seed: common.seed, ..o });
    Ok((cfg, base))
}

fn planner_overrides(p: &PlannerFlags) -> Overrides {
    Overrides {
        planner: p.planner,
        horizon: p.horizon,
        variance_mode: p.variance_mode,
        ..Overrides::default()
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> olahgp::Result<serde_json::Value> {
    match cli.command {
        Command::Scenario { common } => {
            let (cfg, base) = load(&common, Overrides::default())?;
            let files = commands::cmd_scenario(&cfg, &base, &common.out)?;
            Ok(json!({ "files": files.iter().map(|p| path_str(p)).collect::<Vec<_>>() }))
        }
        Command::Run {
            common,
            planner,
            steps,
            timings,
        } => {
            let o = Overrides {
                steps,
                timings,
                ..planner_overrides(&planner)
            };
            let (cfg, base) = load(&common, o)?;
            let (log, path) = commands::cmd_run(&cfg, &base, &common.out)?;
            let s = &log.summary;
            Ok(json!({
                "log": path_str(&path),
                "method": s.method,
                "seed": s.seed,
                "final_total_p": s.final_total_p,
                "final_binary_rate": s.final_binary_rate,
                "path_len_total": s.path_len_total,
                "solver_failures": s.solver_failures,
            }))
        }
        Command::Compare {
            common,
            variance_mode,
            steps,
            timings,
        } => {
            let o = Overrides {
                variance_mode,
                steps,
                timings,
                ..Overrides::default()
            };
            let (cfg, base) = load(&common, o)?;
            let result = commands::cmd_compare(&cfg, &base, &common.out)?;
            let opts = cfg.mission_options();
            let finals: Vec<_> = cfg
                .experiment
                .methods
                .iter()
                .filter_map(|m| result.stats.final_step(&m.label(&opts)))
                .map(|s| json!({ "method": s.method, "n": s.n, "mean_total_p": s.mean, "std_total_p": s.std }))
                .collect();
            Ok(json!({ "out": path_str(&common.out), "final": finals }))
        }
        Command::Plan { common, planner } => {
            let (cfg, base) = load(&common, planner_overrides(&planner))?;
            let report = commands::cmd_plan(&cfg, &base, &common.out)?;
            Ok(json!({
                "plan": path_str(&common.out.join("plan.json")),
                "method": report.method,
                "objective": report.plan.objective,
                "path_len": report.plan.path_len,
                "converged": report.plan.converged,
            }))
        }
        Command::Render {
            input,
            style,
            out,
            config,
        } => {
            let loaded = config.as_deref().map(Config::load).transpose()?;
            let cfg = loaded.as_ref().map(|(c, b)| (c, b.as_path()));
            let image = commands::cmd_render(&input, style, &out, cfg)?;
            Ok(json!({ "image": path_str(&image) }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
