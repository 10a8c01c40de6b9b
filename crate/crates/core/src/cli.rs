//! The `relloc` command line. Exit codes: 0 success, 1 runtime or I/O failure,
//! 2 usage or validation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde::Deserialize;
use serde_json::json;

use crate::corrector::{evaluate_mse, fit_corrector, CorrectorModel, TrainingSet};
use crate::error::Error;
use crate::filter::FilterConfig;
use crate::io::{
    config_hash, read_estimates, read_streams, read_truth, write_csv, write_jsonl, write_run, RunManifest,
    DETECTIONS_FILE, ESTIMATES_FILE, TRUTH_FILE,
};
use crate::metrics::{compute_ape, compute_ate, EstimateRecord, Summary};
use crate::multilateration::TrackerConfig;
use crate::pipeline::{corrector_samples, run_baseline, run_filter, FilterMode, StreamMeta};
use crate::scenario::{run_closed_loop, run_scenario, ClosedLoopConfig, GroundTruthLog, ScenarioConfig};
use crate::types::{Edge, Vec2};

#[derive(Debug, Parser)]
#[command(name = "relloc", version, about = "Relative multi-robot localization from UWB ranges and odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write ground truth plus measurement streams.
    Simulate(SimulateArgs),
    /// Run the particle filter over recorded streams.
    RunFilter(RunFilterArgs),
    /// Run the multilateration tracker over recorded streams.
    Baseline(BaselineArgs),
    /// Fit per-edge ranging-error models from streams with ground truth.
    TrainCorrector(TrainArgs),
    /// APE (and optionally ATE) of an estimate log against ground truth.
    Evaluate(EvaluateArgs),
    /// Closed-loop waypoint following with filter (or ground-truth) feedback.
    Navigate(NavigateArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioSource {
    /// Scenario config JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset: paper_layout, two_robot_single_range or biased_ranges.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunFilterArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub streams: PathBuf,
    /// pf_u, pf_ul or pf_ulv.
    #[arg(long)]
    pub mode: String,
    /// Filter config JSON; defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corrector model files, or directories holding `corrector_*.json`.
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Filter seed; defaults to the config's, else the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub streams: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `simulate` (needs truth.jsonl).
    #[arg(long)]
    pub streams: PathBuf,
    /// Edge as `i,j`; repeatable. Every graph edge when omitted.
    #[arg(long)]
    pub edge: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    /// Held-out streams from another run; otherwise the last `--holdout-fraction` of windows.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub holdout_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimate log, or the directory holding it.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Ground-truth log, or the directory holding it.
    #[arg(long)]
    pub truth: PathBuf,
    /// Reference path for ATE: `{"agent": i, "waypoints": [[x, y], ...]}` or a closed-loop config.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    #[command(flatten)]
    pub scenario: ScenarioSource,
    /// Closed-loop config JSON (controlled agent, waypoints, gains).
    #[arg(long)]
    pub reference: PathBuf,
    /// Filter config JSON.
    #[arg(long)]
    pub filter: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_)
            | Error::EdgeNotInGraph(_)
            | Error::SelfLoop(_)
            | Error::IndexOutOfRange { .. }
            | Error::NonPositiveDt(_)
            | Error::NonPositiveSigma(_)
            | Error::EmptyBounds { .. }
            | Error::WindowSizeMismatch { .. }
            | Error::SeedMismatch(..)
            | Error::DegenerateReference => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| run(cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// `RELLOC_THREADS` caps the worker pool used by the particle filter.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("RELLOC_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("RELLOC_THREADS must be a positive integer, got {v:?}")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        warn!("thread pool already initialized; RELLOC_THREADS ignored");
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::RunFilter(a) => run_filter_cmd(a),
        Command::Baseline(a) => baseline(a),
        Command::TrainCorrector(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Navigate(a) => navigate(a),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid {what} {}: {e}", path.display())))
}

fn load_scenario(src: &ScenarioSource) -> CliResult<ScenarioConfig> {
    let mut cfg = match (&src.config, &src.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text).map_err(|e| match e {
                Error::Parse { message, .. } => {
                    CliError::usage(format!("invalid config {}: {message}", path.display()))
                }
                other => CliError::usage(format!("invalid config {}: {other}", path.display())),
            })?
        }
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        _ => return Err(CliError::usage("give one of --config or --preset")),
    };
    if let Some(seed) = src.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn finish(mut m: RunManifest, dir: &Path, t0: Instant) -> CliResult<()> {
    m.runtime_s = t0.elapsed().as_secs_f64();
    m.write(dir)?;
    Ok(())
}

fn scenario_of(m: &RunManifest) -> CliResult<ScenarioConfig> {
    let v = m.parameters.get("scenario").ok_or_else(|| CliError::runtime("manifest carries no scenario config"))?;
    serde_json::from_value(v.clone()).map_err(|e| CliError::runtime(format!("manifest scenario config: {e}")))
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let cfg = load_scenario(&a.scenario)?;
    create_out(&a.out)?;
    let run = run_scenario(&cfg)?;
    let files = write_run(&a.out, &run)?;
    let mut m = RunManifest::new("simulate", config_hash(&cfg), cfg.seed, json!({ "scenario": cfg }));
    for f in files {
        m.record_output(&a.out, f)?;
    }
    println!(
        "simulated {} steps: {} ranges, {} detections -> {}",
        cfg.n_steps(),
        run.streams.ranges.len(),
        run.streams.detections.len(),
        a.out.display()
    );
    finish(m, &a.out, t0)
}

fn stream_inputs(dir: &Path) -> CliResult<(RunManifest, ScenarioConfig, StreamMeta)> {
    let m = RunManifest::load(dir)?;
    let cfg = scenario_of(&m)?;
    let meta =
        StreamMeta::from_config(&cfg).map_err(|e| CliError::runtime(format!("manifest scenario config: {e}")))?;
    Ok((m, cfg, meta))
}

fn load_models(paths: &[PathBuf]) -> CliResult<Vec<CorrectorModel>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries =
                fs::read_dir(p).map_err(|e| CliError::runtime(format!("cannot list {}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("corrector_") && name.ends_with(".json")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files.iter().map(|f| CorrectorModel::load(f).map_err(CliError::from)).collect()
}

fn run_filter_cmd(a: RunFilterArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let mode: FilterMode = a.mode.parse()?;
    let mut fcfg: FilterConfig = match &a.config {
        Some(p) => read_json(p, "filter config")?,
        None => FilterConfig::default(),
    };
    let (sm, _, meta) = stream_inputs(&a.streams)?;
    if mode.uses_detections() && !a.streams.join(DETECTIONS_FILE).exists() {
        return Err(CliError::usage(format!("mode {mode} needs {} in {}", DETECTIONS_FILE, a.streams.display())));
    }
    let models = if mode.uses_corrector() { load_models(&a.models)? } else { Vec::new() };
    if mode.uses_corrector() && models.is_empty() {
        return Err(CliError::usage(format!("mode {mode} needs corrector models (--models)")));
    }
    fcfg.seed = a.seed.unwrap_or(if a.config.is_some() { fcfg.seed } else { meta.seed });
    let streams = read_streams(&a.streams, mode.uses_detections())?;
    let records = run_filter(&meta, &streams, mode, &fcfg, &models)?;

    create_out(&a.out)?;
    write_jsonl(&a.out.join(ESTIMATES_FILE), "estimate", records.iter().map(|r| (r.t, r)))?;
    let est: Vec<EstimateRecord> = records.iter().map(EstimateRecord::from).collect();
    write_estimate_csv(&a.out.join("estimates.csv"), &est)?;
    write_csv(
        &a.out.join("diagnostics.csv"),
        &["t", "ess", "weight_entropy", "degenerate", "rejected_detections"],
        records.iter().map(|r| {
            [
                r.t.to_string(),
                r.ess.to_string(),
                r.weight_entropy.to_string(),
                r.degenerate.to_string(),
                r.rejected_detections.to_string(),
            ]
        }),
    )?;
    let model_params: Vec<_> =
        models.iter().map(|m| json!({ "edge": m.edge, "n_steps": m.n_steps, "hash": config_hash(m) })).collect();
    let mut m = RunManifest::new(
        "run-filter",
        sm.config_hash.clone(),
        sm.seed,
        json!({ "scenario": scenario_of(&sm)?, "mode": mode, "filter": fcfg, "models": model_params }),
    );
    m.source_config_hash = Some(sm.config_hash);
    for f in [ESTIMATES_FILE, "estimates.csv", "diagnostics.csv"] {
        m.record_output(&a.out, f)?;
    }
    println!("{mode}: {} estimates -> {}", records.len(), a.out.display());
    finish(m, &a.out, t0)
}

fn write_estimate_csv(path: &Path, est: &[EstimateRecord]) -> CliResult<()> {
    let rows = est.iter().flat_map(|r| {
        r.poses.iter().enumerate().map(move |(i, p)| match p {
            Some(p) => [r.t.to_string(), i.to_string(), p.x.to_string(), p.y.to_string(), "false".into()],
            None => [r.t.to_string(), i.to_string(), String::new(), String::new(), "true".into()],
        })
    });
    Ok(write_csv(path, &["t", "agent", "x", "y", "gap"], rows)?)
}

fn baseline(a: BaselineArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let (sm, _, meta) = stream_inputs(&a.streams)?;
    let streams = read_streams(&a.streams, false)?;
    let cfg = TrackerConfig::default();
    let records = run_baseline(&meta, &streams, cfg)?;
    create_out(&a.out)?;
    write_jsonl(&a.out.join(ESTIMATES_FILE), "estimate", records.iter().map(|r| (r.t, r)))?;
    let est: Vec<EstimateRecord> = records.iter().map(EstimateRecord::from).collect();
    write_estimate_csv(&a.out.join("estimates.csv"), &est)?;
    let mut m = RunManifest::new(
        "baseline",
        sm.config_hash.clone(),
        sm.seed,
        json!({ "scenario": scenario_of(&sm)?, "tracker": cfg }),
    );
    m.source_config_hash = Some(sm.config_hash);
    for f in [ESTIMATES_FILE, "estimates.csv"] {
        m.record_output(&a.out, f)?;
    }
    let fixes = est.iter().flat_map(|r| r.poses.iter()).filter(|p| p.is_some()).count();
    println!("multilateration: {} epochs, {fixes} agent fixes -> {}", records.len(), a.out.display());
    finish(m, &a.out, t0)
}

fn parse_edge(s: &str) -> CliResult<Edge> {
    let bad = || CliError::usage(format!("edge must look like `i,j`, got {s:?}"));
    let (i, j) = s.split_once(',').ok_or_else(bad)?;
    let (i, j): (usize, usize) = (i.trim().parse().map_err(|_| bad())?, j.trim().parse().map_err(|_| bad())?);
    if i == j {
        return Err(Error::SelfLoop(i).into());
    }
    Ok(Edge::new(i, j))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let t0 = Instant::now();
    if a.n_steps == 0 {
        return Err(CliError::usage("n_steps must be >= 1"));
    }
    if !(0.0..1.0).contains(&a.holdout_fraction) {
        return Err(CliError::usage("holdout fraction must lie in [0, 1)"));
    }
    let (sm, cfg, meta) = stream_inputs(&a.streams)?;
    let edges: Vec<Edge> = if a.edge.is_empty() {
        meta.graph.edges().copied().collect()
    } else {
        a.edge.iter().map(|s| parse_edge(s)).collect::<CliResult<_>>()?
    };
    if let Some(e) = edges.iter().find(|e| !meta.graph.contains_edge(e)) {
        return Err(Error::EdgeNotInGraph(*e).into());
    }
    let streams = read_streams(&a.streams, false)?;
    let truth = read_truth(&a.streams.join(TRUTH_FILE), cfg.dt)?;
    let holdout = match &a.holdout {
        Some(dir) => {
            let (hm, hcfg, hmeta) = stream_inputs(dir)?;
            let hs = read_streams(dir, false)?;
            let ht = read_truth(&dir.join(TRUTH_FILE), hcfg.dt)?;
            Some((hm, hmeta, hs, ht))
        }
        None => None,
    };

    create_out(&a.out)?;
    let mut results = Vec::new();
    let mut files = Vec::new();
    for edge in edges {
        let mut samples = corrector_samples(&meta, &streams, &truth, edge, a.n_steps)?;
        let held = match &holdout {
            Some((_, hmeta, hs, ht)) => corrector_samples(hmeta, hs, ht, edge, a.n_steps)?,
            None => {
                let cut = ((1.0 - a.holdout_fraction) * samples.len() as f64).round() as usize;
                samples.split_off(cut.min(samples.len()))
            }
        };
        let model = fit_corrector(&TrainingSet { edge, samples }, a.n_steps, a.lambda)?;
        let held_mse = if held.is_empty() { None } else { Some(evaluate_mse(&model, &held)?) };
        match held_mse {
            Some(h) => println!(
                "edge {edge}: training MSE {:.3e} m^2, held-out MSE {h:.3e} m^2 ({} windows)",
                model.training_mse,
                held.len()
            ),
            None => println!("edge {edge}: training MSE {:.3e} m^2, no held-out windows", model.training_mse),
        }
        let file = format!("corrector_{}_{}.json", edge.lo(), edge.hi());
        model.save(&a.out.join(&file))?;
        results.push(json!({ "edge": edge, "training_mse": model.training_mse, "heldout_mse": held_mse }));
        files.push(file);
    }
    let mut m = RunManifest::new(
        "train-corrector",
        sm.config_hash.clone(),
        sm.seed,
        json!({
            "scenario": cfg,
            "n_steps": a.n_steps,
            "ridge_lambda": a.lambda,
            "holdout_fraction": a.holdout.is_none().then_some(a.holdout_fraction),
            "holdout_config_hash": holdout.as_ref().map(|h| h.0.config_hash.clone()),
            "edges": results,
        }),
    );
    m.source_config_hash = Some(sm.config_hash);
    for f in &files {
        m.record_output(&a.out, f)?;
    }
    finish(m, &a.out, t0)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ReferenceFile {
    Path { agent: usize, waypoints: Vec<Vec2> },
    Loop(ClosedLoopConfig),
}

impl ReferenceFile {
    fn parts(self) -> (usize, Vec<Vec2>) {
        match self {
            ReferenceFile::Path { agent, waypoints } => (agent, waypoints),
            ReferenceFile::Loop(c) => (c.controlled, c.waypoints),
        }
    }
}

fn log_in(path: &Path, preferred: &[&str]) -> PathBuf {
    if path.is_dir() {
        preferred.iter().map(|f| path.join(f)).find(|p| p.exists()).unwrap_or_else(|| path.join(preferred[0]))
    } else {
        path.to_path_buf()
    }
}

fn summary_json(s: &Option<Summary>) -> serde_json::Value {
    serde_json::to_value(s).expect("summary serializes")
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let (_, em) = RunManifest::locate(&a.estimates)?;
    let (_, tm) = RunManifest::locate(&a.truth)?;
    if em.config_hash != tm.config_hash || em.seed != tm.seed {
        return Err(CliError::usage(format!(
            "estimates and truth come from different runs (config_hash {} vs {}, seed {} vs {})",
            em.config_hash, tm.config_hash, em.seed, tm.seed
        )));
    }
    let cfg = scenario_of(&tm)?;
    let est = read_estimates(&log_in(&a.estimates, &[ESTIMATES_FILE, TRUTH_FILE]))?;
    let truth = read_truth(&log_in(&a.truth, &[TRUTH_FILE]), cfg.dt)?;
    let ape = compute_ape(&est, &truth, cfg.static_agent, cfg.seed)?;
    let reference = match &a.reference {
        Some(p) => Some(read_json::<ReferenceFile>(p, "reference path")?.parts()),
        None => None,
    };

    create_out(&a.out)?;
    let mut files = vec!["report.json", "ape.csv", "trajectories.csv"];
    write_csv(
        &a.out.join("ape.csv"),
        &["t", "agent", "error"],
        ape.agents
            .iter()
            .flat_map(|s| s.samples.iter().map(move |(t, e)| [t.to_string(), s.agent.to_string(), e.to_string()])),
    )?;
    write_trajectories(&a.out.join("trajectories.csv"), &est, &truth)?;

    let mut report = json!({
        "config_hash": tm.config_hash,
        "seed": cfg.seed,
        "static_agent": cfg.static_agent,
        "ape": {
            "moving_agents": summary_json(&ape.pooled()),
            "agents": ape.agents.iter().map(|s| json!({
                "agent": s.agent,
                "gaps": s.gaps,
                "summary": summary_json(&s.summary),
            })).collect::<Vec<_>>(),
        },
    });
    if let Some(p) = ape.pooled() {
        println!(
            "APE over moving agents: median {:.4} m, mean {:.4} m, rmse {:.4} m, max {:.4} m",
            p.median, p.mean, p.rmse, p.max
        );
    } else {
        println!("APE: no estimates of moving agents");
    }

    if let Some((agent, waypoints)) = reference {
        if agent >= cfg.n_agents {
            return Err(CliError::usage(format!("reference agent {agent} out of range for {} agents", cfg.n_agents)));
        }
        let executed = compute_ate(&truth.track(agent), &waypoints)?;
        let estimated_track: Vec<(f64, Vec2)> = est.iter().filter_map(|r| r.poses[agent].map(|p| (r.t, p))).collect();
        let estimated = compute_ate(&estimated_track, &waypoints)?;
        let rows = [("executed", &executed), ("estimated", &estimated)]
            .into_iter()
            .flat_map(|(src, s)| s.samples.iter().map(move |(t, e)| [src.to_string(), t.to_string(), e.to_string()]));
        write_csv(&a.out.join("ate.csv"), &["source", "t", "error"], rows)?;
        files.push("ate.csv");
        report["ate"] = json!({
            "agent": agent,
            "executed": summary_json(&executed.summary),
            "estimated": summary_json(&estimated.summary),
        });
        if let Some(s) = executed.summary {
            println!("ATE of agent {agent}: median {:.4} m, rmse {:.4} m", s.median, s.rmse);
        }
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fs::write(a.out.join("report.json"), text).map_err(|e| CliError::runtime(format!("cannot write report: {e}")))?;

    let mut m = RunManifest::new(
        "evaluate",
        tm.config_hash.clone(),
        tm.seed,
        json!({ "scenario": cfg, "estimates_parameters_hash": em.parameters_hash, "reference": a.reference.is_some() }),
    );
    m.source_config_hash = Some(em.config_hash);
    files.sort();
    for f in files {
        m.record_output(&a.out, f)?;
    }
    finish(m, &a.out, t0)
}

fn write_trajectories(path: &Path, est: &[EstimateRecord], truth: &GroundTruthLog) -> CliResult<()> {
    let rows = est.iter().filter_map(|r| truth.at(r.t).map(|gt| (r, gt))).flat_map(|(r, gt)| {
        r.poses.iter().zip(&gt.poses).enumerate().map(move |(i, (p, g))| {
            let (ex, ey) = p.map_or((String::new(), String::new()), |p| (p.x.to_string(), p.y.to_string()));
            [r.t.to_string(), i.to_string(), g.x.to_string(), g.y.to_string(), ex, ey]
        })
    });
    Ok(write_csv(path, &["t", "agent", "true_x", "true_y", "est_x", "est_y"], rows)?)
}

fn navigate(a: NavigateArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let scn = load_scenario(&a.scenario)?;
    let cl: ClosedLoopConfig = read_json(&a.reference, "closed-loop config")?;
    let mut fcfg: FilterConfig = match &a.filter {
        Some(p) => read_json(p, "filter config")?,
        None => FilterConfig { seed: scn.seed, ..FilterConfig::default() },
    };
    if let Some(seed) = a.scenario.seed {
        fcfg.seed = seed;
    }
    let out = run_closed_loop(&scn, &fcfg, &cl)?;
    create_out(&a.out)?;
    write_jsonl(&a.out.join(TRUTH_FILE), "truth", out.truth.records.iter().map(|r| (r.t, r)))?;
    let est: Vec<EstimateRecord> = out.estimates.iter().map(EstimateRecord::from).collect();
    write_jsonl(&a.out.join(ESTIMATES_FILE), "estimate", est.iter().map(|r| (r.t, r)))?;
    write_csv(
        &a.out.join("executed.csv"),
        &["t", "x", "y"],
        out.executed.iter().map(|(t, p)| [t.to_string(), p.x.to_string(), p.y.to_string()]),
    )?;
    let hash = config_hash(&json!({ "scenario": scn, "closed_loop": cl }));
    let mut m = RunManifest::new(
        "navigate",
        hash,
        scn.seed,
        json!({
            "scenario": scn,
            "closed_loop": cl,
            "filter": fcfg,
            "waypoints_reached": out.waypoints_reached,
            "completed": out.completed,
        }),
    );
    for f in [TRUTH_FILE, ESTIMATES_FILE, "executed.csv"] {
        m.record_output(&a.out, f)?;
    }
    let ate = compute_ate(&out.executed, &cl.waypoints).ok().and_then(|s| s.summary);
    println!(
        "reached {}/{} waypoints{}",
        out.waypoints_reached,
        cl.waypoints.len(),
        ate.map_or(String::new(), |s| format!(", executed-path ATE median {:.4} m", s.median))
    );
    finish(m, &a.out, t0)?;
    if out.completed {
        Ok(())
    } else {
        Err(CliError::runtime("closed loop timed out before reaching every waypoint"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_parse() {
        assert_eq!(parse_edge("2, 0").unwrap(), Edge::new(0, 2));
        assert_eq!(parse_edge("1,1").unwrap_err().code, 2);
        assert_eq!(parse_edge("x").unwrap_err().code, 2);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::InvalidConfig("x".into())).code, 2);
        assert_eq!(CliError::from(Error::EdgeNotInGraph(Edge::new(0, 1))).code, 2);
        let io = Error::Io { path: "p".into(), source: std::io::Error::other("x") };
        assert_eq!(CliError::from(io).code, 1);
    }

    #[test]
    fn reference_formats() {
        let (a, w) =
            serde_json::from_str::<ReferenceFile>(r#"{"agent": 1, "waypoints": [[0, 0], [1, 0]]}"#).unwrap().parts();
        assert_eq!((a, w.len()), (1, 2));
        let text = include_str!("../presets/rectangle_loop.json");
        let (a, w) = serde_json::from_str::<ReferenceFile>(text).unwrap().parts();
        assert_eq!((a, w.len()), (3, 5));
    }

    #[test]
    fn help_exits_zero_and_bad_usage_two() {
        assert_eq!(main_with_args(["relloc", "--help"]), 0);
        assert_eq!(main_with_args(["relloc", "simulate"]), 2);
    }
}
