//! Command-line front end. Each subcommand reads a JSON run configuration
//! (optional), applies flag overrides on top, and writes versioned JSON or
//! CSV artifacts that the next subcommand can consume:
//! `gen` → `predict` → `plan` → `eval`, with `train` and `oracle-check` on
//! the side.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{BpReport, Marginals};
use crate::io;
use crate::learning::{prepare_examples, train, TrainConfig};
use crate::metrics::{eval_planning, eval_prediction, write_planning_csv, write_prediction_csv, CollisionPairing};
use crate::oracle::run_oracle_suite;
use crate::pipeline::{plan_scene, predict, sample_sets, PipelineConfig, SampleSets, SceneTables};
use crate::planner::{CollisionMode, PlanResult};
use crate::sampler::SamplerConfig;
use crate::scenario::{self, generate, ScenarioTemplate, Scene, TemplateKind};
use crate::weights::ModelWeights;

pub const PREDICTIONS_FORMAT: &str = "structdrive.predictions";
pub const PLANS_FORMAT: &str = "structdrive.plans";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "structdrive",
    version,
    about = "Structured prediction and planning on synthetic driving scenes"
)]
pub struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    /// Worker threads for scene-level parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario file from a template.
    Gen(GenArgs),
    /// Sample futures and compute per-actor marginals for every scene.
    Predict(PredictArgs),
    /// Choose an ego trajectory per scene from a predictions file.
    Plan(PlanArgs),
    /// Fit energy and planner weights on a scenario file.
    Train(TrainArgs),
    /// Compute prediction and planning metrics and a trajectory dump.
    Eval(EvalArgs),
    /// Cross-check inference, planning and gradients on small instances.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_name = "KIND")]
    pub template: Option<TemplateKind>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive actor-count range.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub actors: Option<Vec<usize>>,
    /// m/s², ground-truth acceleration noise.
    #[arg(long)]
    pub accel_noise: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Options shared by every subcommand that runs the model.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Weights file (defaults to the built-in weights).
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Collision energy per colliding pair.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Planner collision-cost weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Samples per actor and ego candidates.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sampler seed, combined with each scene's seed.
    #[arg(long)]
    pub sampler_seed: Option<u64>,
    #[arg(long)]
    pub bp_iterations: Option<usize>,
    #[arg(long)]
    pub bp_tolerance: Option<f64>,
    #[arg(long)]
    pub bp_damping: Option<f64>,
    /// m, extra separation under which actor pairs interact.
    #[arg(long)]
    pub interaction_radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// marginals | most_likely | ignore
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<CollisionMode>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Output weights file.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Optional JSON file for the loss curves.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub learn_gamma: bool,
    #[arg(long)]
    pub gradient_check: bool,
    /// Start from zero feature weights, keeping gamma and lambda.
    #[arg(long)]
    pub from_zero: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Predictions file; computed from the scenes when absent.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Plans file; computed from the predictions when absent.
    #[arg(long)]
    pub plans: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// most_likely | ground_truth
    #[arg(long, value_parser = parse_pairing)]
    pub pairing: Option<CollisionPairing>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<CollisionMode>,
    /// Samples per actor in the trajectory dump, most probable first (0 = all).
    #[arg(long)]
    pub top_samples: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<CollisionMode, String> {
    parse_enum(s)
}

fn parse_pairing(s: &str) -> std::result::Result<CollisionPairing, String> {
    parse_enum(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub template: ScenarioTemplate,
    pub count: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            template: ScenarioTemplate::default(),
            count: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub seed: u64,
    pub instances: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { seed: 0, instances: 50 }
    }
}

/// Everything a run can be configured with. Paths are optional in the file
/// and required by the subcommands that read or write them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenes: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub plans: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub gen: GenConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub train_from_zero: bool,
    pub planning_mode: CollisionMode,
    pub pairing: CollisionPairing,
    /// 0 keeps every sample.
    pub top_samples: usize,
    pub oracle: OracleConfig,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl RunConfig {
    fn apply_model(&mut self, m: &ModelArgs) {
        set_opt(&mut self.weights, m.weights.clone());
        set_opt(&mut self.gamma, m.gamma);
        set_opt(&mut self.lambda, m.lambda);
        let s = &mut self.pipeline.sampler;
        set(&mut s.num_samples, m.samples);
        set(&mut s.seed, m.sampler_seed);
        set(&mut self.pipeline.bp.iterations, m.bp_iterations);
        set(&mut self.pipeline.bp.tolerance, m.bp_tolerance);
        set(&mut self.pipeline.bp.damping, m.bp_damping);
        set(&mut self.pipeline.interaction_radius, m.interaction_radius);
    }

    /// Applies the subcommand's flags on top of the file values.
    pub fn apply(&mut self, cmd: &Command) {
        match cmd {
            Command::Gen(a) => {
                if let Some(kind) = a.template {
                    if kind != self.gen.template.kind {
                        self.gen.template = ScenarioTemplate::new(kind);
                    }
                }
                set(&mut self.gen.count, a.count);
                set(&mut self.gen.seed, a.seed);
                if let Some(r) = &a.actors {
                    self.gen.template.actor_count = [r[0], r[1]];
                }
                set(&mut self.gen.template.accel_noise, a.accel_noise);
                set_opt(&mut self.out, a.out.clone());
            }
            Command::Predict(a) => {
                set_opt(&mut self.scenes, a.scenes.clone());
                set_opt(&mut self.out, a.out.clone());
                self.apply_model(&a.model);
            }
            Command::Plan(a) => {
                set_opt(&mut self.scenes, a.scenes.clone());
                set_opt(&mut self.predictions, a.predictions.clone());
                set_opt(&mut self.out, a.out.clone());
                set(&mut self.planning_mode, a.mode);
                self.apply_model(&a.model);
            }
            Command::Train(a) => {
                set_opt(&mut self.scenes, a.scenes.clone());
                set_opt(&mut self.out, a.out.clone());
                set_opt(&mut self.report, a.report.clone());
                let t = &mut self.train;
                set(&mut t.epochs, a.epochs);
                set(&mut t.learning_rate, a.learning_rate);
                set(&mut t.momentum, a.momentum);
                set(&mut t.batch_size, a.batch_size);
                set(&mut t.alpha, a.alpha);
                set(&mut t.seed, a.train_seed);
                set(&mut t.k_train, a.train_samples);
                t.learn_gamma |= a.learn_gamma;
                t.gradient_check |= a.gradient_check;
                self.train_from_zero |= a.from_zero;
                self.apply_model(&a.model);
            }
            Command::Eval(a) => {
                set_opt(&mut self.scenes, a.scenes.clone());
                set_opt(&mut self.predictions, a.predictions.clone());
                set_opt(&mut self.plans, a.plans.clone());
                set_opt(&mut self.out, a.out_dir.clone());
                set(&mut self.pairing, a.pairing);
                set(&mut self.planning_mode, a.mode);
                set(&mut self.top_samples, a.top_samples);
                self.apply_model(&a.model);
            }
            Command::OracleCheck(a) => {
                set(&mut self.oracle.seed, a.seed);
                set(&mut self.oracle.instances, a.instances);
                set_opt(&mut self.out, a.out.clone());
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.template.validate()?;
        self.pipeline.validate()?;
        self.train.validate()?;
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Weights file (or built-in defaults) with the gamma and lambda
    /// overrides applied.
    pub fn model_weights(&self) -> Result<ModelWeights> {
        let mut w = match &self.weights {
            Some(p) => ModelWeights::load(p)?,
            None => ModelWeights::default(),
        };
        set(&mut w.energy.gamma, self.gamma);
        set(&mut w.planner.lambda, self.lambda);
        w.validate()?;
        Ok(w)
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("missing `{flag}` (flag or config file)")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePrediction {
    pub scene_id: String,
    pub marginals: Marginals,
    pub report: BpReport,
}

/// Output of `predict`. The sampler settings are stored so that consumers
/// regenerate exactly the sample sets the marginals refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDump {
    pub format: String,
    pub version: u32,
    pub sampler: SamplerConfig,
    pub weights: std::collections::BTreeMap<String, f64>,
    pub scenes: Vec<ScenePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub scene_id: String,
    pub plan: PlanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDump {
    pub format: String,
    pub version: u32,
    pub mode: CollisionMode,
    pub weights: std::collections::BTreeMap<String, f64>,
    pub scenes: Vec<ScenePlan>,
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected format `{format}` (expected `{expected}`)"),
        });
    }
    if version != DUMP_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            what: "dump",
            found: version,
            expected: DUMP_VERSION,
        });
    }
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<PredictionDump> {
    let d: PredictionDump = io::read_json(path)?;
    check_header(path, &d.format, d.version, PREDICTIONS_FORMAT)?;
    d.sampler.validate()?;
    Ok(d)
}

pub fn load_plans(path: &Path) -> Result<PlanDump> {
    let d: PlanDump = io::read_json(path)?;
    check_header(path, &d.format, d.version, PLANS_FORMAT)?;
    Ok(d)
}

fn check_ids<'a>(path: &Path, scenes: &[Scene], ids: impl ExactSizeIterator<Item = &'a String>) -> Result<()> {
    if ids.len() != scenes.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("{} entries for {} scenes", ids.len(), scenes.len()),
        });
    }
    for (s, id) in scenes.iter().zip(ids) {
        if &s.id != id {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("entry `{id}` does not match scene `{}`", s.id),
            });
        }
    }
    Ok(())
}

fn all_sample_sets(scenes: &[Scene], sampler: &SamplerConfig) -> Result<Vec<SampleSets>> {
    scenes.par_iter().map(|s| sample_sets(s, sampler)).collect()
}

pub fn run_predict(scenes: &[Scene], pipeline: &PipelineConfig, weights: &ModelWeights) -> Result<PredictionDump> {
    let out = scenes
        .par_iter()
        .map(|scene| {
            let sets = sample_sets(scene, &pipeline.sampler)?;
            let tables = SceneTables::build(scene, &sets, pipeline.interaction_radius)?;
            let (marginals, report) = predict(&tables, &weights.energy, &pipeline.bp)?;
            Ok(ScenePrediction {
                scene_id: scene.id.clone(),
                marginals,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionDump {
        format: PREDICTIONS_FORMAT.into(),
        version: DUMP_VERSION,
        sampler: pipeline.sampler.clone(),
        weights: weights.to_map(),
        scenes: out,
    })
}

pub fn run_plan(
    scenes: &[Scene],
    predictions: &PredictionDump,
    weights: &ModelWeights,
    mode: CollisionMode,
) -> Result<PlanDump> {
    let out = scenes
        .par_iter()
        .zip(&predictions.scenes)
        .map(|(scene, p)| {
            let sets = sample_sets(scene, &predictions.sampler)?;
            let plan = plan_scene(scene, &sets, &p.marginals, &weights.planner, mode)?;
            Ok(ScenePlan {
                scene_id: scene.id.clone(),
                plan,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanDump {
        format: PLANS_FORMAT.into(),
        version: DUMP_VERSION,
        mode,
        weights: weights.to_map(),
        scenes: out,
    })
}

/// Waypoint rows for external plotting: every (or the `top` most probable)
/// sample of every actor with its marginal, plus the chosen ego plan as
/// actor `ego` with probability 1.
pub fn write_trajectory_csv(
    path: &Path,
    scenes: &[Scene],
    sets: &[SampleSets],
    predictions: &PredictionDump,
    plans: &PlanDump,
    top: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scene_id",
        "actor_id",
        "sample_id",
        "t",
        "x",
        "y",
        "heading",
        "probability",
    ])?;
    for (s, scene) in scenes.iter().enumerate() {
        let m = &predictions.scenes[s].marginals;
        for (i, actor) in scene.actors.iter().enumerate() {
            let actor_id = actor.id.to_string();
            let mut order = m.ranked(i);
            if top > 0 {
                order.truncate(top);
            }
            for k in order {
                let p = m.get(i, k).to_string();
                for wp in &sets[s].actors[i][k].waypoints {
                    w.write_record([
                        scene.id.as_str(),
                        actor_id.as_str(),
                        &k.to_string(),
                        &wp.t.to_string(),
                        &wp.x.to_string(),
                        &wp.y.to_string(),
                        &wp.heading.to_string(),
                        &p,
                    ])?;
                }
            }
        }
        let plan = &plans.scenes[s].plan;
        for wp in &plan.chosen.waypoints {
            w.write_record([
                scene.id.as_str(),
                "ego",
                &plan.chosen_index.to_string(),
                &wp.t.to_string(),
                &wp.x.to_string(),
                &wp.y.to_string(),
                &wp.heading.to_string(),
                "1",
            ])?;
        }
    }
    crate::metrics::finish_csv(w, path)
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => io::read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.command);
    if cli.dump_config {
        let text = serde_json::to_string_pretty(&cfg)?;
        let mut out = std::io::stdout().lock();
        return match writeln!(out, "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
            _ => Ok(()),
        };
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Gen(_) => {
            let out = require(&cfg.out, "--out")?;
            let scenes = generate(&cfg.gen.template, cfg.gen.count, cfg.gen.seed)?;
            scenario::save(&scenes, out)?;
            eprintln!("wrote {} scenes to {}", scenes.len(), out.display());
        }
        Command::Predict(_) => {
            let scenes = scenario::load(require(&cfg.scenes, "--scenes")?)?;
            let out = require(&cfg.out, "--out")?;
            let dump = run_predict(&scenes, &cfg.pipeline, &cfg.model_weights()?)?;
            io::write_json(out, &dump)?;
            let converged = dump.scenes.iter().filter(|s| s.report.converged).count();
            eprintln!(
                "predicted {} scenes ({converged} converged) to {}",
                dump.scenes.len(),
                out.display()
            );
        }
        Command::Plan(_) => {
            let scenes = scenario::load(require(&cfg.scenes, "--scenes")?)?;
            let ppath = require(&cfg.predictions, "--predictions")?;
            let preds = load_predictions(ppath)?;
            check_ids(ppath, &scenes, preds.scenes.iter().map(|p| &p.scene_id))?;
            let out = require(&cfg.out, "--out")?;
            let dump = run_plan(&scenes, &preds, &cfg.model_weights()?, cfg.planning_mode)?;
            io::write_json(out, &dump)?;
            eprintln!("planned {} scenes to {}", dump.scenes.len(), out.display());
        }
        Command::Train(_) => {
            let scenes = scenario::load(require(&cfg.scenes, "--scenes")?)?;
            let out = require(&cfg.out, "--out")?;
            let mut init = cfg.model_weights()?;
            if cfg.train_from_zero {
                let zero = ModelWeights::zero();
                init.energy.unary = zero.energy.unary;
                init.planner.traj = zero.planner.traj;
            }
            let examples = prepare_examples(&scenes, &cfg.pipeline, &cfg.train)?;
            let report = train(&examples, &init, &cfg.train)?;
            report.weights.save(out)?;
            if let Some(r) = &cfg.report {
                io::write_json(r, &report)?;
            }
            eprintln!(
                "trained on {} scenes: loss {:.4} -> {:.4}; weights in {}",
                scenes.len(),
                report.initial.total,
                report.total.last().copied().unwrap_or(report.initial.total),
                out.display()
            );
        }
        Command::Eval(_) => {
            let scenes = scenario::load(require(&cfg.scenes, "--scenes")?)?;
            let dir = require(&cfg.out, "--out-dir")?;
            let weights = cfg.model_weights()?;
            let preds = match &cfg.predictions {
                Some(p) => {
                    let d = load_predictions(p)?;
                    check_ids(p, &scenes, d.scenes.iter().map(|s| &s.scene_id))?;
                    d
                }
                None => run_predict(&scenes, &cfg.pipeline, &weights)?,
            };
            let plans = match &cfg.plans {
                Some(p) => {
                    let d = load_plans(p)?;
                    check_ids(p, &scenes, d.scenes.iter().map(|s| &s.scene_id))?;
                    d
                }
                None => run_plan(&scenes, &preds, &weights, cfg.planning_mode)?,
            };
            let sets = all_sample_sets(&scenes, &preds.sampler)?;
            let marginals: Vec<Marginals> = preds.scenes.iter().map(|p| p.marginals.clone()).collect();
            let actor_sets: Vec<_> = sets.iter().map(|s| s.actors.clone()).collect();
            let pm = eval_prediction(&scenes, &marginals, &actor_sets, cfg.pairing)?;
            let chosen: Vec<_> = plans.scenes.iter().map(|p| p.plan.chosen.clone()).collect();
            let qm = eval_planning(&scenes, &chosen)?;
            io::write_json(&dir.join("prediction_metrics.json"), &pm)?;
            write_prediction_csv(&pm, &dir.join("prediction_metrics.csv"))?;
            io::write_json(&dir.join("planning_metrics.json"), &qm)?;
            write_planning_csv(&qm, &dir.join("planning_metrics.csv"))?;
            write_trajectory_csv(
                &dir.join("trajectories.csv"),
                &scenes,
                &sets,
                &preds,
                &plans,
                cfg.top_samples,
            )?;
            eprintln!("evaluated {} scenes into {}", scenes.len(), dir.display());
        }
        Command::OracleCheck(_) => {
            let report = run_oracle_suite(cfg.oracle.seed, cfg.oracle.instances)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(out) = &cfg.out {
                io::write_json(out, &report)?;
            }
            if !report.passed() {
                return Err(Error::OracleMismatch(
                    report
                        .checks
                        .iter()
                        .filter(|c| !c.passed)
                        .map(|c| c.name.clone())
                        .collect(),
                ));
            }
        }
    }
    Ok(())
}
