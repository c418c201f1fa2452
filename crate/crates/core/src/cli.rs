//! Command-line driver: `generate`, `train-rl`, `train-supervised`, `evaluate`.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! dataset/{train.csv, test.csv, manifest.json}
//! rl/{checkpoint.json, training_log.csv, updates.csv}
//! supervised/{checkpoint.json, training_log.csv}
//! eval_<mode>/{report.csv, report.json, tracking.csv}
//! ```

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::baseline::{build_labeled_dataset, train_supervised, Regressor};
use crate::checkpoint::{Checkpoint, ComponentKind};
use crate::config::{Precision, RunConfig};
use crate::dataset::{generate, Dataset, Split};
use crate::env::{CalibEnv, CalibTarget, MdpState};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Calibrator, EvalMode, EvalReport};
use crate::io::{read_dataset, report_rows, write_bytes, write_csv, write_dataset};
use crate::lac::LacAgent;
use crate::nn::Real;

#[derive(Debug, Parser)]
#[command(name = "battcal", version, about = "Calibrate battery degradation parameters with a Lyapunov actor-critic")]
pub struct Cli {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Desk-scale profile: 500 trajectories, 100k training steps.
    #[arg(long, global = true)]
    pub desk: bool,
    /// Worker threads for generation and evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Calibration target, q_max or r_o (overrides the config file).
    #[arg(long, global = true)]
    pub target: Option<CalibTarget>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it with its manifest.
    Generate,
    /// Train the actor-critic calibrator.
    TrainRl {
        /// Dataset directory [default: <out>/dataset].
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint; the step counter carries over.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the supervised direct-mapping regressor.
    TrainSupervised {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on the held-out split.
    Evaluate {
        #[arg(long)]
        mode: EvalMode,
        /// [default: <out>/rl/checkpoint.json or <out>/supervised/checkpoint.json]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file plus command-line overrides, validated.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io { path, source } => Error::ConfigInvalid(format!("{}: {source}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(t) = cli.target {
        cfg.target = t;
    }
    if cli.desk {
        cfg.apply_desk();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let (dir, hash, ds) = cmd_generate(&cfg)?;
            println!(
                "wrote {} train + {} test trajectories to {} (manifest sha256 {hash})",
                ds.split(Split::Train).count(),
                ds.split(Split::Test).count(),
                dir.display()
            );
        }
        Command::TrainRl { data, resume } => {
            let out = cmd_train_rl(&cfg, data.as_deref(), resume.as_deref(), true)?;
            println!("trained to step {} ({} episodes); checkpoint {}", out.steps, out.episodes, out.checkpoint.display());
        }
        Command::TrainSupervised { data } => {
            let out = cmd_train_supervised(&cfg, data.as_deref())?;
            println!("trained {} epochs (final mse {:.6}); checkpoint {}", out.epochs, out.final_mse, out.checkpoint.display());
        }
        Command::Evaluate { mode, checkpoint, data } => {
            let (report, dir) = cmd_evaluate(&cfg, *mode, checkpoint.as_deref(), data.as_deref())?;
            for a in &report.aggregate {
                println!(
                    "{} {}: mean relative error {:.4}, mae {:.6}, bias {:.6}, std {:.6}, discounted cost {:.6} over {} trajectories",
                    mode.as_str(),
                    a.param,
                    a.metrics.mean_rel_error,
                    a.metrics.mae,
                    a.metrics.bias,
                    a.metrics.std_inferred,
                    a.metrics.discounted_cost,
                    a.trajectories
                );
            }
            println!("report in {}", dir.display());
        }
    }
    Ok(())
}

pub fn dataset_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("dataset")
}

pub fn rl_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("rl")
}

pub fn supervised_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("supervised")
}

pub fn eval_dir(cfg: &RunConfig, mode: EvalMode) -> PathBuf {
    cfg.out_dir.join(format!("eval_{}", mode.as_str()))
}

/// Returns the dataset directory, the manifest hash and the dataset.
pub fn cmd_generate(cfg: &RunConfig) -> Result<(PathBuf, String, Dataset)> {
    let ds = generate(&cfg.dataset_spec()?, &cfg.battery, cfg.jobs)?;
    let dir = dataset_dir(cfg);
    let hash = write_dataset(&dir, &ds)?;
    Ok((dir, hash, ds))
}

/// Loads `splits` and checks the data was generated for the configured target.
fn load_data(cfg: &RunConfig, data: Option<&Path>, splits: &[Split]) -> Result<Dataset> {
    let dir = data.map(Path::to_path_buf).unwrap_or_else(|| dataset_dir(cfg));
    let ds = read_dataset(&dir, splits)?;
    if ds.spec.target != cfg.target {
        return Err(Error::ConfigInvalid(format!(
            "dataset in {} varies {}, but the run calibrates {}",
            dir.display(),
            ds.spec.target,
            cfg.target
        )));
    }
    Ok(ds)
}

#[derive(Debug, Clone)]
pub struct TrainRlOutput {
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub episodes: u64,
}

pub fn cmd_train_rl(cfg: &RunConfig, data: Option<&Path>, resume: Option<&Path>, progress: bool) -> Result<TrainRlOutput> {
    let ds = load_data(cfg, data, &[Split::Train])?;
    match cfg.precision {
        Precision::F32 => train_rl_as::<f32>(cfg, &ds, resume, progress),
        Precision::F64 => train_rl_as::<f64>(cfg, &ds, resume, progress),
    }
}

fn train_rl_as<T: Real>(cfg: &RunConfig, ds: &Dataset, resume: Option<&Path>, progress: bool) -> Result<TrainRlOutput> {
    let env_cfg = cfg.env_config();
    let mut agent: LacAgent<T> = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            check_target(&ck, cfg.target)?;
            let mut a = ck.to_agent()?;
            a.config.total_steps = cfg.lac.total_steps;
            a
        }
        None => LacAgent::new(MdpState::OBS_DIM, env_cfg.action_dim(), cfg.lac.clone(), cfg.seed()?)?,
    };
    let mut env = CalibEnv::new(env_cfg)?;
    let log = agent.train_with(&mut env, &ds.trajectories(Split::Train), |r| {
        if progress {
            eprintln!(
                "episode {:>5} step {:>8}  cost/step {:.5}  |param err| {:.5}  beta {:.4}  lambda {:.4}",
                r.episode,
                r.step,
                r.mean_cost(),
                r.mean_abs_param_error,
                r.beta,
                r.lambda
            );
        }
    })?;
    let dir = rl_dir(cfg);
    write_csv(&dir.join("training_log.csv"), &log.episodes)?;
    write_csv(&dir.join("updates.csv"), &log.updates)?;
    let checkpoint = dir.join("checkpoint.json");
    Checkpoint::from_agent(&agent, cfg.target, cfg.range, env.config().frozen, &cfg.hash()).save(&checkpoint)?;
    Ok(TrainRlOutput { checkpoint, steps: agent.steps, episodes: agent.episodes })
}

#[derive(Debug, Clone)]
pub struct TrainSupervisedOutput {
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub final_mse: f64,
}

pub fn cmd_train_supervised(cfg: &RunConfig, data: Option<&Path>) -> Result<TrainSupervisedOutput> {
    let ds = load_data(cfg, data, &[Split::Train])?;
    match cfg.precision {
        Precision::F32 => train_supervised_as::<f32>(cfg, &ds),
        Precision::F64 => train_supervised_as::<f64>(cfg, &ds),
    }
}

fn train_supervised_as<T: Real>(cfg: &RunConfig, ds: &Dataset) -> Result<TrainSupervisedOutput> {
    let seed = cfg.seed()?;
    let set = build_labeled_dataset(&ds.trajectories(Split::Train), cfg.target, &cfg.range, &cfg.scales);
    let mut reg = Regressor::<T>::new(&cfg.baseline, cfg.target, cfg.range, seed);
    let (history, opt) = train_supervised(&mut reg, &set, &cfg.baseline, seed)?;
    let dir = supervised_dir(cfg);
    write_csv(&dir.join("training_log.csv"), &history)?;
    let checkpoint = dir.join("checkpoint.json");
    Checkpoint::from_regressor(&reg, Some(&opt), &cfg.baseline, seed, history.len() as u64, &cfg.hash()).save(&checkpoint)?;
    Ok(TrainSupervisedOutput { checkpoint, epochs: history.len(), final_mse: history.last().map_or(f64::NAN, |h| h.train_mse) })
}

fn check_target(ck: &Checkpoint, target: CalibTarget) -> Result<()> {
    if ck.target != target {
        return Err(Error::KindMismatch { expected: format!("{target} calibrator"), found: format!("{} calibrator", ck.target) });
    }
    Ok(())
}

/// Evaluates a checkpoint on the test split; returns the report and the
/// directory it was written to.
pub fn cmd_evaluate(cfg: &RunConfig, mode: EvalMode, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<(EvalReport, PathBuf)> {
    let default_ck = match mode {
        EvalMode::Rl => rl_dir(cfg),
        EvalMode::Supervised => supervised_dir(cfg),
    }
    .join("checkpoint.json");
    let ck = Checkpoint::load(checkpoint.unwrap_or(&default_ck))?;
    let kind = match mode {
        EvalMode::Rl => ComponentKind::Actor,
        EvalMode::Supervised => ComponentKind::Regressor,
    };
    if ck.kind != kind {
        return Err(Error::KindMismatch { expected: kind.as_str().into(), found: ck.kind.as_str().into() });
    }
    check_target(&ck, cfg.target)?;
    let ds = load_data(cfg, data, &[Split::Test])?;
    let calibrator: Box<dyn Calibrator> = match (mode, ck.precision.as_str()) {
        (EvalMode::Rl, "f32") => Box::new(ck.to_agent::<f32>()?),
        (EvalMode::Rl, _) => Box::new(ck.to_agent::<f64>()?),
        (EvalMode::Supervised, "f32") => Box::new(ck.to_regressor::<f32>()?.0),
        (EvalMode::Supervised, _) => Box::new(ck.to_regressor::<f64>()?.0),
    };
    let mut env_cfg = cfg.env_config();
    env_cfg.range = ck.range;
    env_cfg.frozen = ck.frozen;
    let test: Vec<_> = ds.split(Split::Test).map(|e| (e.id, e.trajectory.clone())).collect();
    let (report, rows) = evaluate(calibrator.as_ref(), mode, &env_cfg, &test, cfg.lac.gamma, cfg.jobs)?;

    let dir = eval_dir(cfg, mode);
    write_csv(&dir.join("report.csv"), &report_rows(&report))?;
    write_csv(&dir.join("tracking.csv"), &rows)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_bytes(&dir.join("report.json"), &json)?;
    Ok((report, dir))
}
