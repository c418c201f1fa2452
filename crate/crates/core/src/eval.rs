//! Runs a calibrator over held-out trajectories and scores its estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baseline::{transition_input, Regressor};
use crate::battery::Trajectory;
use crate::env::{discounted_cost, CalibEnv, CalibTarget, EnvConfig, MdpState};
use crate::error::Result;
use crate::lac::LacAgent;
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Rl,
    Supervised,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Rl => "rl",
            EvalMode::Supervised => "supervised",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rl" => Ok(EvalMode::Rl),
            "supervised" => Ok(EvalMode::Supervised),
            _ => Err(format!("unknown mode `{s}` (expected rl or supervised)")),
        }
    }
}

/// What a calibrator may look at when choosing the step-`t` action.
pub struct StepView<'a> {
    /// Environment observation `[x_hat_t, x_{t+1}, u_t]`.
    pub observation: &'a [f64; MdpState::OBS_DIM],
    pub trajectory: &'a Trajectory,
    pub t: usize,
    pub env: &'a EnvConfig,
}

/// Anything that maps a step to an action in `[-1, 1]^m`.
pub trait Calibrator: Sync {
    fn action(&self, view: &StepView<'_>) -> Result<Vec<f64>>;
}

impl<T: Real> Calibrator for LacAgent<T> {
    fn action(&self, view: &StepView<'_>) -> Result<Vec<f64>> {
        self.act_deterministic(view.observation)
    }
}

impl<T: Real> Calibrator for Regressor<T> {
    fn action(&self, view: &StepView<'_>) -> Result<Vec<f64>> {
        self.predict_unit(&transition_input(view.trajectory, view.t, &view.env.scales))
    }
}

/// Answers with the trajectory's true parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleCalibrator;

impl Calibrator for OracleCalibrator {
    fn action(&self, view: &StepView<'_>) -> Result<Vec<f64>> {
        Ok(view.env.range.params_to_action(view.env.target, &view.trajectory.params))
    }
}

/// One estimate at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub trajectory_id: usize,
    pub param: String,
    pub t: usize,
    pub true_param: f64,
    pub inferred_param: f64,
}

/// Error statistics of one parameter, either for one trajectory or
/// averaged over trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mean_rel_error: f64,
    /// Mean signed error, inferred minus true.
    pub bias: f64,
    /// Standard deviation of the inferred value over time.
    pub std_inferred: f64,
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub trajectory_id: usize,
    pub param: String,
    pub steps: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub param: String,
    pub trajectories: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub target: CalibTarget,
    pub per_trajectory: Vec<TrajectoryMetrics>,
    /// Unweighted means of the per-trajectory rows, one entry per parameter.
    pub aggregate: Vec<AggregateMetrics>,
}

impl EvalReport {
    pub fn aggregate_for(&self, param: &str) -> Option<&Metrics> {
        self.aggregate.iter().find(|a| a.param == param).map(|a| &a.metrics)
    }
}

/// Per-trajectory statistics of a series of estimates against a constant truth.
pub fn series_metrics(truth: f64, inferred: &[f64], discounted_cost: f64) -> Metrics {
    let n = inferred.len().max(1) as f64;
    let mean = inferred.iter().sum::<f64>() / n;
    let var = inferred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Metrics {
        mae: inferred.iter().map(|v| (v - truth).abs()).sum::<f64>() / n,
        mean_rel_error: inferred.iter().map(|v| ((v - truth) / truth).abs()).sum::<f64>() / n,
        bias: inferred.iter().map(|v| v - truth).sum::<f64>() / n,
        std_inferred: var.sqrt(),
        discounted_cost,
    }
}

/// Unweighted mean of per-trajectory metrics for each parameter name.
pub fn aggregate(rows: &[TrajectoryMetrics]) -> Vec<AggregateMetrics> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.param.as_str()) {
            names.push(&r.param);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let sel: Vec<&Metrics> = rows.iter().filter(|r| r.param == name).map(|r| &r.metrics).collect();
            let n = sel.len() as f64;
            let avg = |f: fn(&Metrics) -> f64| sel.iter().map(|m| f(m)).sum::<f64>() / n;
            AggregateMetrics {
                param: name.to_string(),
                trajectories: sel.len(),
                metrics: Metrics {
                    mae: avg(|m| m.mae),
                    mean_rel_error: avg(|m| m.mean_rel_error),
                    bias: avg(|m| m.bias),
                    std_inferred: avg(|m| m.std_inferred),
                    discounted_cost: avg(|m| m.discounted_cost),
                },
            }
        })
        .collect()
}

/// Steps the environment through one trajectory with the calibrator's
/// actions and records the applied parameters.
pub fn run_trajectory<C: Calibrator + ?Sized>(
    calibrator: &C,
    env_config: &EnvConfig,
    id: usize,
    trajectory: &Arc<Trajectory>,
    gamma: f64,
) -> Result<(Vec<TrajectoryMetrics>, Vec<TrackingRow>)> {
    let mut env = CalibEnv::new(*env_config)?;
    env.reset(trajectory.clone())?;
    let target = env_config.target;
    let names = param_names(target);
    let truth = target.components(&trajectory.params);
    let mut inferred: Vec<Vec<f64>> = vec![Vec::with_capacity(trajectory.len()); names.len()];
    let mut costs = Vec::with_capacity(trajectory.len());
    let mut rows = Vec::with_capacity(trajectory.len() * names.len());

    while !env.is_done() {
        let t = env.step_index();
        let obs = env.observation();
        let view = StepView { observation: &obs, trajectory, t, env: env_config };
        let action = calibrator.action(&view)?;
        let out = env.step(&action)?;
        costs.push(out.cost);
        for (k, v) in target.components(&out.params).into_iter().enumerate() {
            inferred[k].push(v);
            rows.push(TrackingRow { trajectory_id: id, param: names[k].to_string(), t, true_param: truth[k], inferred_param: v });
        }
    }
    let disc = discounted_cost(&costs, gamma);
    let metrics = names
        .iter()
        .enumerate()
        .map(|(k, name)| TrajectoryMetrics {
            trajectory_id: id,
            param: name.to_string(),
            steps: costs.len(),
            metrics: series_metrics(truth[k], &inferred[k], disc),
        })
        .collect();
    Ok((metrics, rows))
}

pub fn param_names(target: CalibTarget) -> &'static [&'static str] {
    match target {
        CalibTarget::QMax => &["q_max"],
        CalibTarget::ROhm => &["r_o"],
        CalibTarget::Joint => &["q_max", "r_o"],
    }
}

/// Evaluates every `(id, trajectory)` pair on up to `jobs` threads. The
/// report and rows come back in input order whatever `jobs` is.
pub fn evaluate<C: Calibrator + ?Sized>(
    calibrator: &C,
    mode: EvalMode,
    env_config: &EnvConfig,
    trajectories: &[(usize, Arc<Trajectory>)],
    gamma: f64,
    jobs: usize,
) -> Result<(EvalReport, Vec<TrackingRow>)> {
    env_config.validate()?;
    let jobs = jobs.clamp(1, trajectories.len().max(1));
    let mut results: Vec<Option<Result<(Vec<TrajectoryMetrics>, Vec<TrackingRow>)>>> =
        trajectories.iter().map(|_| None).collect();
    let chunk = trajectories.len().div_ceil(jobs).max(1);
    std::thread::scope(|scope| {
        for (slots, items) in results.chunks_mut(chunk).zip(trajectories.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, (id, traj)) in slots.iter_mut().zip(items) {
                    *slot = Some(run_trajectory(calibrator, env_config, *id, traj, gamma));
                }
            });
        }
    });

    let mut per_trajectory = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (m, r) = r.expect("every slot filled")?;
        per_trajectory.extend(m);
        rows.extend(r);
    }
    let report = EvalReport { mode, target: env_config.target, aggregate: aggregate(&per_trajectory), per_trajectory };
    Ok((report, rows))
}
