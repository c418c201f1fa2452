use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LacAgent, ReplayBuffer};
use crate::battery::Trajectory;
use crate::env::{CalibEnv, CalibTarget};
use crate::error::{Error, Result};
use crate::nn::Real;

/// One finished training episode. Losses and multipliers are averaged over
/// the updates made during the episode (zero when none were made).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub step: u64,
    pub episode: u64,
    pub cumulative_cost: f64,
    /// Mean absolute error of the applied parameter, in parameter units
    /// (action units for joint calibration).
    pub mean_abs_param_error: f64,
    pub beta: f64,
    pub lambda: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Steps in the episode.
    pub length: usize,
}

impl EpisodeRecord {
    pub fn mean_cost(&self) -> f64 {
        self.cumulative_cost / self.length.max(1) as f64
    }
}

/// Diagnostics of a single gradient update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub beta_before: f64,
    pub beta_after: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    /// Batch estimate of the policy entropy, `-E[log pi]`.
    pub entropy: f64,
    pub target_entropy: f64,
    pub lyapunov_delta: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateRecord>,
}

#[derive(Default)]
struct EpisodeAcc {
    cost: f64,
    param_err: f64,
    steps: usize,
    updates: usize,
    beta: f64,
    lambda: f64,
    critic_loss: f64,
    actor_loss: f64,
}

impl<T: Real> LacAgent<T> {
    /// Trains until the agent has taken `config.total_steps` environment
    /// steps in total. Each episode replays a training trajectory drawn
    /// uniformly at random.
    pub fn train(&mut self, env: &mut CalibEnv, trajectories: &[Arc<Trajectory>]) -> Result<TrainingLog> {
        self.train_with(env, trajectories, |_| {})
    }

    /// As [`LacAgent::train`], calling `on_episode` after every episode.
    pub fn train_with<F>(&mut self, env: &mut CalibEnv, trajectories: &[Arc<Trajectory>], mut on_episode: F) -> Result<TrainingLog>
    where
        F: FnMut(&EpisodeRecord),
    {
        let mut log = TrainingLog::default();
        if self.steps >= self.config.total_steps {
            return Ok(log);
        }
        if trajectories.is_empty() {
            return Err(Error::ConfigInvalid("no training trajectories".into()));
        }
        if env.config().action_dim() != self.action_dim {
            return Err(Error::DimensionMismatch { expected: self.action_dim, got: env.config().action_dim() });
        }
        let target = env.config().target;
        let range = env.config().range;
        let mut buffer = ReplayBuffer::<T>::new(self.config.buffer_capacity, self.obs_dim, self.action_dim);
        let mut acc = EpisodeAcc::default();
        let mut in_episode = false;

        while self.steps < self.config.total_steps {
            if !in_episode {
                let idx = {
                    use rand::Rng;
                    self.rng().random_range(0..trajectories.len())
                };
                env.reset(trajectories[idx].clone())?;
                acc = EpisodeAcc::default();
                in_episode = true;
            }
            let obs = env.observation();
            let action = if self.steps < self.config.warmup_steps {
                self.random_action()
            } else {
                self.act(&obs, false)?
            };
            let out = env.step(&action)?;
            let next_obs = out.state.observation(&env.config().scales);

            let truth = env.trajectory().expect("episode running").params;
            acc.cost += out.cost;
            acc.param_err += match target {
                CalibTarget::QMax => (out.params.q_max - truth.q_max).abs(),
                CalibTarget::ROhm => (out.params.r_o - truth.r_o).abs(),
                CalibTarget::Joint => {
                    let est = range.params_to_action(target, &out.params);
                    let tru = range.params_to_action(target, &truth);
                    est.iter().zip(&tru).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
                }
            };
            acc.steps += 1;

            let to_t = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
            buffer.push(&to_t(&obs), &to_t(&action), T::lit(out.cost), &to_t(&next_obs), out.done);
            self.steps += 1;

            if self.steps > self.config.warmup_steps
                && buffer.len() >= self.config.batch_size
                && self.steps.is_multiple_of(self.config.steps_per_update)
            {
                let batch = {
                    let n = self.config.batch_size;
                    buffer.sample(n, self.rng())
                };
                let rec = self.update(&batch)?;
                acc.updates += 1;
                acc.beta += rec.beta_after;
                acc.lambda += rec.lambda_after;
                acc.critic_loss += rec.critic_loss;
                acc.actor_loss += rec.actor_loss;
                log.updates.push(rec);
            }

            if out.done {
                in_episode = false;
                self.episodes += 1;
                let n_up = acc.updates.max(1) as f64;
                let (beta, lambda) = if acc.updates == 0 {
                    (self.multipliers.beta(), self.multipliers.lambda())
                } else {
                    (acc.beta / n_up, acc.lambda / n_up)
                };
                let rec = EpisodeRecord {
                    step: self.steps,
                    episode: self.episodes,
                    cumulative_cost: acc.cost,
                    mean_abs_param_error: acc.param_err / acc.steps as f64,
                    beta,
                    lambda,
                    critic_loss: acc.critic_loss / n_up,
                    actor_loss: acc.actor_loss / n_up,
                    length: acc.steps,
                };
                on_episode(&rec);
                log.episodes.push(rec);
            }
        }
        Ok(log)
    }
}
