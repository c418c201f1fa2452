//! Lyapunov actor-critic calibrator.

mod losses;
mod replay;
mod train;

pub use losses::{
    actor_loss, actor_objective, critic_input, critic_loss, critic_objective, critic_target, lyapunov_values,
    policy_head, sample_actions, ActorLoss, ActorNoise, CriticLoss, Multipliers, MULTIPLIER_MAX,
};
pub use replay::{Batch, ReplayBuffer};
pub use train::{EpisodeRecord, TrainingLog, UpdateRecord};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{squash_sample, AdamConfig, AdamState, Matrix, Mlp, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LacConfig {
    pub gamma: f64,
    /// Weight of the cost in the Lyapunov-decrease constraint.
    pub alpha3: f64,
    /// Entropy floor; `None` means minus the action dimension.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub total_steps: u64,
    pub tau_polyak: f64,
    pub steps_per_update: u64,
    /// Uniform-random actions before the first update.
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub multiplier_lr: f64,
    pub init_beta: f64,
    pub init_lambda: f64,
}

impl Default for LacConfig {
    fn default() -> Self {
        LacConfig {
            gamma: 0.9,
            alpha3: 0.1,
            target_entropy: None,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            total_steps: 1_000_000,
            tau_polyak: 5e-3,
            steps_per_update: 1,
            warmup_steps: 1000,
            hidden: vec![256, 256, 256],
            adam: AdamConfig::default(),
            multiplier_lr: 5e-4,
            init_beta: 1.0,
            init_lambda: 1.0,
        }
    }
}

impl LacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("lac.gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.alpha3 > 0.0) {
            return bad(format!("lac.alpha3 must be > 0, got {}", self.alpha3));
        }
        if !(self.tau_polyak > 0.0 && self.tau_polyak <= 1.0) {
            return bad(format!("lac.tau_polyak must lie in (0, 1], got {}", self.tau_polyak));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.steps_per_update == 0 {
            return bad("lac.batch_size, lac.buffer_capacity and lac.steps_per_update must be positive".into());
        }
        if self.hidden.len() < 2 || self.hidden.contains(&0) {
            return bad("lac.hidden needs at least two positive widths".into());
        }
        if !(self.init_beta > 0.0 && self.init_beta <= MULTIPLIER_MAX && self.init_lambda > 0.0 && self.init_lambda <= MULTIPLIER_MAX) {
            return bad("lac.init_beta and lac.init_lambda must lie in (0, 10]".into());
        }
        if !(self.multiplier_lr > 0.0 && self.adam.lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }

    pub fn target_entropy(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    /// Actor layer widths: observation in, mean and log-std per action out.
    pub fn actor_dims(&self, obs_dim: usize, action_dim: usize) -> Vec<usize> {
        let mut d = vec![obs_dim];
        d.extend(&self.hidden);
        d.push(2 * action_dim);
        d
    }

    /// Critic layer widths: `[obs | action]` in, last hidden width out; the
    /// Lyapunov value is the squared norm of the output layer.
    pub fn critic_dims(&self, obs_dim: usize, action_dim: usize) -> Vec<usize> {
        let mut d = vec![obs_dim + action_dim];
        d.extend(&self.hidden);
        d
    }
}

/// Actor, Lyapunov critic, target critic, their optimisers and multipliers.
#[derive(Debug, Clone)]
pub struct LacAgent<T> {
    pub config: LacConfig,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    pub target_critic: Mlp<T>,
    pub actor_opt: AdamState<T>,
    pub critic_opt: AdamState<T>,
    pub multipliers: Multipliers,
    /// Seed of the agent's random stream (initialisation, exploration, sampling).
    pub seed: u64,
    /// Environment steps taken so far, across resumes.
    pub steps: u64,
    pub episodes: u64,
    rng: ChaCha8Rng,
}

impl<T: Real> LacAgent<T> {
    pub fn new(obs_dim: usize, action_dim: usize, config: LacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&config.actor_dims(obs_dim, action_dim), &mut rng);
        let critic = Mlp::new(&config.critic_dims(obs_dim, action_dim), &mut rng);
        Ok(LacAgent {
            obs_dim,
            action_dim,
            actor_opt: AdamState::new(actor.num_params(), config.adam),
            critic_opt: AdamState::new(critic.num_params(), config.adam),
            target_critic: critic.clone(),
            multipliers: Multipliers::new(config.init_beta, config.init_lambda),
            actor,
            critic,
            seed,
            steps: 0,
            episodes: 0,
            rng,
            config,
        })
    }

    /// Reassembles an agent from stored parts, e.g. a checkpoint.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: LacConfig,
        actor: Mlp<T>,
        critic: Mlp<T>,
        target_critic: Mlp<T>,
        actor_opt: AdamState<T>,
        critic_opt: AdamState<T>,
        multipliers: Multipliers,
        seed: u64,
        steps: u64,
        episodes: u64,
        rng_word_pos: u128,
    ) -> Result<Self> {
        config.validate()?;
        let obs_dim = actor.input_dim();
        let action_dim = actor.output_dim() / 2;
        if critic.dims() != config.critic_dims(obs_dim, action_dim).as_slice() || target_critic.dims() != critic.dims() {
            return Err(Error::SchemaMismatch("critic layer widths disagree with the actor".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(rng_word_pos);
        Ok(LacAgent {
            config,
            obs_dim,
            action_dim,
            actor,
            critic,
            target_critic,
            actor_opt,
            critic_opt,
            multipliers,
            seed,
            steps,
            episodes,
            rng,
        })
    }

    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn obs_row(&self, obs: &[f64]) -> Result<Vec<T>> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, got: obs.len() });
        }
        Ok(obs.iter().map(|&v| T::lit(v)).collect())
    }

    /// Deterministic mode returns `tanh(mean)`; otherwise a squashed sample.
    pub fn act(&mut self, obs: &[f64], deterministic: bool) -> Result<Vec<f64>> {
        if deterministic {
            return self.act_deterministic(obs);
        }
        let out = self.actor.forward(&self.obs_row(obs)?)?;
        let m = self.action_dim;
        let eps: Vec<T> = (0..m).map(|_| self.normal()).collect();
        let s = squash_sample(&out[..m], &out[m..], &eps);
        Ok(s.action.iter().map(|a| a.to_f64().expect("finite")).collect())
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let out = self.actor.forward(&self.obs_row(obs)?)?;
        Ok(out[..self.action_dim].iter().map(|m| m.tanh().to_f64().expect("finite")).collect())
    }

    fn normal(&mut self) -> T {
        T::lit(self.rng.sample::<f64, _>(StandardNormal))
    }

    fn noise(&mut self, rows: usize) -> Matrix<T> {
        let cols = self.action_dim;
        let data = (0..rows * cols).map(|_| self.normal()).collect();
        Matrix::from_vec(rows, cols, data)
    }

    /// One critic step, one actor step, one multiplier step and a Polyak
    /// update of the target critic, all on the same batch.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<UpdateRecord> {
        let gamma = T::lit(self.config.gamma);
        let b = batch.len();

        // critic: targets use a' ~ pi(s') scored by the target critic
        let eps = self.noise(b);
        let (next_act, _) = sample_actions(&self.actor, &batch.next_obs, &eps)?;
        let next_values = lyapunov_values(&self.target_critic, &critic_input(&batch.next_obs, &next_act))?;
        let targets: Vec<T> =
            (0..b).map(|i| critic_target(batch.cost[i], batch.done[i], gamma, next_values[i])).collect();
        let critic = critic_loss(&self.critic, &batch.obs, &batch.act, &targets)?;
        self.critic_opt.step(self.critic.params_mut(), &critic.grads);

        // actor
        let noise = ActorNoise { at_obs: self.noise(b), at_next: self.noise(b) };
        let (beta, lambda) = (self.multipliers.beta(), self.multipliers.lambda());
        let actor = actor_loss(
            &self.actor,
            &self.critic,
            batch,
            &noise,
            T::lit(beta),
            T::lit(lambda),
            T::lit(self.config.alpha3),
        )?;
        self.actor_opt.step(self.actor.params_mut(), &actor.grads);

        let mean_log_prob = actor.mean_log_prob.to_f64().expect("finite");
        let delta = actor.lyapunov_delta.to_f64().expect("finite");
        let target_entropy = self.config.target_entropy(self.action_dim);
        self.multipliers = self.multipliers.updated(mean_log_prob, target_entropy, delta, self.config.multiplier_lr);

        self.target_critic.soft_update(&self.critic, T::lit(self.config.tau_polyak));

        Ok(UpdateRecord {
            step: self.steps,
            beta_before: beta,
            beta_after: self.multipliers.beta(),
            lambda_before: lambda,
            lambda_after: self.multipliers.lambda(),
            entropy: -mean_log_prob,
            target_entropy,
            lyapunov_delta: delta,
            critic_loss: critic.loss.to_f64().expect("finite"),
            actor_loss: actor.loss.to_f64().expect("finite"),
        })
    }

    pub(crate) fn random_action(&mut self) -> Vec<f64> {
        (0..self.action_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layer_acts_at_midpoint() {
        let mut agent = LacAgent::<f64>::new(15, 1, LacConfig { hidden: vec![16, 16, 16], ..Default::default() }, 0).unwrap();
        agent.actor.zero_output_layer();
        let obs = [0.3; 15];
        assert_eq!(agent.act(&obs, true).unwrap(), vec![0.0]);
        for _ in 0..100 {
            let a = agent.act(&obs, false).unwrap();
            assert!(a[0] > -1.0 && a[0] < 1.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(LacConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(LacConfig { alpha3: 0.0, ..Default::default() }.validate().is_err());
        assert!(LacConfig { tau_polyak: 0.0, ..Default::default() }.validate().is_err());
        assert!(LacConfig::default().validate().is_ok());
        assert_eq!(LacConfig::default().target_entropy(2), -2.0);
    }

    #[test]
    fn obs_dimension_checked() {
        let mut agent = LacAgent::<f32>::new(15, 1, LacConfig { hidden: vec![8, 8], ..Default::default() }, 0).unwrap();
        assert!(matches!(agent.act(&[0.0; 3], true), Err(Error::DimensionMismatch { expected: 15, got: 3 })));
    }
}
