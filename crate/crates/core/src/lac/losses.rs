//! Lyapunov critic and actor objectives with their analytic gradients.

use serde::{Deserialize, Serialize};

use super::replay::Batch;
use crate::error::Result;
use crate::nn::{squash_sample, Matrix, Mlp, Real};

/// Upper clamp shared by both multipliers.
pub const MULTIPLIER_MAX: f64 = 10.0;

/// Entropy multiplier `beta` and Lyapunov-constraint multiplier `lambda`,
/// stored in log space so both stay positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub log_beta: f64,
    pub log_lambda: f64,
}

impl Multipliers {
    pub fn new(beta: f64, lambda: f64) -> Self {
        Multipliers { log_beta: beta.ln(), log_lambda: lambda.ln() }
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    /// One ascent step on `J(beta) = beta E[log pi + H_t]` and
    /// `J(lambda) = lambda E[L(s', pi(s')) - L(s, a) + alpha_3 c]`, taken on
    /// the log-multipliers and clamped to `(0, 10]`.
    pub fn updated(&self, mean_log_prob: f64, target_entropy: f64, lyapunov_delta: f64, lr: f64) -> Multipliers {
        let cap = MULTIPLIER_MAX.ln();
        Multipliers {
            log_beta: (self.log_beta + lr * (mean_log_prob + target_entropy)).min(cap),
            log_lambda: (self.log_lambda + lr * lyapunov_delta).min(cap),
        }
    }
}

/// Lyapunov target `c + gamma L_target(s', a')`, without bootstrap at episode end.
pub fn critic_target<T: Real>(cost: T, done: bool, gamma: T, next_value: T) -> T {
    if done {
        cost
    } else {
        cost + gamma * next_value
    }
}

/// Per-sample critic objective `(L - target)^2 / 2`.
pub fn critic_objective<T: Real>(value: T, target: T) -> T {
    let d = value - target;
    T::lit(0.5) * d * d
}

/// Per-sample actor objective `beta log pi + lambda (L' - L + alpha_3 c)`.
pub fn actor_objective<T: Real>(log_prob: T, beta: T, lambda: T, next_value: T, value: T, alpha3: T, cost: T) -> T {
    beta * log_prob + lambda * (next_value - value + alpha3 * cost)
}

/// Critic input `[obs | action]`.
pub fn critic_input<T: Real>(obs: &Matrix<T>, act: &Matrix<T>) -> Matrix<T> {
    obs.hcat(act)
}

/// Lyapunov values: sum of squares of the critic's output layer, per row.
pub fn lyapunov_values<T: Real>(critic: &Mlp<T>, input: &Matrix<T>) -> Result<Vec<T>> {
    let out = critic.forward_batch(input)?;
    Ok((0..out.rows()).map(|i| out.row(i).iter().map(|&y| y * y).sum()).collect())
}

/// Splits the actor output into `(mean, log_std)` blocks.
pub fn policy_head<T: Real>(out: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let m = out.cols() / 2;
    (out.columns(0, m), out.columns(m, 2 * m))
}

/// Reparameterised actions for a batch: returns `(actions, log_probs)`.
pub fn sample_actions<T: Real>(actor: &Mlp<T>, obs: &Matrix<T>, noise: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let out = actor.forward_batch(obs)?;
    let (mean, log_std) = policy_head(&out);
    let mut actions = Matrix::zeros(obs.rows(), mean.cols());
    let mut log_probs = Vec::with_capacity(obs.rows());
    for i in 0..obs.rows() {
        let s = squash_sample(mean.row(i), log_std.row(i), noise.row(i));
        actions.row_mut(i).copy_from_slice(&s.action);
        log_probs.push(s.log_prob);
    }
    Ok((actions, log_probs))
}

#[derive(Debug, Clone)]
pub struct CriticLoss<T> {
    pub loss: T,
    pub grads: Vec<T>,
    pub values: Vec<T>,
}

/// Mean of `(L(s, a) - target)^2 / 2` over the batch, with the targets held
/// constant, and its gradient with respect to the critic parameters.
pub fn critic_loss<T: Real>(critic: &Mlp<T>, obs: &Matrix<T>, act: &Matrix<T>, targets: &[T]) -> Result<CriticLoss<T>> {
    let input = critic_input(obs, act);
    let cache = critic.forward_cached(&input)?;
    let out = cache.output();
    let n = T::from_usize(out.rows()).expect("batch size");
    let mut g_out = Matrix::zeros(out.rows(), out.cols());
    let mut loss = T::zero();
    let mut values = Vec::with_capacity(out.rows());
    for i in 0..out.rows() {
        let value: T = out.row(i).iter().map(|&y| y * y).sum();
        loss = loss + critic_objective(value, targets[i]);
        // d/dy of (sum y^2 - target)^2 / 2n
        let scale = T::lit(2.0) * (value - targets[i]) / n;
        for (g, &y) in g_out.row_mut(i).iter_mut().zip(out.row(i)) {
            *g = scale * y;
        }
        values.push(value);
    }
    let mut grads = vec![T::zero(); critic.num_params()];
    critic.backward(&cache, &g_out, Some(&mut grads));
    Ok(CriticLoss { loss: loss / n, grads, values })
}

/// Gaussian noise for the two reparameterised draws of the actor objective.
#[derive(Debug, Clone)]
pub struct ActorNoise<T> {
    pub at_obs: Matrix<T>,
    pub at_next: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct ActorLoss<T> {
    pub loss: T,
    pub grads: Vec<T>,
    /// Batch mean of `log pi(f(eps, s) | s)`.
    pub mean_log_prob: T,
    /// Batch mean of `L(s', f(eps, s')) - L(s, a) + alpha_3 c`.
    pub lyapunov_delta: T,
}

/// Mean actor objective over the batch and its gradient with respect to the
/// actor parameters. `L(s, a)` and `c` are constants; `L(s', f(eps, s'))`
/// is differentiated through the reparameterised action.
pub fn actor_loss<T: Real>(
    actor: &Mlp<T>,
    critic: &Mlp<T>,
    batch: &Batch<T>,
    noise: &ActorNoise<T>,
    beta: T,
    lambda: T,
    alpha3: T,
) -> Result<ActorLoss<T>> {
    let b = batch.len();
    let n = T::from_usize(b).expect("batch size");
    let m = batch.act.cols();

    let value = lyapunov_values(critic, &critic_input(&batch.obs, &batch.act))?;

    // entropy branch at s
    let cache_s = actor.forward_cached(&batch.obs)?;
    let (mean_s, ls_s) = policy_head(cache_s.output());
    let mut g_s = Matrix::zeros(b, 2 * m);
    let mut log_probs = Vec::with_capacity(b);
    for i in 0..b {
        let s = squash_sample(mean_s.row(i), ls_s.row(i), noise.at_obs.row(i));
        for j in 0..m {
            g_s.set(i, j, beta * s.dlogp_dmean[j] / n);
            g_s.set(i, m + j, beta * s.dlogp_dlog_std[j] / n);
        }
        log_probs.push(s.log_prob);
    }

    // Lyapunov branch at s'
    let cache_n = actor.forward_cached(&batch.next_obs)?;
    let (mean_n, ls_n) = policy_head(cache_n.output());
    let mut next_act = Matrix::zeros(b, m);
    let mut samples = Vec::with_capacity(b);
    for i in 0..b {
        let s = squash_sample(mean_n.row(i), ls_n.row(i), noise.at_next.row(i));
        next_act.row_mut(i).copy_from_slice(&s.action);
        samples.push(s);
    }
    let critic_cache = critic.forward_cached(&critic_input(&batch.next_obs, &next_act))?;
    let crit_out = critic_cache.output();
    let mut g_crit = Matrix::zeros(b, crit_out.cols());
    let mut next_value = Vec::with_capacity(b);
    for i in 0..b {
        next_value.push(crit_out.row(i).iter().map(|&y| y * y).sum::<T>());
        for (g, &y) in g_crit.row_mut(i).iter_mut().zip(crit_out.row(i)) {
            *g = T::lit(2.0) * lambda * y / n;
        }
    }
    let d_input = critic.backward(&critic_cache, &g_crit, None);
    let obs_dim = batch.next_obs.cols();
    let mut g_n = Matrix::zeros(b, 2 * m);
    for (i, s) in samples.iter().enumerate() {
        for j in 0..m {
            let d_a = d_input.get(i, obs_dim + j);
            g_n.set(i, j, d_a * s.daction_dmean[j]);
            g_n.set(i, m + j, d_a * s.daction_dlog_std[j]);
        }
    }

    let mut grads = vec![T::zero(); actor.num_params()];
    actor.backward(&cache_s, &g_s, Some(&mut grads));
    actor.backward(&cache_n, &g_n, Some(&mut grads));

    let mut loss = T::zero();
    let mut delta = T::zero();
    for i in 0..b {
        loss = loss + actor_objective(log_probs[i], beta, lambda, next_value[i], value[i], alpha3, batch.cost[i]);
        delta = delta + next_value[i] - value[i] + alpha3 * batch.cost[i];
    }
    let mean_log_prob = log_probs.iter().copied().sum::<T>() / n;
    Ok(ActorLoss { loss: loss / n, grads, mean_log_prob, lyapunov_delta: delta / n })
}
