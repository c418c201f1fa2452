//! Supervised direct mapping from real state transitions to parameters.
//!
//! Unlike the tracking agent, the regressor sees two *real* states and is
//! trained on ground-truth labels, so it bounds what calibration can reach.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{DegradationParams, Trajectory};
use crate::env::{action_to_params, CalibRange, CalibTarget, MdpState, NormScales};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Matrix, Mlp, Real};

/// Labelled transitions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub label_dim: usize,
    /// Index of the source trajectory of each sample.
    pub trajectory: Vec<usize>,
}

impl LabeledSet {
    pub const INPUT_DIM: usize = MdpState::OBS_DIM;

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * Self::INPUT_DIM..(i + 1) * Self::INPUT_DIM]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_dim..(i + 1) * self.label_dim]
    }
}

/// Regression input for step `t` of a trajectory: normalised
/// `[x_t, x_{t+1}, u_{t+1}]`, all real states.
pub fn transition_input(traj: &Trajectory, t: usize, scales: &NormScales) -> [f64; MdpState::OBS_DIM] {
    MdpState { x_hat: traj.states[t], x_next: traj.states[t + 1], u_next: traj.loads.currents[t] }.observation(scales)
}

/// One sample per consecutive state pair, labelled with the trajectory's
/// parameters mapped into `[-1, 1]`.
pub fn build_labeled_dataset(
    trajectories: &[Arc<Trajectory>],
    target: CalibTarget,
    range: &CalibRange,
    scales: &NormScales,
) -> LabeledSet {
    let label_dim = target.action_dim();
    let total: usize = trajectories.iter().map(|t| t.len()).sum();
    let mut set = LabeledSet {
        inputs: Vec::with_capacity(total * LabeledSet::INPUT_DIM),
        labels: Vec::with_capacity(total * label_dim),
        label_dim,
        trajectory: Vec::with_capacity(total),
    };
    for (k, traj) in trajectories.iter().enumerate() {
        let label: Vec<f64> = range.params_to_action(target, &traj.params).iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        for t in 0..traj.len() {
            set.inputs.extend_from_slice(&transition_input(traj, t, scales));
            set.labels.extend_from_slice(&label);
            set.trajectory.push(k);
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { epochs: 30, batch_size: 256, hidden: vec![256, 256, 256], adam: AdamConfig::default() }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::ConfigInvalid("baseline.batch_size and baseline.hidden must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::ConfigInvalid("baseline.adam.lr must be > 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self, label_dim: usize) -> Vec<usize> {
        let mut d = vec![LabeledSet::INPUT_DIM];
        d.extend(&self.hidden);
        d.push(label_dim);
        d
    }
}

/// Trained direct-mapping network and the map back to parameter units.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor<T> {
    pub net: Mlp<T>,
    pub target: CalibTarget,
    pub range: CalibRange,
    pub frozen: DegradationParams,
}

impl<T: Real> Regressor<T> {
    pub fn new(config: &BaselineConfig, target: CalibTarget, range: CalibRange, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Regressor {
            net: Mlp::new(&config.dims(target.action_dim()), &mut rng),
            target,
            range,
            frozen: DegradationParams::PERFECT,
        }
    }

    /// Raw network output clamped to `[-1, 1]`.
    pub fn predict_unit(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != LabeledSet::INPUT_DIM {
            return Err(Error::DimensionMismatch { expected: LabeledSet::INPUT_DIM, got: input.len() });
        }
        let x: Vec<T> = input.iter().map(|&v| T::lit(v)).collect();
        Ok(self.net.forward(&x)?.iter().map(|y| y.to_f64().expect("finite").clamp(-1.0, 1.0)).collect())
    }

    pub fn predict(&self, input: &[f64]) -> Result<DegradationParams> {
        let unit = self.predict_unit(input)?;
        Ok(action_to_params(&unit, self.target, &self.range, &self.frozen))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch MSE over the epoch.
    pub train_mse: f64,
}

/// Fits the regressor with mean-squared error and Adam on shuffled
/// mini-batches. Epoch `e` shuffles with a generator seeded from
/// `(seed, e)`, so runs are reproducible. Returns the per-epoch losses and
/// the final optimiser state.
pub fn train_supervised<T: Real>(
    regressor: &mut Regressor<T>,
    data: &LabeledSet,
    config: &BaselineConfig,
    seed: u64,
) -> Result<(Vec<EpochRecord>, AdamState<T>)> {
    config.validate()?;
    if config.epochs > 0 && data.is_empty() {
        return Err(Error::ConfigInvalid("empty supervised dataset".into()));
    }
    if data.label_dim != regressor.net.output_dim() {
        return Err(Error::DimensionMismatch { expected: regressor.net.output_dim(), got: data.label_dim });
    }
    let mut opt = AdamState::new(regressor.net.num_params(), config.adam);
    let inputs: Vec<T> = data.inputs.iter().map(|&v| T::lit(v)).collect();
    let labels: Vec<T> = data.labels.iter().map(|&v| T::lit(v)).collect();
    let (in_dim, out_dim) = (LabeledSet::INPUT_DIM, data.label_dim);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut x = Matrix::zeros(chunk.len(), in_dim);
            let mut y = Matrix::zeros(chunk.len(), out_dim);
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&inputs[i * in_dim..(i + 1) * in_dim]);
                y.row_mut(r).copy_from_slice(&labels[i * out_dim..(i + 1) * out_dim]);
            }
            let (loss, grads) = regressor.net.gradients(&x, |pred| mse_and_grad(pred, &y))?;
            opt.step(regressor.net.params_mut(), &grads);
            total += loss.to_f64().expect("finite");
            batches += 1;
        }
        history.push(EpochRecord { epoch: epoch + 1, train_mse: total / batches as f64 });
    }
    Ok((history, opt))
}

/// Mean over samples of the summed squared error, and its gradient.
fn mse_and_grad<T: Real>(pred: &Matrix<T>, target: &Matrix<T>) -> (T, Matrix<T>) {
    let n = T::from_usize(pred.rows()).expect("batch");
    let mut g = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = T::zero();
    for (k, (&p, &t)) in pred.as_slice().iter().zip(target.as_slice()).enumerate() {
        let d = p - t;
        loss = loss + d * d;
        g.as_mut_slice()[k] = T::lit(2.0) * d / n;
    }
    (loss / n, g)
}
