//! Calibration as a state-tracking MDP.
//!
//! At step `t` the agent observes `[x_hat_t, x_{t+1}, u_{t+1}]`: the model's
//! predicted internal state, the real state one step ahead, and the load
//! that produces it. Its action sets the model's degradation parameters, the
//! model is advanced under that load, and the cost is the normalised
//! distance between the predicted and real next states.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::battery::{self, BatteryConfig, BatteryState, DegradationParams, Trajectory};
use crate::error::{Error, Result};

/// Which degradation parameter(s) the agent controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibTarget {
    QMax,
    #[serde(rename = "r_o")]
    ROhm,
    Joint,
}

impl CalibTarget {
    pub fn action_dim(self) -> usize {
        match self {
            CalibTarget::Joint => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CalibTarget::QMax => "q_max",
            CalibTarget::ROhm => "r_o",
            CalibTarget::Joint => "joint",
        }
    }

    /// Calibrated parameter values in action order.
    pub fn components(self, p: &DegradationParams) -> Vec<f64> {
        match self {
            CalibTarget::QMax => vec![p.q_max],
            CalibTarget::ROhm => vec![p.r_o],
            CalibTarget::Joint => vec![p.q_max, p.r_o],
        }
    }
}

impl std::str::FromStr for CalibTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q_max" | "qmax" => Ok(CalibTarget::QMax),
            "r_o" | "ro" => Ok(CalibTarget::ROhm),
            "joint" => Ok(CalibTarget::Joint),
            other => Err(Error::ConfigInvalid(format!("unknown calibration target {other:?}"))),
        }
    }
}

impl std::fmt::Display for CalibTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    /// `[-1, 1] -> [min, max]`
    pub fn from_unit(&self, a: f64) -> f64 {
        self.min + (a + 1.0) / 2.0 * (self.max - self.min)
    }

    /// `[min, max] -> [-1, 1]`
    pub fn to_unit(&self, v: f64) -> f64 {
        2.0 * (v - self.min) / (self.max - self.min) - 1.0
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Parameter ranges behind the action <-> parameter map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibRange {
    pub q_max: Bounds,
    pub r_o: Bounds,
}

impl Default for CalibRange {
    fn default() -> Self {
        CalibRange { q_max: Bounds::new(5000.0, 7600.0), r_o: Bounds::new(0.117215, 0.30) }
    }
}

impl CalibRange {
    pub fn validate(&self) -> Result<()> {
        for (name, b, perfect) in [
            ("q_max", self.q_max, DegradationParams::PERFECT.q_max),
            ("r_o", self.r_o, DegradationParams::PERFECT.r_o),
        ] {
            if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
                return Err(Error::ConfigInvalid(format!("range.{name}: min must be < max, got [{}, {}]", b.min, b.max)));
            }
            if b.min <= 0.0 {
                return Err(Error::ConfigInvalid(format!("range.{name}: bounds must be positive")));
            }
            if !b.contains(perfect) {
                return Err(Error::ConfigInvalid(format!("range.{name} must contain the perfect-battery value {perfect}")));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, target: CalibTarget) -> Vec<Bounds> {
        match target {
            CalibTarget::QMax => vec![self.q_max],
            CalibTarget::ROhm => vec![self.r_o],
            CalibTarget::Joint => vec![self.q_max, self.r_o],
        }
    }

    /// Ground-truth parameters expressed as an action in `[-1, 1]^m`.
    pub fn params_to_action(&self, target: CalibTarget, p: &DegradationParams) -> Vec<f64> {
        self.bounds(target).iter().zip(target.components(p)).map(|(b, v)| b.to_unit(v)).collect()
    }
}

/// Fixed per-component divisors used for observations and cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormScales {
    pub charge: f64,
    pub voltage: f64,
    pub current: f64,
}

impl Default for NormScales {
    fn default() -> Self {
        NormScales { charge: DegradationParams::PERFECT.q_max, voltage: 1.0, current: 4.0 }
    }
}

impl NormScales {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("charge", self.charge), ("voltage", self.voltage), ("current", self.current)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ConfigInvalid(format!("scales.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn state_scale(&self, i: usize) -> f64 {
        if i < 4 {
            self.charge
        } else {
            self.voltage
        }
    }

    pub fn normalize_state(&self, s: &BatteryState) -> [f64; BatteryState::DIM] {
        let mut a = s.to_array();
        for (i, v) in a.iter_mut().enumerate() {
            *v /= self.state_scale(i);
        }
        a
    }

    pub fn denormalize_state(&self, a: &[f64]) -> BatteryState {
        let mut out = [0.0; BatteryState::DIM];
        for (i, v) in out.iter_mut().enumerate() {
            *v = a[i] * self.state_scale(i);
        }
        BatteryState::from_array(out)
    }

    /// Normalised Euclidean distance between two states. Zero exactly when
    /// the states are equal.
    pub fn state_distance(&self, a: &BatteryState, b: &BatteryState) -> f64 {
        let (a, b) = (a.to_array(), b.to_array());
        (0..BatteryState::DIM).map(|i| ((a[i] - b[i]) / self.state_scale(i)).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub target: CalibTarget,
    pub range: CalibRange,
    pub scales: NormScales,
    /// Values of the parameters the agent does not control, and the
    /// parameters the predictor starts from.
    pub frozen: DegradationParams,
    #[serde(skip)]
    pub battery: BatteryConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            target: CalibTarget::ROhm,
            range: CalibRange::default(),
            scales: NormScales::default(),
            frozen: DegradationParams::PERFECT,
            battery: BatteryConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn for_target(target: CalibTarget) -> Self {
        EnvConfig { target, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        self.scales.validate()?;
        self.frozen.validate()?;
        self.battery.validate()
    }

    pub fn action_dim(&self) -> usize {
        self.target.action_dim()
    }
}

/// Agent output, every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|a| !(**a >= -1.0 && **a <= 1.0)) {
            return Err(Error::ConfigInvalid(format!("action component {bad} outside [-1, 1]")));
        }
        Ok(Action(raw))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Maps an action onto degradation parameters. Components the target does
/// not control are copied from `frozen`.
pub fn action_to_params(a: &[f64], target: CalibTarget, range: &CalibRange, frozen: &DegradationParams) -> DegradationParams {
    let mut p = *frozen;
    match target {
        CalibTarget::QMax => p.q_max = range.q_max.from_unit(a[0]),
        CalibTarget::ROhm => p.r_o = range.r_o.from_unit(a[0]),
        CalibTarget::Joint => {
            p.q_max = range.q_max.from_unit(a[0]);
            p.r_o = range.r_o.from_unit(a[1]);
        }
    }
    p
}

/// Tracking observation `[x_hat_t, x_{t+1}, u_{t+1}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpState {
    pub x_hat: BatteryState,
    pub x_next: BatteryState,
    pub u_next: f64,
}

impl MdpState {
    pub const OBS_DIM: usize = 2 * BatteryState::DIM + 1;

    pub fn observation(&self, scales: &NormScales) -> [f64; Self::OBS_DIM] {
        let mut o = [0.0; Self::OBS_DIM];
        o[..7].copy_from_slice(&scales.normalize_state(&self.x_hat));
        o[7..14].copy_from_slice(&scales.normalize_state(&self.x_next));
        o[14] = self.u_next / scales.current;
        o
    }

    pub fn from_observation(o: &[f64], scales: &NormScales) -> Result<Self> {
        if o.len() != Self::OBS_DIM {
            return Err(Error::DimensionMismatch { expected: Self::OBS_DIM, got: o.len() });
        }
        Ok(MdpState {
            x_hat: scales.denormalize_state(&o[..7]),
            x_next: scales.denormalize_state(&o[7..14]),
            u_next: o[14] * scales.current,
        })
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: MdpState,
    pub cost: f64,
    pub done: bool,
    /// Parameters the action was mapped to.
    pub params: DegradationParams,
}

/// Single-owner tracking environment over one trajectory at a time.
#[derive(Debug, Clone)]
pub struct CalibEnv {
    config: EnvConfig,
    trajectory: Option<Arc<Trajectory>>,
    x_hat: BatteryState,
    t: usize,
    done: bool,
}

impl CalibEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(CalibEnv { config, trajectory: None, x_hat: BatteryState::default(), t: 0, done: true })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.trajectory.as_deref()
    }

    /// Steps taken in the current episode.
    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode on `trajectory`. The predictor starts from a
    /// fully charged cell with the frozen (perfect-battery) parameters.
    pub fn reset(&mut self, trajectory: Arc<Trajectory>) -> Result<MdpState> {
        if trajectory.states.len() < 2 || trajectory.loads.is_empty() {
            return Err(Error::TrajectoryTooShort(trajectory.states.len()));
        }
        self.x_hat = battery::init_state(&self.config.frozen, &self.config.battery)?;
        self.t = 0;
        self.done = false;
        self.trajectory = Some(trajectory);
        Ok(self.current_state())
    }

    fn traj(&self) -> &Trajectory {
        self.trajectory.as_deref().expect("reset before use")
    }

    /// Observation at the current step counter.
    pub fn current_state(&self) -> MdpState {
        let traj = self.traj();
        let t = self.t.min(traj.loads.len() - 1);
        MdpState {
            x_hat: self.x_hat,
            x_next: traj.states[t + 1],
            u_next: if self.done { 0.0 } else { traj.loads.currents[t] },
        }
    }

    pub fn observation(&self) -> [f64; MdpState::OBS_DIM] {
        self.current_state().observation(&self.config.scales)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if action.len() != self.config.action_dim() {
            return Err(Error::DimensionMismatch { expected: self.config.action_dim(), got: action.len() });
        }
        let cfg = &self.config;
        let traj = self.trajectory.as_deref().expect("reset before use");
        let current = traj.loads.currents[self.t];
        let x_true = traj.states[self.t + 1];
        let (x_hat, params) = predict_step(&self.x_hat, current, action, cfg);
        let cost = cfg.scales.state_distance(&x_hat, &x_true);

        self.x_hat = x_hat;
        self.t += 1;
        self.done = self.t >= traj.loads.len();
        Ok(StepOutcome { state: self.current_state(), cost, done: self.done, params })
    }
}

/// `sum_t gamma^t c_t`
/// Advances the predictor `x_hat` by one step under the parameters an
/// action selects. The action is clipped to `[-1, 1]` first, and the
/// predictor's charges are re-expressed at the chosen capacity.
pub fn predict_step(x_hat: &BatteryState, current: f64, action: &[f64], cfg: &EnvConfig) -> (BatteryState, DegradationParams) {
    let clipped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    let params = action_to_params(&clipped, cfg.target, &cfg.range, &cfg.frozen);
    let start = x_hat.with_capacity(params.q_max);
    let (next, _) = battery::step_saturating(&start, current, &params, &cfg.battery);
    (next, params)
}

pub fn discounted_cost(costs: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut w = 1.0;
    for c in costs {
        acc += w * c;
        w *= gamma;
    }
    acc
}
