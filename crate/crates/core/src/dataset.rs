//! Simulated trajectory sets that sweep one degradation parameter at a time.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{simulate, BatteryConfig, DegradationParams, LoadProfile, Trajectory};
use crate::env::{CalibRange, CalibTarget};
use crate::error::{Error, Result};

/// Largest current the loads (and observation scaling) are designed for.
pub const MAX_DESIGN_CURRENT: f64 = 4.0;

/// Piecewise-constant load generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadGenConfig {
    /// Segment duration range (s).
    pub segment_min_s: f64,
    pub segment_max_s: f64,
    /// Segment current range (A).
    pub current_min: f64,
    pub current_max: f64,
    /// Longest simulated cycle (s).
    pub cycle_cap_s: f64,
}

impl Default for LoadGenConfig {
    fn default() -> Self {
        LoadGenConfig { segment_min_s: 300.0, segment_max_s: 900.0, current_min: 1.0, current_max: 4.0, cycle_cap_s: 3.0 * 3600.0 }
    }
}

impl LoadGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.segment_min_s > 0.0 && self.segment_min_s <= self.segment_max_s) {
            return Err(Error::ConfigInvalid("dataset.load: need 0 < segment_min_s <= segment_max_s".into()));
        }
        if !(self.current_min > 0.0 && self.current_min <= self.current_max && self.current_max <= MAX_DESIGN_CURRENT) {
            return Err(Error::ConfigInvalid(format!(
                "dataset.load: currents must satisfy 0 < current_min <= current_max <= {MAX_DESIGN_CURRENT}"
            )));
        }
        if !(self.cycle_cap_s > 0.0) {
            return Err(Error::ConfigInvalid("dataset.load.cycle_cap_s must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub target: CalibTarget,
    pub count: usize,
    pub range: CalibRange,
    pub load: LoadGenConfig,
    /// Fraction of trajectories in the training split.
    pub split: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            target: CalibTarget::ROhm,
            count: 5500,
            range: CalibRange::default(),
            load: LoadGenConfig::default(),
            split: 0.7,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::ConfigInvalid("dataset.count must be > 0".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::ConfigInvalid(format!("dataset.split must lie in (0, 1), got {}", self.split)));
        }
        if self.target == CalibTarget::Joint {
            return Err(Error::ConfigInvalid("datasets vary one parameter at a time; target must be q_max or r_o".into()));
        }
        self.range.validate()?;
        self.load.validate()
    }

    pub fn train_count(&self) -> usize {
        (self.count as f64 * self.split).round() as usize
    }

    /// Seed of trajectory `index`, derived from the master seed only.
    pub fn trajectory_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(index as u64 + 1))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub id: usize,
    pub seed: u64,
    pub split: Split,
    pub trajectory: Arc<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub battery: BatteryConfig,
    /// Ordered by trajectory id.
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn trajectories(&self, split: Split) -> Vec<Arc<Trajectory>> {
        self.split(split).map(|e| e.trajectory.clone()).collect()
    }
}

/// Piecewise-constant current profile: segment durations and amplitudes
/// drawn uniformly from their ranges, filling `cycle_cap_s`.
pub fn load_profile(gen: &LoadGenConfig, dt: f64, seed: u64) -> LoadProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    load_profile_from(gen, dt, &mut rng)
}

fn load_profile_from<R: Rng>(gen: &LoadGenConfig, dt: f64, rng: &mut R) -> LoadProfile {
    let total = (gen.cycle_cap_s / dt).round().max(1.0) as usize;
    let mut currents = Vec::with_capacity(total);
    while currents.len() < total {
        let duration = uniform(rng, gen.segment_min_s, gen.segment_max_s);
        let steps = ((duration / dt).round() as usize).max(1);
        let amp = uniform(rng, gen.current_min, gen.current_max);
        let n = steps.min(total - currents.len());
        currents.extend(std::iter::repeat_n(amp, n));
    }
    LoadProfile::new(dt, currents)
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Parameters and loads of trajectory `index`, then its simulation.
pub fn generate_one(spec: &DatasetSpec, battery: &BatteryConfig, index: usize) -> Result<(u64, Trajectory)> {
    let seed = spec.trajectory_seed(index);
    Ok((seed, trajectory_from_seed(spec, battery, seed)?))
}

/// Rebuilds a trajectory from its recorded seed.
pub fn trajectory_from_seed(spec: &DatasetSpec, battery: &BatteryConfig, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = DegradationParams::PERFECT;
    match spec.target {
        CalibTarget::QMax => params.q_max = uniform(&mut rng, spec.range.q_max.min, spec.range.q_max.max),
        CalibTarget::ROhm => params.r_o = uniform(&mut rng, spec.range.r_o.min, spec.range.r_o.max),
        CalibTarget::Joint => return Err(Error::ConfigInvalid("datasets vary q_max or r_o, not both".into())),
    }
    let loads = load_profile_from(&spec.load, battery.dt, &mut rng);
    simulate(&params, &loads, battery).map_err(|e| Error::SimulationFailed { seed, source: Box::new(e) })
}

/// Generates every trajectory of `spec` on up to `jobs` threads. The output
/// does not depend on `jobs`.
pub fn generate(spec: &DatasetSpec, battery: &BatteryConfig, jobs: usize) -> Result<Dataset> {
    spec.validate()?;
    battery.validate()?;
    let jobs = jobs.clamp(1, spec.count);
    let mut results: Vec<Option<Result<(u64, Trajectory)>>> = (0..spec.count).map(|_| None).collect();
    if jobs == 1 {
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(generate_one(spec, battery, i));
        }
    } else {
        let chunk = spec.count.div_ceil(jobs);
        std::thread::scope(|scope| {
            for (c, slots) in results.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    for (j, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(generate_one(spec, battery, c * chunk + j));
                    }
                });
            }
        });
    }

    let mut order: Vec<usize> = (0..spec.count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(spec.seed)));
    let mut split = vec![Split::Test; spec.count];
    for &i in &order[..spec.train_count()] {
        split[i] = Split::Train;
    }

    let mut entries = Vec::with_capacity(spec.count);
    for (id, r) in results.into_iter().enumerate() {
        let (seed, traj) = r.expect("every slot filled")?;
        entries.push(DatasetEntry { id, seed, split: split[id], trajectory: Arc::new(traj) });
    }
    Ok(Dataset { spec: spec.clone(), battery: *battery, entries })
}
