//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::battery::{BatteryConfig, DegradationParams};
use crate::dataset::{DatasetSpec, LoadGenConfig};
use crate::env::{CalibRange, CalibTarget, EnvConfig, NormScales};
use crate::error::{Error, Result};
use crate::io::{read_bytes, sha256_hex};
use crate::lac::LacConfig;

/// Fully documented defaults, identical to `RunConfig::default()` with
/// `seed = 0`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/default.toml");

/// Trajectory count and step budget of the reduced desk-scale experiment.
pub const DESK_TRAJECTORIES: usize = 500;
pub const DESK_STEPS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    pub split: f64,
    pub load: LoadGenConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let spec = DatasetSpec::default();
        DatasetSection { count: spec.count, split: spec.split, load: spec.load }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required, either here or on the command line.
    pub seed: Option<u64>,
    pub target: CalibTarget,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub precision: Precision,
    pub battery: BatteryConfig,
    pub range: CalibRange,
    pub scales: NormScales,
    pub dataset: DatasetSection,
    pub lac: LacConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            target: CalibTarget::ROhm,
            out_dir: PathBuf::from("runs/default"),
            jobs: 1,
            precision: Precision::F32,
            battery: BatteryConfig::default(),
            range: CalibRange::default(),
            scales: NormScales::default(),
            dataset: DatasetSection::default(),
            lac: LacConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::ConfigInvalid(format!("{}: not UTF-8", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::ConfigInvalid(m) => Error::ConfigInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Reduced experiment: 500 trajectories and 100k training steps.
    pub fn apply_desk(&mut self) {
        self.dataset.count = DESK_TRAJECTORIES;
        self.lac.total_steps = DESK_STEPS;
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::ConfigInvalid("seed is required (set `seed` or pass --seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.jobs == 0 {
            return Err(Error::ConfigInvalid("jobs must be >= 1".into()));
        }
        self.battery.validate()?;
        self.env_config().validate()?;
        if self.target == CalibTarget::Joint {
            return Err(Error::ConfigInvalid("target must be q_max or r_o; joint calibration is library-only".into()));
        }
        self.dataset_spec()?.validate()?;
        self.lac.validate()?;
        self.baseline.validate()
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            target: self.target,
            count: self.dataset.count,
            range: self.range,
            load: self.dataset.load,
            split: self.dataset.split,
            seed: self.seed()?,
        })
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            target: self.target,
            range: self.range,
            scales: self.scales,
            frozen: DegradationParams::PERFECT,
            battery: self.battery,
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }
}
