//! Versioned JSON checkpoints. Arrays are hex strings of the big-endian IEEE
//! bit patterns, so files are exact and independent of host byte order.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineConfig, Regressor};
use crate::battery::DegradationParams;
use crate::env::{CalibRange, CalibTarget};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_bytes};
use crate::lac::{LacAgent, LacConfig, Multipliers};
use crate::nn::{AdamConfig, AdamState, Mlp, Real};

pub const CHECKPOINT_FORMAT: &str = "battcal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Actor,
    Critic,
    TargetCritic,
    Regressor,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Actor => "actor",
            ComponentKind::Critic => "critic",
            ComponentKind::TargetCritic => "target_critic",
            ComponentKind::Regressor => "regressor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub config: AdamConfig,
    pub t: u64,
    pub m: String,
    pub v: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub kind: ComponentKind,
    pub dims: Vec<usize>,
    pub params: String,
    pub optimizer: Option<OptimizerRecord>,
}

/// Everything needed to rebuild an agent or a regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `actor` for an actor-critic agent (bundling its critics), `regressor`
    /// for the supervised baseline.
    pub kind: ComponentKind,
    pub precision: String,
    pub config_hash: String,
    pub target: CalibTarget,
    pub range: CalibRange,
    pub frozen: DegradationParams,
    pub networks: Vec<NetworkRecord>,
    pub multipliers: Option<Multipliers>,
    pub lac: Option<LacConfig>,
    pub baseline: Option<BaselineConfig>,
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    /// Position of the agent's random stream, as a decimal string.
    pub rng_word_pos: String,
}

pub fn encode_hex<T: Real>(values: &[T]) -> String {
    let mut s = String::with_capacity(values.len() * 16);
    for v in values {
        if T::NAME == "f32" {
            let _ = write!(s, "{:08x}", v.to_f32().expect("f32").to_bits());
        } else {
            let _ = write!(s, "{:016x}", v.to_f64().expect("f64").to_bits());
        }
    }
    s
}

/// Decodes a `precision` array into `T`, widening f32 to f64 exactly.
/// Narrowing f64 to f32 is refused.
pub fn decode_hex<T: Real>(hex: &str, precision: &str, expected_len: usize) -> Result<Vec<T>> {
    let width = match precision {
        "f32" => 8,
        "f64" if T::NAME == "f64" => 16,
        "f64" => return Err(Error::SchemaMismatch("f64 checkpoint cannot be loaded at f32 precision".into())),
        other => return Err(Error::SchemaMismatch(format!("unknown precision `{other}`"))),
    };
    if hex.len() != width * expected_len || !hex.is_ascii() {
        return Err(Error::SchemaMismatch(format!(
            "array holds {} hex digits, expected {} values of {width}",
            hex.len(),
            expected_len
        )));
    }
    (0..expected_len)
        .map(|i| {
            let digits = &hex[i * width..(i + 1) * width];
            let bad = || Error::SchemaMismatch(format!("invalid hex `{digits}`"));
            let v = if width == 8 {
                f32::from_bits(u32::from_str_radix(digits, 16).map_err(|_| bad())?) as f64
            } else {
                f64::from_bits(u64::from_str_radix(digits, 16).map_err(|_| bad())?)
            };
            Ok(T::lit(v))
        })
        .collect()
}

fn network_record<T: Real>(kind: ComponentKind, net: &Mlp<T>, opt: Option<&AdamState<T>>) -> NetworkRecord {
    NetworkRecord {
        kind,
        dims: net.dims().to_vec(),
        params: encode_hex(net.params()),
        optimizer: opt.map(|o| OptimizerRecord { config: o.config, t: o.t, m: encode_hex(&o.m), v: encode_hex(&o.v) }),
    }
}

impl Checkpoint {
    pub fn from_agent<T: Real>(agent: &LacAgent<T>, target: CalibTarget, range: CalibRange, frozen: DegradationParams, config_hash: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: ComponentKind::Actor,
            precision: T::NAME.into(),
            config_hash: config_hash.into(),
            target,
            range,
            frozen,
            networks: vec![
                network_record(ComponentKind::Actor, &agent.actor, Some(&agent.actor_opt)),
                network_record(ComponentKind::Critic, &agent.critic, Some(&agent.critic_opt)),
                network_record(ComponentKind::TargetCritic, &agent.target_critic, None),
            ],
            multipliers: Some(agent.multipliers),
            lac: Some(agent.config.clone()),
            baseline: None,
            seed: agent.seed,
            steps: agent.steps,
            episodes: agent.episodes,
            rng_word_pos: agent.rng_word_pos().to_string(),
        }
    }

    pub fn from_regressor<T: Real>(
        reg: &Regressor<T>,
        opt: Option<&AdamState<T>>,
        config: &BaselineConfig,
        seed: u64,
        epochs: u64,
        config_hash: &str,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: ComponentKind::Regressor,
            precision: T::NAME.into(),
            config_hash: config_hash.into(),
            target: reg.target,
            range: reg.range,
            frozen: reg.frozen,
            networks: vec![network_record(ComponentKind::Regressor, &reg.net, opt)],
            multipliers: None,
            lac: None,
            baseline: Some(config.clone()),
            seed,
            steps: epochs,
            episodes: 0,
            rng_word_pos: "0".into(),
        }
    }

    fn expect_kind(&self, kind: ComponentKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch { expected: kind.as_str().into(), found: self.kind.as_str().into() });
        }
        Ok(())
    }

    fn network<T: Real>(&self, kind: ComponentKind) -> Result<(Mlp<T>, Option<AdamState<T>>)> {
        let rec = self
            .networks
            .iter()
            .find(|n| n.kind == kind)
            .ok_or_else(|| Error::SchemaMismatch(format!("checkpoint has no {} network", kind.as_str())))?;
        if rec.dims.len() < 2 || rec.dims.contains(&0) {
            return Err(Error::SchemaMismatch(format!("bad layer widths {:?}", rec.dims)));
        }
        let n = Mlp::<T>::zeros(&rec.dims).num_params();
        let net = Mlp::from_params(&rec.dims, decode_hex(&rec.params, &self.precision, n)?)?;
        let opt = match &rec.optimizer {
            Some(o) => {
                let mut st = AdamState::new(n, o.config);
                st.t = o.t;
                st.m = decode_hex(&o.m, &self.precision, n)?;
                st.v = decode_hex(&o.v, &self.precision, n)?;
                Some(st)
            }
            None => None,
        };
        Ok((net, opt))
    }

    pub fn to_agent<T: Real>(&self) -> Result<LacAgent<T>> {
        self.expect_kind(ComponentKind::Actor)?;
        let config = self.lac.clone().ok_or_else(|| Error::SchemaMismatch("agent checkpoint lacks its config".into()))?;
        let (actor, actor_opt) = self.network::<T>(ComponentKind::Actor)?;
        let (critic, critic_opt) = self.network::<T>(ComponentKind::Critic)?;
        let (target_critic, _) = self.network::<T>(ComponentKind::TargetCritic)?;
        let missing = || Error::SchemaMismatch("agent checkpoint lacks optimiser state".into());
        let word_pos: u128 =
            self.rng_word_pos.parse().map_err(|_| Error::SchemaMismatch(format!("bad rng_word_pos `{}`", self.rng_word_pos)))?;
        if actor.output_dim() != 2 * self.target.action_dim() {
            return Err(Error::SchemaMismatch("actor output width disagrees with the calibration target".into()));
        }
        LacAgent::from_parts(
            config,
            actor,
            critic,
            target_critic,
            actor_opt.ok_or_else(missing)?,
            critic_opt.ok_or_else(missing)?,
            self.multipliers.ok_or_else(|| Error::SchemaMismatch("agent checkpoint lacks multipliers".into()))?,
            self.seed,
            self.steps,
            self.episodes,
            word_pos,
        )
    }

    pub fn to_regressor<T: Real>(&self) -> Result<(Regressor<T>, Option<AdamState<T>>)> {
        self.expect_kind(ComponentKind::Regressor)?;
        let (net, opt) = self.network::<T>(ComponentKind::Regressor)?;
        if net.output_dim() != self.target.action_dim() {
            return Err(Error::SchemaMismatch("regressor output width disagrees with the calibration target".into()));
        }
        Ok((Regressor { net, target: self.target, range: self.range, frozen: self.frozen }, opt))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(bytes).map_err(|e| Error::SchemaMismatch(format!("checkpoint: {e}")))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::SchemaMismatch(format!("not a checkpoint (format `{}`)", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::SchemaMismatch(format!("checkpoint version {} (supported: {CHECKPOINT_VERSION})", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}
