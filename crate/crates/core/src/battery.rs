//! Reduced-order lithium-ion discharge model.
//!
//! Each electrode is split into a bulk and a surface control volume. Charge
//! diffuses between the two volumes, the load moves charge from the negative
//! surface to the positive surface, and the terminal voltage is the Nernst
//! equilibrium potential minus three first-order-lagged drops (ohmic and one
//! Butler-Volmer overpotential per electrode).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal gas constant, J/(mol K).
pub const R_GAS: f64 = 8.314;
/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96487.0;

/// Mole fractions inside the Nernst log are clamped to this distance from 0 and 1.
const MOLE_FRACTION_GUARD: f64 = 1e-6;

/// The two calibration targets of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    /// Total charge capacity (C).
    pub q_max: f64,
    /// Internal ohmic resistance (Ohm).
    pub r_o: f64,
}

impl DegradationParams {
    /// Unaged cell. Used whenever nothing is known about battery age.
    pub const PERFECT: DegradationParams = DegradationParams {
        q_max: 7600.0,
        r_o: 0.117215,
    };

    pub fn new(q_max: f64, r_o: f64) -> Result<Self> {
        let p = DegradationParams { q_max, r_o };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_max.is_finite() && self.q_max > 0.0) {
            return Err(Error::InvalidParams(format!("q_max must be finite and > 0, got {}", self.q_max)));
        }
        if !(self.r_o.is_finite() && self.r_o > 0.0) {
            return Err(Error::InvalidParams(format!("r_o must be finite and > 0, got {}", self.r_o)));
        }
        Ok(())
    }
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self::PERFECT
    }
}

/// Internal battery state, in the order `[q_sp, q_bp, q_bn, q_sn, v_o, v_eta_p, v_eta_n]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatteryState {
    pub q_sp: f64,
    pub q_bp: f64,
    pub q_bn: f64,
    pub q_sn: f64,
    pub v_o: f64,
    pub v_eta_p: f64,
    pub v_eta_n: f64,
}

impl BatteryState {
    pub const DIM: usize = 7;

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [self.q_sp, self.q_bp, self.q_bn, self.q_sn, self.v_o, self.v_eta_p, self.v_eta_n]
    }

    pub fn from_array(a: [f64; Self::DIM]) -> Self {
        BatteryState {
            q_sp: a[0],
            q_bp: a[1],
            q_bn: a[2],
            q_sn: a[3],
            v_o: a[4],
            v_eta_p: a[5],
            v_eta_n: a[6],
        }
    }

    pub fn total_charge(&self) -> f64 {
        self.q_sp + self.q_bp + self.q_bn + self.q_sn
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Re-expresses the charges at a different total capacity, keeping every
    /// control volume's share of the total. Voltage lags are untouched.
    ///
    /// Returns the state unchanged when the capacity already matches to
    /// within 1e-12 relative, so a model stepped with its own capacity follows
    /// exactly the same arithmetic as [`step`].
    pub fn with_capacity(&self, q_max: f64) -> BatteryState {
        let total = self.total_charge();
        if total <= 0.0 || ((q_max - total) / q_max).abs() <= 1e-12 {
            return *self;
        }
        let scale = q_max / total;
        BatteryState {
            q_sp: self.q_sp * scale,
            q_bp: self.q_bp * scale,
            q_bn: self.q_bn * scale,
            q_sn: self.q_sn * scale,
            ..*self
        }
    }
}

/// Physical constants of the cell and integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    /// Integration step (s).
    pub dt: f64,
    /// End-of-discharge cutoff voltage (V).
    pub v_eod: f64,
    /// Surface share of each electrode's volume.
    pub v_s: f64,
    /// Bulk-to-surface diffusion time constant (s).
    pub t_diff: f64,
    pub tau_o: f64,
    pub tau_eta: f64,
    /// Nominal exchange currents (A), reached at half-lithiated surface.
    pub i0_p: f64,
    pub i0_n: f64,
    /// Reference potentials (V).
    pub u0_p: f64,
    pub u0_n: f64,
    /// Temperature (K).
    pub temperature: f64,
    /// Initial mole fraction of the negative electrode.
    pub x_n0: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            dt: 1.0,
            v_eod: 3.0,
            v_s: 0.1,
            t_diff: 100.0,
            tau_o: 10.0,
            tau_eta: 10.0,
            i0_p: 10.0,
            i0_n: 10.0,
            u0_p: 4.3,
            u0_n: 0.01,
            temperature: 292.0,
            x_n0: 0.6,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_diff", self.t_diff),
            ("tau_o", self.tau_o),
            ("tau_eta", self.tau_eta),
            ("i0_p", self.i0_p),
            ("i0_n", self.i0_n),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ConfigInvalid(format!("battery.{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("v_s", self.v_s), ("x_n0", self.x_n0)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::ConfigInvalid(format!("battery.{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [("v_eod", self.v_eod), ("u0_p", self.u0_p), ("u0_n", self.u0_n)] {
            if !v.is_finite() {
                return Err(Error::ConfigInvalid(format!("battery.{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Thermal voltage R T / F.
    fn thermal_voltage(&self) -> f64 {
        R_GAS * self.temperature / FARADAY
    }
}

/// Per-step current demands (A, discharge positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub dt: f64,
    pub currents: Vec<f64>,
}

impl LoadProfile {
    pub fn new(dt: f64, currents: Vec<f64>) -> Self {
        LoadProfile { dt, currents }
    }

    pub fn constant(dt: f64, current: f64, steps: usize) -> Self {
        LoadProfile { dt, currents: vec![current; steps] }
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.currents.is_empty() {
            return Err(Error::EmptyLoad);
        }
        if let Some(bad) = self.currents.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidLoad(format!("current {bad} is not a finite discharge current")));
        }
        Ok(())
    }
}

/// One simulated discharge cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: DegradationParams,
    /// Loads actually applied; truncated at end of discharge.
    pub loads: LoadProfile,
    /// `loads.len() + 1` states, starting with the initial state.
    pub states: Vec<BatteryState>,
    /// Terminal voltage of each state.
    pub voltages: Vec<f64>,
    /// Index of the state at which end of discharge was detected.
    pub eod_index: Option<usize>,
    /// True when the cycle ended because a charge volume ran dry.
    pub depleted: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

/// Initial state of a fully charged cell with capacity `params.q_max`.
pub fn init_state(params: &DegradationParams, config: &BatteryConfig) -> Result<BatteryState> {
    params.validate()?;
    let q_n = config.x_n0 * params.q_max;
    let q_p = params.q_max - q_n;
    let q_sn = config.v_s * q_n;
    let q_sp = config.v_s * q_p;
    Ok(BatteryState {
        q_sp,
        q_bp: q_p - q_sp,
        q_bn: q_n - q_sn,
        q_sn,
        v_o: 0.0,
        v_eta_p: 0.0,
        v_eta_n: 0.0,
    })
}

fn surface_mole_fraction(q_s: f64, params: &DegradationParams, config: &BatteryConfig) -> f64 {
    (q_s / (config.v_s * params.q_max)).clamp(MOLE_FRACTION_GUARD, 1.0 - MOLE_FRACTION_GUARD)
}

/// Exchange current of an electrode at surface mole fraction `x`; equals the
/// nominal value at `x = 0.5` and vanishes at either end.
fn exchange_current(nominal: f64, x: f64) -> f64 {
    2.0 * nominal * (x * (1.0 - x)).sqrt()
}

fn overpotential(current: f64, i0: f64, config: &BatteryConfig) -> f64 {
    2.0 * config.thermal_voltage() * (current / (2.0 * i0)).asinh()
}

/// Open-circuit potential `V_U,p - V_U,n` of a state.
pub fn open_circuit_voltage(state: &BatteryState, params: &DegradationParams, config: &BatteryConfig) -> f64 {
    let vt = config.thermal_voltage();
    let x_p = surface_mole_fraction(state.q_sp, params, config);
    let x_n = surface_mole_fraction(state.q_sn, params, config);
    let u_p = config.u0_p + vt * ((1.0 - x_p) / x_p).ln();
    let u_n = config.u0_n + vt * ((1.0 - x_n) / x_n).ln();
    u_p - u_n
}

/// Terminal voltage of a state.
pub fn voltage(state: &BatteryState, params: &DegradationParams, config: &BatteryConfig) -> f64 {
    open_circuit_voltage(state, params, config) - state.v_o - state.v_eta_p - state.v_eta_n
}

fn euler_update(state: &BatteryState, current: f64, params: &DegradationParams, config: &BatteryConfig) -> BatteryState {
    let dt = config.dt;
    let v_b = 1.0 - config.v_s;

    // bulk -> surface flux, driven by the concentration gap
    let flux_p = (state.q_bp / v_b - state.q_sp / config.v_s) / config.t_diff;
    let flux_n = (state.q_bn / v_b - state.q_sn / config.v_s) / config.t_diff;

    let x_p = surface_mole_fraction(state.q_sp, params, config);
    let x_n = surface_mole_fraction(state.q_sn, params, config);
    let v_o_inf = current * params.r_o;
    let v_eta_p_inf = overpotential(current, exchange_current(config.i0_p, x_p), config);
    let v_eta_n_inf = overpotential(current, exchange_current(config.i0_n, x_n), config);

    BatteryState {
        q_sp: state.q_sp + dt * (flux_p + current),
        q_bp: state.q_bp - dt * flux_p,
        q_bn: state.q_bn - dt * flux_n,
        q_sn: state.q_sn + dt * (flux_n - current),
        v_o: state.v_o + dt / config.tau_o * (v_o_inf - state.v_o),
        v_eta_p: state.v_eta_p + dt / config.tau_eta * (v_eta_p_inf - state.v_eta_p),
        v_eta_n: state.v_eta_n + dt / config.tau_eta * (v_eta_n_inf - state.v_eta_n),
    }
}

/// Advances the cell by one explicit-Euler step under `current` and returns
/// the new state with its terminal voltage.
pub fn step(
    state: &BatteryState,
    current: f64,
    params: &DegradationParams,
    config: &BatteryConfig,
) -> Result<(BatteryState, f64)> {
    let next = euler_update(state, current, params, config);
    if next.q_sp < 0.0 || next.q_bp < 0.0 || next.q_bn < 0.0 || next.q_sn < 0.0 {
        return Err(Error::StateUnderflow);
    }
    let v = voltage(&next, params, config);
    Ok((next, v))
}

/// Like [`step`], but a charge volume that would go negative is floored at
/// zero instead of failing. Lets a predictor keep running after its own
/// (mis-parameterised) cell has run dry; charge is no longer conserved then.
pub fn step_saturating(
    state: &BatteryState,
    current: f64,
    params: &DegradationParams,
    config: &BatteryConfig,
) -> (BatteryState, f64) {
    let mut next = euler_update(state, current, params, config);
    for q in [&mut next.q_sp, &mut next.q_bp, &mut next.q_bn, &mut next.q_sn] {
        *q = q.max(0.0);
    }
    let v = voltage(&next, params, config);
    (next, v)
}

/// Runs a full discharge cycle, stopping at the first state whose voltage
/// falls below `config.v_eod` or when a charge volume would run dry.
pub fn simulate(params: &DegradationParams, loads: &LoadProfile, config: &BatteryConfig) -> Result<Trajectory> {
    params.validate()?;
    loads.validate()?;
    let s0 = init_state(params, config)?;
    let mut states = Vec::with_capacity(loads.len() + 1);
    let mut voltages = Vec::with_capacity(loads.len() + 1);
    states.push(s0);
    voltages.push(voltage(&s0, params, config));

    let mut eod_index = None;
    let mut depleted = false;
    for &current in &loads.currents {
        let last = states.last().expect("non-empty");
        match step(last, current, params, config) {
            Ok((next, v)) => {
                states.push(next);
                voltages.push(v);
                if v < config.v_eod {
                    eod_index = Some(states.len() - 1);
                    break;
                }
            }
            Err(Error::StateUnderflow) => {
                eod_index = Some(states.len() - 1);
                depleted = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let applied = states.len() - 1;
    Ok(Trajectory {
        params: *params,
        loads: LoadProfile::new(loads.dt, loads.currents[..applied].to_vec()),
        states,
        voltages,
        eod_index,
        depleted,
    })
}

/// End-of-discharge time (s): the first time the voltage drops below `v_eod`.
/// A cycle cut short by depletion reports the depletion time.
pub fn eod_time(trajectory: &Trajectory, v_eod: f64) -> Option<f64> {
    let dt = trajectory.loads.dt;
    if let Some(k) = trajectory.voltages.iter().position(|&v| v < v_eod) {
        return Some(k as f64 * dt);
    }
    if trajectory.depleted {
        return trajectory.eod_index.map(|k| k as f64 * dt);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BatteryConfig {
        BatteryConfig::default()
    }

    #[test]
    fn init_partitions_capacity() {
        let s = init_state(&DegradationParams::PERFECT, &cfg()).unwrap();
        assert!((s.total_charge() - 7600.0).abs() <= 1e-9 * 7600.0);
        assert_eq!((s.v_o, s.v_eta_p, s.v_eta_n), (0.0, 0.0, 0.0));
        assert_eq!(s.q_sn, 0.1 * (0.6 * 7600.0));
        assert!((s.q_sn - 0.1 * 0.6 * 7600.0).abs() < 1e-9);
    }

    #[test]
    fn init_rejects_bad_params() {
        let bad = DegradationParams { q_max: 0.0, r_o: 0.1 };
        assert!(matches!(init_state(&bad, &cfg()), Err(Error::InvalidParams(_))));
        let bad = DegradationParams { q_max: 7600.0, r_o: -1.0 };
        assert!(matches!(init_state(&bad, &cfg()), Err(Error::InvalidParams(_))));
        assert!(DegradationParams::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn zero_current_is_fixed_point() {
        let p = DegradationParams::PERFECT;
        let s = init_state(&p, &cfg()).unwrap();
        let (next, v) = step(&s, 0.0, &p, &cfg()).unwrap();
        for (a, b) in s.to_array().iter().zip(next.to_array()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
        assert!((v - open_circuit_voltage(&s, &p, &cfg())).abs() < 1e-12);
    }

    #[test]
    fn step_conserves_charge() {
        let p = DegradationParams::PERFECT;
        let mut s = init_state(&p, &cfg()).unwrap();
        for _ in 0..500 {
            let before = s.total_charge();
            s = step(&s, 2.5, &p, &cfg()).unwrap().0;
            assert!((s.total_charge() - before).abs() <= 1e-9 * p.q_max);
        }
    }

    #[test]
    fn higher_resistance_lowers_voltage() {
        let c = cfg();
        let lo = DegradationParams::PERFECT;
        let hi = DegradationParams { r_o: 0.25, ..lo };
        let mut a = init_state(&lo, &c).unwrap();
        let mut b = a;
        let (mut va, mut vb) = (0.0, 0.0);
        for _ in 0..10 {
            (a, va) = step(&a, 2.0, &lo, &c).unwrap();
            (b, vb) = step(&b, 2.0, &hi, &c).unwrap();
        }
        assert!(vb < va);
    }

    #[test]
    fn ohmic_lag_converges() {
        let c = cfg();
        let p = DegradationParams::PERFECT;
        let mut s = init_state(&p, &c).unwrap();
        let steps = (10.0 * c.tau_o / c.dt) as usize;
        for _ in 0..steps {
            s = step(&s, 2.0, &p, &c).unwrap().0;
        }
        assert!((s.v_o - 2.0 * p.r_o).abs() <= 0.01 * 2.0 * p.r_o);
    }

    #[test]
    fn underflow_reported() {
        let c = cfg();
        let p = DegradationParams::PERFECT;
        let mut s = init_state(&p, &c).unwrap();
        s.q_sn = 1.0;
        s.q_bn = 0.5;
        assert!(matches!(step(&s, 4.0, &p, &c), Err(Error::StateUnderflow)));
    }

    #[test]
    fn simulate_shapes_and_errors() {
        let c = cfg();
        let p = DegradationParams::PERFECT;
        assert!(matches!(simulate(&p, &LoadProfile::new(1.0, vec![]), &c), Err(Error::EmptyLoad)));
        let t = simulate(&p, &LoadProfile::constant(1.0, 2.0, 100), &c).unwrap();
        assert_eq!(t.states.len(), 101);
        assert_eq!(t.voltages.len(), 101);
        assert_eq!(t.eod_index, None);
        assert_eq!(eod_time(&t, c.v_eod), None);
    }

    #[test]
    fn simulate_stops_at_eod() {
        let c = cfg();
        let p = DegradationParams::PERFECT;
        let t = simulate(&p, &LoadProfile::constant(1.0, 2.0, 20_000), &c).unwrap();
        let k = t.eod_index.expect("cycle must end");
        assert_eq!(t.states.len(), t.loads.len() + 1);
        assert_eq!(t.states.len(), k + 1);
        let eod = eod_time(&t, c.v_eod).unwrap();
        assert_eq!(eod, k as f64 * c.dt);
    }

    #[test]
    fn eod_time_at_crossing() {
        let t = Trajectory {
            params: DegradationParams::PERFECT,
            loads: LoadProfile::constant(2.0, 1.0, 3),
            states: vec![BatteryState::default(); 4],
            voltages: vec![4.0, 3.5, 2.9, 2.8],
            eod_index: Some(2),
            depleted: false,
        };
        assert_eq!(eod_time(&t, 3.0), Some(4.0));
        assert_eq!(eod_time(&t, 2.0), None);
    }

    #[test]
    fn capacity_rescale_keeps_shares() {
        let c = cfg();
        let s = init_state(&DegradationParams::PERFECT, &c).unwrap();
        let r = s.with_capacity(6000.0);
        let expect = init_state(&DegradationParams { q_max: 6000.0, r_o: 0.2 }, &c).unwrap();
        for (a, b) in r.to_array().iter().zip(expect.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(s.with_capacity(7600.0), s);
    }
}
