//! C ABI over `battcal`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` and released with
//! the matching `*_free`. Every fallible call returns a [`BattcalStatus`];
//! on failure a human-readable message is available from
//! [`battcal_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use battcal::baseline::Regressor;
use battcal::battery::{self, BatteryConfig, BatteryState, DegradationParams};
use battcal::checkpoint::{Checkpoint, ComponentKind};
use battcal::env::{predict_step, CalibTarget, EnvConfig, MdpState};
use battcal::lac::LacAgent;
use battcal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BattcalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    Simulation = 4,
    Io = 5,
    Schema = 6,
    KindMismatch = 7,
    Dimension = 8,
    Config = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BattcalTarget {
    QMax = 0,
    ROhm = 1,
    Joint = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BattcalCalibratorKind {
    Agent = 0,
    Regressor = 1,
}

/// Internal state of the cell, charges in C and voltages in V.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BattcalState {
    pub q_sp: f64,
    pub q_bp: f64,
    pub q_bn: f64,
    pub q_sn: f64,
    pub v_o: f64,
    pub v_eta_p: f64,
    pub v_eta_n: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BattcalParams {
    pub q_max: f64,
    pub r_o: f64,
}

impl From<BatteryState> for BattcalState {
    fn from(s: BatteryState) -> Self {
        BattcalState { q_sp: s.q_sp, q_bp: s.q_bp, q_bn: s.q_bn, q_sn: s.q_sn, v_o: s.v_o, v_eta_p: s.v_eta_p, v_eta_n: s.v_eta_n }
    }
}

impl From<BattcalState> for BatteryState {
    fn from(s: BattcalState) -> Self {
        BatteryState { q_sp: s.q_sp, q_bp: s.q_bp, q_bn: s.q_bn, q_sn: s.q_sn, v_o: s.v_o, v_eta_p: s.v_eta_p, v_eta_n: s.v_eta_n }
    }
}

impl From<DegradationParams> for BattcalParams {
    fn from(p: DegradationParams) -> Self {
        BattcalParams { q_max: p.q_max, r_o: p.r_o }
    }
}

/// A battery simulated step by step under the default cell constants.
pub struct BattcalSimulator {
    params: DegradationParams,
    config: BatteryConfig,
    state: BatteryState,
}

enum Model {
    Agent32(LacAgent<f32>),
    Agent64(LacAgent<f64>),
    Regressor32(Regressor<f32>),
    Regressor64(Regressor<f64>),
}

/// A trained calibrator loaded from a checkpoint.
pub struct BattcalCalibrator {
    model: Arc<Model>,
    env: EnvConfig,
}

/// A real-time calibration session: feeds measured states to a calibrator
/// and keeps its own predicted state.
pub struct BattcalTracker {
    model: Arc<Model>,
    env: EnvConfig,
    x_hat: BatteryState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BattcalStatus {
    match e {
        Error::InvalidParams(_) => BattcalStatus::InvalidParams,
        Error::StateUnderflow | Error::EmptyLoad | Error::InvalidLoad(_) | Error::SimulationFailed { .. } => BattcalStatus::Simulation,
        Error::Io { .. } => BattcalStatus::Io,
        Error::SchemaMismatch(_) | Error::Csv(_) | Error::Json(_) => BattcalStatus::Schema,
        Error::KindMismatch { .. } => BattcalStatus::KindMismatch,
        Error::DimensionMismatch { .. } => BattcalStatus::Dimension,
        Error::ConfigInvalid(_) => BattcalStatus::Config,
        Error::TrajectoryTooShort(_) | Error::EpisodeFinished => BattcalStatus::InvalidArgument,
    }
}

type FfiResult = Result<(), (BattcalStatus, String)>;

fn fail(status: BattcalStatus, msg: impl Into<String>) -> FfiResult {
    Err((status, msg.into()))
}

fn lift<T>(r: battcal::Result<T>) -> Result<T, (BattcalStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult) -> BattcalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BattcalStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BattcalStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(BattcalStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn battcal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns the buffer size needed for the whole message,
/// or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn battcal_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Starts a fully charged cell with the given parameters.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn battcal_simulator_new(params: BattcalParams, out: *mut *mut BattcalSimulator) -> BattcalStatus {
    guard(|| {
        non_null!(out);
        let params = DegradationParams { q_max: params.q_max, r_o: params.r_o };
        let config = BatteryConfig::default();
        let state = lift(battery::init_state(&params, &config))?;
        *out = Box::into_raw(Box::new(BattcalSimulator { params, config, state }));
        Ok(())
    })
}

/// Advances the cell by one step at discharge current `current` (A).
/// Either output may be null.
///
/// # Safety
/// `sim` must come from `battcal_simulator_new`; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn battcal_simulator_step(
    sim: *mut BattcalSimulator,
    current: f64,
    out_state: *mut BattcalState,
    out_voltage: *mut f64,
) -> BattcalStatus {
    guard(|| {
        non_null!(sim);
        if !(current.is_finite() && current >= 0.0) {
            return fail(BattcalStatus::InvalidArgument, format!("current {current} is not a finite discharge current"));
        }
        let sim = &mut *sim;
        let (next, v) = lift(battery::step(&sim.state, current, &sim.params, &sim.config))?;
        sim.state = next;
        if !out_state.is_null() {
            *out_state = next.into();
        }
        if !out_voltage.is_null() {
            *out_voltage = v;
        }
        Ok(())
    })
}

/// Current state and terminal voltage of the cell. Either output may be null.
///
/// # Safety
/// `sim` must come from `battcal_simulator_new`; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn battcal_simulator_state(
    sim: *const BattcalSimulator,
    out_state: *mut BattcalState,
    out_voltage: *mut f64,
) -> BattcalStatus {
    guard(|| {
        non_null!(sim);
        let sim = &*sim;
        if !out_state.is_null() {
            *out_state = sim.state.into();
        }
        if !out_voltage.is_null() {
            *out_voltage = battery::voltage(&sim.state, &sim.params, &sim.config);
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn battcal_simulator_free(sim: *mut BattcalSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Loads an agent or regressor checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn battcal_calibrator_load(path: *const c_char, out: *mut *mut BattcalCalibrator) -> BattcalStatus {
    guard(|| {
        non_null!(path, out);
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(BattcalStatus::InvalidArgument, "path is not UTF-8");
        };
        let ck = lift(Checkpoint::load(Path::new(path)))?;
        let model = match (ck.kind, ck.precision.as_str()) {
            (ComponentKind::Actor, "f32") => Model::Agent32(lift(ck.to_agent())?),
            (ComponentKind::Actor, _) => Model::Agent64(lift(ck.to_agent())?),
            (ComponentKind::Regressor, "f32") => Model::Regressor32(lift(ck.to_regressor())?.0),
            (ComponentKind::Regressor, _) => Model::Regressor64(lift(ck.to_regressor())?.0),
            (k, _) => return fail(BattcalStatus::KindMismatch, format!("cannot calibrate with a {} checkpoint", k.as_str())),
        };
        let env = EnvConfig { target: ck.target, range: ck.range, frozen: ck.frozen, ..Default::default() };
        *out = Box::into_raw(Box::new(BattcalCalibrator { model: Arc::new(model), env }));
        Ok(())
    })
}

/// # Safety
/// `cal` must come from `battcal_calibrator_load`; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn battcal_calibrator_info(
    cal: *const BattcalCalibrator,
    out_kind: *mut BattcalCalibratorKind,
    out_target: *mut BattcalTarget,
) -> BattcalStatus {
    guard(|| {
        non_null!(cal);
        let cal = &*cal;
        if !out_kind.is_null() {
            *out_kind = match *cal.model {
                Model::Agent32(_) | Model::Agent64(_) => BattcalCalibratorKind::Agent,
                _ => BattcalCalibratorKind::Regressor,
            };
        }
        if !out_target.is_null() {
            *out_target = match cal.env.target {
                CalibTarget::QMax => BattcalTarget::QMax,
                CalibTarget::ROhm => BattcalTarget::ROhm,
                CalibTarget::Joint => BattcalTarget::Joint,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `cal` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn battcal_calibrator_free(cal: *mut BattcalCalibrator) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Opens a tracking session whose predicted state starts fully charged at
/// the checkpoint's reference parameters. The session keeps the
/// calibrator alive on its own; `cal` may be freed afterwards.
///
/// # Safety
/// `cal` must come from `battcal_calibrator_load`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn battcal_tracker_new(cal: *const BattcalCalibrator, out: *mut *mut BattcalTracker) -> BattcalStatus {
    guard(|| {
        non_null!(cal, out);
        let cal = &*cal;
        let x_hat = lift(battery::init_state(&cal.env.frozen, &cal.env.battery))?;
        *out = Box::into_raw(Box::new(BattcalTracker { model: cal.model.clone(), env: cal.env, x_hat }));
        Ok(())
    })
}

/// One calibration step. `measured_prev` and `measured_next` are the
/// cell's states before and after a step at `current` (A); agents only read
/// `measured_next` (so `measured_prev` may be null for them), regressors need
/// both. Writes the parameter estimate applied at this step.
///
/// # Safety
/// `tracker` must come from `battcal_tracker_new`; pointers must be valid
/// where required.
#[no_mangle]
pub unsafe extern "C" fn battcal_tracker_step(
    tracker: *mut BattcalTracker,
    measured_prev: *const BattcalState,
    measured_next: *const BattcalState,
    current: f64,
    out_params: *mut BattcalParams,
) -> BattcalStatus {
    guard(|| {
        non_null!(tracker, measured_next, out_params);
        if !(current.is_finite() && current >= 0.0) {
            return fail(BattcalStatus::InvalidArgument, format!("current {current} is not a finite discharge current"));
        }
        let tr = &mut *tracker;
        let next: BatteryState = (*measured_next).into();
        let scales = tr.env.scales;
        let action = match &*tr.model {
            Model::Agent32(a) => lift(a.act_deterministic(&MdpState { x_hat: tr.x_hat, x_next: next, u_next: current }.observation(&scales)))?,
            Model::Agent64(a) => lift(a.act_deterministic(&MdpState { x_hat: tr.x_hat, x_next: next, u_next: current }.observation(&scales)))?,
            Model::Regressor32(_) | Model::Regressor64(_) => {
                non_null!(measured_prev);
                let input = MdpState { x_hat: (*measured_prev).into(), x_next: next, u_next: current }.observation(&scales);
                match &*tr.model {
                    Model::Regressor32(r) => lift(r.predict_unit(&input))?,
                    Model::Regressor64(r) => lift(r.predict_unit(&input))?,
                    _ => unreachable!(),
                }
            }
        };
        let (x_hat, params) = predict_step(&tr.x_hat, current, &action, &tr.env);
        tr.x_hat = x_hat;
        *out_params = params.into();
        Ok(())
    })
}

/// The session's predicted state.
///
/// # Safety
/// `tracker` must come from `battcal_tracker_new`; `out_state` must be valid.
#[no_mangle]
pub unsafe extern "C" fn battcal_tracker_predicted(tracker: *const BattcalTracker, out_state: *mut BattcalState) -> BattcalStatus {
    guard(|| {
        non_null!(tracker, out_state);
        *out_state = (*tracker).x_hat.into();
        Ok(())
    })
}

/// # Safety
/// `tracker` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn battcal_tracker_free(tracker: *mut BattcalTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}
