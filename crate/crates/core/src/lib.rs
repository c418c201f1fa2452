//! Real-time calibration of lithium-ion battery degradation parameters.
//!
//! The calibration is posed as a state-tracking problem: an agent picks the
//! capacity `q_max` or resistance `r_o` of a battery model at every step and
//! is charged for the gap between the model's predicted internal state and
//! the real one. A Lyapunov actor-critic learns the calibrator without ever
//! seeing ground-truth parameters; a supervised regressor trained on labelled
//! transitions serves as the comparison baseline.

pub mod baseline;
pub mod battery;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod io;
pub mod lac;
pub mod nn;

pub use error::{Error, Result};
