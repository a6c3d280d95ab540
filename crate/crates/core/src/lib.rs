//! Virtual oscillator control (VOC) for grid-forming inverters whose current
//! feedback is taken after an output LCL filter.
//!
//! The crate is organised bottom-up:
//!
//! * [`phasor`] — LCL impedance constants and the quasi-static phasor solution
//!   of the one/two inverter network.
//! * [`oscillator`] — the unaveraged oscillator dynamics, the electromagnetic
//!   transient (EMT) model of filters, lines and loads, and cycle-averaged power
//!   measurement.
//! * [`averaged`] — the averaged amplitude/phase model with its embedded droop
//!   characteristics.
//! * [`design`] — selection of oscillator parameters from AC performance
//!   specifications.
//! * [`dispatch`] — PI power dispatch for inverter 1, the security constraint and
//!   the steady-state dispatch equilibrium.
//! * [`engine`] — fixed-step integration, scenarios, CSV traces.

// `!(x > 0.0)` is used deliberately so that NaN fails the guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaged;
pub mod design;
pub mod dispatch;
pub mod engine;
mod error;
pub mod oscillator;
pub mod phasor;

pub use error::{Error, Result};

pub use num_complex::Complex64 as Complex;

/// Nominal angular frequency of a 60 Hz system.
pub const OMEGA_60HZ: f64 = 2.0 * std::f64::consts::PI * 60.0;
