use thiserror::Error;

use crate::design::CapacitanceWindow;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("singular network: {0}")]
    SingularNetwork(String),

    #[error("oscillator collapse: amplitude {amplitude:.3e} V fell below the floor {floor:.3e} V")]
    OscillatorCollapse { amplitude: f64, floor: f64 },

    #[error("power meter not ready: {elapsed:.6} s of {required:.6} s warm-up elapsed")]
    MeterNotReady { elapsed: f64, required: f64 },

    #[error("infeasible capacitance window [{:.6}, {:.6}] F, binding: {}", window.lower(), window.c_max_rise, window.binding_names().join(", "))]
    InfeasibleDesign {
        window: CapacitanceWindow,
        report: Box<crate::design::DesignReport>,
    },

    #[error("infeasible setpoint: security constraint margin {margin:.6e} is not positive")]
    InfeasibleSetpoint { margin: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("insufficient window: {0}")]
    InsufficientWindow(String),

    #[error("non-finite state at t = {t:.6} s (last good state recorded)")]
    NonFinite { t: f64, last_good: Vec<f64> },

    #[error("simulation aborted at t = {t:.6} s: {source}")]
    Aborted {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors that represent an infeasible design or setpoint rather
    /// than a runtime failure.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::InfeasibleDesign { .. } | Error::InfeasibleSetpoint { .. } => true,
            Error::Aborted { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

pub(crate) fn positive(field: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {x}")))
    }
}

pub(crate) fn non_negative(field: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be non-negative and finite, got {x}")))
    }
}
