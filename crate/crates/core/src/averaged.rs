//! Averaged amplitude/phase dynamics with the LCL filter folded in through the
//! impedance constants, and the droop characteristics embedded in them.
//!
//! `P` and `Q` here are the inverter terminal power computed with the filter
//! inductor current (`V conj(I_f)`), see [`crate::phasor::InverterPhasors`].
//! With that convention the bracket `C_a P + S_a Q + C_b V^2` is exactly the
//! active power delivered against the feedback current `I_g`.

use crate::oscillator::VocParams;
use crate::phasor::{ImpedanceConstants, Power};
use crate::{Error, Result};

/// Amplitude below which the averaged model is considered collapsed.
pub const AVERAGED_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedState {
    pub v_bar: f64,
    pub theta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResult {
    pub v_high: f64,
    pub v_low: f64,
    pub exists: bool,
    /// Critical weighted power `sigma_beta^2 / (6 alpha k_i / k_v)`.
    pub s_cr: f64,
    pub v_cr: f64,
    pub v_oc: f64,
}

/// Constants that reduce the model to the one for feedback before the filter.
pub fn legacy_constants() -> ImpedanceConstants {
    ImpedanceConstants {
        z_alpha: 1.0,
        theta_alpha: 0.0,
        z_beta: 0.0,
        theta_beta: 0.0,
        c_alpha: 1.0,
        s_alpha: 0.0,
        c_beta: 0.0,
        s_beta: 0.0,
    }
}

/// `(dV/dt, dtheta/dt)` of the averaged model in a frame rotating at `omega`.
pub fn averaged_derivatives(
    s: AveragedState,
    power: Power,
    p: &VocParams,
    k: &ImpedanceConstants,
    omega: f64,
) -> Result<(f64, f64)> {
    let v = s.v_bar;
    if !(v > AVERAGED_FLOOR) {
        return Err(Error::OscillatorCollapse {
            amplitude: v,
            floor: AVERAGED_FLOOR,
        });
    }
    let gain = p.k_v * p.k_i / (2.0 * p.c);
    let dv = p.sigma / (2.0 * p.c) * (v - p.beta() / 2.0 * v * v * v)
        - gain * ((k.c_alpha * power.p + k.s_alpha * power.q) / v + k.c_beta * v);
    let dtheta = p.omega_star - omega
        + gain * ((k.c_alpha * power.q - k.s_alpha * power.p) / (v * v) - k.s_beta);
    Ok((dv, dtheta))
}

/// Both roots of the amplitude equilibrium for constant power.
///
/// Existence is tested with the same `power` that enters the roots.
pub fn equilibrium_voltage(power: Power, p: &VocParams, k: &ImpedanceConstants) -> EquilibriumResult {
    let sb = p.sigma_beta(k);
    let weighted = k.c_alpha * power.p + k.s_alpha * power.q;
    let ratio = p.k_i / p.k_v;
    let s_cr = sb * sb / (6.0 * p.alpha * ratio);
    let v_cr = p.k_v * (sb / (3.0 * p.alpha)).sqrt();
    let v_oc = p.k_v * (2.0 * sb / (3.0 * p.alpha)).sqrt();
    let disc = sb * sb - 6.0 * p.alpha * ratio * weighted;
    let exists = weighted < s_cr && disc >= 0.0;
    let (v_high, v_low) = if exists {
        let r = disc.sqrt();
        (
            p.k_v * ((sb + r) / (3.0 * p.alpha)).sqrt(),
            p.k_v * ((sb - r).max(0.0) / (3.0 * p.alpha)).sqrt(),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    EquilibriumResult {
        v_high,
        v_low,
        exists,
        s_cr,
        v_cr,
        v_oc,
    }
}

/// Steady-state angular frequency at an equilibrium amplitude `v_eq`.
pub fn equilibrium_frequency(power: Power, v_eq: f64, p: &VocParams, k: &ImpedanceConstants) -> f64 {
    p.omega_star
        + p.k_v * p.k_i / (2.0 * p.c)
            * ((k.c_alpha * power.q - k.s_alpha * power.p) / (v_eq * v_eq) - k.s_beta)
}

/// Approximate 10 %–90 % build-up time of the unloaded amplitude, `6 / (omega* eps sigma_beta)`.
pub fn rise_time(p: &VocParams, k: &ImpedanceConstants) -> f64 {
    6.0 / (p.omega_star * p.epsilon() * p.sigma_beta(k))
}

/// Third-to-first harmonic amplitude ratio, `eps sigma / 8`.
pub fn harmonic_ratio(p: &VocParams) -> f64 {
    p.epsilon() * p.sigma / 8.0
}
