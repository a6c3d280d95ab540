//! Unaveraged oscillator dynamics and the electrical network they drive.
//!
//! The oscillator state is kept in polar form: `V` is the RMS amplitude of the
//! inverter voltage and `phi` its instantaneous phase, so the terminal voltage
//! is `v = sqrt(2) V cos(phi)`.

mod emt;
mod meter;

pub use emt::{EmtModel, EmtState, InverterEmt};
pub use meter::{FrequencyEstimator, PowerMeter};

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::positive;
use crate::phasor::ImpedanceConstants;
use crate::{Error, Result};

/// Amplitude below which the phase equation is considered ill-posed.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

/// Oscillator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocParams {
    /// Conductance of the negative-resistance element.
    #[serde(rename = "sigma_S")]
    pub sigma: f64,
    /// Cubic current source coefficient.
    #[serde(rename = "alpha_A_per_V3")]
    pub alpha: f64,
    #[serde(rename = "L_henry")]
    pub l: f64,
    #[serde(rename = "C_farad")]
    pub c: f64,
    pub k_v: f64,
    pub k_i: f64,
    #[serde(rename = "omega_star_rad_s")]
    pub omega_star: f64,
}

impl VocParams {
    pub fn validate(&self) -> Result<()> {
        positive("sigma_S", self.sigma)?;
        positive("alpha_A_per_V3", self.alpha)?;
        positive("L_henry", self.l)?;
        positive("C_farad", self.c)?;
        positive("k_v", self.k_v)?;
        positive("k_i", self.k_i)?;
        positive("omega_star_rad_s", self.omega_star)?;
        let w = 1.0 / (self.l * self.c).sqrt();
        if ((w - self.omega_star) / self.omega_star).abs() > 1e-9 {
            return Err(Error::invalid(
                "omega_star_rad_s",
                format!("1/sqrt(LC) = {w} does not match {}", self.omega_star),
            ));
        }
        Ok(())
    }

    /// `sqrt(L / C)`.
    pub fn epsilon(&self) -> f64 {
        (self.l / self.c).sqrt()
    }

    /// `3 alpha / (k_v^2 sigma)`.
    pub fn beta(&self) -> f64 {
        3.0 * self.alpha / (self.k_v * self.k_v * self.sigma)
    }

    /// `sigma - k_v k_i C_beta`.
    pub fn sigma_beta(&self, k: &ImpedanceConstants) -> f64 {
        self.sigma - self.k_v * self.k_i * k.c_beta
    }

    /// Open-circuit RMS voltage of the averaged model.
    pub fn v_oc(&self, k: &ImpedanceConstants) -> f64 {
        self.k_v * (2.0 * self.sigma_beta(k) / (3.0 * self.alpha)).sqrt()
    }

    /// Rescales epsilon at fixed `omega_star`: `L -> s L`, `C -> C / s`.
    pub fn with_epsilon_scale(&self, s: f64) -> Self {
        Self {
            l: self.l * s,
            c: self.c / s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscState {
    pub v: f64,
    pub phi: f64,
}

/// Odd cubic nonlinearity `g(u) = u - alpha / (sigma k_v^2) u^3`.
pub fn g_nonlinearity(u: f64, p: &VocParams) -> f64 {
    u - p.alpha / (p.sigma * p.k_v * p.k_v) * u * u * u
}

/// Right-hand side of the polar oscillator equations for feedback current `i_fb`.
pub fn voc_derivatives(s: OscState, i_fb: f64, p: &VocParams) -> Result<(f64, f64)> {
    if !(s.v >= AMPLITUDE_FLOOR) {
        return Err(Error::OscillatorCollapse {
            amplitude: s.v,
            floor: AMPLITUDE_FLOOR,
        });
    }
    let (sin, cos) = s.phi.sin_cos();
    let drive = p.sigma * g_nonlinearity(SQRT_2 * s.v * cos, p) - p.k_v * p.k_i * i_fb;
    let gain = p.epsilon() * p.omega_star / SQRT_2;
    Ok((gain * drive * cos, p.omega_star - gain / s.v * drive * sin))
}

/// Net motion of the oscillator over one nominal period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleDrift {
    /// `(V(T) - V(0)) / T`.
    pub rate_v: f64,
    /// `(theta(T) - theta(0)) / T` with `theta = phi - omega_star t`.
    pub rate_theta: f64,
    /// Mean amplitude over the period.
    pub mean_v: f64,
    /// Mean phase offset over the period.
    pub mean_theta: f64,
}

/// Integrates the oscillator over one nominal period from amplitude `v0` and
/// phase offset `theta0`, with the feedback current given as a function of
/// time, using `steps` RK4 steps.
pub fn one_cycle_drift(
    p: &VocParams,
    v0: f64,
    theta0: f64,
    feedback: impl Fn(f64) -> f64,
    steps: usize,
) -> Result<CycleDrift> {
    let steps = steps.max(1);
    let period = 2.0 * PI / p.omega_star;
    let dt = period / steps as f64;
    let mut s = OscState { v: v0, phi: theta0 };
    let f = |t: f64, s: OscState| voc_derivatives(s, feedback(t), p);
    // trapezoidal means over the step nodes
    let (mut sum_v, mut sum_theta) = (0.5 * v0, 0.5 * theta0);
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = f(t, s)?;
        let k2 = f(t + dt / 2.0, advance(s, k1, dt / 2.0))?;
        let k3 = f(t + dt / 2.0, advance(s, k2, dt / 2.0))?;
        let k4 = f(t + dt, advance(s, k3, dt))?;
        s.v += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        s.phi += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        let w = if n + 1 == steps { 0.5 } else { 1.0 };
        sum_v += w * s.v;
        sum_theta += w * (s.phi - p.omega_star * (t + dt));
    }
    Ok(CycleDrift {
        rate_v: (s.v - v0) / period,
        rate_theta: (s.phi - p.omega_star * period - theta0) / period,
        mean_v: sum_v / steps as f64,
        mean_theta: sum_theta / steps as f64,
    })
}

fn advance(s: OscState, d: (f64, f64), h: f64) -> OscState {
    OscState {
        v: s.v + h * d.0,
        phi: s.phi + h * d.1,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::OMEGA_60HZ;

    pub(crate) fn reference_params() -> VocParams {
        let c = 0.203;
        VocParams {
            sigma: 6.09256,
            alpha: 4.06184,
            l: 1.0 / (c * OMEGA_60HZ * OMEGA_60HZ),
            c,
            k_v: 126.0,
            k_i: 0.15225,
            omega_star: OMEGA_60HZ,
        }
    }

    #[test]
    fn g_roots() {
        let p = reference_params();
        assert_eq!(g_nonlinearity(0.0, &p), 0.0);
        let root = p.k_v * (p.sigma / p.alpha).sqrt();
        assert!(g_nonlinearity(root, &p).abs() < 1e-12 * root);
        assert!((g_nonlinearity(-root, &p)).abs() < 1e-12 * root);
    }

    // Composite Simpson on [0, 2 pi] for the first-harmonic projection of g.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 * PI / n as f64;
        let mut acc = f(0.0) + f(2.0 * PI);
        for j in 1..n {
            acc += f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn g_first_harmonic_matches_averaged_cubic() {
        let p = reference_params();
        for v in [50.0, 126.0, 180.0] {
            let integral = simpson(|t| g_nonlinearity(SQRT_2 * v * t.cos(), &p) * t.cos(), 2000);
            let lhs = p.sigma / (2.0 * PI * SQRT_2) * integral;
            let rhs = p.sigma / 2.0 * (v - p.beta() / 2.0 * v.powi(3));
            assert!(((lhs - rhs) / rhs).abs() < 1e-8, "{v}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn derivative_special_points() {
        let p = reference_params();
        let (dv, dphi) = voc_derivatives(OscState { v: 126.0, phi: PI / 2.0 }, 0.0, &p).unwrap();
        assert!(dv.abs() < 1e-9);
        assert!(dphi.is_finite());

        let v_root = p.k_v * (p.sigma / p.alpha).sqrt() / SQRT_2;
        let (dv, dphi) = voc_derivatives(OscState { v: v_root, phi: 0.0 }, 0.0, &p).unwrap();
        assert!(dv.abs() < 1e-9);
        assert_eq!(dphi, p.omega_star);
    }

    #[test]
    fn derivative_dual_evaluation() {
        let p = reference_params();
        let (v, phi, i): (f64, f64, f64) = (126.0, 0.3, 5.0);
        // expanded by hand: the cubic multiplied out term by term
        let u = 2f64.sqrt() * v * phi.cos();
        let cubic = p.sigma * u - p.alpha / (p.k_v * p.k_v) * u * u * u;
        let eps = (p.l / p.c).sqrt();
        let dv = eps * p.omega_star / 2f64.sqrt() * (cubic - p.k_v * p.k_i * i) * phi.cos();
        let dphi = p.omega_star
            - eps * p.omega_star / (2f64.sqrt() * v) * (cubic - p.k_v * p.k_i * i) * phi.sin();
        let got = voc_derivatives(OscState { v, phi }, i, &p).unwrap();
        assert!((got.0 - dv).abs() <= 1e-12 * dv.abs().max(1.0));
        assert!((got.1 - dphi).abs() <= 1e-12 * dphi.abs());
    }

    #[test]
    fn unforced_cycle_drift_approaches_averaged_rate() {
        // small epsilon: the one-cycle rate tends to sigma/(2C)(V - beta/2 V^3)
        let p = reference_params().with_epsilon_scale(1e-3);
        let v = 60.0;
        let d = one_cycle_drift(&p, v, 0.2, |_| 0.0, 400).unwrap();
        let avg = p.sigma / (2.0 * p.c) * (d.mean_v - p.beta() / 2.0 * d.mean_v.powi(3));
        assert!(((d.rate_v - avg) / avg).abs() < 1e-3, "{} vs {avg}", d.rate_v);
        assert!(d.rate_theta.abs() < 1e-3 * p.omega_star);
        assert!((d.mean_theta - 0.2).abs() < 1e-3);
    }

    #[test]
    fn collapse_is_reported() {
        let p = reference_params();
        let e = voc_derivatives(OscState { v: 1e-7, phi: 0.0 }, 0.0, &p).unwrap_err();
        assert!(matches!(e, Error::OscillatorCollapse { .. }));
        assert!(voc_derivatives(OscState { v: f64::NAN, phi: 0.0 }, 0.0, &p).is_err());
    }

    #[test]
    fn params_validation() {
        let p = reference_params();
        p.validate().unwrap();
        let mut bad = p;
        bad.l *= 1.01;
        assert!(bad.validate().is_err());
        let scaled = p.with_epsilon_scale(0.125);
        scaled.validate().unwrap();
        assert!((scaled.epsilon() - p.epsilon() / 8.0).abs() < 1e-15);
    }
}
