//! Power dispatch of inverter 1 in a two-inverter system.
//!
//! Inverter 1 tunes `(k_v, k_i)` with two PI loops to reach a setpoint
//! `(P1*, Q1*)`; inverter 2 keeps its design parameters and supplies the
//! balance. A setpoint is achievable when the steady state it implies admits
//! real, positive gains, which is the case exactly when the security margin
//! is positive.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::averaged::{equilibrium_frequency, equilibrium_voltage};
use crate::oscillator::VocParams;
use crate::phasor::{impedance_constants, ImpedanceConstants, Network, PhasorSolution, Power};
use crate::{Complex, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    #[serde(rename = "Kp_p")]
    pub kp_p: f64,
    #[serde(rename = "Ki_p")]
    pub ki_p: f64,
    #[serde(rename = "Kp_q")]
    pub kp_q: f64,
    #[serde(rename = "Ki_q")]
    pub ki_q: f64,
}

impl PiGains {
    /// Active channel acts on `k_v` with negative gains, reactive channel on `k_i`.
    pub fn reference() -> Self {
        Self {
            kp_p: -0.001,
            ki_p: -0.15,
            kp_q: 0.0001,
            ki_q: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub e_p: f64,
    pub e_q: f64,
}

/// Output clamps of the two PI channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiLimits {
    pub kv: (f64, f64),
    pub ki: (f64, f64),
}

impl PiLimits {
    /// `[0.2, 3]` times the design value on both channels.
    pub fn around(params: &VocParams) -> Self {
        Self {
            kv: (0.2 * params.k_v, 3.0 * params.k_v),
            ki: (0.2 * params.k_i, 3.0 * params.k_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    #[serde(rename = "P_W")]
    pub p_star: f64,
    #[serde(rename = "Q_var")]
    pub q_star: f64,
    #[serde(rename = "t_start_s")]
    pub t_start: f64,
}

/// One PI update. Returns the gains computed from the state at entry and the
/// advanced state. Integration is suspended on a channel whose output is
/// clamped and whose error would drive it further into the clamp.
pub fn pi_step(
    state: PiState,
    gains: &PiGains,
    limits: &PiLimits,
    measured: Power,
    sp: &Setpoint,
    dt: f64,
) -> (f64, f64, PiState) {
    let err_p = measured.p - sp.p_star;
    let err_q = measured.q - sp.q_star;
    let (k_v, e_p) = channel(state.e_p, gains.kp_p, gains.ki_p, err_p, limits.kv, dt);
    let (k_i, e_q) = channel(state.e_q, gains.kp_q, gains.ki_q, err_q, limits.ki, dt);
    (k_v, k_i, PiState { e_p, e_q })
}

fn channel(e: f64, kp: f64, ki: f64, err: f64, (lo, hi): (f64, f64), dt: f64) -> (f64, f64) {
    let raw = kp * err + e;
    let out = raw.clamp(lo, hi);
    let rate = ki * err;
    let winding = (raw > hi && rate > 0.0) || (raw < lo && rate < 0.0);
    (out, if winding { e } else { e + rate * dt })
}

/// Left side of the security constraint,
/// `sigma V1^2 - mu (C_a P1* + S_a Q1* + C_b V1^2)`.
pub fn security_margin(
    v1: f64,
    p1_star: f64,
    q1_star: f64,
    mu: f64,
    params1: &VocParams,
    k1: &ImpedanceConstants,
) -> f64 {
    params1.sigma * v1 * v1
        - mu * (k1.c_alpha * p1_star + k1.s_alpha * q1_star + k1.c_beta * v1 * v1)
}

/// Gains of inverter 1 that place its amplitude equilibrium at `v1` for the
/// setpoint, given the product `mu = k_v k_i` fixed by frequency agreement.
///
/// `k_v^2 = (3 alpha / 2) V1^4 / margin`, positive root; `k_i = mu / k_v`.
pub fn control_inputs(
    mu: f64,
    v1: f64,
    p1_star: f64,
    q1_star: f64,
    params1: &VocParams,
    k1: &ImpedanceConstants,
) -> Result<(f64, f64)> {
    let margin = security_margin(v1, p1_star, q1_star, mu, params1, k1);
    if !(margin > 0.0) {
        return Err(Error::InfeasibleSetpoint { margin });
    }
    let kv_sq = 1.5 * params1.alpha * v1.powi(4) / margin;
    if !kv_sq.is_finite() || kv_sq > KV_SQ_LIMIT {
        return Err(Error::InfeasibleSetpoint { margin });
    }
    let kv = kv_sq.sqrt();
    Ok((kv, mu / kv))
}

// k_v beyond 1e6 V/V means the margin has collapsed to rounding level.
const KV_SQ_LIMIT: f64 = 1e12;

/// Two inverters sharing a load, inverter 2 at fixed parameters.
#[derive(Debug, Clone)]
pub struct DispatchSystem {
    pub params: [VocParams; 2],
    pub constants: [ImpedanceConstants; 2],
    pub network: Network,
}

impl DispatchSystem {
    pub fn new(params: [VocParams; 2], network: Network) -> Result<Self> {
        network.validate()?;
        if network.inverters.len() != 2 {
            return Err(Error::invalid("inverters", "dispatch needs exactly two inverters"));
        }
        for p in &params {
            p.validate()?;
        }
        let constants = [
            impedance_constants(&network.inverters[0].filter, params[0].omega_star)?,
            impedance_constants(&network.inverters[1].filter, params[1].omega_star)?,
        ];
        Ok(Self {
            params,
            constants,
            network,
        })
    }

    /// Phasor solution with inverter 2 as the angle reference.
    pub fn solve(&self, v1: f64, delta: f64, v2: f64) -> Result<PhasorSolution> {
        let active = vec![true; self.network.loads.len()];
        self.network.solve_phasor(
            &[Complex::from_polar(v1, delta), Complex::new(v2, 0.0)],
            &active,
            self.params[1].omega_star,
        )
    }

    fn residual(&self, x: &Vector3<f64>, p1: f64, q1: f64, s_ref: f64) -> Result<Vector3<f64>> {
        let sol = self.solve(x[0], x[1], x[2])?;
        let s1 = sol.inverters[0].terminal_power;
        let s2 = sol.inverters[1].terminal_power;
        let p = &self.params[1];
        let k = &self.constants[1];
        let v2 = x[2];
        let amp = p.sigma * v2 * v2 - 1.5 * p.alpha / (p.k_v * p.k_v) * v2.powi(4)
            - p.k_v * p.k_i * (k.c_alpha * s2.p + k.s_alpha * s2.q + k.c_beta * v2 * v2);
        Ok(Vector3::new(
            (s1.p - p1) / s_ref,
            (s1.q - q1) / s_ref,
            amp / (p.sigma * p.k_v * p.k_v),
        ))
    }

    /// Equilibrium of the untuned system with both inverters in phase.
    pub fn natural_equilibrium(&self) -> Result<(f64, PhasorSolution)> {
        let p = &self.params[1];
        let k = &self.constants[1];
        let mut v = p.v_oc(k);
        for _ in 0..200 {
            let sol = self.solve(v, 0.0, v)?;
            let eq = equilibrium_voltage(sol.inverters[1].terminal_power, p, k);
            if !eq.exists {
                return Err(Error::InfeasibleSetpoint { margin: f64::NAN });
            }
            let step = eq.v_high - v;
            v = eq.v_high;
            if step.abs() < 1e-13 * v {
                break;
            }
        }
        let sol = self.solve(v, 0.0, v)?;
        Ok((v, sol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispatchEquilibrium {
    #[serde(rename = "V1_V")]
    pub v1: f64,
    /// Angle of inverter 1 relative to inverter 2.
    #[serde(rename = "theta1_rad")]
    pub theta1: f64,
    #[serde(rename = "V2_V")]
    pub v2: f64,
    #[serde(rename = "P2_W")]
    pub p2: f64,
    #[serde(rename = "Q2_var")]
    pub q2: f64,
    #[serde(rename = "omega_rad_s")]
    pub omega: f64,
    pub mu: f64,
    pub margin: f64,
    pub kv1: f64,
    pub ki1: f64,
    pub iterations: usize,
    pub on_high_root: bool,
    pub achievable: bool,
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Steady state of the averaged two-inverter system in which inverter 1
/// delivers `(p1_star, q1_star)`, and the gains it requires.
pub fn dispatch_equilibrium(p1_star: f64, q1_star: f64, sys: &DispatchSystem) -> Result<DispatchEquilibrium> {
    let (v0, _) = sys.natural_equilibrium()?;
    let s_ref = p1_star.abs().max(q1_star.abs()).max(1.0);
    let mut x = Vector3::new(v0, 0.0, v0);
    let mut r = sys.residual(&x, p1_star, q1_star, s_ref)?;
    let mut iterations = 0;
    while r.amax() > NEWTON_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: r.amax(),
            });
        }
        iterations += 1;
        let jac = jacobian(sys, &x, p1_star, q1_star, s_ref)?;
        let Some(dx) = jac.lu().solve(&(-r)) else {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: r.amax(),
            });
        };
        let mut lambda = 1.0;
        loop {
            let trial = x + dx * lambda;
            let ok = trial[0] > 0.0 && trial[2] > 0.0;
            if ok {
                if let Ok(rt) = sys.residual(&trial, p1_star, q1_star, s_ref) {
                    if rt.amax() < r.amax() || lambda < 1e-3 {
                        x = trial;
                        r = rt;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: r.amax(),
                });
            }
        }
    }

    let (v1, theta1, v2) = (x[0], x[1], x[2]);
    let sol = sys.solve(v1, theta1, v2)?;
    let s2 = sol.inverters[1].terminal_power;
    let (p1, p2) = (&sys.params[0], &sys.params[1]);
    let (k1, k2) = (&sys.constants[0], &sys.constants[1]);

    let eq2 = equilibrium_voltage(s2, p2, k2);
    let on_high_root = eq2.exists && (v2 - eq2.v_high).abs() <= 1e-6 * v2;
    let omega = equilibrium_frequency(s2, v2, p2, k2);

    let d1 = (k1.c_alpha * q1_star - k1.s_alpha * p1_star) / (v1 * v1) - k1.s_beta;
    let d2 = (k2.c_alpha * s2.q - k2.s_alpha * s2.p) / (v2 * v2) - k2.s_beta;
    // frequency agreement; the capacitance ratio is one for identical oscillators
    let mu = p2.k_v * p2.k_i * (p1.c / p2.c) * d2 / d1;
    let margin = security_margin(v1, p1_star, q1_star, mu, p1, k1);
    let gains = if mu.is_finite() && mu > 0.0 {
        control_inputs(mu, v1, p1_star, q1_star, p1, k1).ok()
    } else {
        None
    };
    let (kv1, ki1) = gains.unwrap_or((f64::NAN, f64::NAN));
    Ok(DispatchEquilibrium {
        v1,
        theta1,
        v2,
        p2: s2.p,
        q2: s2.q,
        omega,
        mu,
        margin,
        kv1,
        ki1,
        iterations,
        on_high_root,
        achievable: on_high_root && margin > 0.0 && gains.is_some(),
    })
}

fn jacobian(
    sys: &DispatchSystem,
    x: &Vector3<f64>,
    p1: f64,
    q1: f64,
    s_ref: f64,
) -> Result<Matrix3<f64>> {
    let steps = [1e-6 * x[0].abs().max(1.0), 1e-7, 1e-6 * x[2].abs().max(1.0)];
    let mut jac = Matrix3::zeros();
    for (j, h) in steps.into_iter().enumerate() {
        let mut hi = *x;
        let mut lo = *x;
        hi[j] += h;
        lo[j] -= h;
        let col = (sys.residual(&hi, p1, q1, s_ref)? - sys.residual(&lo, p1, q1, s_ref)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}
