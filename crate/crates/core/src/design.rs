//! Oscillator parameter design from AC performance specifications.
//!
//! The pipeline is: weighted rated power `S_max` → scaling factors `(k_v, k_i)`
//! → `(sigma, alpha)` → capacitance window from the frequency, harmonic and
//! rise-time limits → `(C, L)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::averaged::{equilibrium_frequency, equilibrium_voltage};
use crate::error::positive;
use crate::oscillator::VocParams;
use crate::phasor::{impedance_constants, ImpedanceConstants, LclFilter, Power};
use crate::{Error, Result};

/// AC performance specification of one inverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcSpec {
    #[serde(rename = "V_oc_V")]
    pub v_oc: f64,
    #[serde(rename = "V_min_V")]
    pub v_min: f64,
    #[serde(rename = "P_rated_W")]
    pub p_rated: f64,
    #[serde(rename = "Q_rated_var")]
    pub q_rated: f64,
    #[serde(rename = "omega_star_rad_s")]
    pub omega_star: f64,
    #[serde(rename = "d_omega_max_rad_s")]
    pub d_omega_max: f64,
    #[serde(rename = "t_rise_max_s")]
    pub t_rise_max: f64,
    pub delta31_max: f64,
}

impl AcSpec {
    /// 126 V / 114 V, 750 W / 750 var, 60 Hz ± 0.5 Hz, 0.2 s, 1 %.
    pub fn reference() -> Self {
        Self {
            v_oc: 126.0,
            v_min: 114.0,
            p_rated: 750.0,
            q_rated: 750.0,
            omega_star: crate::OMEGA_60HZ,
            d_omega_max: 2.0 * PI * 0.5,
            t_rise_max: 0.2,
            delta31_max: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("V_oc_V", self.v_oc)?;
        positive("V_min_V", self.v_min)?;
        positive("P_rated_W", self.p_rated)?;
        positive("Q_rated_var", self.q_rated)?;
        positive("omega_star_rad_s", self.omega_star)?;
        positive("d_omega_max_rad_s", self.d_omega_max)?;
        positive("t_rise_max_s", self.t_rise_max)?;
        positive("delta31_max", self.delta31_max)?;
        if self.v_min >= self.v_oc {
            return Err(Error::invalid(
                "V_min_V",
                format!("must be below V_oc_V ({} >= {})", self.v_min, self.v_oc),
            ));
        }
        Ok(())
    }

    pub fn s_rated(&self) -> f64 {
        self.p_rated.hypot(self.q_rated)
    }

    /// `(V_oc / V_min) V_oc^2 / (V_oc^2 - V_min^2)`, the filter-free part of sigma.
    fn sigma_core(&self) -> f64 {
        let (vo, vm) = (self.v_oc, self.v_min);
        vo / vm * vo * vo / (vo * vo - vm * vm)
    }
}

/// How the maximum of a linear functional over the rated power disc is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmaxMode {
    /// Exact maximum over the disc `P^2 + Q^2 <= S_rated^2`.
    Disc,
    /// Evaluation at the rated axis point: `(P_rated, 0)` for the voltage
    /// constant and `(0, Q_rated)` for the frequency constant.
    #[default]
    RatedPoint,
}

impl std::str::FromStr for SmaxMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "disc" => Ok(Self::Disc),
            "rated_point" => Ok(Self::RatedPoint),
            other => Err(format!("unknown mode `{other}` (expected disc|rated_point)")),
        }
    }
}

/// Which point of the capacitance window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CRule {
    #[default]
    Max,
    Min,
    Midpoint,
}

impl std::str::FromStr for CRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "midpoint" => Ok(Self::Midpoint),
            other => Err(format!("unknown c-rule `{other}` (expected max|min|midpoint)")),
        }
    }
}

/// Weighted power `C_a P + S_a Q` that drives the voltage droop, at its maximum.
pub fn s_max(spec: &AcSpec, k: &ImpedanceConstants, mode: SmaxMode) -> f64 {
    match mode {
        SmaxMode::Disc => spec.s_rated() * k.c_alpha.hypot(k.s_alpha),
        SmaxMode::RatedPoint => k.c_alpha * spec.p_rated,
    }
}

/// Weighted power `C_a Q - S_a P` that drives the frequency droop, at its maximum.
pub fn s_dmax(spec: &AcSpec, k: &ImpedanceConstants, mode: SmaxMode) -> f64 {
    match mode {
        SmaxMode::Disc => spec.s_rated() * k.c_alpha.hypot(k.s_alpha),
        SmaxMode::RatedPoint => k.c_alpha * spec.q_rated,
    }
}

/// `k_v = V_oc`, `k_i = V_min / S_max`.
pub fn scaling_factors(spec: &AcSpec, s_max: f64) -> Result<(f64, f64)> {
    positive("S_max", s_max)?;
    Ok((spec.v_oc, spec.v_min / s_max))
}

/// `(sigma, alpha)` placing the rated-power equilibrium at `V_min` and the
/// open-circuit equilibrium at `V_oc`.
pub fn sigma_alpha(spec: &AcSpec, s_max: f64, k: &ImpedanceConstants) -> Result<(f64, f64)> {
    spec.validate()?;
    let (k_v, k_i) = scaling_factors(spec, s_max)?;
    let sigma = spec.sigma_core() + spec.v_min * spec.v_oc * k.c_beta / s_max;
    let sigma_beta = sigma - k_v * k_i * k.c_beta;
    positive("sigma_beta", sigma_beta)?;
    Ok((sigma, 2.0 / 3.0 * sigma_beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingConstraint {
    FrequencyDeviation,
    HarmonicRatio,
}

/// Bounds on the oscillator capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitanceWindow {
    #[serde(rename = "C_min_freq_farad")]
    pub c_min_freq: f64,
    #[serde(rename = "C_min_harm_farad")]
    pub c_min_harm: f64,
    #[serde(rename = "C_max_rise_farad")]
    pub c_max_rise: f64,
    pub feasible: bool,
}

impl CapacitanceWindow {
    pub fn lower(&self) -> f64 {
        self.c_min_freq.max(self.c_min_harm)
    }

    /// Lower bounds that exceed the rise-time upper bound.
    pub fn binding(&self) -> Vec<BindingConstraint> {
        let mut out = Vec::new();
        if self.c_min_freq > self.c_max_rise {
            out.push(BindingConstraint::FrequencyDeviation);
        }
        if self.c_min_harm > self.c_max_rise {
            out.push(BindingConstraint::HarmonicRatio);
        }
        out
    }

    pub fn binding_names(&self) -> Vec<&'static str> {
        self.binding()
            .into_iter()
            .map(|b| match b {
                BindingConstraint::FrequencyDeviation => "frequency deviation vs rise time",
                BindingConstraint::HarmonicRatio => "harmonic ratio vs rise time",
            })
            .collect()
    }

    pub fn pick(&self, rule: CRule) -> f64 {
        match rule {
            CRule::Max => self.c_max_rise,
            CRule::Min => self.lower(),
            CRule::Midpoint => 0.5 * (self.lower() + self.c_max_rise),
        }
    }
}

/// Frequency, harmonic and rise-time bounds on `C`.
pub fn capacitance_window(
    spec: &AcSpec,
    s_max: f64,
    s_dmax: f64,
    sigma: f64,
    k: &ImpedanceConstants,
) -> CapacitanceWindow {
    let (vo, vm) = (spec.v_oc, spec.v_min);
    let c_min_freq = 1.0 / (2.0 * spec.d_omega_max)
        * (s_dmax * vo / (vm * s_max) - k.s_beta * vo * vm / s_max);
    let c_min_harm = sigma / (8.0 * spec.omega_star * spec.delta31_max);
    let c_max_rise = spec.t_rise_max / 6.0 * spec.sigma_core();
    CapacitanceWindow {
        c_min_freq,
        c_min_harm,
        c_max_rise,
        feasible: c_min_freq.max(c_min_harm) <= c_max_rise,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub params: VocParams,
    #[serde(rename = "S_max")]
    pub s_max: f64,
    #[serde(rename = "S_dmax")]
    pub s_dmax: f64,
    pub window: CapacitanceWindow,
    pub c_rule: CRule,
    pub mode: SmaxMode,
    pub feasible: bool,
}

/// Runs the full design. An empty capacitance window is reported as
/// [`Error::InfeasibleDesign`], which still carries the report computed with
/// the requested rule so that callers may deliberately proceed.
pub fn design(spec: &AcSpec, filter: &LclFilter, mode: SmaxMode, c_rule: CRule) -> Result<DesignReport> {
    spec.validate()?;
    let k = impedance_constants(filter, spec.omega_star)?;
    design_with_constants(spec, &k, mode, c_rule)
}

pub fn design_with_constants(
    spec: &AcSpec,
    k: &ImpedanceConstants,
    mode: SmaxMode,
    c_rule: CRule,
) -> Result<DesignReport> {
    spec.validate()?;
    let s_max = s_max(spec, k, mode);
    let s_dmax = s_dmax(spec, k, mode);
    let (k_v, k_i) = scaling_factors(spec, s_max)?;
    let (sigma, alpha) = sigma_alpha(spec, s_max, k)?;
    let window = capacitance_window(spec, s_max, s_dmax, sigma, k);
    let c = window.pick(c_rule);
    positive("C_farad", c)?;
    let params = VocParams {
        sigma,
        alpha,
        l: 1.0 / (c * spec.omega_star * spec.omega_star),
        c,
        k_v,
        k_i,
        omega_star: spec.omega_star,
    };
    let report = DesignReport {
        params,
        s_max,
        s_dmax,
        window,
        c_rule,
        mode,
        feasible: window.feasible,
    };
    if window.feasible {
        Ok(report)
    } else {
        Err(Error::InfeasibleDesign {
            window,
            report: Box::new(report),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    P,
    Q,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "P" | "p" => Ok(Self::P),
            "Q" | "q" => Ok(Self::Q),
            other => Err(format!("unknown axis `{other}` (expected P|Q)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DroopRow {
    #[serde(rename = "P_W")]
    pub p: f64,
    #[serde(rename = "Q_var")]
    pub q: f64,
    #[serde(rename = "V_eq_V")]
    pub v_eq: f64,
    #[serde(rename = "omega_eq_rad_s")]
    pub omega_eq: f64,
    pub exists: bool,
}

/// Equilibrium voltage (high root) and frequency along a power sweep.
///
/// Rows past the critical power keep `exists = false` and NaN values.
pub fn droop_curve(
    params: &VocParams,
    k: &ImpedanceConstants,
    axis: SweepAxis,
    fixed_value: f64,
    range: (f64, f64),
    n_points: usize,
) -> Vec<DroopRow> {
    let n = n_points.max(2);
    (0..n)
        .map(|j| {
            let x = range.0 + (range.1 - range.0) * j as f64 / (n - 1) as f64;
            let power = match axis {
                SweepAxis::P => Power::new(x, fixed_value),
                SweepAxis::Q => Power::new(fixed_value, x),
            };
            let eq = equilibrium_voltage(power, params, k);
            let omega_eq = if eq.exists {
                equilibrium_frequency(power, eq.v_high, params, k)
            } else {
                f64::NAN
            };
            DroopRow {
                p: power.p,
                q: power.q,
                v_eq: eq.v_high,
                omega_eq,
                exists: eq.exists,
            }
        })
        .collect()
}
