use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{design, AcSpec, CRule, DesignReport, SmaxMode};
use crate::dispatch::{PiGains, Setpoint};
use crate::error::{non_negative, positive};
use crate::oscillator::VocParams;
use crate::phasor::{InverterBranch, LclFilter, Network, SeriesRlBranch};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Default integration steps per model.
pub const DEFAULT_DT_ACTUAL: f64 = 5e-6;
pub const DEFAULT_DT_AVERAGED: f64 = 5e-4;
pub const DEFAULT_TRACE_INTERVAL: f64 = 1e-3;

/// Environment variable overriding the trace decimation interval, in seconds.
pub const TRACE_DECIMATION_ENV: &str = "VOC_TRACE_DECIMATION_S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Unaveraged oscillators driving the EMT network.
    Actual,
    /// Averaged model with the LCL impedance constants.
    #[default]
    Averaged,
    /// Averaged model with the filter ignored (`C_a = 1`, others zero).
    Legacy,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Actual, Model::Averaged, Model::Legacy];

    pub fn name(self) -> &'static str {
        match self {
            Model::Actual => "actual",
            Model::Averaged => "averaged",
            Model::Legacy => "legacy",
        }
    }

    pub fn default_dt(self) -> f64 {
        match self {
            Model::Actual => DEFAULT_DT_ACTUAL,
            Model::Averaged | Model::Legacy => DEFAULT_DT_AVERAGED,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "actual" => Ok(Model::Actual),
            "averaged" => Ok(Model::Averaged),
            "legacy" => Ok(Model::Legacy),
            other => Err(format!("unknown model `{other}` (expected actual|averaged|legacy)")),
        }
    }
}

/// Which current the oscillators feed back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackTap {
    /// Grid-side current `i_g`.
    #[default]
    AfterFilter,
    /// Filter inductor current `i_f`.
    BeforeFilter,
}

// ---------------------------------------------------------------------------
// Document layer: what a scenario file contains.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub model: Model,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_interval_s: Option<f64>,
    #[serde(default)]
    pub feedback_tap: FeedbackTap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignDoc>,
    #[serde(rename = "inverter")]
    pub inverters: Vec<InverterDoc>,
    #[serde(rename = "load", default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch: Option<DispatchDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<AcSpec>,
    #[serde(default)]
    pub mode: SmaxMode,
    #[serde(default)]
    pub c_rule: CRule,
    /// Proceed with the parameters of an empty capacitance window.
    #[serde(default)]
    pub allow_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverterDoc {
    pub filter: LclFilter,
    pub line: SeriesRlBranch,
    /// Explicit oscillator parameters; designed from `[design]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<VocParams>,
    /// Scales `sqrt(L/C)` of the designed oscillator at fixed `omega_star`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_scale: Option<f64>,
    #[serde(rename = "V0_V", default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(rename = "theta0_rad", default)]
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    #[serde(rename = "R_ohm")]
    pub r: f64,
    #[serde(rename = "L_henry")]
    pub l: f64,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disconnect_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<PiGains>,
    #[serde(rename = "setpoint", default)]
    pub setpoints: Vec<Setpoint>,
}

impl ScenarioDoc {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Designs or copies the parameters of every inverter and validates the result.
    pub fn resolve(&self) -> Result<Scenario> {
        let design_doc = self.design.clone().unwrap_or_default();
        let spec = design_doc.spec.unwrap_or_else(AcSpec::reference);
        let mut inverters = Vec::with_capacity(self.inverters.len());
        let mut designs = Vec::with_capacity(self.inverters.len());
        for inv in &self.inverters {
            let (params, report) = match inv.params {
                Some(p) => (p, None),
                None => {
                    let report = match design(&spec, &inv.filter, design_doc.mode, design_doc.c_rule) {
                        Ok(r) => r,
                        Err(Error::InfeasibleDesign { report, .. }) if design_doc.allow_infeasible => *report,
                        Err(e) => return Err(e),
                    };
                    (report.params, Some(report))
                }
            };
            let params = match inv.epsilon_scale {
                Some(s) => {
                    positive("epsilon_scale", s)?;
                    params.with_epsilon_scale(s)
                }
                None => params,
            };
            inverters.push(InverterSetup {
                params,
                branch: InverterBranch {
                    filter: inv.filter,
                    line: inv.line.clone(),
                },
                v0: inv.v0.unwrap_or(DEFAULT_V0_FRACTION * params.k_v),
                theta0: inv.theta0,
            });
            designs.push(report);
        }
        let loads = self
            .loads
            .iter()
            .enumerate()
            .map(|(j, l)| LoadSetup {
                branch: SeriesRlBranch::new(
                    l.r,
                    l.l,
                    if l.label.is_empty() {
                        format!("load{}", j + 1)
                    } else {
                        l.label.clone()
                    },
                ),
                connect_s: l.connect_s,
                disconnect_s: l.disconnect_s,
            })
            .collect();
        let scenario = Scenario {
            name: self.name.clone(),
            model: self.model,
            duration: self.duration_s,
            dt: self.dt_s,
            trace_interval: self.trace_interval_s.unwrap_or(DEFAULT_TRACE_INTERVAL),
            feedback_tap: self.feedback_tap,
            inverters,
            loads,
            dispatch: self.dispatch.as_ref().map(|d| DispatchSetup {
                gains: d.gains.unwrap_or_else(PiGains::reference),
                setpoints: d.setpoints.clone(),
            }),
            designs,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Start-up amplitude as a fraction of `k_v`, below the 10 % rise threshold.
pub const DEFAULT_V0_FRACTION: f64 = 0.05;

// ---------------------------------------------------------------------------
// Resolved scenario.

#[derive(Debug, Clone, PartialEq)]
pub struct InverterSetup {
    pub params: VocParams,
    pub branch: InverterBranch,
    /// Initial RMS amplitude.
    pub v0: f64,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSetup {
    pub branch: SeriesRlBranch,
    /// Connected from the start when `None`.
    pub connect_s: Option<f64>,
    pub disconnect_s: Option<f64>,
}

impl LoadSetup {
    pub fn initially_active(&self) -> bool {
        self.connect_s.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSetup {
    pub gains: PiGains,
    pub setpoints: Vec<Setpoint>,
}

impl DispatchSetup {
    /// Setpoint in force at `t`, if the schedule has started.
    pub fn active_at(&self, t: f64) -> Option<&Setpoint> {
        self.setpoints.iter().rev().find(|s| s.t_start <= t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: Model,
    pub duration: f64,
    /// Integration step; the model default when `None`.
    pub dt: Option<f64>,
    pub trace_interval: f64,
    pub feedback_tap: FeedbackTap,
    pub inverters: Vec<InverterSetup>,
    pub loads: Vec<LoadSetup>,
    pub dispatch: Option<DispatchSetup>,
    /// Design reports for inverters whose parameters were designed.
    pub designs: Vec<Option<DesignReport>>,
}

impl Scenario {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        ScenarioDoc::from_file(path)?.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("duration_s", self.duration)?;
        if let Some(dt) = self.dt {
            positive("dt_s", dt)?;
        }
        positive("trace_interval_s", self.trace_interval)?;
        if self.inverters.is_empty() || self.inverters.len() > 2 {
            return Err(Error::invalid(
                "inverter",
                format!("scenarios take one or two inverters, got {}", self.inverters.len()),
            ));
        }
        for inv in &self.inverters {
            inv.params.validate()?;
            positive("V0_V", inv.v0)?;
        }
        self.network().validate()?;
        for load in &self.loads {
            for t in [load.connect_s, load.disconnect_s].into_iter().flatten() {
                if !(0.0..=self.duration).contains(&t) {
                    return Err(Error::invalid(
                        "load",
                        format!("event time {t} s of `{}` is outside [0, {}]", load.branch.label, self.duration),
                    ));
                }
            }
            if let (Some(a), Some(b)) = (load.connect_s, load.disconnect_s) {
                if b <= a {
                    return Err(Error::invalid(
                        "load",
                        format!("`{}` disconnects before it connects", load.branch.label),
                    ));
                }
            }
        }
        if let Some(d) = &self.dispatch {
            if self.inverters.len() != 2 {
                return Err(Error::invalid("dispatch", "dispatch needs two inverters"));
            }
            for w in d.setpoints.windows(2) {
                if w[1].t_start <= w[0].t_start {
                    return Err(Error::invalid("dispatch.setpoint", "t_start_s must increase"));
                }
            }
            for s in &d.setpoints {
                if !(0.0..=self.duration).contains(&s.t_start) {
                    return Err(Error::invalid(
                        "dispatch.setpoint",
                        format!("t_start_s {} is outside [0, {}]", s.t_start, self.duration),
                    ));
                }
            }
            let g = &d.gains;
            if ![g.kp_p, g.ki_p, g.kp_q, g.ki_q].iter().all(|x| x.is_finite()) {
                return Err(Error::invalid("dispatch.gains", "gains must be finite"));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.model.default_dt())
    }

    pub fn network(&self) -> Network {
        Network {
            inverters: self.inverters.iter().map(|i| i.branch.clone()).collect(),
            loads: self.loads.iter().map(|l| l.branch.clone()).collect(),
        }
    }

    /// Times at which the topology or the setpoint changes, inside `(0, duration)`.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .loads
            .iter()
            .flat_map(|l| [l.connect_s, l.disconnect_s])
            .flatten()
            .chain(self.dispatch.iter().flat_map(|d| d.setpoints.iter().map(|s| s.t_start)))
            .filter(|&t| t > 0.0 && t < self.duration)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Applies `VOC_TRACE_DECIMATION_S` if set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(TRACE_DECIMATION_ENV) {
            let dt: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{TRACE_DECIMATION_ENV}: `{v}` is not a number")))?;
            positive("trace_interval_s", dt)?;
            self.trace_interval = dt;
        }
        Ok(())
    }
}
