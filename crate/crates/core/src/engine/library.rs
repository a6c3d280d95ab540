//! Built-in scenarios. The files under `scenarios/` at the repository root are
//! serialisations of these documents.

use super::scenario::{
    DesignDoc, DispatchDoc, FeedbackTap, InverterDoc, LoadDoc, Model, ScenarioDoc, SCHEMA_VERSION,
};
use crate::design::{AcSpec, CRule, SmaxMode};
use crate::dispatch::{PiGains, Setpoint};
use crate::phasor::{LclFilter, SeriesRlBranch};
use crate::OMEGA_60HZ;

pub fn reference_filter() -> LclFilter {
    LclFilter {
        r_f: 0.15,
        l_f: 2.48e-3,
        r_c: 3.3,
        c_f: 4.7e-6,
        r_g: 0.13,
        l_g: 0.97e-3,
    }
}

/// Larger filter used to separate the averaged models: `10 L_f`, `19.75 C_f`.
pub fn comparison_filter() -> LclFilter {
    let f = reference_filter();
    LclFilter {
        l_f: 10.0 * f.l_f,
        c_f: 19.75 * f.c_f,
        ..f
    }
}

pub fn reference_line() -> SeriesRlBranch {
    SeriesRlBranch::new(0.15, 2.48e-3, "line")
}

pub fn reference_load() -> LoadDoc {
    LoadDoc {
        r: 22.1,
        l: 14.4e-3,
        label: "z_L".into(),
        connect_s: None,
        disconnect_s: None,
    }
}

/// Five-step setpoint schedule after the initial free-running interval.
pub fn dispatch_schedule() -> Vec<Setpoint> {
    [(500.0, 83.0, 5.0), (500.0, 120.0, 15.0), (500.0, 50.0, 25.0), (100.0, 50.0, 35.0), (100.0, 120.0, 55.0)]
        .into_iter()
        .map(|(p_star, q_star, t_start)| Setpoint { p_star, q_star, t_start })
        .collect()
}

fn inverter(filter: LclFilter) -> InverterDoc {
    InverterDoc {
        filter,
        line: reference_line(),
        params: None,
        epsilon_scale: None,
        v0: None,
        theta0: 0.0,
    }
}

fn base(name: &str, model: Model, duration_s: f64) -> ScenarioDoc {
    ScenarioDoc {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        model,
        duration_s,
        dt_s: None,
        trace_interval_s: None,
        feedback_tap: FeedbackTap::AfterFilter,
        design: Some(DesignDoc {
            spec: Some(AcSpec::reference()),
            mode: SmaxMode::RatedPoint,
            c_rule: CRule::Max,
            allow_infeasible: false,
        }),
        inverters: vec![],
        loads: vec![],
        dispatch: None,
    }
}

/// Unloaded single inverter starting from a small amplitude.
pub fn rise_time() -> ScenarioDoc {
    ScenarioDoc {
        inverters: vec![inverter(reference_filter())],
        ..base("rise-time", Model::Actual, 1.0)
    }
}

/// Single inverter behind a lossless filter, used for the droop curves.
pub fn droop_ideal() -> ScenarioDoc {
    ScenarioDoc {
        inverters: vec![inverter(reference_filter().ideal())],
        loads: vec![reference_load()],
        ..base("droop-ideal", Model::Averaged, 2.0)
    }
}

/// Two inverters behind the large filter with `epsilon / 8`, a fixed load and
/// a second branch stepped in at 2 s and out at 4 s.
///
/// The capacitance window of the large filter is empty, so the design
/// proceeds with the rise-time bound.
pub fn comparison() -> ScenarioDoc {
    let inv = InverterDoc {
        epsilon_scale: Some(0.125),
        v0: Some(120.0),
        ..inverter(comparison_filter())
    };
    let mut doc = ScenarioDoc {
        inverters: vec![inv.clone(), inv],
        loads: vec![
            LoadDoc {
                r: 6.9,
                l: 16.6 / OMEGA_60HZ,
                label: "z_L".into(),
                connect_s: None,
                disconnect_s: None,
            },
            LoadDoc {
                r: 44.24,
                l: 10.85 / OMEGA_60HZ,
                label: "z_S".into(),
                connect_s: Some(2.0),
                disconnect_s: Some(4.0),
            },
        ],
        ..base("comparison", Model::Actual, 6.0)
    };
    if let Some(d) = doc.design.as_mut() {
        d.allow_infeasible = true;
    }
    doc
}

/// Two identical inverters sharing the reference load; inverter 1 follows
/// the reference setpoint schedule.
pub fn dispatch() -> ScenarioDoc {
    ScenarioDoc {
        inverters: vec![inverter(reference_filter()), inverter(reference_filter())],
        loads: vec![reference_load()],
        dispatch: Some(DispatchDoc {
            gains: Some(PiGains::reference()),
            setpoints: dispatch_schedule(),
        }),
        ..base("dispatch", Model::Averaged, 65.0)
    }
}

/// All built-in scenarios with their file stems.
pub fn all() -> Vec<(&'static str, ScenarioDoc)> {
    vec![
        ("rise_time", rise_time()),
        ("droop_ideal", droop_ideal()),
        ("comparison", comparison()),
        ("dispatch", dispatch()),
    ]
}
