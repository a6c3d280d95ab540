use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use voc_core::design::{design, droop_curve, CRule, DesignReport, SmaxMode, SweepAxis};
use voc_core::dispatch::{dispatch_equilibrium, DispatchEquilibrium, DispatchSystem};
use voc_core::engine::{
    compare, library, mean_abs_deviation, run_streaming, CsvTraceWriter, Model, RunReport,
    Scenario, ScenarioDoc,
};
use voc_core::phasor::impedance_constants;
use voc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vocsim", version, about = "Virtual oscillator inverter design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design oscillator parameters for every inverter of a scenario.
    Design {
        /// Scenario whose [design] section and filters are used; the
        /// reference specification and filter when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        mode: Option<SmaxMode>,
        #[arg(long = "c-rule")]
        c_rule: Option<CRule>,
    },
    /// Equilibrium voltage and frequency along a power sweep (CSV).
    Droop {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Swept quantity.
        #[arg(long, default_value = "P")]
        axis: SweepAxis,
        /// Value of the other quantity, W or var.
        #[arg(long, default_value_t = 0.0)]
        fixed: f64,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 1500.0)]
        to: f64,
        #[arg(long, default_value_t = 51)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario; the trace goes to --out (stdout if omitted).
    Simulate(RunArgs),
    /// Run a scenario under all three models and write one trace per model.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Base name; `_actual`, `_averaged` and `_legacy` are appended to its stem.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the power-dispatch scenario and report setpoint tracking.
    Dispatch(RunArgs),
    /// Steady state, security margin and gains for an inverter 1 setpoint.
    CheckSetpoint {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Active power setpoint, W.
        #[arg(long)]
        p: f64,
        /// Reactive power setpoint, var.
        #[arg(long)]
        q: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    dt: Option<f64>,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(if e.is_infeasible() { 2 } else { 1 })
        }
    }
}

const INFEASIBLE: u8 = 2;

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Design { scenario, mode, c_rule } => cmd_design(scenario.as_deref(), mode, c_rule),
        Command::Droop { scenario, axis, fixed, from, to, points, out } => {
            let s = load(scenario.as_deref(), library::droop_ideal, None, None)?;
            let inv = &s.inverters[0];
            let k = impedance_constants(&inv.branch.filter, inv.params.omega_star)?;
            let rows = droop_curve(&inv.params, &k, axis, fixed, (from, to), points);
            let mut w = csv::Writer::from_writer(output(out.as_deref())?);
            for r in &rows {
                w.serialize(r).map_err(Error::from)?;
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            let path = args
                .scenario
                .as_deref()
                .ok_or_else(|| Error::Config("simulate needs --scenario".into()))?;
            let s = load(Some(path), library::rise_time, args.model, args.dt)?;
            let report = simulate(&s, args.out.as_deref())?;
            print_toml(&report, args.out.is_none())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { scenario, out } => cmd_compare(&scenario, &out),
        Command::Dispatch(args) => cmd_dispatch(args),
        Command::CheckSetpoint { scenario, p, q } => {
            let s = load(scenario.as_deref(), library::dispatch, None, None)?;
            let eq = setpoint(&s, p, q)?;
            print_toml(&eq, false)?;
            Ok(if eq.achievable { ExitCode::SUCCESS } else { ExitCode::from(INFEASIBLE) })
        }
    }
}

fn load(
    path: Option<&Path>,
    builtin: fn() -> ScenarioDoc,
    model: Option<Model>,
    dt: Option<f64>,
) -> Result<Scenario> {
    let doc = match path {
        Some(p) => ScenarioDoc::from_file(p)?,
        None => builtin(),
    };
    let mut s = doc.resolve()?;
    if let Some(m) = model {
        if m != s.model {
            s.model = m;
            s.dt = None;
        }
    }
    if dt.is_some() {
        s.dt = dt;
    }
    s.apply_env_overrides()?;
    Ok(s)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Prints a report as TOML on stdout, or on stderr when stdout carries a trace.
fn print_toml<T: Serialize>(value: &T, to_stderr: bool) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignEntry {
    binding: Vec<&'static str>,
    #[serde(flatten)]
    report: DesignReport,
}

#[derive(Serialize)]
struct DesignOutput {
    inverter: Vec<DesignEntry>,
}

fn cmd_design(path: Option<&Path>, mode: Option<SmaxMode>, c_rule: Option<CRule>) -> Result<ExitCode> {
    let doc = match path {
        Some(p) => ScenarioDoc::from_file(p)?,
        None => library::rise_time(),
    };
    let d = doc.design.clone().unwrap_or_default();
    let spec = d.spec.unwrap_or_else(voc_core::design::AcSpec::reference);
    let mode = mode.unwrap_or(d.mode);
    let c_rule = c_rule.unwrap_or(d.c_rule);
    let mut entries = Vec::new();
    for inv in &doc.inverters {
        let report = match design(&spec, &inv.filter, mode, c_rule) {
            Ok(r) => r,
            Err(Error::InfeasibleDesign { report, .. }) => *report,
            Err(e) => return Err(e),
        };
        entries.push(DesignEntry {
            binding: report.window.binding_names(),
            report,
        });
    }
    let feasible = entries.iter().all(|e| e.report.feasible);
    print_toml(&DesignOutput { inverter: entries }, false)?;
    Ok(if feasible { ExitCode::SUCCESS } else { ExitCode::from(INFEASIBLE) })
}

fn simulate(s: &Scenario, out: Option<&Path>) -> Result<RunReport> {
    let mut writer = CsvTraceWriter::new(output(out)?, s.inverters.len())?;
    let report = run_streaming(s, |row| writer.write_row(row))?;
    writer.finish()?.flush()?;
    Ok(report)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Deviation {
    t_from_s: f64,
    averaged_V_rms_V: f64,
    legacy_V_rms_V: f64,
    averaged_P_W: Option<f64>,
    legacy_P_W: Option<f64>,
}

#[derive(Serialize)]
struct CompareOutput {
    actual: RunReport,
    averaged: RunReport,
    legacy: RunReport,
    /// Mean absolute deviation from the actual model, inverter 1.
    deviation: Deviation,
}

fn cmd_compare(path: &Path, out: &Path) -> Result<ExitCode> {
    let mut s = load(Some(path), library::comparison, None, None)?;
    s.dt = None;
    let c = compare(&s)?;
    for (suffix, run) in [("actual", &c.actual), ("averaged", &c.averaged), ("legacy", &c.legacy)] {
        let w = BufWriter::new(File::create(with_suffix(out, suffix))?);
        voc_core::engine::write_csv(w, s.inverters.len(), &run.rows)?.flush()?;
    }
    let t_from = (0.5 * s.duration).min(1.0);
    let dev = |other: &[voc_core::engine::TraceRow], p: bool| {
        mean_abs_deviation(&c.actual.rows, other, 0, t_from, |r| if p { r.p } else { Some(r.v_rms) })
    };
    let deviation = Deviation {
        t_from_s: t_from,
        averaged_V_rms_V: dev(&c.averaged.rows, false).unwrap_or(f64::NAN),
        legacy_V_rms_V: dev(&c.legacy.rows, false).unwrap_or(f64::NAN),
        averaged_P_W: dev(&c.averaged.rows, true),
        legacy_P_W: dev(&c.legacy.rows, true),
    };
    print_toml(
        &CompareOutput {
            actual: c.actual.report,
            averaged: c.averaged.report,
            legacy: c.legacy.report,
            deviation,
        },
        false,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Tracking {
    t_start_s: f64,
    P_star_W: f64,
    Q_star_var: f64,
    P_W: Option<f64>,
    Q_var: Option<f64>,
    margin: Option<f64>,
}

#[derive(Serialize)]
struct DispatchOutput {
    tracking: Vec<Tracking>,
    report: RunReport,
}

fn cmd_dispatch(args: RunArgs) -> Result<ExitCode> {
    let s = load(args.scenario.as_deref(), library::dispatch, args.model, args.dt)?;
    if s.dispatch.is_none() {
        return Err(Error::Config("scenario has no [dispatch] section".into()));
    }
    let report = simulate(&s, args.out.as_deref())?;
    let tracking = report
        .segments
        .iter()
        .filter_map(|seg| {
            let sp = seg.setpoint?;
            let inv = &seg.last.inverters[0];
            Some(Tracking {
                t_start_s: sp.t_start,
                P_star_W: sp.p_star,
                Q_star_var: sp.q_star,
                P_W: inv.p,
                Q_var: inv.q,
                margin: seg.last.margin,
            })
        })
        .collect();
    print_toml(&DispatchOutput { tracking, report }, args.out.is_none())?;
    Ok(ExitCode::SUCCESS)
}

fn setpoint(s: &Scenario, p: f64, q: f64) -> Result<DispatchEquilibrium> {
    if s.inverters.len() != 2 {
        return Err(Error::Config("check-setpoint needs a two-inverter scenario".into()));
    }
    let sys = DispatchSystem::new([s.inverters[0].params, s.inverters[1].params], s.network())?;
    dispatch_equilibrium(p, q, &sys)
}
