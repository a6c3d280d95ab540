use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use serde::Serialize;

use super::fourier::{fourier_components, MIN_CYCLES};
use super::rk4::Rk4;
use super::scenario::{FeedbackTap, Model, Scenario};
use crate::averaged::{averaged_derivatives, legacy_constants, AveragedState};
use crate::dispatch::{pi_step, security_margin, PiLimits, PiState, Setpoint};
use crate::oscillator::{voc_derivatives, EmtModel, FrequencyEstimator, OscState, PowerMeter, VocParams};
use crate::phasor::{impedance_constants, ImpedanceConstants, Network, PhasorSolution, Power};
use crate::{Complex, Error, Result};

/// Baumgarte time constant of the PCC constraint, in integration steps.
const BAUMGARTE_STEPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverterRow {
    #[serde(rename = "V_rms_V")]
    pub v_rms: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    pub freq_hz: Option<f64>,
    #[serde(rename = "P_W")]
    pub p: Option<f64>,
    #[serde(rename = "Q_var")]
    pub q: Option<f64>,
    pub k_v: f64,
    pub k_i: f64,
}

/// One decimated trace sample. `None` marks a quantity that is not yet
/// available (meter warm-up, dispatch not started).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    #[serde(rename = "t_s")]
    pub t: f64,
    pub inverters: Vec<InverterRow>,
    #[serde(rename = "load_P_W")]
    pub load_p: Option<f64>,
    #[serde(rename = "load_Q_var")]
    pub load_q: Option<f64>,
    pub margin: Option<f64>,
    /// Filter and line losses, phasor models only; not written to CSV.
    #[serde(skip)]
    pub losses: Option<f64>,
}

impl TraceRow {
    /// `(sum P_k - P_load - losses) / P_load` when every term is known.
    pub fn power_balance(&self) -> Option<f64> {
        let gen: Option<f64> = self.inverters.iter().map(|r| r.p).sum();
        let load = self.load_p?;
        Some((gen? - load - self.losses?) / load)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Harmonics {
    pub fundamental_hz: f64,
    #[serde(rename = "first_V")]
    pub first: f64,
    #[serde(rename = "third_V")]
    pub third: f64,
    pub ratio: f64,
}

/// Values at the end of one interval between events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSummary {
    #[serde(rename = "t_start_s")]
    pub t_start: f64,
    #[serde(rename = "t_end_s")]
    pub t_end: f64,
    pub setpoint: Option<Setpoint>,
    pub last: TraceRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: Model,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    pub steps: u64,
    /// 10 %–90 % build-up time of inverter 1's amplitude, if it started below 10 %.
    #[serde(rename = "rise_time_s")]
    pub rise_time: Option<f64>,
    /// Inverter 1 voltage harmonics over the final cycles, actual model only.
    pub harmonics: Option<Harmonics>,
    pub segments: Vec<SegmentSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    pub report: RunReport,
}

/// Runs a scenario and collects the whole trace.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let mut rows = Vec::new();
    let report = run_streaming(scenario, |row| {
        rows.push(row.clone());
        Ok(())
    })?;
    Ok(RunOutput { rows, report })
}

/// Runs a scenario, handing each trace row to `sink` as it is produced.
pub fn run_streaming(
    scenario: &Scenario,
    mut sink: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<RunReport> {
    scenario.validate()?;
    let dt = scenario.dt();
    let stride = (scenario.trace_interval / dt).round().max(1.0);
    if ((stride * dt - scenario.trace_interval) / scenario.trace_interval).abs() > 1e-6 {
        return Err(Error::invalid(
            "trace_interval_s",
            format!("{} s is not a multiple of dt = {dt} s", scenario.trace_interval),
        ));
    }
    let stride = stride as u64;
    let n_steps = (scenario.duration / dt - 1e-9).ceil().max(0.0) as u64;

    let mut sim: Box<dyn Stepper> = match scenario.model {
        Model::Actual => Box::new(ActualSim::new(scenario, dt)?),
        Model::Averaged | Model::Legacy => Box::new(AveragedSim::new(scenario)?),
    };

    // load events as (step, branch, connect)
    let mut events: Vec<(u64, usize, bool)> = Vec::new();
    for (j, load) in scenario.loads.iter().enumerate() {
        if let Some(t) = load.connect_s {
            events.push((step_of(t, dt), j, true));
        }
        if let Some(t) = load.disconnect_s {
            events.push((step_of(t, dt), j, false));
        }
    }
    events.sort_by_key(|e| (e.0, e.1));
    let mut next_event = 0;

    let boundaries = scenario.event_times();
    let mut segments = Vec::new();
    let mut seg_start = 0.0;
    let mut last_row: Option<TraceRow> = None;

    let mut pi: Option<PiState> = None;
    let limits = PiLimits::around(&scenario.inverters[0].params);
    let v_ref = sim.reference_amplitude();
    let mut rise = RiseTimer::new(v_ref, sim.amplitude(0));

    let mut emit = |row: TraceRow, sink: &mut dyn FnMut(&TraceRow) -> Result<()>| -> Result<()> {
        while segments.len() < boundaries.len() && row.t >= boundaries[segments.len()] {
            if let Some(prev) = last_row.take() {
                segments.push(summary(scenario, seg_start, boundaries[segments.len()], prev));
            } else {
                segments.push(SegmentSummary {
                    t_start: seg_start,
                    t_end: boundaries[segments.len()],
                    setpoint: None,
                    last: row.clone(),
                });
            }
            seg_start = boundaries[segments.len() - 1];
        }
        sink(&row)?;
        last_row = Some(row);
        Ok(())
    };

    for n in 0..=n_steps {
        let t = n as f64 * dt;
        let abort = |e: Error| Error::Aborted { t, source: Box::new(e) };

        while next_event < events.len() && events[next_event].0 <= n {
            let (_, j, connect) = events[next_event];
            sim.set_load(j, connect);
            next_event += 1;
        }
        sim.observe(t).map_err(abort)?;
        rise.update(t, sim.amplitude(0));

        let setpoint = scenario.dispatch.as_ref().and_then(|d| d.active_at(t).map(|sp| (d, *sp)));
        if let Some((d, sp)) = setpoint {
            let state = pi.get_or_insert_with(|| {
                let (k_v, k_i) = sim.gains(0);
                PiState { e_p: k_v, e_q: k_i }
            });
            if let Some(power) = sim.power(0) {
                let (k_v, k_i, next) = pi_step(*state, &d.gains, &limits, power, &sp, dt);
                *state = next;
                sim.set_gains(0, k_v, k_i);
            }
        }

        if n_steps > 0 && n % stride == 0 {
            let t_row = (n / stride) as f64 * scenario.trace_interval;
            let mut row = sim.row(t_row).map_err(abort)?;
            if let Some((_, sp)) = setpoint {
                let (k_v, k_i) = sim.gains(0);
                row.margin = Some(security_margin(
                    row.inverters[0].v_rms,
                    sp.p_star,
                    sp.q_star,
                    k_v * k_i,
                    &scenario.inverters[0].params,
                    sim.constants(0),
                ));
            }
            emit(row, &mut sink)?;
        }
        if n < n_steps {
            sim.step(t, dt).map_err(abort)?;
        }
    }
    if let Some(prev) = last_row {
        segments.push(summary(scenario, seg_start, scenario.duration, prev));
    }

    Ok(RunReport {
        model: scenario.model,
        dt,
        steps: n_steps,
        rise_time: rise.result(),
        harmonics: sim.harmonics(),
        segments,
    })
}

fn step_of(t: f64, dt: f64) -> u64 {
    (t / dt - 1e-9).ceil().max(0.0) as u64
}

fn summary(scenario: &Scenario, t_start: f64, t_end: f64, last: TraceRow) -> SegmentSummary {
    SegmentSummary {
        t_start,
        t_end,
        setpoint: scenario
            .dispatch
            .as_ref()
            .and_then(|d| d.active_at(t_start).copied()),
        last,
    }
}

/// Records when an amplitude first crosses 10 % and 90 % of a reference.
struct RiseTimer {
    v_ref: f64,
    armed: bool,
    prev: Option<(f64, f64)>,
    t10: Option<f64>,
    t90: Option<f64>,
}

impl RiseTimer {
    fn new(v_ref: f64, v0: f64) -> Self {
        Self {
            v_ref,
            armed: v0 < 0.1 * v_ref,
            prev: None,
            t10: None,
            t90: None,
        }
    }

    fn update(&mut self, t: f64, v: f64) {
        if !self.armed || self.t90.is_some() {
            return;
        }
        if let Some((tp, vp)) = self.prev {
            let cross = |level: f64| tp + (t - tp) * (level - vp) / (v - vp);
            if self.t10.is_none() && v >= 0.1 * self.v_ref {
                self.t10 = Some(cross(0.1 * self.v_ref));
            }
            if self.t10.is_some() && v >= 0.9 * self.v_ref {
                self.t90 = Some(cross(0.9 * self.v_ref));
            }
        }
        self.prev = Some((t, v));
    }

    fn result(&self) -> Option<f64> {
        Some(self.t90? - self.t10?)
    }
}

/// What the time loop needs from a model.
trait Stepper: Send {
    /// Samples measurements at the current state, time `t`.
    fn observe(&mut self, t: f64) -> Result<()>;
    fn step(&mut self, t: f64, dt: f64) -> Result<()>;
    fn row(&mut self, t: f64) -> Result<TraceRow>;
    fn set_load(&mut self, j: usize, connect: bool);
    fn amplitude(&self, k: usize) -> f64;
    /// Power used for dispatch; `None` while unavailable.
    fn power(&self, k: usize) -> Option<Power>;
    fn gains(&self, k: usize) -> (f64, f64);
    fn set_gains(&mut self, k: usize, k_v: f64, k_i: f64);
    fn constants(&self, k: usize) -> &ImpedanceConstants;
    /// Open-circuit amplitude used for the rise-time thresholds.
    fn reference_amplitude(&self) -> f64;
    fn harmonics(&self) -> Option<Harmonics>;
}

fn with_gains(p: &VocParams, (k_v, k_i): (f64, f64)) -> VocParams {
    VocParams { k_v, k_i, ..*p }
}

// ---------------------------------------------------------------------------
// Unaveraged oscillators + EMT network.

struct ActualSim {
    emt: EmtModel,
    params: Vec<VocParams>,
    gains: Vec<(f64, f64)>,
    constants: Vec<ImpedanceConstants>,
    tap: FeedbackTap,
    n: usize,
    /// `[V_k, phi_k]` per inverter, then the EMT state.
    x: Vec<f64>,
    active: Vec<bool>,
    pending_open: Vec<bool>,
    meters: Vec<PowerMeter>,
    amplitude_means: Vec<PowerMeter>,
    freq: Vec<FrequencyEstimator>,
    load_meter: PowerMeter,
    omega_star: f64,
    dt: f64,
    wave: VecDeque<f64>,
    wave_capacity: usize,
    rk: Rk4,
}

impl ActualSim {
    fn new(s: &Scenario, dt: f64) -> Result<Self> {
        let network = s.network();
        let emt = EmtModel::new(network, BAUMGARTE_STEPS * dt)?;
        let n = s.inverters.len();
        let omega_star = s.inverters[0].params.omega_star;
        let constants = s
            .inverters
            .iter()
            .map(|i| match s.feedback_tap {
                FeedbackTap::AfterFilter => impedance_constants(&i.branch.filter, i.params.omega_star),
                FeedbackTap::BeforeFilter => Ok(legacy_constants()),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut x = Vec::with_capacity(2 * n + emt.len());
        for inv in &s.inverters {
            x.extend([inv.v0, inv.theta0]);
        }
        x.resize(2 * n + emt.len(), 0.0);
        let period = 2.0 * PI / omega_star;
        let wave_capacity = ((MIN_CYCLES as f64 + 2.0) * period / dt).ceil() as usize;
        Ok(Self {
            params: s.inverters.iter().map(|i| i.params).collect(),
            gains: s.inverters.iter().map(|i| (i.params.k_v, i.params.k_i)).collect(),
            constants,
            tap: s.feedback_tap,
            n,
            x,
            active: s.loads.iter().map(|l| l.initially_active()).collect(),
            pending_open: vec![false; s.loads.len()],
            meters: vec![PowerMeter::new(omega_star); n],
            amplitude_means: vec![PowerMeter::new(omega_star); n],
            freq: vec![FrequencyEstimator::new(omega_star); n],
            load_meter: PowerMeter::new(omega_star),
            omega_star,
            dt,
            wave: VecDeque::with_capacity(wave_capacity),
            wave_capacity,
            rk: Rk4::new(0),
            emt,
        })
    }

    fn emt_offset(&self) -> usize {
        2 * self.n
    }

    fn derivatives(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let off = 2 * self.n;
        let (osc, e) = x.split_at(off);
        let mut v_term = [0.0; 2];
        for k in 0..self.n {
            let s = OscState {
                v: osc[2 * k],
                phi: osc[2 * k + 1],
            };
            let i_fb = match self.tap {
                FeedbackTap::AfterFilter => e[3 * k + 2],
                FeedbackTap::BeforeFilter => e[3 * k],
            };
            let p = with_gains(&self.params[k], self.gains[k]);
            let (dv, dphi) = voc_derivatives(s, i_fb, &p)?;
            dx[2 * k] = dv;
            dx[2 * k + 1] = dphi;
            v_term[k] = SQRT_2 * s.v * s.phi.cos();
        }
        self.emt
            .derivatives(e, &v_term[..self.n], &self.active, &mut dx[off..])?;
        Ok(())
    }

    fn load_current(&self) -> f64 {
        let off = self.emt_offset() + 3 * self.n;
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(j, _)| self.x[off + j])
            .sum()
    }
}

impl Stepper for ActualSim {
    fn observe(&mut self, t: f64) -> Result<()> {
        let off = self.emt_offset();
        for k in 0..self.n {
            let (v_amp, phi) = (self.x[2 * k], self.x[2 * k + 1]);
            let v = SQRT_2 * v_amp * phi.cos();
            self.freq[k].push(t, phi);
            if let Some(w) = self.freq[k].omega() {
                self.meters[k].set_frequency(w);
                self.amplitude_means[k].set_frequency(w);
                if k == 0 {
                    self.load_meter.set_frequency(w);
                }
            }
            self.meters[k].push(t, v, self.x[off + 3 * k]);
            self.amplitude_means[k].push(t, v_amp, 1.0);
            if k == 0 {
                if self.wave.len() == self.wave_capacity {
                    self.wave.pop_front();
                }
                self.wave.push_back(v);
            }
        }
        if !self.active.is_empty() {
            let v_pcc = self.emt.pcc_voltage(&self.x[off..], &self.active)?;
            let i_load = self.load_current();
            self.load_meter.push(t, v_pcc, i_load);
        }
        Ok(())
    }

    fn step(&mut self, t: f64, dt: f64) -> Result<()> {
        let mut rk = std::mem::replace(&mut self.rk, Rk4::new(0));
        let mut x = std::mem::take(&mut self.x);
        let before: Vec<f64> = self.load_branch_currents(&x);
        let res = rk.step(&mut x, t, dt, |_, x, dx| self.derivatives(x, dx));
        self.rk = rk;
        self.x = x;
        res?;

        // ideal breakers open at the first current zero after the request
        let base = self.emt_offset() + 3 * self.n;
        for (j, &was) in before.iter().enumerate() {
            if self.pending_open[j] {
                let after = self.x[base + j];
                if after == 0.0 || after.signum() != was.signum() {
                    self.active[j] = false;
                    self.pending_open[j] = false;
                    self.x[base + j] = 0.0;
                }
            }
        }
        Ok(())
    }

    fn row(&mut self, t: f64) -> Result<TraceRow> {
        let inverters = (0..self.n)
            .map(|k| {
                let (v_amp, phi) = (self.x[2 * k], self.x[2 * k + 1]);
                let power = self.meters[k].average().ok();
                InverterRow {
                    v_rms: self.amplitude_means[k].average().map_or(v_amp, |m| m.p),
                    theta: phi - self.omega_star * t,
                    freq_hz: self.freq[k].omega().map(|w| w / (2.0 * PI)),
                    p: power.map(|s| s.p),
                    q: power.map(|s| s.q),
                    k_v: self.gains[k].0,
                    k_i: self.gains[k].1,
                }
            })
            .collect();
        let load = if self.active.is_empty() && self.pending_open.iter().all(|p| !p) {
            Some(Power::new(0.0, 0.0))
        } else {
            self.load_meter.average().ok()
        };
        Ok(TraceRow {
            t,
            inverters,
            load_p: load.map(|s| s.p),
            load_q: load.map(|s| s.q),
            margin: None,
            losses: None,
        })
    }

    fn set_load(&mut self, j: usize, connect: bool) {
        if connect {
            if !self.active[j] {
                let idx = self.emt_offset() + 3 * self.n + j;
                self.x[idx] = 0.0;
            }
            self.active[j] = true;
            self.pending_open[j] = false;
        } else if self.active[j] {
            self.pending_open[j] = true;
        }
    }

    fn amplitude(&self, k: usize) -> f64 {
        self.x[2 * k]
    }

    fn power(&self, k: usize) -> Option<Power> {
        self.meters[k].average().ok()
    }

    fn gains(&self, k: usize) -> (f64, f64) {
        self.gains[k]
    }

    fn set_gains(&mut self, k: usize, k_v: f64, k_i: f64) {
        self.gains[k] = (k_v, k_i);
    }

    fn constants(&self, k: usize) -> &ImpedanceConstants {
        &self.constants[k]
    }

    fn reference_amplitude(&self) -> f64 {
        self.params[0].v_oc(&self.constants[0])
    }

    fn harmonics(&self) -> Option<Harmonics> {
        let f = self.freq[0].omega()? / (2.0 * PI);
        let samples: Vec<f64> = self.wave.iter().copied().collect();
        let a = fourier_components(&samples, self.dt, f, &[1, 3]).ok()?;
        Some(Harmonics {
            fundamental_hz: f,
            first: a[0],
            third: a[1],
            ratio: a[1] / a[0],
        })
    }
}

impl ActualSim {
    fn load_branch_currents(&self, x: &[f64]) -> Vec<f64> {
        let base = self.emt_offset() + 3 * self.n;
        x[base..].to_vec()
    }
}

// ---------------------------------------------------------------------------
// Averaged models with phasor-closed power.

struct AveragedSim {
    network: Network,
    params: Vec<VocParams>,
    gains: Vec<(f64, f64)>,
    constants: Vec<ImpedanceConstants>,
    /// `[V_k, theta_k]` per inverter.
    x: Vec<f64>,
    active: Vec<bool>,
    /// Frame frequency and the frequency at which impedances are evaluated.
    omega: f64,
    rk: Rk4,
}

impl AveragedSim {
    fn new(s: &Scenario) -> Result<Self> {
        let legacy = s.model == Model::Legacy || s.feedback_tap == FeedbackTap::BeforeFilter;
        let constants = s
            .inverters
            .iter()
            .map(|i| {
                if legacy {
                    Ok(legacy_constants())
                } else {
                    impedance_constants(&i.branch.filter, i.params.omega_star)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut x = Vec::with_capacity(2 * s.inverters.len());
        for inv in &s.inverters {
            x.extend([inv.v0, inv.theta0]);
        }
        Ok(Self {
            network: s.network(),
            params: s.inverters.iter().map(|i| i.params).collect(),
            gains: s.inverters.iter().map(|i| (i.params.k_v, i.params.k_i)).collect(),
            constants,
            rk: Rk4::new(x.len()),
            x,
            active: s.loads.iter().map(|l| l.initially_active()).collect(),
            omega: s.inverters[0].params.omega_star,
        })
    }

    fn solve(&self, x: &[f64]) -> Result<PhasorSolution> {
        let sources: Vec<Complex> = x
            .chunks_exact(2)
            .map(|c| Complex::from_polar(c[0], c[1]))
            .collect();
        self.network.solve_phasor(&sources, &self.active, self.omega)
    }

    fn derivatives(&self, x: &[f64], dx: &mut [f64]) -> Result<PhasorSolution> {
        let sol = self.solve(x)?;
        for (k, inv) in sol.inverters.iter().enumerate() {
            let p = with_gains(&self.params[k], self.gains[k]);
            let (dv, dth) = averaged_derivatives(
                AveragedState {
                    v_bar: x[2 * k],
                    theta_bar: x[2 * k + 1],
                },
                inv.terminal_power,
                &p,
                &self.constants[k],
                self.omega,
            )?;
            dx[2 * k] = dv;
            dx[2 * k + 1] = dth;
        }
        Ok(sol)
    }
}

impl Stepper for AveragedSim {
    fn observe(&mut self, _t: f64) -> Result<()> {
        Ok(())
    }

    fn step(&mut self, t: f64, dt: f64) -> Result<()> {
        let mut rk = std::mem::replace(&mut self.rk, Rk4::new(0));
        let mut x = std::mem::take(&mut self.x);
        let res = rk.step(&mut x, t, dt, |_, x, dx| self.derivatives(x, dx).map(|_| ()));
        self.rk = rk;
        self.x = x;
        res
    }

    fn row(&mut self, t: f64) -> Result<TraceRow> {
        let mut dx = vec![0.0; self.x.len()];
        let sol = self.derivatives(&self.x, &mut dx)?;
        let inverters = sol
            .inverters
            .iter()
            .enumerate()
            .map(|(k, inv)| InverterRow {
                v_rms: self.x[2 * k],
                theta: self.x[2 * k + 1],
                freq_hz: Some((self.omega + dx[2 * k + 1]) / (2.0 * PI)),
                p: Some(inv.terminal_power.p),
                q: Some(inv.terminal_power.q),
                k_v: self.gains[k].0,
                k_i: self.gains[k].1,
            })
            .collect();
        Ok(TraceRow {
            t,
            inverters,
            load_p: Some(sol.load_power.p),
            load_q: Some(sol.load_power.q),
            margin: None,
            losses: Some(sol.losses),
        })
    }

    fn set_load(&mut self, j: usize, connect: bool) {
        self.active[j] = connect;
    }

    fn amplitude(&self, k: usize) -> f64 {
        self.x[2 * k]
    }

    fn power(&self, k: usize) -> Option<Power> {
        self.solve(&self.x).ok().map(|s| s.inverters[k].terminal_power)
    }

    fn gains(&self, k: usize) -> (f64, f64) {
        self.gains[k]
    }

    fn set_gains(&mut self, k: usize, k_v: f64, k_i: f64) {
        self.gains[k] = (k_v, k_i);
    }

    fn constants(&self, k: usize) -> &ImpedanceConstants {
        &self.constants[k]
    }

    fn reference_amplitude(&self) -> f64 {
        self.params[0].v_oc(&self.constants[0])
    }

    fn harmonics(&self) -> Option<Harmonics> {
        None
    }
}

// ---------------------------------------------------------------------------
// Model comparison and CSV output.

#[derive(Debug, Clone)]
pub struct Comparison {
    pub actual: RunOutput,
    pub averaged: RunOutput,
    pub legacy: RunOutput,
}

/// Runs the scenario under all three models concurrently.
pub fn compare(scenario: &Scenario) -> Result<Comparison> {
    let with_model = |m: Model| Scenario {
        model: m,
        dt: None,
        ..scenario.clone()
    };
    let (a, b, c) = std::thread::scope(|s| {
        let a = s.spawn(|| run(&with_model(Model::Actual)));
        let b = s.spawn(|| run(&with_model(Model::Averaged)));
        let c = s.spawn(|| run(&with_model(Model::Legacy)));
        (
            a.join().expect("actual run panicked"),
            b.join().expect("averaged run panicked"),
            c.join().expect("legacy run panicked"),
        )
    });
    Ok(Comparison {
        actual: a?,
        averaged: b?,
        legacy: c?,
    })
}

/// Mean of `|field(reference) - field(other)|` over rows at matching times
/// `t >= t_from` where both values are available.
pub fn mean_abs_deviation(
    reference: &[TraceRow],
    other: &[TraceRow],
    inverter: usize,
    t_from: f64,
    field: impl Fn(&InverterRow) -> Option<f64>,
) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    let mut j = 0;
    for r in reference.iter().filter(|r| r.t >= t_from) {
        while j < other.len() && other[j].t < r.t - 1e-12 {
            j += 1;
        }
        let Some(o) = other.get(j) else { break };
        if (o.t - r.t).abs() > 1e-12 {
            continue;
        }
        if let (Some(a), Some(b)) = (field(&r.inverters[inverter]), field(&o.inverters[inverter])) {
            sum += (a - b).abs();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Fixed CSV column names for `n_inverters`.
pub fn csv_header(n_inverters: usize) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for k in 1..=n_inverters {
        for c in ["V_rms_V", "theta_rad", "freq_hz", "P_W", "Q_var", "kv", "ki"] {
            h.push(format!("inv{k}_{c}"));
        }
    }
    h.extend(["load_P_W", "load_Q_var", "margin"].map(String::from));
    h
}

/// Streaming CSV writer for trace rows.
pub struct CsvTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(w: W, n_inverters: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(csv_header(n_inverters))?;
        Ok(Self { inner })
    }

    pub fn write_row(&mut self, row: &TraceRow) -> Result<()> {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut rec = vec![row.t.to_string()];
        for r in &row.inverters {
            rec.extend([
                r.v_rms.to_string(),
                r.theta.to_string(),
                opt(r.freq_hz),
                opt(r.p),
                opt(r.q),
                r.k_v.to_string(),
                r.k_i.to_string(),
            ]);
        }
        rec.extend([opt(row.load_p), opt(row.load_q), opt(row.margin)]);
        self.inner.write_record(rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Writes a complete trace.
pub fn write_csv<W: Write>(w: W, n_inverters: usize, rows: &[TraceRow]) -> Result<W> {
    let mut out = CsvTraceWriter::new(w, n_inverters)?;
    for r in rows {
        out.write_row(r)?;
    }
    out.finish()
}
