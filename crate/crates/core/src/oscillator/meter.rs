use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::phasor::Power;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    v: f64,
    p: f64,
    q: f64,
    // running trapezoidal integrals of p and q
    cum_p: f64,
    cum_q: f64,
}

/// Moving-average active/reactive power over one period of the estimated
/// frequency.
///
/// Active power averages `v(t) i(t)`; reactive power averages
/// `v(t - T/4) i(t)` where `T = 2 pi / omega_hat` and the delayed voltage is
/// linearly interpolated from the sample history.
#[derive(Debug, Clone)]
pub struct PowerMeter {
    omega_hat: f64,
    samples: VecDeque<Sample>,
    t_start: Option<f64>,
}

impl PowerMeter {
    pub fn new(omega_nominal: f64) -> Self {
        Self {
            omega_hat: omega_nominal,
            samples: VecDeque::new(),
            t_start: None,
        }
    }

    pub fn set_frequency(&mut self, omega_hat: f64) {
        if omega_hat.is_finite() && omega_hat > 0.0 {
            self.omega_hat = omega_hat;
        }
    }

    pub fn frequency(&self) -> f64 {
        self.omega_hat
    }

    pub fn window(&self) -> f64 {
        2.0 * PI / self.omega_hat
    }

    pub fn reset(&mut self) {
        self.samples.clear();
        self.t_start = None;
    }

    /// Records a sample and returns the current window average.
    pub fn measure(&mut self, t: f64, v: f64, i: f64) -> Result<Power> {
        self.push(t, v, i);
        self.average()
    }

    pub fn push(&mut self, t: f64, v: f64, i: f64) {
        let window = self.window();
        let t0 = *self.t_start.get_or_insert(t);
        let q = if t - window / 4.0 >= t0 {
            self.voltage_at(t - window / 4.0).unwrap_or(v) * i
        } else {
            0.0
        };
        let p = v * i;
        let (cum_p, cum_q) = match self.samples.back() {
            Some(prev) => {
                let h = t - prev.t;
                (
                    prev.cum_p + 0.5 * h * (prev.p + p),
                    prev.cum_q + 0.5 * h * (prev.q + q),
                )
            }
            None => (0.0, 0.0),
        };
        self.samples.push_back(Sample {
            t,
            v,
            p,
            q,
            cum_p,
            cum_q,
        });

        // Keep 1.5 windows of history plus one bracketing sample.
        let horizon = t - 1.5 * window;
        while self.samples.len() > 2 && self.samples[1].t <= horizon {
            self.samples.pop_front();
        }
    }

    /// Elapsed time needed before the reactive window is fully populated.
    pub fn warm_up(&self) -> f64 {
        1.25 * self.window()
    }

    pub fn is_ready(&self) -> bool {
        match (self.t_start, self.samples.back()) {
            (Some(t0), Some(last)) => last.t - t0 >= self.warm_up(),
            _ => false,
        }
    }

    pub fn average(&self) -> Result<Power> {
        let (Some(t0), Some(last)) = (self.t_start, self.samples.back()) else {
            return Err(Error::MeterNotReady {
                elapsed: 0.0,
                required: self.warm_up(),
            });
        };
        if last.t - t0 < self.warm_up() {
            return Err(Error::MeterNotReady {
                elapsed: last.t - t0,
                required: self.warm_up(),
            });
        }
        let window = self.window();
        let (cp, cq) = self.cumulative_at(last.t - window);
        Ok(Power::new(
            (last.cum_p - cp) / window,
            (last.cum_q - cq) / window,
        ))
    }

    fn bracket(&self, t: f64) -> Option<(Sample, Sample, f64)> {
        let idx = self.samples.partition_point(|s| s.t < t);
        if idx == 0 {
            let s = *self.samples.front()?;
            return (s.t == t).then_some((s, s, 0.0));
        }
        let b = *self.samples.get(idx)?;
        let a = self.samples[idx - 1];
        let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        Some((a, b, w))
    }

    fn voltage_at(&self, t: f64) -> Option<f64> {
        self.bracket(t).map(|(a, b, w)| a.v + w * (b.v - a.v))
    }

    fn cumulative_at(&self, t: f64) -> (f64, f64) {
        match self.bracket(t) {
            // The integrand is linear between samples, so the running
            // integral is quadratic; integrate the partial interval exactly.
            Some((a, b, w)) => {
                let h = (b.t - a.t) * w;
                let p_t = a.p + w * (b.p - a.p);
                let q_t = a.q + w * (b.q - a.q);
                (
                    a.cum_p + 0.5 * h * (a.p + p_t),
                    a.cum_q + 0.5 * h * (a.q + q_t),
                )
            }
            None => {
                let s = self.samples.front().expect("non-empty after warm-up");
                (s.cum_p, s.cum_q)
            }
        }
    }
}

/// Mean of `dphi/dt` over one nominal period, from first differences of the
/// phase history.
#[derive(Debug, Clone)]
pub struct FrequencyEstimator {
    period: f64,
    history: VecDeque<(f64, f64)>,
}

impl FrequencyEstimator {
    pub fn new(omega_nominal: f64) -> Self {
        Self {
            period: 2.0 * PI / omega_nominal,
            history: VecDeque::new(),
        }
    }

    pub fn push(&mut self, t: f64, phi: f64) {
        self.history.push_back((t, phi));
        while self.history.len() > 2 && self.history[1].0 <= t - self.period {
            self.history.pop_front();
        }
    }

    /// Angular frequency estimate in rad/s; `None` until a full period is recorded.
    pub fn omega(&self) -> Option<f64> {
        let &(t1, p1) = self.history.back()?;
        let target = t1 - self.period;
        if self.history.front()?.0 > target + 1e-9 * self.period {
            return None;
        }
        let idx = self.history.partition_point(|&(t, _)| t < target);
        let phi_back = if idx == 0 {
            self.history[0].1
        } else {
            let (ta, pa) = self.history[idx - 1];
            let (tb, pb) = self.history[idx];
            pa + (pb - pa) * (target - ta) / (tb - ta)
        };
        Some((p1 - phi_back) / self.period)
    }
}
