use std::f64::consts::PI;

use crate::{Error, Result};

/// Minimum number of whole cycles in the analysis window.
pub const MIN_CYCLES: usize = 10;

/// Single-bin Fourier amplitudes of uniformly sampled `v` at harmonics of
/// `fundamental_hz`.
///
/// The window is the tail of `samples` spanning the largest whole number of
/// cycles, rounded to whole samples. The projection is exact for
/// trigonometric polynomials when a cycle holds an integer number of samples.
pub fn fourier_components(
    samples: &[f64],
    dt: f64,
    fundamental_hz: f64,
    orders: &[u32],
) -> Result<Vec<f64>> {
    crate::error::positive("dt", dt)?;
    crate::error::positive("fundamental_hz", fundamental_hz)?;
    let span = samples.len() as f64 * dt;
    let cycles = (span * fundamental_hz + 1e-9).floor() as usize;
    if cycles < MIN_CYCLES {
        return Err(Error::InsufficientWindow(format!(
            "{cycles} whole cycles of {fundamental_hz} Hz in {span:.6} s, need {MIN_CYCLES}"
        )));
    }
    let n = ((cycles as f64 / fundamental_hz) / dt).round() as usize;
    let window = &samples[samples.len() - n.min(samples.len())..];
    let n = window.len();
    let w = 2.0 * PI * fundamental_hz;
    Ok(orders
        .iter()
        .map(|&k| {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, &v) in window.iter().enumerate() {
                let (s, c) = (k as f64 * w * j as f64 * dt).sin_cos();
                a += v * c;
                b += v * s;
            }
            2.0 / n as f64 * a.hypot(b)
        })
        .collect())
}
