use crate::{Error, Result};

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` in place from `t` to `t + dt`. `f(t, x, dx)` writes the
    /// derivative. On a non-finite result `x` is left untouched and the
    /// error carries it as the last good state.
    pub fn step<F>(&mut self, x: &mut [f64], t: f64, dt: f64, mut f: F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = x.len();
        if self.tmp.len() != n {
            *self = Self::new(n);
        }
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;

        f(t, x, k1)?;
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        f(t + 0.5 * dt, tmp, k2)?;
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        f(t + 0.5 * dt, tmp, k3)?;
        for j in 0..n {
            tmp[j] = x[j] + dt * k3[j];
        }
        f(t + dt, tmp, k4)?;
        for j in 0..n {
            tmp[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
        }
        if tmp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: t + dt,
                last_good: x.to_vec(),
            });
        }
        x.copy_from_slice(tmp);
        Ok(())
    }
}

/// One-shot RK4 step returning the new state.
pub fn rk4_step<F>(x: &[f64], t: f64, dt: f64, f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    crate::error::positive("dt", dt)?;
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(&mut out, t, dt, f)?;
    Ok(out)
}
