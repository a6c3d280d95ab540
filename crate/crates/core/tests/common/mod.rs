//! Independent reference computations for the integration tests. Nothing here
//! calls into the solvers under test; only plain data types are shared.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use voc_core::oscillator::VocParams;
use voc_core::phasor::{LclFilter, Network, SeriesRlBranch};
use voc_core::Complex;

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

pub fn reference_line() -> SeriesRlBranch {
    SeriesRlBranch::new(0.15, 2.48e-3, "line")
}

fn rl(r: f64, l: f64, w: f64) -> Complex {
    Complex::new(r, w * l)
}

fn cap(r: f64, c: f64, w: f64) -> Complex {
    Complex::new(r, -1.0 / (w * c))
}

/// `(z_alpha, z_beta)` from the element values.
pub fn constants(f: &LclFilter, w: f64) -> (Complex, Complex) {
    let z_f = rl(f.r_f, f.l_f, w);
    let z_c = cap(f.r_c, f.c_f, w);
    ((z_c + z_f) / z_c, -1.0 / z_c)
}

/// Branch currents and PCC voltage from a dense KVL/KCL system.
#[derive(Debug, Clone)]
pub struct MeshSolution {
    pub i_f: Vec<Complex>,
    pub i_g: Vec<Complex>,
    pub i_b: Vec<Complex>,
    pub v_pcc: Complex,
}

/// Unknowns `[i_f.., i_g.., i_b.., v_pcc]`. Per inverter: the loop through
/// `L_f` and the capacitor, and the loop through the capacitor, `L_g`, the
/// line and the PCC. Per load: its branch equation. Plus KCL at the PCC.
pub fn mesh_solve(net: &Network, sources: &[Complex], active: &[bool], w: f64) -> MeshSolution {
    let n = net.inverters.len();
    let m = net.loads.len();
    let dim = 2 * n + m + 1;
    let pcc = dim - 1;
    let mut a = DMatrix::<Complex>::zeros(dim, dim);
    let mut b = DVector::<Complex>::zeros(dim);
    for (k, leg) in net.inverters.iter().enumerate() {
        let f = &leg.filter;
        let z_f = rl(f.r_f, f.l_f, w);
        let z_c = cap(f.r_c, f.c_f, w);
        let z_gl = rl(f.r_g + leg.line.r, f.l_g + leg.line.l, w);
        a[(2 * k, k)] = z_f + z_c;
        a[(2 * k, n + k)] = -z_c;
        b[2 * k] = sources[k];
        a[(2 * k + 1, k)] = z_c;
        a[(2 * k + 1, n + k)] = -(z_c + z_gl);
        a[(2 * k + 1, pcc)] = Complex::new(-1.0, 0.0);
        a[(pcc, n + k)] = Complex::new(1.0, 0.0);
    }
    for (j, load) in net.loads.iter().enumerate() {
        let row = 2 * n + j;
        if active.get(j).copied().unwrap_or(false) {
            a[(row, 2 * n + j)] = rl(load.r, load.l, w);
            a[(row, pcc)] = Complex::new(-1.0, 0.0);
            a[(pcc, 2 * n + j)] = Complex::new(-1.0, 0.0);
        } else {
            a[(row, 2 * n + j)] = Complex::new(1.0, 0.0);
        }
    }
    let x = a.lu().solve(&b).expect("mesh system is singular");
    MeshSolution {
        i_f: (0..n).map(|k| x[k]).collect(),
        i_g: (0..n).map(|k| x[n + k]).collect(),
        i_b: (0..m).map(|j| x[2 * n + j]).collect(),
        v_pcc: x[pcc],
    }
}

/// Time derivatives of the EMT state `[i_f, v_c, i_g]*n ++ [i_b]*m` and the
/// PCC voltage, from one dense linear system in
/// `[di_f.., dv_c.., di_g.., di_b.., v_pcc]`. The KCL row is the
/// differentiated cut-set constraint with Baumgarte damping `tau`.
pub fn dense_emt(
    net: &Network,
    x: &[f64],
    v_terminals: &[f64],
    active: &[bool],
    tau: f64,
) -> (Vec<f64>, f64) {
    let n = net.inverters.len();
    let m = net.loads.len();
    let dim = 3 * n + m + 1;
    let pcc = dim - 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let mut residual = 0.0;
    for (k, leg) in net.inverters.iter().enumerate() {
        let f = &leg.filter;
        let (i_f, v_c, i_g) = (x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        let v_o = v_c + f.r_c * (i_f - i_g);
        // L_f di_f = v - R_f i_f - v_o
        a[(3 * k, 3 * k)] = f.l_f;
        b[3 * k] = v_terminals[k] - f.r_f * i_f - v_o;
        // C_f dv_c = i_f - i_g
        a[(3 * k + 1, 3 * k + 1)] = f.c_f;
        b[3 * k + 1] = i_f - i_g;
        // (L_g + L_line) di_g + v_pcc = v_o - (R_g + R_line) i_g
        a[(3 * k + 2, 3 * k + 2)] = f.l_g + leg.line.l;
        a[(3 * k + 2, pcc)] = 1.0;
        b[3 * k + 2] = v_o - (f.r_g + leg.line.r) * i_g;
        a[(pcc, 3 * k + 2)] = 1.0;
        residual += i_g;
    }
    for (j, load) in net.loads.iter().enumerate() {
        let row = 3 * n + j;
        let i_b = x[row];
        if active.get(j).copied().unwrap_or(false) {
            a[(row, row)] = load.l;
            a[(row, pcc)] = -1.0;
            b[row] = -load.r * i_b;
            a[(pcc, row)] = -1.0;
            residual -= i_b;
        } else {
            a[(row, row)] = 1.0;
        }
    }
    b[pcc] = -residual / tau;
    let sol = a.lu().solve(&b).expect("EMT system is singular");
    (sol.rows(0, dim - 1).iter().copied().collect(), sol[pcc])
}

/// `sigma V^2 - (3 alpha / 2 k_v^2) V^4 - k_v k_i (C_a P + S_a Q + C_b V^2)`,
/// the amplitude balance multiplied by `2 C V`.
pub fn amplitude_balance(p: &VocParams, za: Complex, zb: Complex, v: f64, s: Complex) -> f64 {
    p.sigma * v * v
        - 1.5 * p.alpha / (p.k_v * p.k_v) * v.powi(4)
        - p.k_v * p.k_i * (za.re * s.re + za.im * s.im + zb.re * v * v)
}

/// Frequency droop bracket `(C_a Q - S_a P) / V^2 - S_b`.
pub fn frequency_bracket(za: Complex, zb: Complex, v: f64, s: Complex) -> f64 {
    (za.re * s.im - za.im * s.re) / (v * v) - zb.im
}

/// Two-inverter dispatch system for the grid-search oracle.
pub struct GridOracle {
    pub net: Network,
    pub params: [VocParams; 2],
    pub w: f64,
    pub za: [Complex; 2],
    pub zb: [Complex; 2],
}

impl GridOracle {
    pub fn new(net: Network, params: [VocParams; 2]) -> Self {
        let w = params[1].omega_star;
        let (za0, zb0) = constants(&net.inverters[0].filter, w);
        let (za1, zb1) = constants(&net.inverters[1].filter, w);
        Self {
            net,
            params,
            w,
            za: [za0, za1],
            zb: [zb0, zb1],
        }
    }

    /// Terminal powers `V conj(I_f)` of both inverters.
    pub fn powers(&self, v1: f64, delta: f64, v2: f64) -> [Complex; 2] {
        let src = [Complex::from_polar(v1, delta), Complex::new(v2, 0.0)];
        let active = vec![true; self.net.loads.len()];
        let sol = mesh_solve(&self.net, &src, &active, self.w);
        [src[0] * sol.i_f[0].conj(), src[1] * sol.i_f[1].conj()]
    }

    fn misfit(&self, p1: f64, q1: f64, x: [f64; 3]) -> f64 {
        let s = self.powers(x[0], x[1], x[2]);
        let p = &self.params[1];
        let scale = p1.abs().max(q1.abs()).max(1.0);
        let amp = amplitude_balance(p, self.za[1], self.zb[1], x[2], s[1]) / (p.sigma * p.k_v * p.k_v);
        ((s[0].re - p1) / scale).powi(2) + ((s[0].im - q1) / scale).powi(2) + amp * amp
    }

    /// Coarse-to-fine grid search over `(V1, delta, V2)` for the equilibrium
    /// delivering `(p1, q1)` with inverter 2 on its upper amplitude branch.
    /// Returns the point and its misfit.
    pub fn search(&self, p1: f64, q1: f64) -> ([f64; 3], f64) {
        let p = &self.params[1];
        let sigma_b = p.sigma - p.k_v * p.k_i * self.zb[1].re;
        let v_cr = p.k_v * (sigma_b / (3.0 * p.alpha)).sqrt();
        let v_oc = p.k_v * (2.0 * sigma_b / (3.0 * p.alpha)).sqrt();
        let mut lo = [0.3 * v_oc, -0.6, v_cr];
        let mut hi = [1.3 * v_oc, 0.6, 1.2 * v_oc];
        let pts = 13;
        let mut best = ([0.0; 3], f64::INFINITY);
        for _ in 0..60 {
            let step: Vec<f64> = (0..3).map(|d| (hi[d] - lo[d]) / (pts - 1) as f64).collect();
            for a in 0..pts {
                for b in 0..pts {
                    for c in 0..pts {
                        let x = [
                            lo[0] + a as f64 * step[0],
                            lo[1] + b as f64 * step[1],
                            lo[2] + c as f64 * step[2],
                        ];
                        if x[2] < v_cr {
                            continue;
                        }
                        let f = self.misfit(p1, q1, x);
                        if f < best.1 {
                            best = (x, f);
                        }
                    }
                }
            }
            for d in 0..3 {
                let half = 2.0 * step[d];
                lo[d] = best.0[d] - half;
                hi[d] = best.0[d] + half;
            }
            lo[2] = lo[2].max(v_cr);
            if best.1 < 1e-26 {
                break;
            }
        }
        best
    }

    /// Security margin at the equilibrium for `(p1, q1)`, with the gain
    /// product fixed by frequency agreement between the inverters.
    pub fn margin(&self, p1: f64, q1: f64) -> (f64, f64) {
        let (x, misfit) = self.search(p1, q1);
        let s = self.powers(x[0], x[1], x[2]);
        let (a, b) = (&self.params[0], &self.params[1]);
        let d1 = frequency_bracket(self.za[0], self.zb[0], x[0], Complex::new(p1, q1));
        let d2 = frequency_bracket(self.za[1], self.zb[1], x[2], s[1]);
        let mu = b.k_v * b.k_i * (a.c / b.c) * d2 / d1;
        let za = self.za[0];
        let margin = a.sigma * x[0] * x[0] - mu * (za.re * p1 + za.im * q1 + self.zb[0].re * x[0] * x[0]);
        (margin, misfit)
    }

    /// Active setpoint in `[lo, hi]` at which the margin crosses zero.
    pub fn crossing(&self, q1: f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(self.margin(lo, q1).0 > 0.0 && self.margin(hi, q1).0 <= 0.0);
        while hi - lo > 1e-3 * lo {
            let mid = 0.5 * (lo + hi);
            if self.margin(mid, q1).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
