use crate::phasor::Network;
use crate::{Error, Result};

/// Instantaneous electrical state of one inverter leg.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InverterEmt {
    /// Filter-side inductor current.
    pub i_f: f64,
    /// Capacitor voltage, excluding the drop across `R_c`.
    pub v_c: f64,
    /// Grid-side current (through `L_g` and the line).
    pub i_g: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmtState {
    pub inverters: Vec<InverterEmt>,
    pub loads: Vec<f64>,
}

impl EmtState {
    pub fn zeros(n_inverters: usize, n_loads: usize) -> Self {
        Self {
            inverters: vec![InverterEmt::default(); n_inverters],
            loads: vec![0.0; n_loads],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.inverters.len() + self.loads.len());
        for inv in &self.inverters {
            x.extend([inv.i_f, inv.v_c, inv.i_g]);
        }
        x.extend(&self.loads);
        x
    }

    pub fn from_flat(x: &[f64], n_inverters: usize) -> Self {
        let (head, loads) = x.split_at(3 * n_inverters);
        Self {
            inverters: head
                .chunks_exact(3)
                .map(|c| InverterEmt {
                    i_f: c[0],
                    v_c: c[1],
                    i_g: c[2],
                })
                .collect(),
            loads: loads.to_vec(),
        }
    }
}

/// State-space model of the network of [`Network`].
///
/// The PCC is an inductor cut-set: the grid-side and load inductor currents
/// are tied by KCL. The constraint is differentiated and the PCC voltage is
/// solved from it each evaluation; drift is damped with a Baumgarte term so
/// that the residual `r = sum(i_g) - sum(i_b)` obeys `dr/dt = -r / tau`.
///
/// The flat state layout is `[i_f, v_c, i_g]` per inverter followed by one
/// current per load branch.
#[derive(Debug, Clone)]
pub struct EmtModel {
    network: Network,
    tau: f64,
}

impl EmtModel {
    pub fn new(network: Network, baumgarte_tau: f64) -> Result<Self> {
        network.validate()?;
        crate::error::positive("baumgarte_tau", baumgarte_tau)?;
        Ok(Self {
            network,
            tau: baumgarte_tau,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn n_inverters(&self) -> usize {
        self.network.inverters.len()
    }

    pub fn len(&self) -> usize {
        3 * self.network.inverters.len() + self.network.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `sum(i_g) - sum(i_b)` over connected branches.
    pub fn kcl_residual(&self, x: &[f64], load_active: &[bool]) -> f64 {
        let n = self.n_inverters();
        let grid: f64 = (0..n).map(|k| x[3 * k + 2]).sum();
        let load: f64 = x[3 * n..]
            .iter()
            .zip(load_active)
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
            .sum();
        grid - load
    }

    /// Capacitor node voltage `v_o = v_c + R_c (i_f - i_g)` of inverter `k`.
    pub fn capacitor_node_voltage(&self, x: &[f64], k: usize) -> f64 {
        let f = &self.network.inverters[k].filter;
        x[3 * k + 1] + f.r_c * (x[3 * k] - x[3 * k + 2])
    }

    /// PCC voltage implied by the state; it does not depend on the inverter
    /// terminal voltages because every PCC branch is inductive.
    pub fn pcc_voltage(&self, x: &[f64], load_active: &[bool]) -> Result<f64> {
        let n = self.n_inverters();
        let mut inv_sum = 0.0;
        let mut numer = 0.0;
        for (k, leg) in self.network.inverters.iter().enumerate() {
            let l_gl = leg.filter.l_g + leg.line.l;
            let r_gl = leg.filter.r_g + leg.line.r;
            let drive = self.capacitor_node_voltage(x, k) - r_gl * x[3 * k + 2];
            inv_sum += 1.0 / l_gl;
            numer += drive / l_gl;
        }
        for (j, load) in self.network.loads.iter().enumerate() {
            if load_active.get(j).copied().unwrap_or(false) {
                inv_sum += 1.0 / load.l;
                numer += load.r * x[3 * n + j] / load.l;
            }
        }
        numer += self.kcl_residual(x, load_active) / self.tau;
        if !(inv_sum > 0.0) || !inv_sum.is_finite() {
            return Err(Error::SingularNetwork("PCC cut-set has no inductive branch".into()));
        }
        Ok(numer / inv_sum)
    }

    /// Writes `dx/dt` for terminal voltages `v_terminals` and returns the PCC voltage.
    pub fn derivatives(
        &self,
        x: &[f64],
        v_terminals: &[f64],
        load_active: &[bool],
        dx: &mut [f64],
    ) -> Result<f64> {
        let n = self.n_inverters();
        debug_assert_eq!(x.len(), self.len());
        debug_assert_eq!(v_terminals.len(), n);
        let v_pcc = self.pcc_voltage(x, load_active)?;

        for (k, leg) in self.network.inverters.iter().enumerate() {
            let f = &leg.filter;
            let (i_f, i_g) = (x[3 * k], x[3 * k + 2]);
            let v_o = self.capacitor_node_voltage(x, k);
            dx[3 * k] = (v_terminals[k] - f.r_f * i_f - v_o) / f.l_f;
            dx[3 * k + 1] = (i_f - i_g) / f.c_f;
            dx[3 * k + 2] =
                (v_o - (f.r_g + leg.line.r) * i_g - v_pcc) / (f.l_g + leg.line.l);
        }
        for (j, load) in self.network.loads.iter().enumerate() {
            dx[3 * n + j] = if load_active.get(j).copied().unwrap_or(false) {
                (v_pcc - load.r * x[3 * n + j]) / load.l
            } else {
                0.0
            };
        }
        Ok(v_pcc)
    }

    /// Structured-state convenience wrapper around [`EmtModel::derivatives`].
    pub fn emt_derivatives(
        &self,
        e: &EmtState,
        v_terminals: &[f64],
        load_active: &[bool],
    ) -> Result<EmtState> {
        let x = e.to_flat();
        let mut dx = vec![0.0; x.len()];
        self.derivatives(&x, v_terminals, load_active, &mut dx)?;
        Ok(EmtState::from_flat(&dx, self.n_inverters()))
    }

    /// Magnetic plus electric energy stored in the network.
    pub fn stored_energy(&self, x: &[f64]) -> f64 {
        let n = self.n_inverters();
        let mut e = 0.0;
        for (k, leg) in self.network.inverters.iter().enumerate() {
            let f = &leg.filter;
            e += 0.5 * f.l_f * x[3 * k].powi(2)
                + 0.5 * f.c_f * x[3 * k + 1].powi(2)
                + 0.5 * (f.l_g + leg.line.l) * x[3 * k + 2].powi(2);
        }
        for (j, load) in self.network.loads.iter().enumerate() {
            e += 0.5 * load.l * x[3 * n + j].powi(2);
        }
        e
    }
}
