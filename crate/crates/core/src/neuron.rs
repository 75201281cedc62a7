//! Conductance-based leaky integrate-and-fire neurons with an adaptive threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub e_rest: f64,
    pub e_exc: f64,
    pub e_inh: f64,
    pub v_thres: f64,
    pub v_reset: f64,
    pub tau_m: f64,
    pub tau_ge: f64,
    pub tau_gi: f64,
    pub tau_adpt: f64,
    pub dv_t: f64,
    pub v_tshift: f64,
    pub v_tscale: f64,
    pub t_refrac: f64,
}

/// Threshold-increment gate. Close to 1 for a resting threshold, falling to 0
/// as `v_t` climbs; exactly 0.5 at `v_t = v_thres * v_tshift`.
pub fn theta_vt(v_t: f64, p: &NeuronParams) -> f64 {
    let x = (-2.0 * (v_t - p.v_thres * (p.v_tshift - 0.5)) / p.v_thres + 1.0) / p.v_tscale;
    0.5 - 0.5 * x.tanh()
}

/// Per-step decay factors, computed once per (params, dt).
#[derive(Debug, Clone, Copy)]
pub struct StepFactors {
    pub dt: f64,
    pub ge: f64,
    pub gi: f64,
    pub adpt: f64,
    pub refrac_steps: u64,
}

impl StepFactors {
    pub fn new(p: &NeuronParams, dt: f64) -> Self {
        StepFactors {
            dt,
            ge: (-dt / p.tau_ge).exp(),
            gi: (-dt / p.tau_gi).exp(),
            adpt: (-dt / p.tau_adpt).exp(),
            refrac_steps: (p.t_refrac / dt).round() as u64,
        }
    }
}

/// Dynamic state of a block of neurons sharing one parameter set.
///
/// Potentials are stored as offsets from their relaxation targets so that
/// decays stay exact in relative terms however small the offset becomes.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronPopulation {
    pub params: NeuronParams,
    /// `V - E_rest`.
    pub v_rel: Vec<f64>,
    pub g_e: Vec<f64>,
    pub g_i: Vec<f64>,
    /// Adaptive part of the threshold, `V_t - V_thres`.
    pub theta: Vec<f64>,
    /// First step at which the neuron may integrate and fire again.
    pub refrac_until: Vec<u64>,
    pub group: Vec<u8>,
    pub spike_count: Vec<u32>,
}

impl NeuronPopulation {
    /// `n` neurons at rest; neuron `k` belongs to digit group `k % 10`.
    pub fn new(n: usize, params: NeuronParams) -> Self {
        NeuronPopulation {
            params,
            v_rel: vec![params.v_reset - params.e_rest; n],
            g_e: vec![0.0; n],
            g_i: vec![0.0; n],
            theta: vec![0.0; n],
            refrac_until: vec![0; n],
            group: (0..n).map(|k| (k % 10) as u8).collect(),
            spike_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v_rel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_rel.is_empty()
    }

    /// Membrane potential in mV.
    pub fn v(&self, i: usize) -> f64 {
        self.params.e_rest + self.v_rel[i]
    }

    pub fn set_v(&mut self, i: usize, v: f64) {
        self.v_rel[i] = v - self.params.e_rest;
    }

    /// Firing threshold in mV.
    pub fn v_t(&self, i: usize) -> f64 {
        self.params.v_thres + self.theta[i]
    }

    pub fn set_v_t(&mut self, i: usize, v_t: f64) {
        self.theta[i] = v_t - self.params.v_thres;
    }

    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.v_t(i)).collect()
    }

    /// Back to rest between presentations; the threshold is kept.
    pub fn reset_dynamics(&mut self) {
        self.v_rel.fill(self.params.v_reset - self.params.e_rest);
        self.g_e.fill(0.0);
        self.g_i.fill(0.0);
        self.refrac_until.fill(0);
        self.spike_count.fill(0);
    }

    pub fn refrac_until_ms(&self, i: usize, dt: f64) -> f64 {
        self.refrac_until[i] as f64 * dt
    }

    /// Integrates one step `[step*dt, (step+1)*dt)` by exponential Euler.
    ///
    /// Conductances are held at their start-of-step values while `V` relaxes
    /// toward the conductance-weighted reversal potential, then decay.
    pub fn advance(&mut self, f: &StepFactors, step: u64) -> Result<()> {
        let p = &self.params;
        let (exc, inh) = (p.e_exc - p.e_rest, p.e_inh - p.e_rest);
        let reset = p.v_reset - p.e_rest;
        for i in 0..self.v_rel.len() {
            let ge = self.g_e[i];
            let gi = self.g_i[i];
            if step < self.refrac_until[i] {
                self.v_rel[i] = reset;
            } else {
                let g_tot = 1.0 + ge + gi;
                let u_inf = (ge * exc + gi * inh) / g_tot;
                let decay = (-f.dt * g_tot / p.tau_m).exp();
                self.v_rel[i] = u_inf + (self.v_rel[i] - u_inf) * decay;
            }
            self.g_e[i] = ge * f.ge;
            self.g_i[i] = gi * f.gi;
            self.theta[i] *= f.adpt;

            let bad = if !self.v_rel[i].is_finite() {
                Some("V")
            } else if !self.g_e[i].is_finite() {
                Some("g_e")
            } else if !self.g_i[i].is_finite() {
                Some("g_i")
            } else if !self.theta[i].is_finite() {
                Some("V_t")
            } else {
                None
            };
            if let Some(what) = bad {
                return Err(SnnError::NonFiniteState {
                    what,
                    neuron: i,
                    time_ms: (step + 1) as f64 * f.dt,
                });
            }
        }
        Ok(())
    }

    /// Threshold check at the end of `step`. Spiking neurons are reset, made
    /// refractory and have their threshold raised by `dv_t * theta_vt(V_t)`.
    pub fn fire_and_reset(&mut self, f: &StepFactors, step: u64, out: &mut Vec<u32>) {
        out.clear();
        let p = self.params;
        let now = step + 1;
        for i in 0..self.v_rel.len() {
            if self.v(i) > self.v_t(i) && now >= self.refrac_until[i] {
                self.v_rel[i] = p.v_reset - p.e_rest;
                self.refrac_until[i] = now + f.refrac_steps;
                self.theta[i] += p.dv_t * theta_vt(self.v_t(i), &p);
                self.spike_count[i] += 1;
                out.push(i as u32);
            }
        }
    }
}
