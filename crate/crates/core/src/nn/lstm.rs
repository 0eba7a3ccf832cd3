//! Peephole LSTM layer with forget gate, forward and backward through time.
//!
//! Gate pre-activations are stacked in the order input, forget, candidate,
//! output; rows `k*H..(k+1)*H` of `w`, `u` and `b` belong to gate `k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_with;
use super::tensor::{dot, logistic, matvec_t_acc, outer_acc, Tensor};
use crate::error::{Error, Result};

const GATES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H × D`
    pub w: Tensor,
    /// `4H × H`
    pub u: Tensor,
    /// `4H`
    pub b: Tensor,
    pub peep_i: Tensor,
    pub peep_f: Tensor,
    pub peep_o: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let h = hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            w: Tensor::zeros(&[GATES * h, input_dim]),
            u: Tensor::zeros(&[GATES * h, h]),
            b: Tensor::zeros(&[GATES * h]),
            peep_i: Tensor::zeros(&[h]),
            peep_f: Tensor::zeros(&[h]),
            peep_o: Tensor::zeros(&[h]),
        }
    }

    /// Glorot-uniform input and recurrent weights per gate, zero peepholes,
    /// forget-gate bias 1.
    pub fn init<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let h = hidden_dim;
        for g in 0..GATES {
            let wg = glorot_with(rng, input_dim, h);
            p.w.values[g * h * input_dim..(g + 1) * h * input_dim].copy_from_slice(&wg.values);
            let ug = glorot_with(rng, h, h);
            p.u.values[g * h * h..(g + 1) * h * h].copy_from_slice(&ug.values);
        }
        p.b.values[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim)
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.w, &self.u, &self.b, &self.peep_i, &self.peep_f, &self.peep_o]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [&mut self.w, &mut self.u, &mut self.b, &mut self.peep_i, &mut self.peep_f, &mut self.peep_o]
    }

    pub const TENSOR_NAMES: [&'static str; 6] = ["w", "u", "b", "peep_i", "peep_f", "peep_o"];

    pub fn check_shapes(&self) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let ok = self.w.shape == [GATES * h, d]
            && self.u.shape == [GATES * h, h]
            && self.b.shape == [GATES * h]
            && self.peep_i.shape == [h]
            && self.peep_f.shape == [h]
            && self.peep_o.shape == [h];
        if !ok {
            return Err(Error::Shape(format!("LSTM tensors inconsistent with input {d}, hidden {h}")));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Gate activations for one step; returns (i, f, g, o, c) and writes h.
    fn step_raw(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], act: &mut StepActs, h_out: &mut [f64]) {
        let hd = self.hidden_dim;
        let d = self.input_dim;
        for k in 0..GATES * hd {
            act.pre[k] = self.b.values[k]
                + dot(&self.w.values[k * d..(k + 1) * d], x)
                + dot(&self.u.values[k * hd..(k + 1) * hd], h_prev);
        }
        for j in 0..hd {
            let i = logistic(act.pre[j] + self.peep_i.values[j] * c_prev[j]);
            let f = logistic(act.pre[hd + j] + self.peep_f.values[j] * c_prev[j]);
            let g = act.pre[2 * hd + j].tanh();
            let c = f * c_prev[j] + i * g;
            let o = logistic(act.pre[3 * hd + j] + self.peep_o.values[j] * c);
            let tc = c.tanh();
            act.i[j] = i;
            act.f[j] = f;
            act.g[j] = g;
            act.o[j] = o;
            act.c[j] = c;
            act.tanh_c[j] = tc;
            h_out[j] = o * tc;
        }
    }
}

struct StepActs {
    pre: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl StepActs {
    fn new(h: usize) -> Self {
        Self {
            pre: vec![0.0; GATES * h],
            i: vec![0.0; h],
            f: vec![0.0; h],
            g: vec![0.0; h],
            o: vec![0.0; h],
            c: vec![0.0; h],
            tanh_c: vec![0.0; h],
        }
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_step(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check_shapes()?;
    let h = params.hidden_dim;
    if x.len() != params.input_dim || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "lstm_step: x {} / h {} / c {} against input {} hidden {h}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            params.input_dim
        )));
    }
    let mut act = StepActs::new(h);
    let mut h_out = vec![0.0; h];
    params.step_raw(x, h_prev, c_prev, &mut act, &mut h_out);
    Ok((h_out, act.c))
}

/// Everything the backward pass needs from a forward run, stored `T × H` flat.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    pub steps: usize,
    pub inputs: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    /// Hidden states h_1..h_T.
    pub h: Vec<f64>,
}

impl LstmTrace {
    pub fn h_at(&self, t: usize, hd: usize) -> &[f64] {
        &self.h[t * hd..(t + 1) * hd]
    }
}

impl LstmParams {
    /// Runs the layer over `inputs` (`T × input_dim` flat) from zero state.
    pub fn forward(&self, inputs: &[f64]) -> LstmTrace {
        let (d, hd) = (self.input_dim, self.hidden_dim);
        let steps = inputs.len() / d;
        let mut tr = LstmTrace {
            steps,
            inputs: inputs.to_vec(),
            i: vec![0.0; steps * hd],
            f: vec![0.0; steps * hd],
            g: vec![0.0; steps * hd],
            o: vec![0.0; steps * hd],
            c: vec![0.0; steps * hd],
            tanh_c: vec![0.0; steps * hd],
            h: vec![0.0; steps * hd],
        };
        let mut act = StepActs::new(hd);
        let zeros = vec![0.0; hd];
        let mut h_buf = vec![0.0; hd];
        for t in 0..steps {
            let x = &inputs[t * d..(t + 1) * d];
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&tr.h[(t - 1) * hd..t * hd], &tr.c[(t - 1) * hd..t * hd])
            };
            self.step_raw(x, h_prev, c_prev, &mut act, &mut h_buf);
            let r = t * hd..(t + 1) * hd;
            tr.i[r.clone()].copy_from_slice(&act.i);
            tr.f[r.clone()].copy_from_slice(&act.f);
            tr.g[r.clone()].copy_from_slice(&act.g);
            tr.o[r.clone()].copy_from_slice(&act.o);
            tr.c[r.clone()].copy_from_slice(&act.c);
            tr.tanh_c[r.clone()].copy_from_slice(&act.tanh_c);
            tr.h[r].copy_from_slice(&h_buf);
        }
        tr
    }

    /// Hidden states only (`T × H`), for inference without a trace.
    pub fn hidden_states(&self, inputs: &[f64]) -> Vec<f64> {
        let (d, hd) = (self.input_dim, self.hidden_dim);
        let steps = inputs.len() / d;
        let mut h = vec![0.0; steps * hd];
        let mut c = vec![0.0; hd];
        let zeros = vec![0.0; hd];
        let mut act = StepActs::new(hd);
        for t in 0..steps {
            let (done, rest) = h.split_at_mut(t * hd);
            let h_prev = if t == 0 { &zeros[..] } else { &done[(t - 1) * hd..] };
            self.step_raw(&inputs[t * d..(t + 1) * d], h_prev, &c, &mut act, &mut rest[..hd]);
            c.copy_from_slice(&act.c);
        }
        h
    }

    /// Backpropagation through time. `dh_ext` holds dL/dh_t from outside the
    /// layer (`T × H`). Accumulates parameter gradients into `grads` and
    /// returns dL/dx_t (`T × input_dim`).
    pub fn backward(&self, tr: &LstmTrace, dh_ext: &[f64], grads: &mut LstmParams) -> Vec<f64> {
        let (d, hd) = (self.input_dim, self.hidden_dim);
        let steps = tr.steps;
        let mut dx = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut da = vec![0.0; GATES * hd];
        let zeros = vec![0.0; hd];
        for t in (0..steps).rev() {
            let r = t * hd..(t + 1) * hd;
            let (h_prev, c_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&tr.h[(t - 1) * hd..t * hd], &tr.c[(t - 1) * hd..t * hd])
            };
            let (i, f, g, o) = (&tr.i[r.clone()], &tr.f[r.clone()], &tr.g[r.clone()], &tr.o[r.clone()]);
            let (c, tc) = (&tr.c[r.clone()], &tr.tanh_c[r.clone()]);
            for j in 0..hd {
                let dh = dh_ext[t * hd + j] + dh_next[j];
                let da_o = dh * tc[j] * o[j] * (1.0 - o[j]);
                let dc = dc_next[j] + dh * o[j] * (1.0 - tc[j] * tc[j]) + da_o * self.peep_o.values[j];
                let da_i = dc * g[j] * i[j] * (1.0 - i[j]);
                let da_g = dc * i[j] * (1.0 - g[j] * g[j]);
                let da_f = dc * c_prev[j] * f[j] * (1.0 - f[j]);
                dc_next[j] = dc * f[j] + da_i * self.peep_i.values[j] + da_f * self.peep_f.values[j];
                grads.peep_i.values[j] += da_i * c_prev[j];
                grads.peep_f.values[j] += da_f * c_prev[j];
                grads.peep_o.values[j] += da_o * c[j];
                da[j] = da_i;
                da[hd + j] = da_f;
                da[2 * hd + j] = da_g;
                da[3 * hd + j] = da_o;
            }
            let x = &tr.inputs[t * d..(t + 1) * d];
            outer_acc(&mut grads.w.values, &da, x);
            outer_acc(&mut grads.u.values, &da, h_prev);
            for (gb, &a) in grads.b.values.iter_mut().zip(&da) {
                *gb += a;
            }
            matvec_t_acc(&self.w.values, d, &da, &mut dx[t * d..(t + 1) * d]);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&self.u.values, hd, &da, &mut dh_next);
        }
        dx
    }
}
