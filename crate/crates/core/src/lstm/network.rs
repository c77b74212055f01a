use serde::{Deserialize, Serialize};

use super::cell::{step, LstmState};
use super::params::{Dims, NormStats, Weights};
use crate::error::{Error, Result};
use crate::exec;

/// `steps` consecutive normalized input vectors (row-major, `steps x input`)
/// and the normalized target at the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub inputs: Vec<f64>,
    pub steps: usize,
    pub target: f64,
}

impl TrainingWindow {
    pub fn input_dim(&self) -> usize {
        self.inputs.len() / self.steps.max(1)
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let m = self.input_dim();
        &self.inputs[t * m..(t + 1) * m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub weights: Weights,
    pub norm: NormStats,
}

/// Per-step activations of one unrolled window.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    steps: usize,
    hidden: usize,
    /// `h_{t-1}` and `s_{t-1}` for each step.
    h_prev: Vec<f64>,
    s_prev: Vec<f64>,
    forget: Vec<f64>,
    candidate: Vec<f64>,
    input: Vec<f64>,
    output: Vec<f64>,
    tanh_s: Vec<f64>,
    h_last: Vec<f64>,
    dense1: Vec<f64>,
    dense2: Vec<f64>,
}

impl ForwardCache {
    fn at<'a>(&self, v: &'a [f64], t: usize) -> &'a [f64] {
        &v[t * self.hidden..(t + 1) * self.hidden]
    }
}

impl NetworkParams {
    pub fn new(weights: Weights, norm: NormStats) -> Result<Self> {
        if norm.input_mean.len() != weights.dims().input || norm.input_std.len() != weights.dims().input {
            return Err(Error::Contract("norm stats do not match input dimension".into()));
        }
        if norm.input_std.iter().chain(std::iter::once(&norm.target_std)).any(|&s| !(s > 0.0)) {
            return Err(Error::Contract("norm std entries must be positive".into()));
        }
        Ok(NetworkParams { weights, norm })
    }

    pub fn dims(&self) -> Dims {
        self.weights.dims()
    }

    fn check_window(&self, w: &TrainingWindow) -> Result<()> {
        let d = self.dims();
        if w.steps == 0 || w.inputs.len() != w.steps * d.input {
            return Err(Error::Contract(format!(
                "window of {} values over {} steps does not fit input dimension {}",
                w.inputs.len(),
                w.steps,
                d.input
            )));
        }
        Ok(())
    }

    /// Unrolls the LSTM from a zero state over the window, then applies the
    /// tanh dense stack and linear head to the final hidden output. Returns
    /// the normalized prediction.
    pub fn forward_sequence(&self, window: &TrainingWindow) -> Result<(f64, ForwardCache)> {
        self.check_window(window)?;
        let mut cache = ForwardCache::default();
        let y = self.run(window, Some(&mut cache))?;
        Ok((y, cache))
    }

    /// Normalized prediction; same arithmetic as [`Self::forward_sequence`].
    pub fn predict(&self, window: &TrainingWindow) -> Result<f64> {
        self.check_window(window)?;
        self.run(window, None)
    }

    fn run(&self, window: &TrainingWindow, mut cache: Option<&mut ForwardCache>) -> Result<f64> {
        let w = &self.weights;
        let d = self.dims();
        let n_h = d.hidden;
        let mut state = LstmState::zeros(n_h);
        let mut f = vec![0.0; n_h];
        let mut c = vec![0.0; n_h];
        let mut i = vec![0.0; n_h];
        let mut o = vec![0.0; n_h];
        if let Some(cache) = cache.as_deref_mut() {
            let cap = window.steps * n_h;
            *cache = ForwardCache {
                steps: window.steps,
                hidden: n_h,
                h_prev: Vec::with_capacity(cap),
                s_prev: Vec::with_capacity(cap),
                forget: Vec::with_capacity(cap),
                candidate: Vec::with_capacity(cap),
                input: Vec::with_capacity(cap),
                output: Vec::with_capacity(cap),
                tanh_s: Vec::with_capacity(cap),
                ..Default::default()
            };
        }
        for t in 0..window.steps {
            step(&w.cell, window.step(t), &state, &mut f, &mut c, &mut i, &mut o);
            if let Some(cache) = cache.as_deref_mut() {
                cache.h_prev.extend_from_slice(&state.h);
                cache.s_prev.extend_from_slice(&state.s);
                cache.forget.extend_from_slice(&f);
                cache.candidate.extend_from_slice(&c);
                cache.input.extend_from_slice(&i);
                cache.output.extend_from_slice(&o);
            }
            let mut finite = true;
            for j in 0..n_h {
                let s = f[j] * state.s[j] + i[j] * c[j];
                let ts = s.tanh();
                state.s[j] = s;
                state.h[j] = o[j] * ts;
                finite &= s.is_finite();
                if let Some(cache) = cache.as_deref_mut() {
                    cache.tanh_s.push(ts);
                }
            }
            if !finite {
                return Err(Error::Numeric {
                    step: t,
                    what: "non-finite LSTM cell state".into(),
                });
            }
        }
        let mut u1 = vec![0.0; d.dense1];
        w.dense1.apply(&state.h, &mut u1);
        u1.iter_mut().for_each(|v| *v = v.tanh());
        let mut u2 = vec![0.0; d.dense2];
        w.dense2.apply(&u1, &mut u2);
        u2.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = [0.0];
        w.head.apply(&u2, &mut y);
        if !y[0].is_finite() {
            return Err(Error::Numeric {
                step: window.steps,
                what: "non-finite network output".into(),
            });
        }
        if let Some(cache) = cache {
            cache.h_last = state.h;
            cache.dense1 = u1;
            cache.dense2 = u2;
        }
        Ok(y[0])
    }

    /// Accumulates `dy * d(prediction)/d(weights)` into `grads` by
    /// backpropagation through the full unroll.
    pub fn backward(&self, window: &TrainingWindow, cache: &ForwardCache, dy: f64, grads: &mut Weights) {
        let w = &self.weights;
        let n_h = cache.hidden;

        grads.head.weight.outer_add(&[dy], &cache.dense2);
        grads.head.bias[0] += dy;
        let mut du2 = vec![0.0; cache.dense2.len()];
        w.head.weight.mul_t_add(&[dy], &mut du2);
        for (g, u) in du2.iter_mut().zip(&cache.dense2) {
            *g *= 1.0 - u * u;
        }
        grads.dense2.weight.outer_add(&du2, &cache.dense1);
        for (b, g) in grads.dense2.bias.iter_mut().zip(&du2) {
            *b += g;
        }
        let mut du1 = vec![0.0; cache.dense1.len()];
        w.dense2.weight.mul_t_add(&du2, &mut du1);
        for (g, u) in du1.iter_mut().zip(&cache.dense1) {
            *g *= 1.0 - u * u;
        }
        grads.dense1.weight.outer_add(&du1, &cache.h_last);
        for (b, g) in grads.dense1.bias.iter_mut().zip(&du1) {
            *b += g;
        }
        let mut dh = vec![0.0; n_h];
        w.dense1.weight.mul_t_add(&du1, &mut dh);

        let mut ds = vec![0.0; n_h];
        let mut da_f = vec![0.0; n_h];
        let mut da_c = vec![0.0; n_h];
        let mut da_i = vec![0.0; n_h];
        let mut da_o = vec![0.0; n_h];
        for t in (0..cache.steps).rev() {
            let f = cache.at(&cache.forget, t);
            let c = cache.at(&cache.candidate, t);
            let i = cache.at(&cache.input, t);
            let o = cache.at(&cache.output, t);
            let ts = cache.at(&cache.tanh_s, t);
            let s_prev = cache.at(&cache.s_prev, t);
            let h_prev = cache.at(&cache.h_prev, t);
            for j in 0..n_h {
                ds[j] += dh[j] * o[j] * (1.0 - ts[j] * ts[j]);
                da_o[j] = dh[j] * ts[j] * o[j] * (1.0 - o[j]);
                da_f[j] = ds[j] * s_prev[j] * f[j] * (1.0 - f[j]);
                da_i[j] = ds[j] * c[j] * i[j] * (1.0 - i[j]);
                da_c[j] = ds[j] * i[j] * (1.0 - c[j] * c[j]);
            }
            let x = window.step(t);
            dh.fill(0.0);
            for (g, gw, da) in [
                (&mut grads.cell.forget, &w.cell.forget, &da_f),
                (&mut grads.cell.candidate, &w.cell.candidate, &da_c),
                (&mut grads.cell.input, &w.cell.input, &da_i),
                (&mut grads.cell.output, &w.cell.output, &da_o),
            ] {
                g.w_input.outer_add(da, x);
                g.w_hidden.outer_add(da, h_prev);
                for (b, v) in g.bias.iter_mut().zip(da.iter()) {
                    *b += v;
                }
                gw.w_hidden.mul_t_add(da, &mut dh);
            }
            for j in 0..n_h {
                ds[j] *= f[j];
            }
        }
    }
}

/// Windows per gradient chunk; fixed so the reduction order never depends
/// on the worker count.
const GRAD_CHUNK: usize = 8;

/// Mean squared error over the batch and its exact gradient.
pub fn loss_and_gradients(net: &NetworkParams, batch: &[TrainingWindow]) -> Result<(f64, Weights)> {
    if batch.is_empty() {
        return Err(Error::Rejected("empty batch".into()));
    }
    let n = batch.len() as f64;
    let chunks: Vec<&[TrainingWindow]> = batch.chunks(GRAD_CHUNK).collect();
    let partial = exec::map(&chunks, |chunk| -> Result<(f64, Weights)> {
        let mut grads = Weights::zeros(net.dims());
        let mut sse = 0.0;
        for w in chunk.iter() {
            let (y, cache) = net.forward_sequence(w)?;
            let err = y - w.target;
            sse += err * err;
            net.backward(w, &cache, 2.0 * err / n, &mut grads);
        }
        Ok((sse, grads))
    });
    let mut total = 0.0;
    let mut grads = Weights::zeros(net.dims());
    for p in partial {
        let (sse, g) = p?;
        total += sse;
        grads.add_assign(&g);
    }
    Ok((total / n, grads))
}
