use serde::{Deserialize, Serialize};

use super::params::LstmCellParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    /// Cell state.
    pub s: Vec<f64>,
    /// Hidden output.
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            s: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step, kept for inspection and backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub forget: Vec<f64>,
    pub candidate: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step:
///
/// ```text
/// f = sigmoid(Wzf z + Whf h + bf)      s~ = tanh(Wzs z + Whs h + bs)
/// i = sigmoid(Wzi z + Whi h + bi)      o  = sigmoid(Wzo z + Who h + bo)
/// s' = f * s + i * s~                  h' = o * tanh(s')
/// ```
pub fn cell_forward(
    params: &LstmCellParams,
    input: &[f64],
    prev: &LstmState,
) -> Result<(LstmState, GateActivations)> {
    let (n_in, n_h) = (params.input_dim(), params.hidden_dim());
    if input.len() != n_in || prev.s.len() != n_h || prev.h.len() != n_h {
        return Err(Error::Contract(format!(
            "cell expects input {n_in} / hidden {n_h}, got input {} / state {}+{}",
            input.len(),
            prev.s.len(),
            prev.h.len()
        )));
    }
    let mut f = vec![0.0; n_h];
    let mut c = vec![0.0; n_h];
    let mut i = vec![0.0; n_h];
    let mut o = vec![0.0; n_h];
    step(params, input, prev, &mut f, &mut c, &mut i, &mut o);
    let s: Vec<f64> = (0..n_h).map(|j| f[j] * prev.s[j] + i[j] * c[j]).collect();
    let h = (0..n_h).map(|j| o[j] * s[j].tanh()).collect();
    Ok((
        LstmState { s, h },
        GateActivations {
            forget: f,
            candidate: c,
            input: i,
            output: o,
        },
    ))
}

/// Gate activations for one step written into the provided buffers.
#[inline]
pub(crate) fn step(
    p: &LstmCellParams,
    x: &[f64],
    prev: &LstmState,
    f: &mut [f64],
    c: &mut [f64],
    i: &mut [f64],
    o: &mut [f64],
) {
    p.forget.preactivation(x, &prev.h, f);
    p.candidate.preactivation(x, &prev.h, c);
    p.input.preactivation(x, &prev.h, i);
    p.output.preactivation(x, &prev.h, o);
    for v in f.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in c.iter_mut() {
        *v = v.tanh();
    }
    for v in i.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in o.iter_mut() {
        *v = sigmoid(*v);
    }
}
