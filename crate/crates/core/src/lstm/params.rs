use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += self * x`
    #[inline]
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += self^T * y`
    #[inline]
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }

    /// `self += a * b^T`
    #[inline]
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        for (row, &ar) in self.data.chunks_exact_mut(self.cols).zip(a) {
            for (m, bc) in row.iter_mut().zip(b) {
                *m += ar * bc;
            }
        }
    }
}

/// Input weights, recurrent weights and bias of one LSTM gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        GateParams {
            w_input: Matrix::zeros(hidden, input),
            w_hidden: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }

    /// `w_input * x + w_hidden * h + bias`
    #[inline]
    pub fn preactivation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        self.w_input.mul_add(x, out);
        self.w_hidden.mul_add(h, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub forget: GateParams,
    pub candidate: GateParams,
    pub input: GateParams,
    pub output: GateParams,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCellParams {
            forget: GateParams::zeros(input, hidden),
            candidate: GateParams::zeros(input, hidden),
            input: GateParams::zeros(input, hidden),
            output: GateParams::zeros(input, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forget.w_input.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.forget.w_input.rows
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.forget, &self.candidate, &self.input, &self.output]
    }

    fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [&mut self.forget, &mut self.candidate, &mut self.input, &mut self.output]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        self.weight.mul_add(x, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
}

impl Dims {
    pub fn standard(input: usize) -> Self {
        Dims {
            input,
            hidden: 32,
            dense1: 32,
            dense2: 16,
        }
    }
}

/// Every trainable weight of the network. Gradients and Adam moments share
/// this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub cell: LstmCellParams,
    pub dense1: Dense,
    pub dense2: Dense,
    pub head: Dense,
}

impl Weights {
    pub fn zeros(d: Dims) -> Self {
        Weights {
            cell: LstmCellParams::zeros(d.input, d.hidden),
            dense1: Dense::zeros(d.hidden, d.dense1),
            dense2: Dense::zeros(d.dense1, d.dense2),
            head: Dense::zeros(d.dense2, 1),
        }
    }

    /// Uniform(+-1/sqrt(fan_in)) matrices, zero biases, forget bias 1.
    pub fn init(d: Dims, rng: &mut Rng) -> Self {
        let mut w = Weights::zeros(d);
        for g in w.cell.gates_mut() {
            g.w_input = Matrix::uniform(d.hidden, d.input, 1.0 / (d.input as f64).sqrt(), rng);
            g.w_hidden = Matrix::uniform(d.hidden, d.hidden, 1.0 / (d.hidden as f64).sqrt(), rng);
        }
        w.cell.forget.bias.fill(1.0);
        for layer in [&mut w.dense1, &mut w.dense2, &mut w.head] {
            let (rows, cols) = (layer.weight.rows, layer.weight.cols);
            layer.weight = Matrix::uniform(rows, cols, 1.0 / (cols as f64).sqrt(), rng);
        }
        w
    }

    pub fn dims(&self) -> Dims {
        Dims {
            input: self.cell.input_dim(),
            hidden: self.cell.hidden_dim(),
            dense1: self.dense1.bias.len(),
            dense2: self.dense2.bias.len(),
        }
    }

    /// Parameter blocks in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(18);
        for g in self.cell.gates() {
            out.push(&g.w_input.data);
            out.push(&g.w_hidden.data);
            out.push(&g.bias);
        }
        for l in [&self.dense1, &self.dense2, &self.head] {
            out.push(&l.weight.data);
            out.push(&l.bias);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(18);
        for g in self.cell.gates_mut() {
            out.push(&mut g.w_input.data);
            out.push(&mut g.w_hidden.data);
            out.push(&mut g.bias);
        }
        for l in [&mut self.dense1, &mut self.dense2, &mut self.head] {
            out.push(&mut l.weight.data);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[k..k + s.len()]);
            k += s.len();
        }
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn check_dims(&self, d: Dims) -> Result<()> {
        if self.dims() != d {
            return Err(Error::Contract(format!(
                "weights have dims {:?}, expected {d:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

/// Z-score statistics for inputs and target, from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl NormStats {
    pub fn identity(input: usize) -> Self {
        NormStats {
            input_mean: vec![0.0; input],
            input_std: vec![1.0; input],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    /// Population mean/std per column; zero or non-finite std becomes 1.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let m = inputs.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..m).map(|j| inputs.iter().map(|r| r[j]).collect()).collect();
        let (input_mean, input_std) = cols.iter().map(|c| mean_std(c)).unzip();
        let (target_mean, target_std) = mean_std(targets);
        NormStats {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    pub fn normalize_input(&self, j: usize, v: f64) -> f64 {
        (v - self.input_mean[j]) / self.input_std[j]
    }

    pub fn normalize_target(&self, v: f64) -> f64 {
        (v - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, v: f64) -> f64 {
        v * self.target_std + self.target_mean
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}
