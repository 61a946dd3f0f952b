//! Dense multilayer perceptron with biases, trained by backpropagation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::VectorMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Requ,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Requ => {
                let r = t.max(0.0);
                r * r
            }
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Requ => 2.0 * t.max(0.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Requ => "requ",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "requ" => Ok(Activation::Requ),
            other => Err(Error::InvalidParameter(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Offset of the row-major `n_out x n_in` weights in the parameter vector.
    w: usize,
    /// Offset of the bias.
    b: usize,
}

/// Fully connected network; the activation follows every layer but the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    activation: Activation,
    layers: Vec<Dense>,
    pub params: Vec<f64>,
}

/// Pre-activations of every layer for one input.
struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new(widths: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid layer widths {widths:?}")));
        }
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for pair in widths.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let w = params.len();
            params.extend((0..n_in * n_out).map(|_| rng.gen_range(-limit..=limit)));
            let b = params.len();
            params.extend(std::iter::repeat_n(0.0, n_out));
            layers.push(Dense { n_in, n_out, w, b });
        }
        Ok(Self { activation, layers, params })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn affine(&self, layer: &Dense, x: &[f64]) -> Vec<f64> {
        let w = &self.params[layer.w..layer.w + layer.n_in * layer.n_out];
        let b = &self.params[layer.b..layer.b + layer.n_out];
        w.chunks(layer.n_in).zip(b).map(|(row, bi)| row.iter().zip(x).fold(*bi, |a, (wi, xi)| a + wi * xi)).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            a = self.affine(layer, &a);
            if i < last {
                a.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
        a
    }

    fn trace(&self, x: &[f64]) -> (Vec<f64>, Trace) {
        let last = self.layers.len() - 1;
        let mut trace = Trace { inputs: Vec::new(), pre: Vec::new() };
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = self.affine(layer, &a);
            trace.inputs.push(a);
            a = if i < last { z.iter().map(|v| self.activation.apply(*v)).collect() } else { z.clone() };
            trace.pre.push(z);
        }
        (a, trace)
    }

    /// Adds `d loss / d params` to `grad`, given `d loss / d output`.
    fn backprop(&self, trace: &Trace, mut delta: Vec<f64>, grad: &mut [f64]) {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i + 1 < self.layers.len() {
                for (d, z) in delta.iter_mut().zip(&trace.pre[i]) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let input = &trace.inputs[i];
            for (o, d) in delta.iter().enumerate() {
                grad[layer.b + o] += d;
                let row = layer.w + o * layer.n_in;
                for (g, xi) in grad[row..row + layer.n_in].iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if i > 0 {
                let w = &self.params[layer.w..layer.w + layer.n_in * layer.n_out];
                let mut back = vec![0.0; layer.n_in];
                for (row, d) in w.chunks(layer.n_in).zip(&delta) {
                    for (b, wi) in back.iter_mut().zip(row) {
                        *b += d * wi;
                    }
                }
                delta = back;
            }
        }
    }

    /// Mean squared error over the given samples and its gradient.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let n = xs.len() as f64;
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let (out, trace) = self.trace(x);
            let r = out[0] - y;
            loss += r * r;
            self.backprop(&trace, vec![2.0 * r / n], &mut grad);
        }
        (loss / n, grad)
    }

    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(x, y)| (self.forward(x)[0] - y).powi(2)).sum::<f64>() / xs.len() as f64
    }

    /// Value and input Jacobian, by forward mode.
    pub fn jet(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = x.len();
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        let mut jac: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = self.affine(layer, &a);
            let w = &self.params[layer.w..layer.w + layer.n_in * layer.n_out];
            let mut next: Vec<Vec<f64>> = w
                .chunks(layer.n_in)
                .map(|row| (0..d).map(|c| row.iter().zip(&jac).map(|(wi, jr)| wi * jr[c]).sum()).collect())
                .collect();
            if i < last {
                for (row, zi) in next.iter_mut().zip(&z) {
                    let s = self.activation.derivative(*zi);
                    row.iter_mut().for_each(|v| *v *= s);
                }
                a = z.iter().map(|v| self.activation.apply(*v)).collect();
            } else {
                a = z;
            }
            jac = next;
        }
        (a, jac)
    }
}

impl VectorMap for Mlp {
    fn in_dim(&self) -> usize {
        self.layers[0].n_in
    }
    fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").n_out
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
    }
    fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(self.jet(x).1)
    }
}
