//! Derivatives of networks and black-box maps, and Hölder-norm estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{requ, Network};
use crate::quasi::{eval_spline, eval_spline_deriv, TargetFunction, TensorSplineCoeffs};

/// Value and Jacobian (`p` rows of length `d`) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JetValue {
    pub value: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
}

/// Forward-mode first derivatives of a network, using `σ'(t) = 2 (t ∨ 0)`.
pub fn forward_jet(net: &Network, x: &[f64]) -> Result<JetValue> {
    let d = net.input_dim();
    if x.len() != d {
        return Err(Error::ShapeMismatch { expected: d, got: x.len() });
    }
    let layers = net.layers();
    let mut y = layers[0].w.apply(x);
    let mut jac = vec![vec![0.0; d]; y.len()];
    for &(r, c, v) in layers[0].w.entries() {
        jac[r][c] += v;
    }
    for layer in &layers[1..] {
        for ((yi, ji), vi) in y.iter_mut().zip(jac.iter_mut()).zip(&layer.v) {
            let t = *yi - vi;
            let slope = 2.0 * t.max(0.0);
            *yi = requ(t);
            ji.iter_mut().for_each(|g| *g *= slope);
        }
        let mut next_jac = vec![vec![0.0; d]; layer.w.rows()];
        for &(r, c, v) in layer.w.entries() {
            for (a, b) in next_jac[r].iter_mut().zip(&jac[c]) {
                *a += v * b;
            }
        }
        y = layer.w.apply(&y);
        jac = next_jac;
    }
    Ok(JetValue { value: y, jacobian: jac })
}

/// A map `[0,1]^d -> R^p` that may know its Jacobian.
pub trait VectorMap: Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, _x: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
}

impl VectorMap for Network {
    fn in_dim(&self) -> usize {
        self.input_dim()
    }
    fn out_dim(&self) -> usize {
        self.output_dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward_unchecked(x)
    }
    fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        forward_jet(self, x).ok().map(|j| j.jacobian)
    }
}

impl VectorMap for TargetFunction {
    fn in_dim(&self) -> usize {
        self.d
    }
    fn out_dim(&self) -> usize {
        self.p
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        TargetFunction::eval(self, x)
    }
    fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        TargetFunction::jacobian(self, x)
    }
}

impl VectorMap for TensorSplineCoeffs {
    fn in_dim(&self) -> usize {
        self.d
    }
    fn out_dim(&self) -> usize {
        self.p
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        eval_spline(self, x).expect("point inside the unit cube")
    }
    fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        let mut rows = vec![vec![0.0; self.d]; self.p];
        for i in 0..self.d {
            let mut gamma = vec![0; self.d];
            gamma[i] = 1;
            let g = eval_spline_deriv(self, x, &gamma).ok()?;
            for (row, v) in rows.iter_mut().zip(g) {
                row[i] = v;
            }
        }
        Some(rows)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], gamma: &[usize], h: f64) -> f64 {
    let stencil: usize = gamma.iter().map(|g| g + 1).product();
    let mut point = x.to_vec();
    let mut total = 0.0;
    for s in 0..stencil {
        let mut rest = s;
        let mut weight = 1.0;
        for (i, &g) in gamma.iter().enumerate() {
            let k = rest % (g + 1);
            rest /= g + 1;
            point[i] = x[i] + (g as f64 / 2.0 - k as f64) * h;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            weight *= sign * binomial(g, k);
        }
        total += weight * f(&point);
    }
    let order: usize = gamma.iter().sum();
    total / h.powi(order as i32)
}

/// Central-difference estimate of `D^γ f(x)` with one Richardson step on `h` and `h/2`.
pub fn fd_deriv(f: &dyn Fn(&[f64]) -> f64, x: &[f64], gamma: &[usize], h: f64) -> Result<f64> {
    if gamma.len() != x.len() {
        return Err(Error::ShapeMismatch { expected: x.len(), got: gamma.len() });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let order: usize = gamma.iter().sum();
    let margin = (order as f64 + 1.0) * h;
    if x.iter().any(|&xi| xi < margin || xi > 1.0 - margin) {
        return Err(Error::Precondition(format!("point {x:?} is closer than {margin} to the boundary")));
    }
    if order == 0 {
        return Ok(f(x));
    }
    let coarse = central_difference(f, x, gamma, h);
    let fine = central_difference(f, x, gamma, h / 2.0);
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Default finite-difference step for a spline with `K` subintervals.
pub fn default_step(k: usize) -> f64 {
    1e-4f64.max(1.0 / (64.0 * k as f64))
}

/// All multi-indices of length `d` with `|γ| <= ell`, by total order, then
/// lexicographically descending, so lower orders always come first.
pub fn multi_indices(d: usize, ell: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for order in 0..=ell {
        let mut level = Vec::new();
        fill_level(d, order, &mut Vec::new(), &mut level);
        out.extend(level);
    }
    out
}

fn fill_level(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == d {
        prefix.push(left);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for g in (0..=left).rev() {
        prefix.push(g);
        fill_level(d, left - g, prefix, out);
        prefix.pop();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeSup {
    pub gamma: Vec<usize>,
    pub sup: f64,
}

/// Grid sups of `|D^γ f|` for `|γ| <= ell` and a sampled Hölder quotient of
/// the order-`ell` derivatives. The sups for `γ ≠ 0` only use grid points far
/// enough from the boundary for the finite-difference stencil.
#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub ell: usize,
    pub delta: f64,
    pub sups: Vec<DerivativeSup>,
    pub holder_constant_estimate: f64,
    pub note: &'static str,
}

impl HolderEstimate {
    pub fn c_norm(&self) -> f64 {
        self.sups.iter().fold(0.0, |a, s| a.max(s.sup))
    }

    pub fn norm(&self) -> f64 {
        self.c_norm().max(self.holder_constant_estimate)
    }
}

/// Settings for [`holder_norm_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct HolderConfig {
    pub ell: usize,
    pub delta: f64,
    pub grid_n: usize,
    pub pair_samples: usize,
    pub seed: u64,
    pub step: f64,
}

impl HolderConfig {
    pub fn new(ell: usize, grid_n: usize, pair_samples: usize, seed: u64) -> Self {
        Self { ell, delta: 1.0, grid_n, pair_samples, seed, step: 1e-4 }
    }
}

fn derivative_at(f: &dyn Fn(&[f64]) -> f64, x: &[f64], gamma: &[usize], h: f64) -> Result<f64> {
    if gamma.iter().all(|&g| g == 0) {
        Ok(f(x))
    } else {
        fd_deriv(f, x, gamma, h)
    }
}

pub fn holder_norm_estimate(f: &(dyn Fn(&[f64]) -> f64 + Sync), d: usize, cfg: HolderConfig) -> Result<HolderEstimate> {
    if d == 0 || cfg.grid_n == 0 {
        return Err(Error::InvalidParameter("dimension and grid size must be positive".into()));
    }
    let pts = cfg.grid_n + 1;
    let total = pts.pow(d as u32);
    let mut sups = Vec::new();
    for gamma in multi_indices(d, cfg.ell) {
        let order: usize = gamma.iter().sum();
        let margin = if order == 0 { 0.0 } else { (order as f64 + 1.0) * cfg.step };
        let mut sup: f64 = 0.0;
        let mut x = vec![0.0; d];
        for flat in 0..total {
            let mut rest = flat;
            for xi in x.iter_mut() {
                *xi = (rest % pts) as f64 / cfg.grid_n as f64;
                rest /= pts;
            }
            if x.iter().any(|&xi| xi < margin || xi > 1.0 - margin) {
                continue;
            }
            sup = sup.max(derivative_at(f, &x, &gamma, cfg.step)?.abs());
        }
        sups.push(DerivativeSup { gamma, sup });
    }

    let margin = (cfg.ell as f64 + 1.0) * cfg.step;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scales = [0.25, 1.0 / 32.0, 1.0 / 256.0];
    let top: Vec<Vec<usize>> =
        multi_indices(d, cfg.ell).into_iter().filter(|g| g.iter().sum::<usize>() == cfg.ell).collect();
    let mut holder: f64 = 0.0;
    for i in 0..cfg.pair_samples {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(margin..=1.0 - margin)).collect();
        let r = scales[i % scales.len()] * rng.gen_range(0.5..=1.0);
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| (xi + r * di / len).clamp(margin, 1.0 - margin)).collect();
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        for gamma in &top {
            let fx = derivative_at(f, &x, gamma, cfg.step)?;
            let fy = derivative_at(f, &y, gamma, cfg.step)?;
            holder = holder.max((fx - fy).abs() / dist.min(1.0).powf(cfg.delta));
        }
    }
    Ok(HolderEstimate {
        ell: cfg.ell,
        delta: cfg.delta,
        sups,
        holder_constant_estimate: holder,
        note: "derivative sups of positive order exclude points within the stencil margin of the boundary",
    })
}
