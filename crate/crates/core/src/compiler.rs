//! Compiles a tensor-product spline into a single ReQU network.
//!
//! The network has three stages. Each input coordinate first passes through
//! its own B-spline bank, giving a bus `(x_l, K, B_1, ..., B_{q+K})` per
//! coordinate. For `d >= 2`, product trees then form every tensor basis
//! product `B_{j_1}(x_1) ... B_{j_d}(x_d)`. Finally a bank of constant
//! multipliers sharing one chain of constants scales each product by its
//! scaled coefficient, and the last linear layer sums them per output.

use serde::{Deserialize, Serialize};

use crate::builder::{Form, NetBuilder};
use crate::error::{Error, Result};
use crate::evaluator::forward_jet;
use crate::gadgets::{bspline_net, ceil_log2, product_tree_layers, scale_bank_layers};
use crate::network::{concat, stack, Network};
use crate::quasi::{fit_coeffs, TargetFunction, TensorSplineCoeffs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileSpec {
    pub beta: f64,
    /// Spline degree, the largest integer strictly below `beta`.
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub p: usize,
    #[serde(rename = "H")]
    pub h: f64,
    /// Depth parameter of the multipliers; `None` picks the default.
    pub l_mult: Option<usize>,
}

impl CompileSpec {
    pub fn new(beta: f64, k: usize, d: usize, p: usize, h: f64) -> Result<Self> {
        if !(beta > 2.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("smoothness must exceed 2, got {beta}")));
        }
        if k < 2 || d == 0 || p == 0 {
            return Err(Error::InvalidParameter(format!("need K >= 2, d >= 1, p >= 1; got K={k}, d={d}, p={p}")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("bound H must be positive, got {h}")));
        }
        let q = beta.ceil() as usize - 1;
        Ok(Self { beta, q, k, d, p, h, l_mult: None })
    }

    /// Spec for degree `q`, taking `beta = q + 1`.
    pub fn for_degree(q: usize, k: usize, d: usize, p: usize, h: f64) -> Result<Self> {
        Self::new(q as f64 + 1.0, k, d, p, h)
    }

    pub fn with_l_mult(mut self, l: usize) -> Self {
        self.l_mult = Some(l);
        self
    }

    /// `⌈log2(2dq + d) ∨ log2 log2 H⌉ ∨ 1`.
    pub fn default_mult_depth(&self) -> usize {
        let a = ceil_log2(2 * self.d * self.q + self.d);
        let b = if self.h > 2.0 { self.h.log2().log2().ceil() as usize } else { 0 };
        a.max(b).max(1)
    }

    pub fn depth_formula(&self) -> usize {
        6 + 2 * (self.q - 2) + ceil_log2(self.d) + 2 * self.default_mult_depth()
    }

    pub fn width_bound(&self) -> usize {
        let n = (self.k + self.q).pow(self.d as u32);
        (4 * self.d * n).max(12 * (self.k + 2 * self.q + 1)).max(self.p)
    }

    /// `C(β, d, H) = 60 L + 38 + 20 d^2 + 144 d q + 8 d`.
    pub fn c_constant(&self) -> usize {
        let d = self.d;
        60 * self.default_mult_depth() + 38 + 20 * d * d + 144 * d * self.q + 8 * d
    }

    pub fn nnz_bound(&self) -> usize {
        self.p * (self.k + self.q).pow(self.d as u32) * self.c_constant()
    }
}

/// Smallest `L >= 1` with `4^{4^L} >= value`.
pub fn min_mult_depth(value: f64) -> Result<usize> {
    (1..=4)
        .find(|&l| 4f64.powf(4f64.powi(l)) >= value)
        .map(|l| l as usize)
        .ok_or(Error::CoefficientOverflow { value, l: 4 })
}

/// Audited size of a compiled network next to the closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub depth_formula: usize,
    pub depth_actual: usize,
    pub width_bound: usize,
    pub width_actual: usize,
    pub nnz_bound: usize,
    pub nnz_actual: usize,
    pub max_abs_weight: f64,
}

impl BudgetReport {
    pub fn depth_ok(&self) -> bool {
        self.depth_actual == self.depth_formula
    }

    pub fn width_ok(&self) -> bool {
        self.width_actual <= self.width_bound
    }

    pub fn nnz_ok(&self) -> bool {
        self.nnz_actual <= self.nnz_bound
    }

    pub fn weights_ok(&self) -> bool {
        self.max_abs_weight <= 1.0
    }

    pub fn all_ok(&self) -> bool {
        self.depth_ok() && self.width_ok() && self.nnz_ok() && self.weights_ok()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Grid estimates of `sup |f - net|` and `sup |∇f - ∇net|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitErrors {
    pub sup_value: f64,
    /// `None` when the target has no exact Jacobian.
    pub sup_gradient: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub net: Network,
    pub spec: CompileSpec,
    pub coeffs: TensorSplineCoeffs,
    pub budget_report: BudgetReport,
    /// Multiplier depth actually used.
    pub l_mult: usize,
    pub fit_errors: Option<FitErrors>,
}

impl CompiledModel {
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }
}

fn check_shapes(c: &TensorSplineCoeffs, spec: &CompileSpec) -> Result<()> {
    let pairs = [(spec.d, c.d), (spec.p, c.p), (spec.q, c.q), (spec.k, c.k)];
    for (want, got) in pairs {
        if want != got {
            return Err(Error::ShapeMismatch { expected: want, got });
        }
    }
    if spec.q < 2 {
        return Err(Error::InvalidParameter("spline degree must be at least 2".into()));
    }
    Ok(())
}

pub fn compile(coeffs: &TensorSplineCoeffs, spec: &CompileSpec) -> Result<CompiledModel> {
    check_shapes(coeffs, spec)?;
    let (d, q, k, p) = (spec.d, spec.q, spec.k, spec.p);
    let n = q + k;
    let per = n.pow(d as u32);
    let max_wt = coeffs.max_abs_wt();
    let l_mult = match spec.l_mult {
        Some(l) => {
            if l == 0 || 4f64.powf(4f64.powi(l as i32)) < max_wt {
                return Err(Error::CoefficientOverflow { value: max_wt, l });
            }
            l
        }
        None => spec.default_mult_depth().max(min_mult_depth(max_wt)?),
    };

    let bank = bspline_net(q, k)?;
    let copies: Vec<&Network> = (0..d).map(|_| &bank.net).collect();
    let stage1 = stack(&copies)?;

    let bus = d * (n + 2);
    let mut b = NetBuilder::new(bus);
    let products: Vec<Form> = if d == 1 {
        (0..n).map(|j| Form::var(2 + j)).collect()
    } else {
        let groups: Vec<Vec<Form>> = (0..per)
            .map(|flat| {
                let mut js = vec![0; d];
                let mut rest = flat;
                for l in (0..d).rev() {
                    js[l] = rest % n;
                    rest /= n;
                }
                js.iter().enumerate().map(|(l, &j)| Form::var(l * (n + 2) + 2 + j)).collect()
            })
            .collect();
        product_tree_layers(&mut b, &groups)?
    };

    let targets: Vec<f64> = (0..per).map(|j| (0..p).fold(0.0f64, |a, m| a.max(coeffs.wt[m * per + j].abs()))).collect();
    let (scaled, gains) = scale_bank_layers(&mut b, &products, &targets, l_mult)?;
    let outputs: Vec<Form> = (0..p)
        .map(|m| {
            (0..per).fold(Form::zero(), |acc, j| {
                let w = coeffs.wt[m * per + j];
                if w == 0.0 {
                    acc
                } else {
                    acc.add(&scaled[j].scale(w / gains[j]))
                }
            })
        })
        .collect();
    let tail = b.finish(&outputs)?;
    let net = concat(&stage1, &tail)?;

    let audit = net.audit();
    let budget_report = BudgetReport {
        depth_formula: spec.depth_formula(),
        depth_actual: audit.depth,
        width_bound: spec.width_bound(),
        width_actual: audit.width,
        nnz_bound: spec.nnz_bound(),
        nnz_actual: audit.nonzero,
        max_abs_weight: audit.max_abs_weight,
    };
    Ok(CompiledModel { net, spec: spec.clone(), coeffs: coeffs.clone(), budget_report, l_mult, fit_errors: None })
}

fn grid_points(d: usize, per_dim: usize) -> Vec<Vec<f64>> {
    let total = per_dim.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut rest = flat;
            (0..d)
                .map(|_| {
                    let i = rest % per_dim;
                    rest /= per_dim;
                    i as f64 / (per_dim - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Fits the spline, compiles it and records grid errors against `f`.
pub fn compile_function(f: &TargetFunction, spec: &CompileSpec) -> Result<CompiledModel> {
    if f.d != spec.d || f.p != spec.p {
        return Err(Error::ShapeMismatch { expected: spec.d * spec.p, got: f.d * f.p });
    }
    let coeffs = fit_coeffs(f, spec.q, spec.k)?;
    let mut model = compile(&coeffs, spec)?;
    let per_dim = match spec.d {
        1 => 1001,
        2 => 61,
        _ => 13,
    };
    let mut sup_value: f64 = 0.0;
    let mut sup_gradient: Option<f64> = f.has_jacobian().then_some(0.0);
    for x in grid_points(spec.d, per_dim) {
        let jet = forward_jet(&model.net, &x)?;
        let fx = f.eval(&x);
        sup_value = jet.value.iter().zip(&fx).fold(sup_value, |a, (u, v)| a.max((u - v).abs()));
        if let (Some(g), Some(jf)) = (sup_gradient.as_mut(), f.jacobian(&x)) {
            for (row_n, row_f) in jet.jacobian.iter().zip(&jf) {
                let diff: f64 = row_n.iter().zip(row_f).map(|(a, b)| (a - b) * (a - b)).sum();
                *g = g.max(diff.sqrt());
            }
        }
    }
    model.fit_errors = Some(FitErrors { sup_value, sup_gradient });
    Ok(model)
}

/// Order `s = ℓ + ⌊K R / (2 e d 9^d)⌋` for a `(Q, R)`-analytic target.
pub fn analytic_order(q_const: f64, r: f64, k: usize, ell: usize, d: usize) -> Result<usize> {
    if !(q_const > 0.0) || !(r > 0.0) || d == 0 {
        return Err(Error::InvalidParameter(format!("need Q > 0, R > 0, d >= 1; got Q={q_const}, R={r}, d={d}")));
    }
    let denom = 2.0 * std::f64::consts::E * d as f64 * 9f64.powi(d as i32);
    let ratio = k as f64 * r / denom;
    // ratios within rounding of an integer are treated as that integer
    let nearest = ratio.round();
    let snapped = if (ratio - nearest).abs() <= 1e-12 * ratio.max(1.0) { nearest } else { ratio };
    if snapped <= 1.0 {
        let min_k = (denom / r).floor() as usize + 1;
        return Err(Error::Precondition(format!("K = {k} is too small for R = {r}, d = {d}: need K >= {min_k}")));
    }
    Ok(ell + snapped.floor() as usize)
}
