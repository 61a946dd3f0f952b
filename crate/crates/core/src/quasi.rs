//! Tensor-product spline fitting and evaluation.
//!
//! Coefficients are stored row-major over `(m, j_1, ..., j_d)` with 0-based
//! spline indices, `m` the output component.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::KnotVector;

pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the `p x d` Jacobian as `p` rows.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A black-box map `[0,1]^d -> R^p` with optional exact Jacobian and
/// declared smoothness `beta` and bound `h`.
#[derive(Clone)]
pub struct TargetFunction {
    pub d: usize,
    pub p: usize,
    eval: VectorFn,
    jacobian: Option<JacobianFn>,
    pub beta: Option<f64>,
    pub bound: Option<f64>,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("d", &self.d)
            .field("p", &self.p)
            .field("has_jacobian", &self.jacobian.is_some())
            .field("beta", &self.beta)
            .field("bound", &self.bound)
            .finish()
    }
}

impl TargetFunction {
    pub fn new(d: usize, p: usize, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { d, p, eval: Arc::new(eval), jacobian: None, beta: None, bound: None }
    }

    pub fn scalar(d: usize, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(d, 1, move |x| vec![eval(x)])
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_smoothness(mut self, beta: f64, bound: f64) -> Self {
        self.beta = Some(beta);
        self.bound = Some(bound);
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }
}

/// How the spline coefficients are derived from samples of the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitScheme {
    /// Tensor interpolation at the Greville abscissae.
    #[default]
    Greville,
    /// Local dual functionals: each coefficient is read off a polynomial fit
    /// on one knot cell inside the support of its basis function.
    LocalDual,
}

/// Coefficients `w` of a tensor-product spline in the normalized basis and
/// the scaled copies `wt = w * prod_l (a_{j_l+q+1} - a_{j_l})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSplineCoeffs {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub w: Vec<f64>,
    pub wt: Vec<f64>,
}

impl TensorSplineCoeffs {
    /// Builds the coefficient set from `w`, deriving `wt` from the knots.
    pub fn from_w(p: usize, d: usize, q: usize, k: usize, w: Vec<f64>) -> Result<Self> {
        let kv = KnotVector::new(q, k)?;
        let n = kv.dim();
        let per = n.pow(d as u32);
        if w.len() != p * per {
            return Err(Error::ShapeMismatch { expected: p * per, got: w.len() });
        }
        let widths: Vec<f64> = (1..=n).map(|j| kv.width(j)).collect();
        let mut wt = w.clone();
        for (flat, v) in wt.iter_mut().enumerate() {
            let mut rest = flat % per;
            let mut scale = 1.0;
            for _ in 0..d {
                scale *= widths[rest % n];
                rest /= n;
            }
            *v *= scale;
        }
        Ok(Self { p, d, q, k, w, wt })
    }

    pub fn knots(&self) -> KnotVector {
        KnotVector::new(self.q, self.k).expect("validated at construction")
    }

    /// Number of univariate basis functions, `q + K`.
    pub fn n(&self) -> usize {
        self.q + self.k
    }

    /// Number of tensor basis functions per output, `(q + K)^d`.
    pub fn basis_count(&self) -> usize {
        self.n().pow(self.d as u32)
    }

    /// Flat index of output `m` and 0-based multi-index `js`.
    pub fn index(&self, m: usize, js: &[usize]) -> usize {
        let n = self.n();
        js.iter().fold(m, |acc, &j| acc * n + j)
    }

    pub fn max_abs_w(&self) -> f64 {
        self.w.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    pub fn max_abs_wt(&self) -> f64 {
        self.wt.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: TensorSplineCoeffs = serde_json::from_str(s)?;
        let rebuilt = Self::from_w(raw.p, raw.d, raw.q, raw.k, raw.w)?;
        if rebuilt.wt.len() != raw.wt.len() {
            return Err(Error::ShapeMismatch { expected: rebuilt.wt.len(), got: raw.wt.len() });
        }
        Ok(Self { wt: raw.wt, ..rebuilt })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::ShapeMismatch { expected: self.d, got: x.len() });
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Precondition(format!("coordinate {v} outside [0, 1]")));
        }
        Ok(())
    }

    fn combine(&self, per_dim: &[Vec<f64>]) -> Vec<f64> {
        let nonzero: Vec<Vec<(usize, f64)>> =
            per_dim.iter().map(|v| v.iter().copied().enumerate().filter(|(_, b)| *b != 0.0).collect()).collect();
        let per = self.basis_count();
        let mut out = vec![0.0; self.p];
        for_each_product(&nonzero, self.n(), |offset, weight| {
            for (m, o) in out.iter_mut().enumerate() {
                *o += self.w[m * per + offset] * weight;
            }
        });
        out
    }
}

/// Visits every combination of one entry per list, passing the row-major
/// offset (base `n`) and the product of the values.
pub(crate) fn for_each_product(lists: &[Vec<(usize, f64)>], n: usize, mut f: impl FnMut(usize, f64)) {
    fn rec(lists: &[Vec<(usize, f64)>], n: usize, offset: usize, acc: f64, f: &mut impl FnMut(usize, f64)) {
        match lists.split_first() {
            None => f(offset, acc),
            Some((head, tail)) => {
                for &(i, v) in head {
                    rec(tail, n, offset * n + i, acc * v, f);
                }
            }
        }
    }
    rec(lists, n, 0, 1.0, &mut f);
}

/// Fits coefficients by Greville interpolation.
pub fn fit_coeffs(f: &TargetFunction, q: usize, k: usize) -> Result<TensorSplineCoeffs> {
    fit_coeffs_with(f, q, k, FitScheme::Greville)
}

pub fn fit_coeffs_with(f: &TargetFunction, q: usize, k: usize, scheme: FitScheme) -> Result<TensorSplineCoeffs> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("spline degree must be at least 2, got {q}")));
    }
    if f.d == 0 {
        return Err(Error::InvalidParameter("input dimension must be positive".into()));
    }
    let kv = KnotVector::new(q, k)?;
    let w = match scheme {
        FitScheme::Greville => greville_fit(f, &kv)?,
        FitScheme::LocalDual => local_dual_fit(f, &kv)?,
    };
    TensorSplineCoeffs::from_w(f.p, f.d, q, k, w)
}

fn greville_fit(f: &TargetFunction, kv: &KnotVector) -> Result<Vec<f64>> {
    let (n, d, p, q) = (kv.dim(), f.d, f.p, kv.degree());
    let xi = kv.greville();
    let colloc = DMatrix::from_fn(n, n, |i, j| kv.basis_n(q, xi[i])[j]);
    let lu = colloc.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular);
    }
    let per = n.pow(d as u32);

    // samples at the tensor Greville grid, laid out like the coefficients
    let mut data = vec![0.0; p * per];
    let mut point = vec![0.0; d];
    for flat in 0..per {
        let mut rest = flat;
        for l in (0..d).rev() {
            point[l] = xi[rest % n];
            rest /= n;
        }
        let value = f.eval(&point);
        if value.len() != p {
            return Err(Error::ShapeMismatch { expected: p, got: value.len() });
        }
        for (m, v) in value.into_iter().enumerate() {
            data[m * per + flat] = v;
        }
    }

    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for block in 0..p * per / (n * stride) {
            for inner in 0..stride {
                let base = block * n * stride + inner;
                let fiber = nalgebra::DVector::from_fn(n, |i, _| data[base + i * stride]);
                let sol = lu.solve(&fiber).ok_or(Error::Singular)?;
                if sol.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular);
                }
                for i in 0..n {
                    data[base + i * stride] = sol[i];
                }
            }
        }
    }
    Ok(data)
}

/// Univariate dual functional: sample points and weights such that
/// `sum_r weight_r * s(point_r)` returns coefficient `j` of any spline `s`.
#[derive(Debug, Clone)]
pub struct DualFunctional {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Dual functionals for all `q + K` normalized splines of degree `q`.
pub fn local_dual_functionals(kv: &KnotVector) -> Result<Vec<DualFunctional>> {
    let q = kv.degree();
    (1..=kv.dim())
        .map(|j| {
            let cells: Vec<usize> = (j..=j + q).filter(|&i| kv.a(i) < kv.a(i + 1)).collect();
            let cell = cells[cells.len() / 2];
            let (lo, hi) = (kv.a(cell), kv.a(cell + 1));
            let points: Vec<f64> = (0..=q).map(|r| lo + (r as f64 + 0.5) / (q as f64 + 1.0) * (hi - lo)).collect();
            // splines cell-q ..= cell (1-based) are the ones alive on this cell
            let first = cell - q;
            let local = DMatrix::from_fn(q + 1, q + 1, |r, c| kv.basis_n(q, points[r])[first + c - 1]);
            let inv = local.try_inverse().ok_or(Error::Singular)?;
            let row = j - first;
            let weights = (0..=q).map(|r| inv[(row, r)]).collect();
            Ok(DualFunctional { points, weights })
        })
        .collect()
}

fn local_dual_fit(f: &TargetFunction, kv: &KnotVector) -> Result<Vec<f64>> {
    let (n, d, p, q) = (kv.dim(), f.d, f.p, kv.degree());
    let duals = local_dual_functionals(kv)?;
    let per = n.pow(d as u32);
    let mut w = vec![0.0; p * per];
    let mut js = vec![0usize; d];
    let mut point = vec![0.0; d];
    for flat in 0..per {
        let mut rest = flat;
        for l in (0..d).rev() {
            js[l] = rest % n;
            rest /= n;
        }
        let stencil = (q + 1).pow(d as u32);
        for s in 0..stencil {
            let mut rest = s;
            let mut weight = 1.0;
            for l in (0..d).rev() {
                let r = rest % (q + 1);
                rest /= q + 1;
                point[l] = duals[js[l]].points[r];
                weight *= duals[js[l]].weights[r];
            }
            let value = f.eval(&point);
            for m in 0..p {
                w[m * per + flat] += weight * value[m];
            }
        }
    }
    Ok(w)
}

/// Value of the tensor-product spline at `x`.
pub fn eval_spline(c: &TensorSplineCoeffs, x: &[f64]) -> Result<Vec<f64>> {
    c.check_point(x)?;
    let kv = c.knots();
    let per_dim: Vec<Vec<f64>> = x.iter().map(|&xi| kv.basis_n(c.q, xi)).collect();
    Ok(c.combine(&per_dim))
}

/// Partial derivative `D^gamma` of the spline at `x` (right derivatives at knots).
pub fn eval_spline_deriv(c: &TensorSplineCoeffs, x: &[f64], gamma: &[usize]) -> Result<Vec<f64>> {
    c.check_point(x)?;
    if gamma.len() != c.d {
        return Err(Error::ShapeMismatch { expected: c.d, got: gamma.len() });
    }
    if let Some(&g) = gamma.iter().find(|&&g| g > c.q) {
        return Err(Error::InvalidParameter(format!("derivative order {g} exceeds spline degree {}", c.q)));
    }
    let kv = c.knots();
    let per_dim: Vec<Vec<f64>> = x.iter().zip(gamma).map(|(&xi, &g)| kv.basis_n_deriv(c.q, xi, g)).collect();
    Ok(c.combine(&per_dim))
}

/// Outcome of comparing the coefficients with `(2q+1)^d 9^{d(q-1)} sup|f|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoeffBoundReport {
    pub max_abs_w: f64,
    pub bound: f64,
    /// `max|w| / sup|f|`.
    pub ratio: f64,
    pub holds: bool,
}

pub fn check_coeff_bound(c: &TensorSplineCoeffs, sup_f: f64) -> CoeffBoundReport {
    let (q, d) = (c.q as f64, c.d as i32);
    let factor = (2.0 * q + 1.0).powi(d) * 9f64.powf(c.d as f64 * (q - 1.0));
    let max_abs_w = c.max_abs_w();
    let bound = factor * sup_f;
    let ratio = if sup_f > 0.0 {
        max_abs_w / sup_f
    } else if max_abs_w == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    CoeffBoundReport { max_abs_w, bound, ratio, holds: max_abs_w <= bound }
}

/// Largest `|f_m(x)|` over the grid `{0, 1/n, ..., 1}^d`.
pub fn grid_sup(f: &TargetFunction, n: usize) -> f64 {
    let pts = n + 1;
    let total = pts.pow(f.d as u32);
    let mut x = vec![0.0; f.d];
    let mut best: f64 = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        for xi in x.iter_mut() {
            *xi = (rest % pts) as f64 / n as f64;
            rest /= pts;
        }
        best = f.eval(&x).into_iter().fold(best, |a, v| a.max(v.abs()));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_reproduced() {
        let f = TargetFunction::scalar(2, |_| 3.5);
        let c = fit_coeffs(&f, 2, 4).unwrap();
        assert!(c.w.iter().all(|v| (v - 3.5).abs() < 1e-12));
        let v = eval_spline(&c, &[0.3, 0.9]).unwrap();
        assert!((v[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn zero_and_unit_coefficients() {
        let c = TensorSplineCoeffs::from_w(1, 2, 2, 4, vec![0.0; 36]).unwrap();
        assert_eq!(eval_spline(&c, &[0.4, 0.2]).unwrap(), vec![0.0]);
        let c = TensorSplineCoeffs::from_w(1, 1, 3, 4, vec![1.0; 7]).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((eval_spline(&c, &[x]).unwrap()[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sine_fit_error() {
        let f = TargetFunction::scalar(1, |x| (std::f64::consts::PI * x[0]).sin());
        let c = fit_coeffs(&f, 2, 16).unwrap();
        let err = (0..=2000)
            .map(|i| {
                let x = i as f64 / 2000.0;
                (eval_spline(&c, &[x]).unwrap()[0] - (std::f64::consts::PI * x).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn derivative_order_rejected() {
        let c = TensorSplineCoeffs::from_w(1, 1, 2, 4, vec![1.0; 6]).unwrap();
        assert!(eval_spline_deriv(&c, &[0.5], &[3]).is_err());
        assert_eq!(eval_spline_deriv(&c, &[0.5], &[1]).unwrap()[0].abs(), 0.0);
    }

    #[test]
    fn out_of_cube_rejected() {
        let c = TensorSplineCoeffs::from_w(1, 1, 2, 4, vec![1.0; 6]).unwrap();
        assert!(eval_spline(&c, &[1.2]).is_err());
        assert!(eval_spline(&c, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn coeff_bound_examples() {
        let one = TargetFunction::scalar(1, |_| 1.0);
        let c = fit_coeffs(&one, 2, 8).unwrap();
        let r = check_coeff_bound(&c, 1.0);
        assert!(r.holds && (r.max_abs_w - 1.0).abs() < 1e-12);

        let sin = TargetFunction::scalar(1, |x| (std::f64::consts::PI * x[0]).sin());
        let c = fit_coeffs(&sin, 2, 8).unwrap();
        let r = check_coeff_bound(&c, grid_sup(&sin, 2000));
        assert_eq!(r.bound, 45.0 * grid_sup(&sin, 2000));
        assert!(r.holds && r.ratio < 2.0);

        let g = TargetFunction::scalar(2, |x| (x[0] * x[0] * x[1]).sin());
        let c = fit_coeffs(&g, 3, 4).unwrap();
        assert!(check_coeff_bound(&c, grid_sup(&g, 100)).holds);
    }

    #[test]
    fn json_shape() {
        let c = TensorSplineCoeffs::from_w(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = c.to_json().unwrap();
        assert!(s.contains("\"K\":2"));
        assert_eq!(TensorSplineCoeffs::from_json(&s).unwrap(), c);
        assert!(TensorSplineCoeffs::from_json(&s.replace("[1.0,2.0,3.0,4.0]", "[1.0]")).is_err());
    }
}
