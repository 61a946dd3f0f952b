//! Grid error norms and convergence-rate fits.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::{fd_deriv, VectorMap};

/// The grid `{0, 1/M, ..., 1}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub d: usize,
    pub m: usize,
}

impl GridSpec {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!("grid needs d >= 1 and M >= 1, got d={d}, M={m}")));
        }
        Ok(Self { d, m })
    }

    pub fn len(&self) -> usize {
        (self.m + 1).pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Point number `flat`, first coordinate varying fastest.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        (0..self.d)
            .map(|_| {
                let i = rest % (self.m + 1);
                rest /= self.m + 1;
                i as f64 / self.m as f64
            })
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// How a grid sum of squared errors is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by `M^d`, as in the experiment's formula.
    Verbatim,
    /// Divide by the number of points, `(M+1)^d`.
    Mean,
}

impl Normalization {
    fn divisor(self, grid: &GridSpec) -> f64 {
        match self {
            Normalization::Verbatim => (grid.m as f64).powi(grid.d as i32),
            Normalization::Mean => grid.len() as f64,
        }
    }
}

/// A grid error under both normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsePair {
    pub verbatim: f64,
    pub mean: f64,
}

impl MsePair {
    fn from_sum(sum: f64, grid: &GridSpec) -> Self {
        Self { verbatim: sum / Normalization::Verbatim.divisor(grid), mean: sum / Normalization::Mean.divisor(grid) }
    }

    pub fn get(&self, norm: Normalization) -> f64 {
        match norm {
            Normalization::Verbatim => self.verbatim,
            Normalization::Mean => self.mean,
        }
    }
}

fn check_dims(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec) -> Result<()> {
    if h.in_dim() != grid.d || f.in_dim() != grid.d {
        return Err(Error::ShapeMismatch { expected: grid.d, got: h.in_dim().min(f.in_dim()) });
    }
    if h.out_dim() != f.out_dim() {
        return Err(Error::ShapeMismatch { expected: f.out_dim(), got: h.out_dim() });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Sum of squared errors over the grid, under both normalizations.
pub fn mse_function_pair(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec) -> Result<MsePair> {
    check_dims(h, f, grid)?;
    let sum: f64 = grid.points().map(|x| sq_dist(&h.eval(&x), &f.eval(&x))).sum();
    Ok(MsePair::from_sum(sum, grid))
}

pub fn mse_function(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec, norm: Normalization) -> Result<f64> {
    Ok(mse_function_pair(h, f, grid)?.get(norm))
}

/// Same as [`mse_function_pair`] for squared Euclidean gradient differences.
pub fn mse_gradient_pair(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec) -> Result<MsePair> {
    check_dims(h, f, grid)?;
    let mut sum = 0.0;
    for x in grid.points() {
        let (jh, jf) = match (h.jacobian(&x), f.jacobian(&x)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Precondition("both maps need a Jacobian".into())),
        };
        sum += jh.iter().zip(&jf).map(|(a, b)| sq_dist(a, b)).sum::<f64>();
    }
    Ok(MsePair::from_sum(sum, grid))
}

pub fn mse_gradient(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec, norm: Normalization) -> Result<f64> {
    Ok(mse_gradient_pair(h, f, grid)?.get(norm))
}

/// `max |D^γ (h - f)|` over the grid, taken over all output components.
///
/// Order 1 uses exact Jacobians when both maps have them. Otherwise, and for
/// higher orders, finite differences with the given step are used and grid
/// points within the stencil margin of the boundary are skipped.
pub fn sup_error(h: &dyn VectorMap, f: &dyn VectorMap, grid: &GridSpec, gamma: &[usize], step: f64) -> Result<f64> {
    check_dims(h, f, grid)?;
    if gamma.len() != grid.d {
        return Err(Error::ShapeMismatch { expected: grid.d, got: gamma.len() });
    }
    let order: usize = gamma.iter().sum();
    let mut sup: f64 = 0.0;
    if order == 0 {
        for x in grid.points() {
            sup = h.eval(&x).iter().zip(&f.eval(&x)).fold(sup, |a, (u, v)| a.max((u - v).abs()));
        }
        return Ok(sup);
    }
    if order == 1 {
        let axis = gamma.iter().position(|&g| g == 1).expect("order one");
        let probe = grid.point(0);
        if h.jacobian(&probe).is_some() && f.jacobian(&probe).is_some() {
            for x in grid.points() {
                let (jh, jf) = (h.jacobian(&x).expect("checked"), f.jacobian(&x).expect("checked"));
                sup = jh.iter().zip(&jf).fold(sup, |a, (u, v)| a.max((u[axis] - v[axis]).abs()));
            }
            return Ok(sup);
        }
    }
    let margin = (order as f64 + 1.0) * step;
    for x in grid.points() {
        if x.iter().any(|&xi| xi < margin || xi > 1.0 - margin) {
            continue;
        }
        for m in 0..f.out_dim() {
            let diff = |y: &[f64]| h.eval(y)[m] - f.eval(y)[m];
            sup = sup.max(fd_deriv(&diff, &x, gamma, step)?.abs());
        }
    }
    Ok(sup)
}

/// Least-squares fit of `log error` against `log K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub ks: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn fit_rate(ks: &[usize], errors: &[f64]) -> Result<RateReport> {
    if ks.len() != errors.len() {
        return Err(Error::ShapeMismatch { expected: ks.len(), got: errors.len() });
    }
    if ks.len() < 3 {
        return Err(Error::InvalidParameter(format!("rate fit needs at least 3 values of K, got {}", ks.len())));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("K values must be strictly increasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("errors must be positive and finite, got {e}")));
    }
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (slope, intercept) = ols(&xs, &ys);
    Ok(RateReport { ks: ks.to_vec(), errors: errors.to_vec(), slope, intercept })
}

#[derive(Debug, Clone, Serialize)]
struct RateRow {
    #[serde(rename = "K")]
    k: usize,
    ell: usize,
    error: f64,
    slope_so_far: Option<f64>,
}

/// Writes one CSV row per `K` with the slope of the fit over the rows so far
/// (empty for the first row).
pub fn write_rate_csv<W: Write>(out: W, rows: &[(usize, &RateReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (ell, report) in rows {
        for i in 0..report.ks.len() {
            let slope_so_far = (i >= 1).then(|| {
                let xs: Vec<f64> = report.ks[..=i].iter().map(|&k| (k as f64).ln()).collect();
                let ys: Vec<f64> = report.errors[..=i].iter().map(|e| e.ln()).collect();
                ols(&xs, &ys).0
            });
            w.serialize(RateRow { k: report.ks[i], ell: *ell, error: report.errors[i], slope_so_far })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasi::TargetFunction;

    #[test]
    fn grid_layout() {
        let g = GridSpec::new(2, 4).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.point(6), vec![0.25, 0.25]);
        assert!(GridSpec::new(2, 0).is_err());
    }

    #[test]
    fn mse_constant_offset() {
        let f = TargetFunction::scalar(2, |x| x[0] * x[1]);
        let h = TargetFunction::scalar(2, |x| x[0] * x[1] + 0.5);
        let g = GridSpec::new(2, 10).unwrap();
        let m = mse_function_pair(&h, &f, &g).unwrap();
        assert!((m.verbatim - 0.25 * 121.0 / 100.0).abs() < 1e-14);
        assert!((m.mean - 0.25).abs() < 1e-14);
        assert_eq!(mse_function(&f, &f, &g, Normalization::Verbatim).unwrap(), 0.0);
    }

    #[test]
    fn gradient_mse_linear() {
        let f = TargetFunction::scalar(2, |x| 0.3 * x[0] - 0.4 * x[1]).with_jacobian(|_| vec![vec![0.3, -0.4]]);
        let zero = TargetFunction::scalar(2, |_| 0.0).with_jacobian(|_| vec![vec![0.0, 0.0]]);
        let g = GridSpec::new(2, 5).unwrap();
        let v = mse_gradient(&zero, &f, &g, Normalization::Verbatim).unwrap();
        assert!((v - 0.25 * 36.0 / 25.0).abs() < 1e-14);
        let nojac = TargetFunction::scalar(2, |_| 0.0);
        assert!(mse_gradient(&nojac, &f, &g, Normalization::Mean).is_err());
    }

    #[test]
    fn sup_error_offset() {
        let f = TargetFunction::scalar(1, |x| x[0].sin());
        let h = TargetFunction::scalar(1, |x| x[0].sin() + 0.125);
        let g = GridSpec::new(1, 50).unwrap();
        assert!((sup_error(&h, &f, &g, &[0], 1e-3).unwrap() - 0.125).abs() < 1e-15);
        assert!(sup_error(&h, &f, &g, &[1], 1e-3).unwrap() < 1e-9);
    }

    #[test]
    fn exact_power_law() {
        let ks = [8, 16, 32, 64];
        let errors: Vec<f64> = ks.iter().map(|&k| 2.5 * (k as f64).powi(-3)).collect();
        let r = fit_rate(&ks, &errors).unwrap();
        assert!((r.slope + 3.0).abs() < 1e-12);
        assert!(fit_rate(&[8], &[1.0]).is_err());
        assert!(fit_rate(&[2, 4, 8], &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn rate_csv_columns() {
        let r = fit_rate(&[2, 4, 8], &[1.0, 0.125, 0.015625]).unwrap();
        let mut buf = Vec::new();
        write_rate_csv(&mut buf, &[(0, &r)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "K,ell,error,slope_so_far");
        assert_eq!(lines[1], "2,0,1.0,");
        assert!(lines[3].starts_with("8,0,0.015625,-3"));
    }
}
