//! Univariate clamped B-splines on `[0, 1]`.
//!
//! Knots follow the clamped uniform layout: `q + 1` zeros, the interior
//! points `j / K`, then `q + 1` ones. Indices in [`BSplineId`] and
//! [`KnotVector::a`] are 1-based; the `basis_*` tables are 0-based vectors
//! whose entry `i` holds spline `j = i + 1`.
//!
//! Evaluation uses half-open intervals `[a_j, a_{j+1})`, except that the
//! last non-degenerate interval is closed at 1, so every value at `x = 1` is
//! the left limit and the normalized splines still sum to one there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamped uniform knot sequence `a_1, ..., a_{2q+K+1}` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    q: usize,
    k: usize,
    knots: Vec<f64>,
}

/// A B-spline of degree `m` and 1-based index `j` on a given knot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BSplineId {
    pub m: usize,
    pub j: usize,
}

impl KnotVector {
    /// Builds the clamped knot vector for degree `q` and `k` subintervals.
    pub fn new(q: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("number of subintervals must be at least 2, got {k}")));
        }
        let mut knots = Vec::with_capacity(2 * q + k + 1);
        knots.extend(std::iter::repeat_n(0.0, q + 1));
        knots.extend((1..k).map(|j| j as f64 / k as f64));
        knots.extend(std::iter::repeat_n(1.0, q + 1));
        Ok(Self { q, k, knots })
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    pub fn subintervals(&self) -> usize {
        self.k
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot `a_i` with 1-based `i`.
    #[inline]
    pub fn a(&self, i: usize) -> f64 {
        self.knots[i - 1]
    }

    /// Number of splines of degree `m` defined on these knots: `2q + K - m`.
    pub fn count(&self, m: usize) -> usize {
        2 * self.q + self.k - m
    }

    /// Dimension of the degree-`q` spline space, `q + K`.
    pub fn dim(&self) -> usize {
        self.q + self.k
    }

    /// Closed support `[a_j, a_{j+m+1}]` of spline `(m, j)`.
    pub fn support(&self, id: BSplineId) -> (f64, f64) {
        (self.a(id.j), self.a(id.j + id.m + 1))
    }

    /// `a_{j+q+1} - a_j`, the factor turning `B_j^q` into `N_j^q`.
    pub fn width(&self, j: usize) -> f64 {
        self.a(j + self.q + 1) - self.a(j)
    }

    /// Greville abscissae `(a_{j+1} + ... + a_{j+q}) / q` for `j = 1..=q+K`.
    pub fn greville(&self) -> Vec<f64> {
        let q = self.q.max(1);
        (1..=self.dim()).map(|j| (1..=q).map(|r| self.a(j + r)).sum::<f64>() / q as f64).collect()
    }

    fn contains(&self, lo: usize, hi: usize, x: f64) -> bool {
        let (a, b) = (self.a(lo), self.a(hi));
        a < b && ((a <= x && x < b) || (x == 1.0 && b == 1.0))
    }

    /// Unnormalized values `B_j^m(x)` for all `j = 1..=2q+K-m`.
    pub fn basis_b(&self, m: usize, x: f64) -> Vec<f64> {
        let n0 = self.count(0);
        let mut level: Vec<f64> = (1..=n0)
            .map(|j| if self.contains(j, j + 1, x) { 1.0 / (self.a(j + 1) - self.a(j)) } else { 0.0 })
            .collect();
        for deg in 1..=m {
            level = (1..=self.count(deg))
                .map(|j| {
                    if !self.contains(j, j + deg + 1, x) {
                        return 0.0;
                    }
                    let (lo, hi) = (self.a(j), self.a(j + deg + 1));
                    ((x - lo) * level[j - 1] + (hi - x) * level[j]) / (hi - lo)
                })
                .collect();
        }
        level
    }

    /// Normalized values `N_j^m(x) = (a_{j+m+1} - a_j) B_j^m(x)`.
    pub fn basis_n(&self, m: usize, x: f64) -> Vec<f64> {
        let mut b = self.basis_b(m, x);
        for (i, v) in b.iter_mut().enumerate() {
            let j = i + 1;
            *v *= self.a(j + m + 1) - self.a(j);
        }
        b
    }

    /// Right derivatives `D^order N_j^m(x)` for all `j`.
    ///
    /// Uses `D N_j^m = m (N_j^{m-1} / (a_{j+m} - a_j) - N_{j+1}^{m-1} / (a_{j+m+1} - a_{j+1}))`
    /// with a vanishing term whenever its denominator is zero.
    pub fn basis_n_deriv(&self, m: usize, x: f64, order: usize) -> Vec<f64> {
        if order == 0 {
            return self.basis_n(m, x);
        }
        if order > m {
            return vec![0.0; self.count(m)];
        }
        let prev = self.basis_n_deriv(m - 1, x, order - 1);
        (1..=self.count(m))
            .map(|j| {
                let left = self.a(j + m) - self.a(j);
                let right = self.a(j + m + 1) - self.a(j + 1);
                let mut v = 0.0;
                if left > 0.0 {
                    v += prev[j - 1] / left;
                }
                if right > 0.0 {
                    v -= prev[j] / right;
                }
                m as f64 * v
            })
            .collect()
    }
}

impl BSplineId {
    pub fn new(m: usize, j: usize, kv: &KnotVector) -> Result<Self> {
        if m > kv.degree() {
            return Err(Error::InvalidParameter(format!("spline degree {m} exceeds knot degree {}", kv.degree())));
        }
        if j == 0 || j > kv.count(m) {
            return Err(Error::InvalidParameter(format!("spline index {j} outside 1..={}", kv.count(m))));
        }
        Ok(Self { m, j })
    }
}

fn check_point(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Precondition(format!("x = {x} outside [0, 1]")))
    }
}

fn check_id(id: BSplineId, kv: &KnotVector) -> Result<()> {
    BSplineId::new(id.m, id.j, kv).map(|_| ())
}

/// Unnormalized B-spline value.
pub fn eval_b(id: BSplineId, kv: &KnotVector, x: f64) -> Result<f64> {
    check_point(x)?;
    check_id(id, kv)?;
    Ok(kv.basis_b(id.m, x)[id.j - 1])
}

/// Normalized B-spline value, in `[0, 1]`.
pub fn eval_n(id: BSplineId, kv: &KnotVector, x: f64) -> Result<f64> {
    check_point(x)?;
    check_id(id, kv)?;
    Ok(kv.basis_n(id.m, x)[id.j - 1])
}

/// Right derivative of order `order <= m` of a normalized B-spline.
pub fn eval_n_deriv(id: BSplineId, kv: &KnotVector, x: f64, order: usize) -> Result<f64> {
    check_point(x)?;
    check_id(id, kv)?;
    if order > id.m {
        return Err(Error::InvalidParameter(format!("derivative order {order} exceeds spline degree {}", id.m)));
    }
    Ok(kv.basis_n_deriv(id.m, x, order)[id.j - 1])
}
