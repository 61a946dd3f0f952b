//! Randomized exactness checks and budget audits for the gadget catalogue.

use rand::Rng;
use serde::Serialize;

use super::train::stream_rng;
use crate::error::Result;
use crate::gadgets::{bspline_net, const_mult, identity_gadget, product_k, Gadget, GadgetReport};
use crate::spline::KnotVector;

/// Absolute tolerance, relative for the constant multipliers.
pub const GADGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct GadgetCheck {
    pub name: String,
    pub report: GadgetReport,
    pub samples: usize,
    pub max_error: f64,
    pub relative: bool,
}

impl GadgetCheck {
    pub fn exact(&self) -> bool {
        self.max_error <= GADGET_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.exact() && self.report.passed()
    }
}

type Oracle = Box<dyn Fn(&[f64]) -> Vec<f64>>;

struct Case {
    name: String,
    gadget: Gadget,
    oracle: Oracle,
    /// Inputs are drawn uniformly from `[lo, hi]^n`.
    range: (f64, f64),
    relative: bool,
}

fn catalogue() -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for w in [1, 3] {
        cases.push(Case {
            name: format!("identity(width={w})"),
            gadget: identity_gadget(w)?,
            oracle: Box::new(|x| x.to_vec()),
            range: (-4.0, 4.0),
            relative: false,
        });
    }
    for k in 2..=8 {
        cases.push(Case {
            name: format!("product_k(k={k})"),
            gadget: product_k(k)?,
            oracle: Box::new(|x| vec![x.iter().product()]),
            range: (-1.0, 1.0),
            relative: false,
        });
    }
    for l in 1..=2usize {
        let top = 4f64.powf(4f64.powi(l as i32));
        for m in [0.37, -1.0, 3.5, -0.75 * top.sqrt(), 0.999 * top, -top] {
            cases.push(Case {
                name: format!("const_mult(M={m}, L={l})"),
                gadget: const_mult(m, l)?,
                oracle: Box::new(move |x| vec![m * x[0]]),
                range: (-1.0, 1.0),
                relative: true,
            });
        }
    }
    for q in 2..=3 {
        for k in [2, 4, 8, 16] {
            let kv = KnotVector::new(q, k)?;
            cases.push(Case {
                name: format!("bspline_net(q={q}, K={k})"),
                gadget: bspline_net(q, k)?,
                oracle: Box::new(move |x| {
                    let mut out = vec![x[0], k as f64];
                    out.extend(kv.basis_b(q, x[0]));
                    out
                }),
                range: (0.0, 1.0),
                relative: false,
            });
        }
    }
    Ok(cases)
}

/// Checks every catalogue gadget on `samples` random inputs.
pub fn verify_gadgets(samples: usize, seed: u64) -> Result<Vec<GadgetCheck>> {
    let mut out = Vec::new();
    for (i, case) in catalogue()?.into_iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let n = case.gadget.net.input_dim();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(case.range.0..=case.range.1)).collect();
            let got = case.gadget.forward(&x)?;
            let want = (case.oracle)(&x);
            for (a, b) in got.iter().zip(&want) {
                let err = if case.relative { (a - b).abs() / b.abs().max(1.0) } else { (a - b).abs() };
                worst = worst.max(err);
            }
        }
        out.push(GadgetCheck {
            name: case.name,
            report: case.gadget.report(),
            samples,
            max_error: worst,
            relative: case.relative,
        });
    }
    Ok(out)
}
