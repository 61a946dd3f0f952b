//! Convergence sweeps of compiled networks over `K`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::compiler::{compile_function, BudgetReport, CompileSpec};
use crate::error::{Error, Result};
use crate::evaluator::{default_step, multi_indices};
use crate::metrics::{fit_rate, sup_error, write_rate_csv, GridSpec, RateReport};
use crate::quasi::TargetFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    /// `prod_l sin(pi x_l)`
    SinPi,
    /// `sin(x_1^2 x_2)`, two inputs only.
    SinX1sqX2,
    /// `exp(-sum x_l)`
    ExpSum,
}

impl SweepTarget {
    pub fn function(self, d: usize) -> Result<TargetFunction> {
        Ok(match self {
            SweepTarget::SinPi => TargetFunction::scalar(d, |x| x.iter().map(|v| (PI * v).sin()).product())
                .with_jacobian(|x| {
                    let row = (0..x.len())
                        .map(|i| {
                            x.iter()
                                .enumerate()
                                .map(|(j, v)| if i == j { PI * (PI * v).cos() } else { (PI * v).sin() })
                                .product()
                        })
                        .collect();
                    vec![row]
                }),
            SweepTarget::SinX1sqX2 => {
                if d != 2 {
                    return Err(Error::InvalidParameter("sin-x1sq-x2 needs d = 2".into()));
                }
                super::train::experiment_target()
            }
            SweepTarget::ExpSum => {
                let f = |x: &[f64]| (-x.iter().sum::<f64>()).exp();
                TargetFunction::scalar(d, f).with_jacobian(move |x| vec![vec![-f(x); x.len()]])
            }
        })
    }
}

impl fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepTarget::SinPi => "sin-pi",
            SweepTarget::SinX1sqX2 => "sin-x1sq-x2",
            SweepTarget::ExpSum => "exp-sum",
        })
    }
}

impl FromStr for SweepTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin-pi" => Ok(SweepTarget::SinPi),
            "sin-x1sq-x2" => Ok(SweepTarget::SinX1sqX2),
            "exp-sum" => Ok(SweepTarget::ExpSum),
            other => Err(Error::InvalidParameter(format!(
                "unknown target {other:?}; expected sin-pi, sin-x1sq-x2 or exp-sum"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub target: SweepTarget,
    pub d: usize,
    pub q: usize,
    pub ks: Vec<usize>,
    pub ell_max: usize,
    /// Evaluation grid has `grid_m + 1` points per axis.
    pub grid_m: usize,
    /// Bound passed to the compiler for the multiplier depth.
    pub h: f64,
}

impl SweepConfig {
    pub fn new(target: SweepTarget, d: usize, q: usize, ks: Vec<usize>, ell_max: usize) -> Self {
        let grid_m = if d == 1 { 2000 } else { 200 };
        Self { target, d, q, ks, ell_max, grid_m, h: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    #[serde(rename = "K")]
    pub k: usize,
    pub budget: BudgetReport,
    /// `errors[ell]` is the largest `sup_error` over `|γ| = ell`.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileSweep {
    pub config: SweepConfig,
    pub points: Vec<SweepPoint>,
    /// One rate fit per `ell`.
    pub rates: Vec<RateReport>,
}

impl CompileSweep {
    pub fn audits_ok(&self) -> bool {
        self.points.iter().all(|p| p.budget.all_ok())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<(usize, &RateReport)> = self.rates.iter().enumerate().collect();
        write_rate_csv(out, &rows)
    }

    pub fn budget_json(&self, k: usize) -> Result<String> {
        let p = self
            .points
            .iter()
            .find(|p| p.k == k)
            .ok_or_else(|| Error::InvalidParameter(format!("K = {k} is not in the sweep")))?;
        p.budget.to_json()
    }

    /// Whitespace-separated table: `K`, then the error for each `ell`.
    pub fn write_dat<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..=self.config.ell_max).map(|l| format!("err_ell{l}")).collect();
        writeln!(out, "# K {}", header.join(" "))?;
        for p in &self.points {
            let errs: Vec<String> = p.errors.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{} {}", p.k, errs.join(" "))?;
        }
        Ok(())
    }
}

pub fn run_compile_sweep(cfg: &SweepConfig) -> Result<CompileSweep> {
    if cfg.ks.len() < 3 || cfg.ks.windows(2).any(|w| w[0] >= w[1]) || cfg.ks[0] < 2 {
        return Err(Error::InvalidParameter(format!(
            "K values must be strictly increasing, at least 2, and number at least 3; got {:?}",
            cfg.ks
        )));
    }
    let f = cfg.target.function(cfg.d)?;
    let grid = GridSpec::new(cfg.d, cfg.grid_m)?;
    let mut points = Vec::new();
    for &k in &cfg.ks {
        let spec = CompileSpec::for_degree(cfg.q, k, cfg.d, 1, cfg.h)?;
        let model = compile_function(&f, &spec)?;
        let step = default_step(k);
        let mut errors = vec![0.0f64; cfg.ell_max + 1];
        for gamma in multi_indices(cfg.d, cfg.ell_max) {
            let ell: usize = gamma.iter().sum();
            let e = sup_error(&model.net, &f, &grid, &gamma, step)?;
            errors[ell] = errors[ell].max(e);
        }
        points.push(SweepPoint { k, budget: model.budget_report, errors });
    }
    let rates = (0..=cfg.ell_max)
        .map(|ell| {
            let errs: Vec<f64> = points.iter().map(|p| p.errors[ell]).collect();
            fit_rate(&cfg.ks, &errs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompileSweep { config: cfg.clone(), points, rates })
}
