//! Training experiment: dense ReLU and ReQU networks fitted to
//! `f(x) = sin(x_1^2 x_2)` on `[0,1]^2`, compared by function and gradient
//! errors on a uniform grid.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::metrics::{mse_function_pair, mse_gradient_pair, GridSpec, MsePair};
use crate::quasi::TargetFunction;

/// The experiment's target with its exact gradient.
pub fn experiment_target() -> TargetFunction {
    TargetFunction::scalar(2, |x| (x[0] * x[0] * x[1]).sin()).with_jacobian(|x| {
        let c = (x[0] * x[0] * x[1]).cos();
        vec![vec![2.0 * x[0] * x[1] * c, x[0] * x[0] * c]]
    })
}

/// Settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub activation: Activation,
    pub depth: usize,
    pub hidden_width: usize,
    pub input_width: usize,
    pub train_n: usize,
    pub grid_m: usize,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            activation: Activation::Requ,
            depth: 3,
            hidden_width: 16,
            input_width: 2,
            train_n: 10_000,
            grid_m: 500,
            seed: 0,
            lr: 1e-3,
            batch_size: 128,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden_width == 0 || self.input_width == 0 {
            return Err(Error::InvalidParameter("depth and widths must be positive".into()));
        }
        if self.train_n == 0 || self.batch_size == 0 || self.grid_m == 0 {
            return Err(Error::InvalidParameter("train_n, batch_size and grid_m must be positive".into()));
        }
        if self.input_width != 2 {
            return Err(Error::InvalidParameter("the experiment target takes two inputs".into()));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width];
        w.extend(std::iter::repeat_n(self.hidden_width, self.depth));
        w.push(1);
        w
    }
}

/// Independent random stream `stream` of the master seed.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Uniform training sample of `f` on `[0,1]^2`.
pub fn training_data(f: &TargetFunction, n: usize, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let ys = xs.iter().map(|x| f.eval(x)[0]).collect();
    (xs, ys)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mlp: Mlp,
    /// Full training loss before training and after every epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn train_err(&self) -> f64 {
        *self.loss_history.last().expect("initial loss is always recorded")
    }
}

/// Trains on the given sample with minibatch Adam. `rng` drives the
/// initialization and the shuffling.
pub fn train_on(cfg: &TrainConfig, xs: &[Vec<f64>], ys: &[f64], rng: &mut impl Rng) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut mlp = Mlp::new(&cfg.widths(), cfg.activation, rng)?;
    let mut adam = Adam::new(mlp.num_params());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = vec![mlp.loss(xs, ys)];
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&i| xs[i].clone()));
            by.extend(chunk.iter().map(|&i| ys[i]));
            let (_, grad) = mlp.loss_and_grad(&bx, &by);
            adam.step(&mut mlp.params, &grad, cfg);
        }
        let loss = mlp.loss(xs, ys);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite training loss after epoch {}", epoch + 1)));
        }
        history.push(loss);
    }
    Ok(TrainedModel { mlp, loss_history: history })
}

/// Trains one network on a fresh sample drawn from `cfg.seed`.
pub fn train_mlp(cfg: &TrainConfig) -> Result<TrainedModel> {
    let f = experiment_target();
    let (xs, ys) = training_data(&f, cfg.train_n, &mut stream_rng(cfg.seed, 0));
    train_on(cfg, &xs, &ys, &mut stream_rng(cfg.seed, 1))
}

/// Grid of activations, depths and repeats sharing one base configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub activations: Vec<Activation>,
    pub depths: Vec<usize>,
    pub repeats: usize,
    pub master_seed: u64,
    pub base: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            activations: vec![Activation::Relu, Activation::Requ],
            depths: vec![1, 2, 3, 4, 5],
            repeats: 10,
            master_seed: 2024,
            base: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reduced run: 500 samples, `M = 50`, two repeats, depths 1 and 2.
    pub fn smoke() -> Self {
        Self {
            depths: vec![1, 2],
            repeats: 2,
            base: TrainConfig { train_n: 500, grid_m: 50, ..TrainConfig::default() },
            ..Self::default()
        }
    }
}

/// Outcome of one (activation, depth, repeat) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub activation: Activation,
    pub depth: usize,
    pub seed: usize,
    pub train_err: Option<f64>,
    pub mse_function_verbatim: Option<f64>,
    pub mse_function_mean: Option<f64>,
    pub mse_gradient_verbatim: Option<f64>,
    pub mse_gradient_mean: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var =
        if values.len() > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    MeanStd { mean, std: var.sqrt() }
}

/// Mean and sample standard deviation over the successful repeats of one cell.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub activation: Activation,
    pub depth: usize,
    pub completed: usize,
    pub failed: usize,
    pub train_err: MeanStd,
    pub mse_function_verbatim: MeanStd,
    pub mse_function_mean: MeanStd,
    pub mse_gradient_verbatim: MeanStd,
    pub mse_gradient_mean: MeanStd,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn aggregate(&self, activation: Activation, depth: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.activation == activation && a.depth == depth)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Whitespace-separated table: depth, then mean function and gradient
    /// errors per activation.
    pub fn write_dat<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("# depth");
        for a in &self.config.activations {
            header.push_str(&format!(" {a}_mse_function {a}_mse_gradient"));
        }
        writeln!(out, "{header}")?;
        for &depth in &self.config.depths {
            let mut line = depth.to_string();
            for &a in &self.config.activations {
                let agg = self.aggregate(a, depth).expect("every cell is aggregated");
                line.push_str(&format!(" {} {}", agg.mse_function_verbatim.mean, agg.mse_gradient_verbatim.mean));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn run_cell(cfg: &TrainConfig, xs: &[Vec<f64>], ys: &[f64], rng: &mut ChaCha8Rng, repeat: usize) -> CellResult {
    let mut result = CellResult {
        activation: cfg.activation,
        depth: cfg.depth,
        seed: repeat,
        train_err: None,
        mse_function_verbatim: None,
        mse_function_mean: None,
        mse_gradient_verbatim: None,
        mse_gradient_mean: None,
        status: "ok".into(),
    };
    let outcome = train_on(cfg, xs, ys, rng).and_then(|model| {
        let grid = GridSpec::new(2, cfg.grid_m)?;
        let f = experiment_target();
        let func = mse_function_pair(&model.mlp, &f, &grid)?;
        let grad = mse_gradient_pair(&model.mlp, &f, &grid)?;
        Ok((model.train_err(), func, grad))
    });
    match outcome {
        Ok((err, MsePair { verbatim: fv, mean: fm }, MsePair { verbatim: gv, mean: gm }))
            if [err, fv, gv].iter().all(|v| v.is_finite()) =>
        {
            result.train_err = Some(err);
            result.mse_function_verbatim = Some(fv);
            result.mse_function_mean = Some(fm);
            result.mse_gradient_verbatim = Some(gv);
            result.mse_gradient_mean = Some(gm);
        }
        Ok(_) => result.status = "diverged: non-finite grid error".into(),
        Err(e) => result.status = format!("failed: {e}"),
    }
    result
}

/// Runs every cell. Repeat `r` draws its training sample from stream `r` of
/// the master seed, so all activations and depths see the same data; each
/// cell's initialization and shuffling use their own stream.
pub fn run_training_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.base.validate()?;
    if cfg.activations.is_empty() || cfg.depths.is_empty() || cfg.repeats == 0 {
        return Err(Error::InvalidParameter("experiment needs activations, depths and repeats".into()));
    }
    let f = experiment_target();
    let data: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..cfg.repeats)
        .map(|r| training_data(&f, cfg.base.train_n, &mut stream_rng(cfg.master_seed, r as u64)))
        .collect();

    let mut cells = Vec::new();
    for &activation in &cfg.activations {
        for &depth in &cfg.depths {
            for repeat in 0..cfg.repeats {
                cells.push((activation, depth, repeat));
            }
        }
    }
    let results: Vec<CellResult> = cells
        .par_iter()
        .enumerate()
        .map(|(index, &(activation, depth, repeat))| {
            let cell_cfg = TrainConfig { activation, depth, seed: cfg.master_seed, ..cfg.base.clone() };
            let mut rng = stream_rng(cfg.master_seed, (1u64 << 32) + index as u64);
            let (xs, ys) = &data[repeat];
            run_cell(&cell_cfg, xs, ys, &mut rng, repeat)
        })
        .collect();

    let mut aggregates = Vec::new();
    for &activation in &cfg.activations {
        for &depth in &cfg.depths {
            let ok: Vec<&CellResult> = results
                .iter()
                .filter(|c| c.activation == activation && c.depth == depth && c.train_err.is_some())
                .collect();
            let total = results.iter().filter(|c| c.activation == activation && c.depth == depth).count();
            let pick =
                |get: fn(&CellResult) -> Option<f64>| mean_std(&ok.iter().filter_map(|c| get(c)).collect::<Vec<_>>());
            aggregates.push(Aggregate {
                activation,
                depth,
                completed: ok.len(),
                failed: total - ok.len(),
                train_err: pick(|c| c.train_err),
                mse_function_verbatim: pick(|c| c.mse_function_verbatim),
                mse_function_mean: pick(|c| c.mse_function_mean),
                mse_gradient_verbatim: pick(|c| c.mse_gradient_verbatim),
                mse_gradient_mean: pick(|c| c.mse_gradient_mean),
            });
        }
    }
    Ok(ExperimentResult { config: cfg.clone(), cells: results, aggregates })
}
