use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use requ_net::experiment::train::TrainConfig;
use requ_net::experiment::{
    run_compile_sweep, run_training_experiment, verify_gadgets, Activation, ExperimentConfig, SweepConfig, SweepTarget,
};
use requ_net::{compile, CompileSpec, Network, TensorSplineCoeffs};

#[derive(Parser)]
#[command(name = "requ-net", version, about = "Sparse ReQU networks compiled from tensor-product splines")]
struct Cli {
    /// Directory for CSV, JSON and .dat outputs.
    #[arg(long, env = "REQU_OUT_DIR", default_value = "out", global = true)]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a target for several K and fit convergence rates.
    CompileSweep(SweepArgs),
    /// Train dense ReLU and ReQU networks on sin(x1^2 x2).
    TrainExperiment(TrainArgs),
    /// Check every gadget against its target and its size budget.
    VerifyGadgets {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Audit a network JSON file, or a compiled spline coefficient file.
    Audit(AuditArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// sin-pi, sin-x1sq-x2 or exp-sum.
    #[arg(long, default_value = "sin-pi")]
    target: SweepTarget,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long = "k", value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    ell_max: usize,
    /// Evaluation grid size per axis (defaults to 2000 for d = 1, else 200).
    #[arg(long)]
    grid_m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long)]
    dat: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [Activation::Relu, Activation::Requ])]
    activations: Vec<Activation>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    depths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    hidden_width: usize,
    #[arg(long, default_value_t = 10_000)]
    train_n: usize,
    #[arg(long, default_value_t = 500)]
    grid_m: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// Use the reduced smoke configuration; other flags are ignored.
    #[arg(long)]
    smoke: bool,
    #[arg(long)]
    dat: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Network JSON, or spline coefficient JSON when --compile is set.
    path: PathBuf,
    /// Compile the coefficient file and audit the result against the budget.
    #[arg(long)]
    compile: bool,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn compile_sweep(dir: &Path, args: SweepArgs) -> Result<bool> {
    let mut cfg = SweepConfig::new(args.target, args.d, args.q, args.ks, args.ell_max);
    if let Some(m) = args.grid_m {
        cfg.grid_m = m;
    }
    cfg.h = args.h;
    let sweep = run_compile_sweep(&cfg)?;
    let stem = format!("sweep_{}_d{}_q{}", cfg.target, cfg.d, cfg.q);
    sweep.write_csv(create(dir, &format!("{stem}.csv"))?)?;
    for p in &sweep.points {
        fs::write(dir.join(format!("{stem}_budget_K{}.json", p.k)), sweep.budget_json(p.k)?)?;
    }
    if args.dat {
        sweep.write_dat(create(dir, &format!("{stem}.dat"))?)?;
    }
    for (ell, r) in sweep.rates.iter().enumerate() {
        println!("ell={ell} slope={:.4} errors={:?}", r.slope, r.errors);
    }
    for p in &sweep.points {
        let b = &p.budget;
        println!(
            "K={} depth {}/{} width {}/{} nnz {}/{} max|w| {:.3} {}",
            p.k,
            b.depth_actual,
            b.depth_formula,
            b.width_actual,
            b.width_bound,
            b.nnz_actual,
            b.nnz_bound,
            b.max_abs_weight,
            if b.all_ok() { "ok" } else { "FAIL" }
        );
    }
    Ok(sweep.audits_ok())
}

fn train_experiment(dir: &Path, args: TrainArgs) -> Result<bool> {
    let cfg = if args.smoke {
        ExperimentConfig::smoke()
    } else {
        ExperimentConfig {
            activations: args.activations,
            depths: args.depths,
            repeats: args.repeats,
            master_seed: args.seed,
            base: TrainConfig {
                hidden_width: args.hidden_width,
                train_n: args.train_n,
                grid_m: args.grid_m,
                lr: args.lr,
                batch_size: args.batch_size,
                epochs: args.epochs,
                beta1: args.beta1,
                beta2: args.beta2,
                ..TrainConfig::default()
            },
        }
    };
    let result = run_training_experiment(&cfg)?;
    result.write_csv(create(dir, "train_experiment.csv")?)?;
    fs::write(dir.join("train_experiment.json"), result.to_json()?)?;
    if args.dat {
        result.write_dat(create(dir, "train_experiment.dat")?)?;
    }
    for a in &result.aggregates {
        println!(
            "{:<5} depth {} ok {}/{} train {:.3e} mse_f {:.3e} mse_grad {:.3e} (+/- {:.1e})",
            a.activation,
            a.depth,
            a.completed,
            a.completed + a.failed,
            a.train_err.mean,
            a.mse_function_verbatim.mean,
            a.mse_gradient_verbatim.mean,
            a.mse_gradient_verbatim.std
        );
    }
    let failed: usize = result.aggregates.iter().map(|a| a.failed).sum();
    if failed > 0 {
        eprintln!("{failed} training runs failed; see the status column");
    }
    Ok(true)
}

fn verify(dir: &Path, samples: usize, seed: u64) -> Result<bool> {
    let checks = verify_gadgets(samples, seed)?;
    for c in &checks {
        println!(
            "{} {:<32} err {:.2e} depth {} nnz {}/{}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.report.audit.depth,
            c.report.audit.nonzero,
            c.report.declared_nonzero_budget
        );
    }
    fs::write(dir.join("gadgets.json"), serde_json::to_string_pretty(&checks)?)?;
    Ok(checks.iter().all(|c| c.passed()))
}

fn audit(args: AuditArgs) -> Result<bool> {
    let text = fs::read_to_string(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    if args.compile {
        let coeffs = TensorSplineCoeffs::from_json(&text)?;
        let spec = CompileSpec::for_degree(coeffs.q, coeffs.k, coeffs.d, coeffs.p, args.h)?;
        let model = compile(&coeffs, &spec)?;
        println!("{}", model.budget_report.to_json()?);
        return Ok(model.budget_report.all_ok());
    }
    let net = Network::from_json(&text)?;
    let a = net.audit();
    println!("{}", serde_json::to_string_pretty(&a)?);
    Ok(a.max_abs_weight <= 1.0)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let dir = cli.out_dir;
    if !matches!(cli.command, Command::Audit(_)) {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match cli.command {
        Command::CompileSweep(a) => compile_sweep(&dir, a),
        Command::TrainExperiment(a) => train_experiment(&dir, a),
        Command::VerifyGadgets { samples, seed } => verify(&dir, samples, seed),
        Command::Audit(a) => audit(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("audit failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
