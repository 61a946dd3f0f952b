//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 8's full-scale training run takes tens of minutes on one core
//! and only runs when `REQU_FULL_EXPERIMENT=1`; its smoke variant always runs.

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use requ_net::evaluator::{default_step, fd_deriv, forward_jet};
use requ_net::experiment::train::CellResult;
use requ_net::experiment::{
    run_compile_sweep, run_training_experiment, verify_gadgets, Activation, ExperimentConfig, SweepConfig, SweepTarget,
};
use requ_net::quasi::{eval_spline, eval_spline_deriv, fit_coeffs_with, FitScheme};
use requ_net::{analytic_order, compile, fit_coeffs, CompileSpec, KnotVector, TargetFunction, TensorSplineCoeffs};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn c1_gadget_exactness() -> Outcome {
    let t = Instant::now();
    let checks = verify_gadgets(100_000, 2024).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let worst = checks.iter().fold(0.0f64, |a, c| a.max(c.max_error));
    for c in &checks {
        ensure(c.exact(), || format!("{} max error {:.3e}", c.name, c.max_error))?;
    }
    ensure(elapsed < Duration::from_secs(30), || format!("took {}", secs(elapsed)))?;
    Ok(format!("{} gadgets x 1e5 inputs, worst error {worst:.2e}, {}", checks.len(), secs(elapsed)))
}

fn c2_budget_audit() -> Outcome {
    let checks = verify_gadgets(1, 0).map_err(|e| e.to_string())?;
    for c in &checks {
        let r = &c.report;
        ensure(r.passed(), || format!("{}: {r:?}", c.name))?;
    }
    Ok(format!("{} gadgets: depth equal, widths and nonzeros within budget, |w| <= 1", checks.len()))
}

fn targets(d: usize, q: usize, p: usize) -> Vec<(&'static str, TargetFunction)> {
    let lift = move |base: fn(&[f64], usize) -> f64| {
        TargetFunction::new(d, p, move |x| {
            (0..p).map(|m| (1.0 + 0.5 * m as f64) * base(x, q) - 0.25 * m as f64).collect()
        })
    };
    vec![
        ("constant", lift(|_, _| 0.7)),
        ("polynomial", lift(|x, q| x.iter().map(|v| v.powi(q as i32) - 0.5 * v).product())),
        ("sine", lift(|x, _| x.iter().map(|v| (PI * v).sin()).product())),
    ]
}

fn compiler_sweep(
    mut each: impl FnMut(&str, &TensorSplineCoeffs, usize, usize, usize, usize) -> Result<(), String>,
) -> Result<usize, String> {
    let mut count = 0;
    for d in 1..=2 {
        for q in 2..=3 {
            for k in [2, 4, 8] {
                for p in 1..=2 {
                    for (name, f) in targets(d, q, p) {
                        let c = fit_coeffs(&f, q, k).map_err(|e| e.to_string())?;
                        each(name, &c, d, q, k, p)?;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}

fn c3_compiler_exactness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ratio = 0.0f64;
    let count = compiler_sweep(|name, c, d, q, k, p| {
        let spec = CompileSpec::for_degree(q, k, d, p, 1.0).map_err(|e| e.to_string())?;
        let model = compile(c, &spec).map_err(|e| e.to_string())?;
        let tol = 1e-8 * (1.0 + c.max_abs_w());
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let a = model.forward(&x).map_err(|e| e.to_string())?;
            let b = eval_spline(c, &x).map_err(|e| e.to_string())?;
            worst = a.iter().zip(&b).fold(worst, |w, (u, v)| w.max((u - v).abs()));
        }
        worst_ratio = worst_ratio.max(worst / tol);
        ensure(worst <= tol, || format!("d={d} q={q} K={k} p={p} {name}: gap {worst:.3e} > {tol:.3e}"))
    })?;
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {}", secs(elapsed)))?;
    Ok(format!("{count} models x 1e4 points, worst gap {worst_ratio:.2e} of tolerance, {}", secs(elapsed)))
}

fn c4_size_accounting() -> Outcome {
    let mut checked = 0;
    compiler_sweep(|name, c, d, q, k, p| {
        for h in [1.0, 10.0] {
            let spec = CompileSpec::for_degree(q, k, d, p, h).map_err(|e| e.to_string())?;
            let r = compile(c, &spec).map_err(|e| e.to_string())?.budget_report;
            ensure(r.all_ok(), || format!("d={d} q={q} K={k} p={p} H={h} {name}: {r:?}"))?;
            checked += 1;
        }
        Ok(())
    })?;
    Ok(format!("{checked} compilations: depth exact, width, nonzeros and weights within bounds"))
}

fn c5_rates() -> Outcome {
    let t = Instant::now();
    let one = run_compile_sweep(&SweepConfig::new(SweepTarget::SinPi, 1, 2, vec![8, 16, 32, 64], 1))
        .map_err(|e| e.to_string())?;
    let two =
        run_compile_sweep(&SweepConfig::new(SweepTarget::SinPi, 2, 2, vec![4, 8, 16], 0)).map_err(|e| e.to_string())?;
    let (s0, s1, s2) = (one.rates[0].slope, one.rates[1].slope, two.rates[0].slope);
    ensure(one.audits_ok() && two.audits_ok(), || "budget audit failed inside the sweep".into())?;
    ensure((-3.5..=-2.5).contains(&s0), || format!("d=1 ell=0 slope {s0:.3}"))?;
    ensure((-2.5..=-1.5).contains(&s1), || format!("d=1 ell=1 slope {s1:.3}"))?;
    ensure((-3.6..=-2.4).contains(&s2), || format!("d=2 ell=0 slope {s2:.3}"))?;
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(600), || format!("took {}", secs(elapsed)))?;
    Ok(format!("slopes d=1: {s0:.3} (ell=0), {s1:.3} (ell=1); d=2: {s2:.3} (ell=0); {}", secs(elapsed)))
}

fn c6_spline_properties() -> Outcome {
    let grid: Vec<f64> = (0..2001).map(|i| i as f64 / 2000.0).collect();
    let mut pou = 0.0f64;
    for q in 2..=4 {
        for k in [2, 4, 8, 16] {
            let kv = KnotVector::new(q, k).map_err(|e| e.to_string())?;
            for &x in &grid {
                pou = pou.max((kv.basis_n(q, x).iter().sum::<f64>() - 1.0).abs());
            }
            for ell in 0..=q {
                let falling: f64 = ((q - ell + 1)..=q).map(|v| v as f64).product();
                let bound = (2.0 * k as f64).powi(ell as i32) * falling;
                let sup = grid.iter().flat_map(|&x| kv.basis_n_deriv(q, x, ell)).fold(0.0f64, |a, v| a.max(v.abs()));
                ensure(sup <= bound * (1.0 + 1e-12), || {
                    format!("derivative bound q={q} K={k} ell={ell}: {sup} > {bound}")
                })?;
            }
        }
    }
    ensure(pou <= 1e-12, || format!("partition of unity off by {pou:.3e}"))?;

    let mut repro = 0.0f64;
    for q in 2..=4usize {
        for d in 1..=2usize {
            let f =
                TargetFunction::scalar(d, move |x| x.iter().map(|v| v.powi(q as i32) - 1.5 * v * v + 0.2).product());
            let c = fit_coeffs(&f, q, 5).map_err(|e| e.to_string())?;
            for flat in 0..101usize.pow(d as u32) {
                let x: Vec<f64> = (0..d).map(|l| ((flat / 101usize.pow(l as u32)) % 101) as f64 / 100.0).collect();
                repro = repro.max((eval_spline(&c, &x).map_err(|e| e.to_string())?[0] - f.eval(&x)[0]).abs());
            }
        }
    }
    ensure(repro <= 1e-10, || format!("polynomial reproduction off by {repro:.3e}"))?;

    let mut idem = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for scheme in [FitScheme::Greville, FitScheme::LocalDual] {
        for (d, q, k) in [(1usize, 2usize, 16usize), (1, 4, 7), (2, 2, 4), (2, 3, 5)] {
            let w = (0..(q + k).pow(d as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = TensorSplineCoeffs::from_w(1, d, q, k, w).map_err(|e| e.to_string())?;
            let cc = c.clone();
            let f = TargetFunction::new(d, 1, move |x| eval_spline(&cc, x).expect("point in cube"));
            let back = fit_coeffs_with(&f, q, k, scheme).map_err(|e| e.to_string())?;
            idem = c.w.iter().zip(&back.w).fold(idem, |a, (u, v)| a.max((u - v).abs()));
        }
    }
    ensure(idem <= 1e-10, || format!("projector idempotence off by {idem:.3e}"))?;
    Ok(format!("unity {pou:.1e}, reproduction {repro:.1e}, idempotence {idem:.1e}, derivative bounds hold"))
}

fn off_knot(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        if x.iter().all(|v| {
            let t = v * k as f64;
            (t - t.round()).abs() >= 0.25
        }) {
            return x;
        }
    }
}

fn c7_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut jet_worst, mut fd_worst) = (0.0f64, 0.0f64);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut models = 0;
    for d in 1..=2 {
        for q in 2..=3 {
            for k in [4, 8] {
                let f = TargetFunction::scalar(d, |x| (x.iter().sum::<f64>() * 2.0).sin() + x[0] * x[0]);
                let c = fit_coeffs(&f, q, k).map_err(|e| e.to_string())?;
                let spec = CompileSpec::for_degree(q, k, d, 1, 1.0).map_err(|e| e.to_string())?;
                let model = compile(&c, &spec).map_err(|e| e.to_string())?;
                let net = |y: &[f64]| model.net.forward(y).expect("shape checked")[0];
                let second: Vec<usize> = if d == 1 { vec![2] } else { vec![1, 1] };
                for _ in 0..100 {
                    let x = off_knot(d, k, &mut rng);
                    let jet = forward_jet(&model.net, &x).map_err(|e| e.to_string())?;
                    for i in 0..d {
                        let mut g = vec![0; d];
                        g[i] = 1;
                        let exact = eval_spline_deriv(&c, &x, &g).map_err(|e| e.to_string())?[0];
                        jet_worst = jet_worst.max(rel(jet.jacobian[0][i], exact));
                    }
                    let exact = eval_spline_deriv(&c, &x, &second).map_err(|e| e.to_string())?[0];
                    let fd = fd_deriv(&net, &x, &second, default_step(k)).map_err(|e| e.to_string())?;
                    fd_worst = fd_worst.max(rel(fd, exact));
                }
                models += 1;
            }
        }
    }
    ensure(jet_worst <= 1e-8, || format!("forward_jet relative error {jet_worst:.3e}"))?;
    ensure(fd_worst <= 1e-4, || format!("second-order difference relative error {fd_worst:.3e}"))?;
    Ok(format!("{models} models x 100 points: jet {jet_worst:.1e}, order-2 differences {fd_worst:.1e}"))
}

fn c8_training() -> (Outcome, Option<Outcome>) {
    let t = Instant::now();
    let smoke = (|| {
        let cfg = ExperimentConfig::smoke();
        let result = run_training_experiment(&cfg).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        result.write_csv(&mut buf).map_err(|e| e.to_string())?;
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let rows: Vec<CellResult> = reader.deserialize().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let expected = cfg.activations.len() * cfg.depths.len() * cfg.repeats;
        ensure(rows.len() == expected, || format!("{} rows, expected {expected}", rows.len()))?;
        ensure(rows.iter().all(|r| r.status == "ok" && r.mse_gradient_verbatim.is_some_and(|v| v >= 0.0)), || {
            "smoke cell failed".into()
        })?;
        let elapsed = t.elapsed();
        ensure(elapsed < Duration::from_secs(120), || format!("smoke took {}", secs(elapsed)))?;
        Ok(format!("smoke: {expected} schema-valid rows in {}", secs(elapsed)))
    })();
    let full = std::env::var("REQU_FULL_EXPERIMENT").is_ok_and(|v| v == "1").then(|| {
        let t = Instant::now();
        let result = run_training_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
        let mut notes = Vec::new();
        let mut ok = true;
        for depth in [3, 4, 5] {
            let relu = result.aggregate(Activation::Relu, depth).expect("cell present");
            let requ = result.aggregate(Activation::Requ, depth).expect("cell present");
            let (a, b) = (requ.mse_gradient_verbatim.mean, relu.mse_gradient_verbatim.mean);
            ok &= a <= b;
            notes.push(format!("depth {depth}: requ {a:.3e} vs relu {b:.3e}"));
        }
        if !ok {
            for c in &result.cells {
                eprintln!("{c:?}");
            }
        }
        let msg = format!("{} ({})", notes.join(", "), secs(t.elapsed()));
        if ok {
            Ok(msg)
        } else {
            Err(msg)
        }
    });
    (smoke, full)
}

fn c9_analytic_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let d = rng.gen_range(1..=3usize);
        let k = rng.gen_range(3..=400usize);
        let ell = rng.gen_range(0..=3usize);
        let q = rng.gen_range(0.1..10.0);
        // choose R so that K R / (2 e d 9^d) = s0 + frac, away from integer boundaries
        let s0 = rng.gen_range(1..=20usize);
        let frac = rng.gen_range(0.05..0.95);
        let r = (s0 as f64 + frac) * 2.0 * E * d as f64 * 9f64.powi(d as i32) / k as f64;
        let expected = ell + s0;
        let got = analytic_order(q, r, k, ell, d).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("Q={q} R={r} K={k} ell={ell} d={d}: {got} != {expected}"))?;
    }
    let base = 2.0 * E * 9.0;
    ensure(analytic_order(1.0, base, 3, 0, 1).ok() == Some(3), || "K=3 example".into())?;
    ensure(analytic_order(1.0, base, 5, 2, 1).ok() == Some(7), || "K=5 example".into())?;
    ensure(analytic_order(1.0, 1.0, 1000, 2, 2).ok() == Some(3), || "d=2 example".into())?;
    let bad = [
        analytic_order(1.0, base, 1, 0, 1),
        analytic_order(1.0, 1.0, 800, 0, 2),
        analytic_order(0.0, 1.0, 1000, 0, 1),
        analytic_order(1.0, -1.0, 1000, 0, 1),
        analytic_order(1.0, 1.0, 1000, 0, 0),
    ];
    ensure(bad.iter().all(|b| b.is_err()), || format!("violations accepted: {bad:?}"))?;
    Ok("20 random tuples exact, 3 fixed examples, 5 violations rejected".into())
}

fn run(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn report(n: usize, outcome: &Outcome, extra: &str) -> bool {
    match outcome {
        Ok(msg) => {
            println!("criterion {n}: PASS ({msg}){extra}");
            true
        }
        Err(msg) => {
            println!("criterion {n}: FAIL ({msg}){extra}");
            false
        }
    }
}

fn main() {
    let mut all = true;
    let plain: [(usize, fn() -> Outcome); 7] = [
        (1, c1_gadget_exactness),
        (2, c2_budget_audit),
        (3, c3_compiler_exactness),
        (4, c4_size_accounting),
        (5, c5_rates),
        (6, c6_spline_properties),
        (7, c7_derivatives),
    ];
    for (n, f) in plain {
        all &= report(n, &run(f), "");
    }
    let (smoke, full) = c8_training();
    let extra = match &full {
        None => "; full scale not run, set REQU_FULL_EXPERIMENT=1".to_string(),
        Some(Ok(msg)) => format!("; full scale (soft) PASS: {msg}"),
        Some(Err(msg)) => format!("; full scale (soft) FAIL: {msg}"),
    };
    all &= report(8, &smoke, &extra);
    all &= report(9, &run(c9_analytic_order), "");
    if !all {
        std::process::exit(1);
    }
}
