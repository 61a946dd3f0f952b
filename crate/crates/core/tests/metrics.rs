use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use requ_net::evaluator::{holder_norm_estimate, HolderConfig};
use requ_net::metrics::{
    fit_rate, mse_function, mse_function_pair, mse_gradient, sup_error, write_rate_csv, GridSpec, Normalization,
};
use requ_net::{compile_function, CompileSpec, TargetFunction};

fn wave(a: f64) -> TargetFunction {
    TargetFunction::scalar(2, move |x| (a * x[0] - x[1]).sin()).with_jacobian(move |x| {
        let c = (a * x[0] - x[1]).cos();
        vec![vec![a * c, -c]]
    })
}

#[test]
fn function_mse_matches_naive_sum() {
    let (h, f) = (wave(1.3), wave(1.7));
    let m = 40;
    let mut sum = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            let x = [i as f64 / m as f64, j as f64 / m as f64];
            sum += (h.eval(&x)[0] - f.eval(&x)[0]).powi(2);
        }
    }
    let grid = GridSpec::new(2, m).unwrap();
    let pair = mse_function_pair(&h, &f, &grid).unwrap();
    assert!((pair.verbatim - sum / (m * m) as f64).abs() <= 1e-14);
    assert!((pair.mean - sum / ((m + 1) * (m + 1)) as f64).abs() <= 1e-14);
    let swapped = mse_function(&f, &h, &grid, Normalization::Verbatim).unwrap();
    assert_eq!(swapped, pair.verbatim);
}

#[test]
fn offsets_and_linear_gradients() {
    let grid = GridSpec::new(2, 10).unwrap();
    let f = TargetFunction::scalar(2, |x| 0.5 * x[0] - 2.0 * x[1]).with_jacobian(|_| vec![vec![0.5, -2.0]]);
    let g = TargetFunction::scalar(2, |x| 0.5 * x[0] - 2.0 * x[1] + 0.3).with_jacobian(|_| vec![vec![0.5, -2.0]]);
    let zero = TargetFunction::scalar(2, |_| 0.0).with_jacobian(|_| vec![vec![0.0, 0.0]]);
    let e = mse_function(&g, &f, &grid, Normalization::Verbatim).unwrap();
    assert!((e - 0.09 * 121.0 / 100.0).abs() < 1e-14);
    assert_eq!(mse_function(&f, &f, &grid, Normalization::Mean).unwrap(), 0.0);
    let e = mse_gradient(&zero, &f, &grid, Normalization::Verbatim).unwrap();
    assert!((e - 4.25 * 121.0 / 100.0).abs() < 1e-13);
    let e = mse_gradient(&zero, &f, &grid, Normalization::Mean).unwrap();
    assert!((e - 4.25).abs() < 1e-13);
    let no_grad = TargetFunction::scalar(2, |_| 0.0);
    assert!(mse_gradient(&no_grad, &f, &grid, Normalization::Mean).is_err());
}

#[test]
fn sup_error_agrees_with_holder_c0() {
    let grid = GridSpec::new(2, 30).unwrap();
    let (h, f) = (wave(1.0), wave(1.2));
    let e = sup_error(&h, &f, &grid, &[0, 0], 1e-4).unwrap();
    let diff = |x: &[f64]| (x[0] - x[1]).sin() - (1.2 * x[0] - x[1]).sin();
    let est = holder_norm_estimate(&diff, 2, HolderConfig::new(0, 30, 10, 1)).unwrap();
    assert!((e - est.sups[0].sup).abs() <= 1e-15);
    assert!(e > 0.0);
    assert_eq!(sup_error(&h, &h, &grid, &[0, 0], 1e-4).unwrap(), 0.0);
    assert!(sup_error(&h, &f, &grid, &[1], 1e-4).is_err());
}

#[test]
fn rate_fits() {
    let ks = [4usize, 8, 16, 32, 64];
    let exact: Vec<f64> = ks.iter().map(|&k| 2.5 * (k as f64).powi(-3)).collect();
    let r = fit_rate(&ks, &exact).unwrap();
    assert!((r.slope + 3.0).abs() <= 1e-12);
    let wobbly: Vec<f64> = exact.iter().enumerate().map(|(i, e)| e * if i % 2 == 0 { 1.05 } else { 0.95 }).collect();
    let r = fit_rate(&ks, &wobbly).unwrap();
    assert!((-3.1..=-2.9).contains(&r.slope));
    let scaled: Vec<f64> = wobbly.iter().map(|e| 7.0 * e).collect();
    assert!((fit_rate(&ks, &scaled).unwrap().slope - r.slope).abs() <= 1e-12);
    assert!(fit_rate(&[8], &[1.0]).is_err());
    assert!(fit_rate(&[2, 4, 8], &[1.0, 0.0, 0.1]).is_err());
    assert!(fit_rate(&[2, 8, 4], &[1.0, 0.5, 0.1]).is_err());
}

#[test]
fn gradient_error_decreases_with_k() {
    let f = TargetFunction::scalar(2, |x| (x[0] * x[0] * x[1]).sin()).with_jacobian(|x| {
        let c = (x[0] * x[0] * x[1]).cos();
        vec![vec![2.0 * x[0] * x[1] * c, x[0] * x[0] * c]]
    });
    let grid = GridSpec::new(2, 60).unwrap();
    let errs: Vec<f64> = [2usize, 4, 8]
        .iter()
        .map(|&k| {
            let m = compile_function(&f, &CompileSpec::for_degree(2, k, 2, 1, 1.0).unwrap()).unwrap();
            mse_gradient(&m.net, &f, &grid, Normalization::Verbatim).unwrap()
        })
        .collect();
    assert!(errs.iter().all(|e| e.is_finite()));
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn csv_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ks = [2usize, 4, 8];
    let errs: Vec<f64> = ks.iter().map(|&k| rng.gen_range(0.5..1.5) / (k * k) as f64).collect();
    let r = fit_rate(&ks, &errs).unwrap();
    let mut buf = Vec::new();
    write_rate_csv(&mut buf, &[(0, &r), (1, &r)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["K", "ell", "error", "slope_so_far"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(&rows[0][3], "");
    let last: f64 = rows[2][3].parse().unwrap();
    assert!((last - r.slope).abs() < 1e-12);
}
