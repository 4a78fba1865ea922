//! Acceptance suite: one check per criterion, each printed as a PASS/FAIL
//! line. Exits nonzero if any check fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use dropout_conformal::conformal::{
    alpha_at_level, build_calibration, build_calibration_from_parts, dropout_icp, intervals_at_levels, nonconformity,
    predict_interval, rf_ccp, CalibrationModel, CalibrationSource, ConfidenceLevel,
};
use dropout_conformal::data::{make_synthetic, random_split, Dataset, NoiseModel};
use dropout_conformal::ensemble::{mc_dropout_predict, EnsemblePrediction};
use dropout_conformal::eval::{evaluate, rmse, screen_classify, EvaluationReport, ScreenCategory, DEFAULT_CUTOFFS};
use dropout_conformal::forest::{fit_cart, fit_forest, forest_predict, ForestConfig};
use dropout_conformal::net::{init_mlp, lr_at_epoch, train, DropoutMasks, NetConfig};
use dropout_conformal::seed;
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{oracle_cart, random_table, relu_pattern, rows_of};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cl(v: f64) -> ConfidenceLevel {
    ConfidenceLevel::new(v).unwrap()
}

fn grid() -> Vec<ConfidenceLevel> {
    (1..20).map(|i| cl(i as f64 / 20.0)).collect()
}

struct Partitioned {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn synthetic_split(noise: NoiseModel, seed_: u64) -> Partitioned {
    let ds = make_synthetic(3000, 8, noise, seed_).unwrap();
    let s = random_split(ds.n_rows(), (0.70, 0.15, 0.15), seed_).unwrap();
    Partitioned {
        train: ds.subset(&s.train).unwrap(),
        val: ds.subset(&s.validation).unwrap(),
        test: ds.subset(&s.test).unwrap(),
    }
}

fn validity(report: &EvaluationReport) -> Check {
    let n = report.n_test as f64;
    let mut worst = f64::INFINITY;
    for p in &report.curve.points {
        let bound = p.cl - 3.0 * (p.cl * (1.0 - p.cl) / n).sqrt();
        worst = worst.min(p.coverage - bound);
        ensure(p.coverage >= bound, || {
            format!("coverage {:.4} at cl {} is below {:.4}", p.coverage, p.cl, bound)
        })?;
    }
    let r2 = report.curve.r_squared.ok_or("r_squared undefined")?;
    ensure(r2 > 0.99, || format!("R^2 = {r2:.5}"))?;
    Ok(format!("R^2 = {r2:.5}, min coverage margin {worst:+.4}, n_test = {}", report.n_test))
}

/// 1. Dropout ICP validity on heteroscedastic synthetic data.
fn c1_dropout_validity() -> Check {
    let p = synthetic_split(NoiseModel::Heteroscedastic { scale: 0.3 }, 1);
    let (model, log) = train(&p.train, &p.val, &NetConfig::desk_scale(), 11).map_err(|e| e.to_string())?;
    ensure(log.converged, || "network did not converge".into())?;
    let out = dropout_icp(&model, &p.val, &p.test, 100, &grid(), 12).map_err(|e| e.to_string())?;
    let report = evaluate("dnn", &out, p.test.ids(), p.test.labels(), 0.8, &DEFAULT_CUTOFFS).map_err(|e| e.to_string())?;
    check_partition(&report)?;
    validity(&report)
}

/// 2. RF cross-conformal validity on the same data.
fn c2_rf_validity() -> Check {
    let p = synthetic_split(NoiseModel::Heteroscedastic { scale: 0.3 }, 1);
    let fit = p.train.concat(&p.val).map_err(|e| e.to_string())?;
    let out = rf_ccp(&fit, &p.test, &ForestConfig::default(), 10, &grid(), 13).map_err(|e| e.to_string())?;
    let report = evaluate("rf", &out, p.test.ids(), p.test.labels(), 0.8, &DEFAULT_CUTOFFS).map_err(|e| e.to_string())?;
    check_partition(&report)?;
    validity(&report)
}

/// 3. Analytic gradients against central differences, masks fixed.
fn c3_gradients() -> Check {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0usize, 0usize);
    for net in 0..24 {
        let d = rng.random_range(1..=8);
        let hidden = match net % 4 {
            0 => vec![rng.random_range(1..=16)],
            1 => vec![rng.random_range(1..=16), rng.random_range(1..=8)],
            2 => vec![16, 8],
            _ => vec![],
        };
        let p = if net % 3 == 0 { 0.0 } else { rng.random_range(0.1..0.5) };
        let cfg = NetConfig {
            hidden_sizes: hidden.clone(),
            dropout_p: p,
            ..NetConfig::default()
        };
        let mut model = init_mlp(d, &cfg, rng.random()).map_err(|e| e.to_string())?;
        // Non-zero biases so the check exercises them too.
        let mut theta = model.flat_params();
        for v in theta.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        model.set_flat_params(&theta).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..=10);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let masks = DropoutMasks::sample(&hidden, n, p, &mut rng);
        let analytic = model.compute_gradients(x.view(), &y, Some(&masks)).map_err(|e| e.to_string())?.flatten();

        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += H;
            let mut minus = theta.clone();
            minus[i] -= H;
            model.set_flat_params(&plus).unwrap();
            let pat_plus = relu_pattern(&model, x.view(), &masks);
            let lp = model.loss(x.view(), &y, Some(&masks)).unwrap();
            model.set_flat_params(&minus).unwrap();
            let pat_minus = relu_pattern(&model, x.view(), &masks);
            let lm = model.loss(x.view(), &y, Some(&masks)).unwrap();
            model.set_flat_params(&theta).unwrap();
            if pat_plus != pat_minus {
                // The stencil straddles a ReLU kink: no derivative to compare.
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * H);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    ensure(skipped * 100 <= checked, || format!("{skipped} kink-straddling coordinates of {checked}"))?;
    Ok(format!(
        "24 networks, {checked} coordinates, max relative error {worst:.2e} ({skipped} kink-straddling skipped)"
    ))
}

/// 4. CART against the brute-force oracle.
fn c4_cart_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut n_splits = 0;
    for table in 0..200 {
        let (x, y) = random_table(&mut rng, 16, 3);
        let rows = rows_of(x.view());
        let all: Vec<usize> = (0..y.len()).collect();
        let tree = fit_cart(x.view(), &y, &ForestConfig::default(), &mut seed::stream(0, &[]));
        let oracle = oracle_cart(&rows, &y, &all, 2, 1);
        n_splits += tree.nodes().len() / 2;
        // Probe at every level and every midpoint.
        let probes: Vec<f64> = (-2..=10).map(|v| v as f64 / 2.0).collect();
        let mut points = rows.clone();
        for &v in &probes {
            points.push(vec![v; x.ncols()]);
        }
        for (k, pt) in points.iter().enumerate() {
            let got = tree.predict_row(ndarray::ArrayView1::from(pt.as_slice()));
            let want = oracle.predict(pt);
            ensure(got == want, || format!("table {table}, probe {k}: {got} vs oracle {want}"))?;
        }
    }
    Ok(format!("200 tables identical ({n_splits} splits in total)"))
}

/// 5. Quantile lookup against a brute-force scan.
fn c5_quantile_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut infinite = 0;
    for list in 0..500 {
        let n = rng.random_range(1..=50);
        let tied = rng.random_bool(0.3);
        let alphas: Vec<f64> = (0..n)
            .map(|_| if tied { rng.random_range(0..5) as f64 / 4.0 } else { rng.random_range(0.0..3.0) })
            .collect();
        let i: u64 = rng.random_range(1..1000);
        let level = cl(i as f64 / 1000.0);
        // Exact integer ceiling of (i / 1000) * (n + 1).
        let k = (i * (n as u64 + 1)).div_ceil(1000) as usize;
        let mut sorted = alphas.clone();
        sorted.sort_by(f64::total_cmp);
        let brute = sorted
            .iter()
            .copied()
            .find(|&a| alphas.iter().filter(|&&b| b <= a).count() >= k)
            .unwrap_or(f64::INFINITY);
        let cal = CalibrationModel::from_scores(alphas, CalibrationSource::Dropout).unwrap();
        let got = alpha_at_level(&cal, level);
        if got.is_infinite() {
            infinite += 1;
        }
        ensure(got == brute, || format!("list {list} (n={n}, cl={}): {got} vs {brute}", level.value()))?;
    }
    Ok(format!("500 lists exact ({infinite} with k > n)"))
}

/// 6. Intervals applied back to their own calibration set cover exactly k.
fn c6_self_calibration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = Vec::new();
    for n in [9usize, 19, 99] {
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(4.0..9.0)).collect();
        let y_hat: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let cal = build_calibration_from_parts(&y, &y_hat, &sigma, CalibrationSource::Dropout).unwrap();
        let mut distinct = cal.alphas().to_vec();
        distinct.dedup();
        ensure(distinct.len() == n, || "alphas not distinct".into())?;
        let passes = Array2::from_shape_fn((n, 1), |(i, _)| y_hat[i]);
        let mut pred = EnsemblePrediction::from_passes(passes).unwrap();
        pred.stds = sigma.clone();
        for v in [0.5, 0.8, 0.9] {
            let k = (v * (n + 1) as f64 - 1e-9).ceil() as usize;
            let level = &intervals_at_levels(&cal, &pred, &[cl(v)]).unwrap()[0];
            let covered = level.intervals.iter().zip(&y).filter(|(iv, &t)| iv.contains(t)).count();
            ensure(covered == k, || format!("n={n}, cl={v}: covered {covered}, expected {k}"))?;
            cases.push(format!("{n}/{v}:{k}"));
        }
    }
    // The same through the full pipeline, reusing the calibration ensemble.
    let ds = make_synthetic(99, 3, NoiseModel::Heteroscedastic { scale: 0.3 }, 6).unwrap();
    let model = init_mlp(3, &NetConfig { hidden_sizes: vec![8, 4], dropout_p: 0.25, ..NetConfig::default() }, 6).unwrap();
    let pred = mc_dropout_predict(&model, ds.features().view(), 50, 6).unwrap();
    let cal = build_calibration(ds.labels(), &pred, CalibrationSource::Dropout).unwrap();
    for v in [0.5, 0.8, 0.9] {
        let k = (v * 100.0f64 - 1e-9).ceil() as usize;
        let level = &intervals_at_levels(&cal, &pred, &[cl(v)]).unwrap()[0];
        let covered = level.intervals.iter().zip(ds.labels()).filter(|(iv, &t)| iv.contains(t)).count();
        ensure(covered == k, || format!("dropout ensemble, cl={v}: covered {covered}, expected {k}"))?;
    }
    Ok(format!("exact counts {}", cases.join(" ")))
}

/// 7. Scores never exceed the largest residual; equality at sigma = 0.
fn c7_scaling_bound() -> Check {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        ..PropConfig::default()
    });
    let strategy = (
        proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..5.0), 1..60),
        any::<bool>(),
    );
    let mut equality_cases = 0;
    let result = runner.run(&strategy, |(mut rows, zero_at_max)| {
        let imax = rows
            .iter()
            .enumerate()
            .max_by(|a, b| (a.1 .0 - a.1 .1).abs().total_cmp(&(b.1 .0 - b.1 .1).abs()))
            .unwrap()
            .0;
        if zero_at_max {
            rows[imax].2 = 0.0;
        }
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let cal = build_calibration_from_parts(&y, &p, &s, CalibrationSource::Dropout).unwrap();
        let max_alpha = *cal.alphas().last().unwrap();
        let max_resid = y.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(max_alpha <= max_resid);
        if rows[imax].2 == 0.0 {
            prop_assert_eq!(max_alpha, max_resid);
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    // Count how often the equality branch ran, deterministically.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let imax = (0..n).max_by(|&a, &b| (y[a] - p[a]).abs().total_cmp(&(y[b] - p[b]).abs())).unwrap();
        let s: Vec<f64> = (0..n).map(|i| if i == imax { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
        let cal = build_calibration_from_parts(&y, &p, &s, CalibrationSource::Dropout).unwrap();
        ensure(*cal.alphas().last().unwrap() == (y[imax] - p[imax]).abs(), || "equality case failed".into())?;
        equality_cases += 1;
    }
    Ok(format!("1000 generated sets plus {equality_cases} sigma=0 equality sets"))
}

/// 8. Score and interval examples.
fn c8_examples() -> Check {
    const TOL: f64 = 1e-12;
    let ln2 = std::f64::consts::LN_2;
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;
    let e = |r: dropout_conformal::Result<f64>| r.map_err(|e| e.to_string());
    ensure(close(e(nonconformity(5.0, 5.5, 0.0))?, 0.5), || "(5.0, 5.5, 0)".into())?;
    ensure(close(e(nonconformity(7.0, 6.0, ln2))?, 0.5), || "(7.0, 6.0, ln 2)".into())?;
    ensure(close(e(nonconformity(3.0, 3.0, 5.0))?, 0.0), || "(3.0, 3.0, 5.0)".into())?;

    let single = build_calibration_from_parts(&[1.4], &[1.0], &[0.0], CalibrationSource::Dropout).unwrap();
    ensure(single.n() == 1 && close(single.alphas()[0], 0.4), || "singleton".into())?;
    let two = build_calibration_from_parts(&[1.0, 0.2], &[0.0, 0.0], &[0.0, ln2], CalibrationSource::Dropout).unwrap();
    ensure(close(two.alphas()[0], 0.1) && close(two.alphas()[1], 1.0), || "residuals {1.0, 0.2}".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(1..30);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z = vec![0.0; n];
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let c = build_calibration_from_parts(&y, &z, &s, CalibrationSource::Dropout).unwrap();
        ensure(c.alphas().windows(2).all(|w| w[0] <= w[1]), || "not sorted".into())?;
    }

    let nine = CalibrationModel::from_scores((1..=9).map(|i| i as f64 / 10.0).collect(), CalibrationSource::Dropout).unwrap();
    ensure(close(alpha_at_level(&nine, cl(0.8)), 0.8), || "n=9, cl=0.8".into())?;
    let three = CalibrationModel::from_scores(vec![0.1, 0.2, 0.3], CalibrationSource::Dropout).unwrap();
    ensure(alpha_at_level(&three, cl(0.9)) == f64::INFINITY, || "n=3, cl=0.9".into())?;
    let flat = CalibrationModel::from_scores(vec![0.7; 10], CalibrationSource::Dropout).unwrap();
    ensure((1..=9).all(|i| alpha_at_level(&flat, cl(i as f64 / 11.0)) == 0.7), || "constant list".into())?;

    let a = predict_interval(6.0, 0.0, 0.5, cl(0.8)).unwrap();
    ensure(close(a.lower, 5.5) && close(a.upper, 6.5), || "(6.0, 0, 0.5)".into())?;
    let b = predict_interval(7.0, ln2, 0.5, cl(0.8)).unwrap();
    ensure(close(b.lower, 6.0) && close(b.upper, 8.0), || "(7.0, ln 2, 0.5)".into())?;
    let c = predict_interval(6.0, 0.0, f64::INFINITY, cl(0.8)).unwrap();
    ensure(c.lower == f64::NEG_INFINITY && c.upper == f64::INFINITY, || "(6.0, 0, inf)".into())?;
    ensure(ConfidenceLevel::default().value() == 0.8, || "default level".into())?;

    // Zero dropout collapses to plain split conformal on absolute residuals.
    let ds = make_synthetic(60, 2, NoiseModel::Homoscedastic { scale: 0.3 }, 8).unwrap();
    let val = ds.subset(&(0..40).collect::<Vec<_>>()).unwrap();
    let test = ds.subset(&(40..60).collect::<Vec<_>>()).unwrap();
    let model = init_mlp(2, &NetConfig { hidden_sizes: vec![6], dropout_p: 0.0, ..NetConfig::default() }, 8).unwrap();
    let out = dropout_icp(&model, &val, &test, 10, &[cl(0.8)], 8).unwrap();
    let pred = model.predict(val.features().view()).unwrap();
    let mut resid: Vec<f64> = pred.iter().zip(val.labels()).map(|(p, y)| (p - y).abs()).collect();
    resid.sort_by(f64::total_cmp);
    let k = (0.8f64 * 41.0).ceil() as usize;
    let level = &out.levels[0];
    ensure(out.test_prediction.stds.iter().all(|&s| s == 0.0), || "p=0 spread".into())?;
    ensure(level.intervals.iter().all(|iv| close(iv.half_width, resid[k - 1])), || "p=0 half-width".into())?;

    // Constant labels through the forest pipeline give point intervals.
    let x = Array2::from_shape_fn((30, 2), |(i, j)| (i + j) as f64);
    let flat_ds = Dataset::new((0..30).map(|i| i.to_string()).collect(), vec![6.5; 30], x).unwrap();
    let tr = flat_ds.subset(&(0..20).collect::<Vec<_>>()).unwrap();
    let te = flat_ds.subset(&(20..30).collect::<Vec<_>>()).unwrap();
    let rf = rf_ccp(&tr, &te, &ForestConfig { n_trees: 5, ..ForestConfig::default() }, 10, &[cl(0.8)], 8).unwrap();
    ensure(
        rf.levels[0].intervals.iter().all(|iv| iv.lower == 6.5 && iv.upper == 6.5),
        || "constant forest intervals".into(),
    )?;
    let again = rf_ccp(&tr, &te, &ForestConfig { n_trees: 5, ..ForestConfig::default() }, 10, &[cl(0.8)], 8).unwrap();
    ensure(again == rf, || "rf_ccp not deterministic".into())?;
    Ok("all examples within 1e-12".into())
}

fn check_partition(report: &EvaluationReport) -> Result<(), String> {
    for c in &report.retrieval {
        ensure(c.total() == report.n_test, || {
            format!("{} cutoff {}: categories sum to {} of {}", report.model, c.cutoff, c.total(), report.n_test)
        })?;
    }
    Ok(())
}

fn run_cli(config: &Path, dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dcp"))
        .args(["run", "--config"])
        .arg(config)
        .args(["--seed", "7", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
}

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic.cfg")
}

/// 9. Retrieval categories partition every evaluated run.
fn c9_retrieval(out: &Path) -> Check {
    let dir = out.join("retrieval");
    run_cli(&fixture(), &dir)?;
    let run_dirs: Vec<std::path::PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("run_")))
        .collect();
    let span = predict_interval(7.0, 0.0, 1.0, cl(0.8)).unwrap();
    for y in [5.0, 7.0, 7.5, 9.0] {
        ensure(screen_classify(&span, y, 7.0) == ScreenCategory::Uncertain, || "[6,8] not uncertain".into())?;
    }
    let low = predict_interval(5.25, 0.0, 1.25, cl(0.8)).unwrap();
    ensure(screen_classify(&low, 7.2, 7.0) == ScreenCategory::FalseNegative, || "[4,6.5] y=7.2".into())?;

    let mut n_reports = 0;
    for dir in &run_dirs {
        for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path().join("report.json");
            if !path.exists() {
                continue;
            }
            let report: EvaluationReport =
                serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let cutoffs: Vec<f64> = report.retrieval.iter().map(|c| c.cutoff).collect();
            ensure(cutoffs == DEFAULT_CUTOFFS, || format!("{}: cutoffs {cutoffs:?}", path.display()))?;
            check_partition(&report)?;
            n_reports += 1;
        }
    }
    ensure(n_reports > 0, || "no evaluated runs found".into())?;
    Ok(format!("both classification examples exact; {n_reports} evaluated run reports partition at cutoffs 5..9"))
}

/// 10. Two CLI executions give byte-identical manifests.
fn c10_determinism(out: &Path) -> Check {
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let dir = out.join(name);
        run_cli(&fixture(), &dir)?;
        manifests.push(std::fs::read(dir.join("manifest.txt")).map_err(|e| e.to_string())?);
    }
    ensure(manifests[0] == manifests[1], || "manifests differ".into())?;
    let lines = manifests[0].iter().filter(|&&b| b == b'\n').count();
    Ok(format!("identical manifests over {lines} files"))
}

/// 11. Desk-scale accuracy and the convergence gate.
fn c11_training() -> Check {
    let p = synthetic_split(NoiseModel::Homoscedastic { scale: 0.3 }, 11);
    let (model, log) = train(&p.train, &p.val, &NetConfig::desk_scale(), 21).map_err(|e| e.to_string())?;
    let dnn = rmse(p.test.labels(), &model.predict(p.test.features().view()).unwrap()).unwrap();
    let fit = p.train.concat(&p.val).unwrap();
    let forest = fit_forest(&fit, &ForestConfig::default(), 22).map_err(|e| e.to_string())?;
    let rf = rmse(p.test.labels(), &forest_predict(&forest, p.test.features().view()).unwrap().means).unwrap();
    ensure(log.converged, || "desk-scale network flagged as non-converged".into())?;
    ensure(dnn <= 0.45, || format!("DNN test RMSE {dnn:.4}"))?;
    ensure(rf <= 0.45, || format!("RF test RMSE {rf:.4}"))?;

    let crippled = NetConfig {
        lr0: 0.0,
        ..NetConfig::desk_scale()
    };
    let (_, bad) = train(&p.train, &p.val, &crippled, 23).map_err(|e| e.to_string())?;
    ensure(!bad.converged, || format!("lr=0 run flagged converged (RMSE {})", bad.best_val_rmse))?;
    Ok(format!(
        "DNN {dnn:.4}, RF {rf:.4} (noise 0.3); lr=0 run: best val RMSE {:.3} > gate, converged=false",
        bad.best_val_rmse
    ))
}

/// 12. Learning-rate schedule and its use during training.
fn c12_schedule() -> Check {
    let cfg = NetConfig::default();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    ensure(close(lr_at_epoch(&cfg, 0), 0.005), || "epoch 0".into())?;
    ensure(close(lr_at_epoch(&cfg, 1000), 0.005), || "epoch 1000".into())?;
    ensure(close(lr_at_epoch(&cfg, 450), 0.0018), || format!("epoch 450: {}", lr_at_epoch(&cfg, 450)))?;

    let ds = make_synthetic(200, 3, NoiseModel::Homoscedastic { scale: 0.3 }, 12).unwrap();
    let train_set = ds.subset(&(0..150).collect::<Vec<_>>()).unwrap();
    let val = ds.subset(&(150..200).collect::<Vec<_>>()).unwrap();
    let run_cfg = NetConfig {
        hidden_sizes: vec![8],
        max_epochs: 1200,
        patience: 5000,
        ..NetConfig::default()
    };
    let (_, log) = train(&train_set, &val, &run_cfg, 12).map_err(|e| e.to_string())?;
    ensure(log.epochs.len() == 1200, || format!("{} epochs logged", log.epochs.len()))?;
    for (i, r) in log.epochs.iter().enumerate() {
        ensure(r.epoch == i && r.learning_rate == lr_at_epoch(&run_cfg, i), || {
            format!("epoch {i}: logged {} vs schedule {}", r.learning_rate, lr_at_epoch(&run_cfg, i))
        })?;
    }
    Ok("0.005 / 0.005 / 0.0018 and all 1200 logged rates match".into())
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let scratch = tempfile::tempdir().expect("temp dir");
    let out = scratch.path().to_path_buf();
    let (o9, o10) = (out.clone(), out.clone());
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 dropout ICP validity", Box::new(c1_dropout_validity)),
        ("2 RF cross-conformal validity", Box::new(c2_rf_validity)),
        ("3 gradient correctness", Box::new(c3_gradients)),
        ("4 CART oracle equivalence", Box::new(c4_cart_oracle)),
        ("5 quantile oracle", Box::new(c5_quantile_oracle)),
        ("6 self-calibration count", Box::new(c6_self_calibration)),
        ("7 exponential-scaling bound", Box::new(c7_scaling_bound)),
        ("8 score and interval examples", Box::new(c8_examples)),
        ("9 retrieval partition", Box::new(move || c9_retrieval(&o9))),
        ("10 end-to-end determinism", Box::new(move || c10_determinism(&o10))),
        ("11 training sanity", Box::new(c11_training)),
        ("12 schedule conformance", Box::new(c12_schedule)),
    ];

    let mut failed = 0;
    for (name, check) in &checks {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
