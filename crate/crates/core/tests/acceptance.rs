//! Acceptance suite. Runs each criterion in turn, prints one PASS/FAIL line
//! per criterion and exits nonzero if any failed.
//!
//! Criteria 5 and 6 share one surrogate dataset (6400 pairs, seed 42) and
//! train width-128 networks for `TREND_EPOCHS` epochs; criterion 7 trains a
//! width-256 N7 with the default 200 epochs. Criterion 9 repeats 5 to 8 and
//! compares the report files byte for byte.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use xfmr::baselines::LinearModel;
use xfmr::data::{self, Dataset};
use xfmr::eval::closed_loop::{self, ClosedLoopOptions};
use xfmr::eval::experiment::{self, ExperimentConfig, ExperimentReport, ModelSpec};
use xfmr::eval::metrics;
use xfmr::nn::{
    adam_step, gradcheck, HyperParams, LossKind, Network, OptimizerState, ParamGroup, Preset,
};
use xfmr::seed;
use xfmr::surrogate::{self, forward_model, GenerateOptions, SurrogateConstants, TransformerGeometry};

const MASTER_SEED: u64 = 42;
const DATASET_SIZE: usize = 6400;
const TEST_SIZE: usize = 1200;
const TREND_WIDTH: usize = 128;
const TREND_EPOCHS: usize = 60;
const QUALITY_WIDTH: usize = 256;
const REPEATS: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: usize, name: &str, outcome: &Outcome, elapsed: Duration) {
    println!(
        "criterion {id:>2} [{}] {name}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    match gradcheck::self_test(20, 2024) {
        Ok(c) => {
            let secs = start.elapsed().as_secs_f64();
            Outcome::new(
                c.max_rel_error < 1e-5 && secs < 30.0,
                format!(
                    "20 architectures, {} parameters ({} skipped at kinks), worst relative error {:.2e} (< 1e-5), {secs:.1} s (< 30 s)",
                    c.params, c.skipped, c.max_rel_error
                ),
            )
        }
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn optimizer_correctness() -> Outcome {
    let group = |decay| {
        vec![ParamGroup {
            range: 0..1,
            decay,
            frozen: false,
        }]
    };
    let mut theta = [0.0];
    let mut s = OptimizerState::new(1);
    let h = HyperParams {
        learning_rate: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        eps: 0.0,
        weight_decay: 0.0,
        ..Default::default()
    };
    adam_step(&mut theta, &mut s, &[1.0], &h, &group(true));
    let first = [
        (s.m[0] - 0.1).abs(),
        (s.v[0] - 0.001).abs(),
        (theta[0] + 0.1).abs(),
    ];
    let first_ok = first.iter().all(|&e| e <= 1e-12) && s.t == 1;

    let mut theta = [0.0, 3.5, -1.25];
    let mut s = OptimizerState::new(3);
    let three = vec![ParamGroup {
        range: 0..3,
        decay: true,
        frozen: false,
    }];
    adam_step(&mut theta, &mut s, &[0.0; 3], &HyperParams { eps: 1e-8, ..h }, &three);
    let zero_ok = theta == [0.0, 3.5, -1.25] && s.t == 1;

    let h = HyperParams {
        learning_rate: 0.01,
        weight_decay: 0.5,
        eps: 1e-8,
        ..h
    };
    let mut theta = [0.7];
    adam_step(&mut theta, &mut OptimizerState::new(1), &[0.0], &h, &group(true));
    let decay_err = (theta[0] - 0.7 * (1.0 - 0.01 * 0.5)).abs();

    Outcome::new(
        first_ok && zero_ok && decay_err <= 1e-12,
        format!(
            "first step errors m {:.1e} v {:.1e} theta {:.1e}; zero-gradient step unchanged: {zero_ok}; decay-only error {decay_err:.1e}",
            first[0], first[1], first[2]
        ),
    )
}

fn oracle_smse(p: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let (n, d) = y.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..d {
            let r = (p[[i, j]] - y[[i, j]]) / y[[i, j]];
            s += r * r;
        }
    }
    s / (n * d) as f64
}

fn oracle_column_smse(p: ArrayView2<f64>, y: ArrayView2<f64>) -> Vec<f64> {
    let (n, d) = y.dim();
    (0..d)
        .map(|j| {
            let mut s = 0.0;
            for i in 0..n {
                let r = (p[[i, j]] - y[[i, j]]) / y[[i, j]];
                s += r * r;
            }
            s / n as f64
        })
        .collect()
}

fn oracle_sdmse(p: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let cols = oracle_column_smse(p, y);
    cols.iter().map(|c| c.sqrt()).sum::<f64>() / cols.len() as f64
}

fn oracle_r2(p: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let (n, d) = y.dim();
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| y[[i, j]]).sum::<f64>() / n as f64;
        let ss_tot: f64 = (0..n).map(|i| (y[[i, j]] - mean).powi(2)).sum();
        let ss_res: f64 = (0..n).map(|i| (y[[i, j]] - p[[i, j]]).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
    }
    total / d as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = seed::rng(7);
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for _ in 0..100 {
        let y = Array2::from_shape_fn((5, 3), |_| {
            let sign = if rng.random_bool(0.2) { -1.0 } else { 1.0 };
            sign * rng.random_range(0.1..10.0)
        });
        let p = Array2::from_shape_fn((5, 3), |(i, j)| y[[i, j]] * rng.random_range(0.5..1.5) + rng.random_range(-0.5..0.5));
        let (p, y) = (p.view(), y.view());
        let got = (
            metrics::smse(p, y),
            metrics::sdmse(p, y),
            metrics::r2_score(p, y),
            metrics::per_param_smse(p, y),
        );
        match got {
            (Ok(s), Ok(d), Ok(r), Ok(cols)) => {
                worst = worst
                    .max(rel(s, oracle_smse(p, y)))
                    .max(rel(d, oracle_sdmse(p, y)))
                    .max(rel(r, oracle_r2(p, y)));
                for (a, b) in cols.iter().zip(oracle_column_smse(p, y)) {
                    worst = worst.max(rel(*a, b));
                }
            }
            other => failure = Some(format!("{other:?}")),
        }
    }
    let y = ndarray::array![[2.0, 4.0]];
    let p = ndarray::array![[1.0, 5.0]];
    let s = metrics::smse(p.view(), y.view()).unwrap_or(f64::NAN);
    let d = metrics::sdmse(p.view(), y.view()).unwrap_or(f64::NAN);
    let exact = s == 0.15625 && d == 0.375;
    if let Some(f) = failure {
        return Outcome::new(false, format!("metric error: {f}"));
    }
    Outcome::new(
        worst <= 1e-10 && exact,
        format!("worst relative deviation {worst:.1e} over 100 matrices; worked example smse {s} sdmse {d}"),
    )
}

fn linear_recovery() -> Outcome {
    let mut rng = seed::rng(99);
    let coef = Array2::from_shape_fn((6, 6), |_| rng.random_range(-3.0..3.0));
    let intercept: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
    let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
        let x = Array2::from_shape_fn((n, 6), |_| rng.random_range(-10.0..10.0));
        let mut y = x.dot(&coef);
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(&intercept) {
                *v += b;
            }
        }
        (x, y)
    };
    let (xtr, ytr) = make(&mut rng, 500);
    let (xte, yte) = make(&mut rng, 200);
    let r2 = LinearModel::fit(&xtr, &ytr)
        .and_then(|m| metrics::r2_score(m.predict(&xte).view(), yte.view()));
    match r2 {
        Ok(r2) => Outcome::new(r2 > 0.9999, format!("test R² = {r2:.12} (> 0.9999)")),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn surrogate_dataset() -> xfmr::Result<Dataset> {
    let pairs = surrogate::generate_pairs(DATASET_SIZE, MASTER_SEED, &GenerateOptions::default())?;
    Dataset::from_pairs(&pairs)
}

fn reports_csv(reports: &[ExperimentReport]) -> Vec<u8> {
    let mut out = Vec::new();
    experiment::write_reports_csv(&mut out, reports).expect("write to memory");
    out
}

fn find<'a>(reports: &'a [ExperimentReport], model: &str, size: usize) -> Option<&'a ExperimentReport> {
    reports
        .iter()
        .find(|r| r.model == model && r.training_size == size)
}

fn trend_hyper() -> HyperParams {
    HyperParams {
        epochs: TREND_EPOCHS,
        log_every: TREND_EPOCHS,
        ..Default::default()
    }
}

/// Runs the comparison for criterion 5 and returns its report file and outcome.
fn trend(ds: &Dataset) -> (Vec<u8>, Outcome) {
    let cfg = ExperimentConfig {
        models: vec![
            ModelSpec::Linear,
            ModelSpec::Gbt(Default::default()),
            ModelSpec::network(Preset::Fn(7), TREND_WIDTH),
            ModelSpec::network(Preset::N7, TREND_WIDTH),
        ],
        losses: vec![LossKind::Sdmse],
        training_sizes: vec![2400],
        test_size: TEST_SIZE,
        repeats: REPEATS,
        master_seed: MASTER_SEED,
        hyper: trend_hyper(),
    };
    let start = Instant::now();
    let reports = match experiment::run_comparison(ds, &cfg) {
        Ok(r) => r,
        Err(e) => return (vec![], Outcome::new(false, e.to_string())),
    };
    let secs = start.elapsed().as_secs_f64();
    print!("{}", experiment::format_table(&reports));
    let smse = |m| find(&reports, m, 2400).map_or(f64::NAN, |r| r.smse_mean);
    let (lr, gb, fnn, n7) = (smse("LR"), smse("GB"), smse("FN7"), smse("N7"));
    let ordered = lr > gb && gb > fnn && fnn >= n7;
    (
        reports_csv(&reports),
        Outcome::new(
            ordered && secs < 900.0,
            format!("mean test SMSE LR {lr:.5} > GB {gb:.5} > FN7 {fnn:.5} >= N7 {n7:.5}; {secs:.0} s (< 900 s)"),
        ),
    )
}

/// N7 at training sizes 600 and 4800, with and without the feed length.
fn size_monotonicity(ds: &Dataset) -> (Vec<u8>, Outcome) {
    let cfg = ExperimentConfig {
        models: vec![ModelSpec::network(Preset::N7, TREND_WIDTH)],
        losses: vec![LossKind::Sdmse],
        training_sizes: vec![600, 4800],
        test_size: TEST_SIZE,
        repeats: REPEATS,
        master_seed: MASTER_SEED,
        hyper: trend_hyper(),
    };
    let mut bytes = Vec::new();
    let mut details = Vec::new();
    let mut pass = true;
    let without = match ds.exclude_feed_length() {
        Ok(d) => d,
        Err(e) => return (vec![], Outcome::new(false, e.to_string())),
    };
    for (label, data) in [("with feed length", ds), ("without feed length", &without)] {
        let reports = match experiment::run_comparison(data, &cfg) {
            Ok(r) => r,
            Err(e) => return (vec![], Outcome::new(false, e.to_string())),
        };
        print!("{}", experiment::format_table(&reports));
        let small = find(&reports, "N7", 600).map_or(f64::NAN, |r| r.smse_mean);
        let large = find(&reports, "N7", 4800).map_or(f64::NAN, |r| r.smse_mean);
        pass &= large <= small;
        details.push(format!("{label}: 4800 {large:.5} <= 600 {small:.5}"));
        bytes.extend(reports_csv(&reports));
    }
    (bytes, Outcome::new(pass, details.join("; ")))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Trains the quality-floor network (criterion 7) and runs closed-loop
/// synthesis on 50 of its test targets (criterion 8).
fn quality_and_synthesis(ds: &Dataset) -> (Vec<u8>, Outcome, Vec<u8>, Outcome) {
    let fail = |e: xfmr::Error| {
        (
            vec![],
            Outcome::new(false, e.to_string()),
            vec![],
            Outcome::new(false, "no model from criterion 7"),
        )
    };
    let (test, train) = match data::split(ds, TEST_SIZE, 2400, experiment::split_seed(MASTER_SEED, 0)) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let arch = match Preset::N7.build(data::INPUT_DIM, ds.target_dim(), QUALITY_WIDTH) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let h = HyperParams {
        seed: experiment::training_seed(MASTER_SEED, 0),
        log_every: 50,
        ..Default::default()
    };
    let start = Instant::now();
    let net = match Network::fit(&arch, &train, &h, LossKind::Sdmse) {
        Ok((n, _)) => n,
        Err(e) => return fail(e),
    };
    let secs = start.elapsed().as_secs_f64();
    let ev = match experiment::evaluate(&net, &test) {
        Ok(ev) => ev,
        Err(e) => return fail(e),
    };
    let quality_report = ExperimentReport {
        model: "N7".into(),
        loss: LossKind::Sdmse,
        feed_length: true,
        training_size: 2400,
        repeats: 1,
        smse_mean: ev.smse,
        smse_std: 0.0,
        r2_mean: ev.r2,
        r2_std: 0.0,
        per_param_smse: ev.per_param.clone(),
        wall_seconds: secs,
    };
    let quality = Outcome::new(
        ev.r2 >= 0.90 && secs < 600.0,
        format!(
            "N7 width {QUALITY_WIDTH}, {} epochs: test R² {:.4} (>= 0.90), SMSE {:.5}; {secs:.0} s (< 600 s)",
            h.epochs, ev.r2, ev.smse
        ),
    );

    let targets: Vec<_> = (0..50).map(|i| test.circuit(i)).collect();
    let results = match closed_loop::closed_loop_validate(&net, &targets, None, &ClosedLoopOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            return (
                reports_csv(&[quality_report]),
                quality,
                vec![],
                Outcome::new(false, e.to_string()),
            )
        }
    };
    let mut synth_bytes = Vec::new();
    closed_loop::write_results_csv(&mut synth_bytes, &results).expect("write to memory");
    let mut pass = true;
    let mut details = Vec::new();
    for (j, name) in ["lp", "ls", "k", "srf", "qp", "qs"].iter().enumerate() {
        let mut errs: Vec<f64> = results.iter().map(|r| r.rel_error[j]).collect();
        errs.sort_by(f64::total_cmp);
        let median = percentile(&errs, 0.5);
        let p90 = percentile(&errs, 0.9);
        pass &= median <= 0.05 && p90 <= 0.15;
        details.push(format!("{name} {:.2}%/{:.2}%", 100.0 * median, 100.0 * p90));
    }
    let synthesis = Outcome::new(
        pass,
        format!(
            "median/p90 relative error over 50 targets (<= 5%/15%): {}",
            details.join(", ")
        ),
    );
    (reports_csv(&[quality_report]), quality, synth_bytes, synthesis)
}

fn surrogate_consistency(ds: &Dataset) -> Outcome {
    let k = SurrogateConstants::default();
    let reload = {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).and_then(|_| Dataset::read_csv(buf.as_slice()))
    };
    let reload = match reload {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let mut mismatches = 0;
    for d in [ds, &reload] {
        for i in 0..d.len() {
            let mut g = [0.0; 6];
            for (j, v) in g.iter_mut().enumerate() {
                *v = d.y[[i, j]];
            }
            match forward_model(&TransformerGeometry::from_array(g), &k) {
                Ok(c) if c == d.circuit(i) => {}
                _ => mismatches += 1,
            }
        }
    }
    let g = TransformerGeometry {
        w_oa: 10.05,
        w_ob: 9.98,
        r0: 45.32,
        r1: 52.24,
        x_gnd: 60.74,
        l_f: 24.03,
    };
    let c = match forward_model(&g, &k) {
        Ok(c) => c,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let reference = reference_circuit(&g);
    let got = c.to_array();
    let worst = got
        .iter()
        .zip(reference)
        .map(|(&a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    // Hand values quoted to a few digits: each must equal the recomputed
    // value to within half a unit of its last digit.
    let quoted = [(0, 138.4, 0.05), (2, 0.547, 0.0005), (3, 97.2, 0.05), (4, 20.4, 0.05)];
    let quoted_ok = quoted
        .iter()
        .all(|&(j, v, half_unit)| (reference[j] - v).abs() <= half_unit);
    Outcome::new(
        mismatches == 0 && worst <= 1e-3 && quoted_ok,
        format!(
            "{mismatches} mismatching rows of {} (in memory and after CSV round trip); reference geometry lp {:.2} k {:.4} srf {:.2} qp {:.2}, worst deviation from recomputation {:.1e} (<= 1e-3); quoted 138.4/0.547/97.2/20.4 consistent: {quoted_ok}",
            ds.len(),
            c.lp,
            c.k,
            c.srf,
            c.qp,
            worst
        ),
    )
}

/// Direct evaluation of the surrogate formulas with the default constants,
/// written out independently of the library.
fn reference_circuit(g: &TransformerGeometry) -> [f64; 6] {
    use std::f64::consts::PI;
    let inductance = |r: f64, w: f64| 1.2566 * r * ((8.0 * r / w).ln() - 2.0) + 2.0 * g.l_f;
    let lp = inductance(g.r0, g.w_oa);
    let ls = inductance(g.r1, g.w_ob);
    let k = 0.9 * (g.r0.min(g.r1) / g.r0.max(g.r1)).powf(3.5);
    let cp_ff = 0.36 * 2.0 * PI * g.r0 * g.w_oa / g.x_gnd + 0.10 * g.l_f;
    let srf = 1.0 / (2.0 * PI * (lp * 1e-12 * cp_ff * 1e-15).sqrt()) / 1e9;
    let ground = 1.0 - (-g.x_gnd / 20.0).exp();
    let q = |l: f64, r: f64, w: f64| 2.0 * PI * 30e9 * l * 1e-12 / (0.043 * 2.0 * PI * r / w) * ground;
    [lp, ls, k, srf, q(lp, g.r0, g.w_oa), q(ls, g.r1, g.w_ob)]
}

struct Artifacts {
    trend: Vec<u8>,
    sizes: Vec<u8>,
    quality: Vec<u8>,
    synthesis: Vec<u8>,
}

fn main() -> ExitCode {
    let mut all = true;
    let mut record = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        report(id, name, &o, start.elapsed());
        all &= o.pass;
    };
    record(1, "gradient correctness", &mut gradient_correctness);
    record(2, "optimizer correctness", &mut optimizer_correctness);
    record(3, "metric oracles", &mut metric_oracles);
    record(4, "linear recovery", &mut linear_recovery);

    let ds = match surrogate_dataset() {
        Ok(d) => d,
        Err(e) => {
            println!("surrogate dataset generation failed: {e}");
            return ExitCode::FAILURE;
        }
    };

    let run = |record: &mut dyn FnMut(usize, &str, &mut dyn FnMut() -> Outcome)| {
        let mut a = Artifacts {
            trend: vec![],
            sizes: vec![],
            quality: vec![],
            synthesis: vec![],
        };
        record(5, "model ordering at train size 2400", &mut || {
            let (bytes, o) = trend(&ds);
            a.trend = bytes;
            o
        });
        record(6, "training-size monotonicity", &mut || {
            let (bytes, o) = size_monotonicity(&ds);
            a.sizes = bytes;
            o
        });
        let mut synthesis = None;
        record(7, "model quality floor", &mut || {
            let (q, qo, s, so) = quality_and_synthesis(&ds);
            a.quality = q;
            a.synthesis = s;
            synthesis = Some(so);
            qo
        });
        let so = synthesis.unwrap_or_else(|| Outcome::new(false, "not run"));
        record(8, "closed-loop synthesis", &mut || Outcome::new(so.pass, so.detail.clone()));
        a
    };

    let first = run(&mut record);
    let second = run(&mut |_: usize, _: &str, f: &mut dyn FnMut() -> Outcome| {
        f();
    });
    record(9, "determinism", &mut || {
        let pairs = [
            ("ordering", &first.trend, &second.trend),
            ("sizes", &first.sizes, &second.sizes),
            ("quality", &first.quality, &second.quality),
            ("synthesis", &first.synthesis, &second.synthesis),
        ];
        let differing: Vec<&str> = pairs
            .iter()
            .filter(|(_, a, b)| a.is_empty() || a != b)
            .map(|(n, _, _)| *n)
            .collect();
        let sizes: Vec<String> = pairs.iter().map(|(n, a, _)| format!("{n} {} B", a.len())).collect();
        Outcome::new(
            differing.is_empty(),
            if differing.is_empty() {
                format!("repeat run byte-identical ({})", sizes.join(", "))
            } else {
                format!("reports differ or are missing: {}", differing.join(", "))
            },
        )
    });
    record(10, "surrogate self-consistency", &mut || surrogate_consistency(&ds));

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
