//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Numeric arguments select criteria,
//! e.g. `cargo test -p mpnystrom --test acceptance -- 3 7`.

mod problems;

use std::process::ExitCode;
use std::time::Instant;

use mpnystrom::analysis::{self, lemma_bounds, weighted_pseudoinv_norm};
use mpnystrom::harness::run::{run_approx_on, run_precond_on, LoadedProblem};
use mpnystrom::harness::{ExperimentConfig, ExperimentReport};
use mpnystrom::linalg::sym_eigenvalues;
use mpnystrom::precision::builtin_format;
use mpnystrom::precond::{split_preconditioned, LmpPreconditioner};
use mpnystrom::rng::GaussianStream;
use mpnystrom::{nystrom_approx, FloatFormat, MatmulMode, SyntheticKind, SyntheticSpec};
use nalgebra::DMatrix;

use problems::*;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

/// Proxy table agreement: relative distance at which two values share three
/// significant figures.
const PROXY_REL_TOL: f64 = 5e-3;
/// Low-precision mean error within this factor of the fp64 mean.
const CROSSOVER_SAME_FACTOR: f64 = 2.0;
/// Required fp16 / fp64 mean error ratio past the crossover.
const CROSSOVER_GAP_FACTOR: f64 = 10.0;
const PROXY_FIDELITY_FACTOR: f64 = 100.0;
/// `lambda_min(A - A_N) >= -PSD_TOL ||A||_2`.
const PSD_TOL: f64 = 1e-8;
/// Roundoff allowance when comparing a computed condition number with a
/// bound that can be attained exactly, e.g. `b_low = 1` when `kappa = 1`.
const SANDWICH_ROUNDOFF: f64 = 1e-9;
const SANDWICH_MUS: [f64; 3] = [0.1, 0.5, 1.0];
const EIGENPAIR_REL_TOL: f64 = 1e-8;
const PCG_MU: f64 = 0.5;
const PCG_ITER_REL_TOL: f64 = 0.10;
/// Roundoff allowance on the deterministic pseudoinverse bound.
const LEMMA_ROUNDOFF: f64 = 1e-8;
const LEMMA_ALPHA: f64 = 0.1;
const LEMMA_MIN_HOLDS: usize = 95;
const FP8_FINITE_SHARE: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: false,
        detail: detail.into(),
    }
}

fn verdict(failures: &[String], ok: String) -> Outcome {
    match failures.len() {
        0 => pass(ok),
        n => {
            let shown: Vec<&str> = failures.iter().take(4).map(String::as_str).collect();
            fail(format!("{n} violation(s): {}", shown.join("; ")))
        }
    }
}

fn config(formats: Vec<FloatFormat>, mus: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        formats,
        mus,
        seeds: SEEDS.collect(),
        ..ExperimentConfig::default()
    }
}

fn formats(names: &[&str]) -> Vec<FloatFormat> {
    names.iter().map(|n| builtin_format(n).expect("builtin format")).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Mean of `column` over the cell `(problem, n, k, up[, mu])`.
fn cell_mean(report: &ExperimentReport, p: &LoadedProblem, k: usize, up: &str, mu: Option<f64>, column: &str) -> Option<f64> {
    let n = p.matrix.n().to_string();
    let k = k.to_string();
    let mu = mu.map(|m| format!("{m}"));
    let mut key = vec![p.name.as_str(), n.as_str(), k.as_str(), up];
    if let Some(m) = &mu {
        key.push(m);
    }
    report.mean(&key, column)
}

fn missing_data(missing: &[String]) -> Outcome {
    fail(format!(
        "missing collection matrices {} (set {SUITESPARSE_ENV} or place them in {})",
        missing.join(", "),
        suitesparse_dir().display()
    ))
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    // format, u, x_s_min, x_min, x_max as tabulated to three figures
    let table: [(&str, f64, &str, &str, &str); 3] = [
        ("fp16", 2f64.powi(-11), "5.96e-8", "6.10e-5", "6.55e4"),
        ("fp32", 2f64.powi(-24), "1.40e-45", "1.18e-38", "3.40e38"),
        ("fp64", 2f64.powi(-53), "4.94e-324", "2.22e-308", "1.80e308"),
    ];
    // the full-width values from the host's own types
    let native: [(f64, f64, f64); 3] = [
        (2f64.powi(-24), 2f64.powi(-14), 65504.0),
        (f32::from_bits(1) as f64, f32::MIN_POSITIVE as f64, f32::MAX as f64),
        (f64::from_bits(1), f64::MIN_POSITIVE, f64::MAX),
    ];
    let mut bad = Vec::new();
    for ((name, u, s, mn, mx), (ns, nmn, nmx)) in table.iter().zip(native) {
        let f = match builtin_format(name) {
            Ok(f) => f,
            Err(e) => return fail(format!("{name}: {e}")),
        };
        // the table prints three figures, rounded or truncated
        let shown = |x: f64, want: &str| {
            let long = format!("{x:.6e}");
            let (mant, exp) = long.split_once('e').expect("exponent");
            format!("{x:.2e}") == want || format!("{}e{exp}", &mant[..4]) == want
        };
        if f.unit_roundoff != *u {
            bad.push(format!("{name} u = {:e}", f.unit_roundoff));
        }
        for (label, got, want, exact) in [
            ("x_s_min", f.x_s_min, *s, ns),
            ("x_min", f.x_min, *mn, nmn),
            ("x_max", f.x_max, *mx, nmx),
        ] {
            if !shown(got, want) || got != exact {
                bad.push(format!("{name} {label} = {got:e}, table {want}"));
            }
        }
    }
    verdict(&bad, "12 of 12 entries match".into())
}

fn criterion_2() -> Outcome {
    // double, single, half; None where half precision overflows
    let table: [(f64, f64, Option<f64>); 7] = [
        (1.05e-8, 5.64, Some(4.92e4)),
        (2.40e-9, 1.29, Some(1.33e4)),
        (5.92e-13, 3.17e-4, Some(3.16)),
        (3.66e-8, 1.96e1, Some(2.12e5)),
        (2.16e-5, 1.16e4, None),
        (1.05e-6, 5.65e2, None),
        (1.25e-7, 6.80e1, None),
    ];
    let fmts = formats(&["fp64", "fp32", "fp16"]);
    let mut bad = Vec::new();
    let mut count = 0;
    for ((name, n, norm, half_ok), (d, s, h)) in SUITESPARSE.iter().zip(table) {
        assert_eq!(h.is_some(), *half_ok);
        for (fmt, want) in fmts.iter().zip([Some(d), Some(s), h]) {
            let Some(want) = want else { continue };
            count += 1;
            match analysis::proxy_from_norm(*n, *norm, fmt) {
                Ok(got) if rel(got, want) <= PROXY_REL_TOL => {}
                Ok(got) => bad.push(format!("{name}/{} = {got:.4e} vs {want:.2e}", fmt.name)),
                Err(e) => bad.push(format!("{name}/{}: {e}", fmt.name)),
            }
        }
    }
    verdict(&bad, format!("{count} of {count} entries within {PROXY_REL_TOL:e} relative"))
}

fn criterion_3() -> Outcome {
    let betas = [1.0, 1e1, 1e2, 1e3, 1e4];
    let ks: Vec<usize> = (1..=10).collect();
    let problems: Vec<LoadedProblem> = betas
        .iter()
        .map(|&beta| {
            let spec = SyntheticSpec::new(SyntheticKind::PolyDecay { p: 1.0 }, 100, 10, beta).with_seed(7);
            let mut p = loaded(mpnystrom::matrices::gen_synthetic(&spec).expect("poly"), &ks);
            p.name = format!("poly1-beta{beta:e}");
            p
        })
        .collect();
    let report = match run_approx_on(&config(formats(&["fp16", "fp32", "fp64"]), vec![0.5]), &problems) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut bad = Vec::new();
    let mut gaps = Vec::new();
    for (p, &beta) in problems.iter().zip(&betas) {
        for &k in &ks {
            let mean = |up: &str| cell_mean(&report, p, k, up, None, "total_error");
            let Some(base) = mean("fp64") else {
                bad.push(format!("beta {beta:e} k {k}: no fp64 mean"));
                continue;
            };
            if k <= 9 && beta <= 1e3 {
                for up in ["fp16", "fp32"] {
                    match mean(up) {
                        Some(m) if m / base <= CROSSOVER_SAME_FACTOR && base / m <= CROSSOVER_SAME_FACTOR => {}
                        m => bad.push(format!("beta {beta:e} k {k} {up}/fp64 = {:.3}", m.unwrap_or(f64::NAN) / base)),
                    }
                }
            }
            if k == 10 && beta >= 1e2 {
                let ratio = mean("fp16").unwrap_or(f64::NAN) / base;
                gaps.push(format!("{beta:e}: {ratio:.2}"));
                if !(ratio >= CROSSOVER_GAP_FACTOR) {
                    bad.push(format!("beta {beta:e} k 10 fp16/fp64 = {ratio:.2} < {CROSSOVER_GAP_FACTOR}"));
                }
            }
        }
    }
    verdict(&bad, format!("k <= 9 within {CROSSOVER_SAME_FACTOR}x; k = 10 fp16/fp64 {}", gaps.join(", ")))
}

fn criterion_4() -> Outcome {
    let mut problems = Vec::new();
    let mut missing = Vec::new();
    for (name, .., half_ok) in SUITESPARSE {
        if !half_ok {
            continue;
        }
        match suitesparse(name) {
            Ok(p) => problems.push(p),
            Err(_) => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return missing_data(&missing);
    }
    let report = match run_approx_on(&config(formats(&["fp16", "fp32", "fp64"]), vec![0.5]), &problems) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut bad = Vec::new();
    let mut cells = 0;
    for p in &problems {
        for &k in &p.ks {
            for up in ["fp16", "fp32"] {
                cells += 1;
                let fin = cell_mean(&report, p, k, up, None, "finite_error");
                let proxy = cell_mean(&report, p, k, up, None, "proxy");
                match (fin, proxy) {
                    (Some(f), Some(q)) if f >= q / PROXY_FIDELITY_FACTOR && f <= q * PROXY_FIDELITY_FACTOR => {}
                    (f, q) => bad.push(format!("{} k {k} {up}: error {f:?} proxy {q:?}", p.name)),
                }
            }
        }
    }
    verdict(&bad, format!("{cells} cells within {PROXY_FIDELITY_FACTOR}x of the proxy"))
}

fn criterion_5() -> Outcome {
    let (mut problems, _) = available_suitesparse();
    problems.extend(generated_suite());
    let fp64 = FloatFormat::fp64();
    let mut bad = Vec::new();
    let mut runs = 0;
    let mut worst = 0.0f64;
    for p in &problems {
        let a = &p.matrix;
        let norm = a.norm2().expect("norm");
        for &k in &p.ks {
            for seed in SEEDS {
                runs += 1;
                let approx = match nystrom_approx(a, k, 0, &fp64, MatmulMode::PerOp, seed) {
                    Ok(x) => x,
                    Err(e) => {
                        bad.push(format!("{} k {k} seed {seed}: {e}", p.name));
                        continue;
                    }
                };
                let low = sym_eigenvalues(&(a.entries() - approx.dense())).expect("eig");
                let scaled = low[low.len() - 1] / norm;
                worst = worst.min(scaled);
                if scaled < -PSD_TOL {
                    bad.push(format!("{} k {k} seed {seed}: {scaled:e}", p.name));
                }
            }
        }
    }
    verdict(&bad, format!("{runs} runs, min lambda_min(E)/||A|| = {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let problems: Vec<LoadedProblem> = generated_suite()
        .into_iter()
        .filter(|p| p.matrix.lambda_min().expect("spectrum") > 0.0)
        .collect();
    let names: Vec<&str> = problems.iter().map(|p| p.name.as_str()).collect();
    let report = match run_precond_on(
        &config(formats(&["fp16", "fp32", "fp64"]), SANDWICH_MUS.to_vec()),
        &problems,
    ) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut bad = Vec::new();
    let mut rows = 0;
    for row in &report.rows {
        if !row.status.is_ok() {
            bad.push(format!("{:?} seed {}: {}", row.key, row.seed, row.status.note()));
            continue;
        }
        rows += 1;
        let get = |c: &str| report.value(row, c).unwrap_or(f64::NAN);
        let (kappa, lo, hi) = (get("kappa_prec"), get("b_low"), get("b_uppspd"));
        if !(lo <= kappa * (1.0 + SANDWICH_ROUNDOFF) && kappa <= hi * (1.0 + SANDWICH_ROUNDOFF)) {
            bad.push(format!("{:?} seed {}: {lo:.4e} <= {kappa:.4e} <= {hi:.4e}", row.key, row.seed));
        }
    }
    let mut cells = 0;
    for p in &problems {
        for &k in p.ks.iter().filter(|&&k| k >= 4) {
            for up in ["fp16", "fp32", "fp64"] {
                for mu in SANDWICH_MUS {
                    let m = |c: &str| cell_mean(&report, p, k, up, Some(mu), c);
                    cells += 1;
                    match (m("b_low_est"), m("kappa_prec"), m("b_uppspd_est")) {
                        (Some(lo), Some(kappa), Some(hi)) if lo <= kappa && kappa <= hi => {}
                        (lo, kappa, hi) => {
                            bad.push(format!("mean {} k {k} {up} mu {mu}: {lo:?} <= {kappa:?} <= {hi:?}", p.name))
                        }
                    }
                }
            }
        }
    }
    verdict(
        &bad,
        format!("{rows} measured rows and {cells} estimated cell means on {}", names.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let mut bad = Vec::new();
    let mut cases = 0;
    let fp64 = FloatFormat::fp64();
    for a in diagonal_suite() {
        let n = a.n();
        let diag: Vec<f64> = a.entries().diagonal().iter().copied().collect();
        if a.entries().iter().enumerate().any(|(i, &x)| i % (n + 1) != 0 && x != 0.0) {
            return fail(format!("{} is not diagonal", a.name()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
        for &k in &SYNTHETIC_KS {
            cases += 1;
            let mut u = DMatrix::zeros(n, k);
            for (c, &i) in order.iter().take(k).enumerate() {
                u[(i, c)] = 1.0;
            }
            let theta: Vec<f64> = order.iter().take(k).map(|&i| diag[i]).collect();
            let lambda_k = theta[k - 1];
            let result = LmpPreconditioner::from_eigenpairs(u, theta, 0.0, fp64)
                .and_then(|p| split_preconditioned(&a, &p, 0.0))
                .and_then(|m| sym_eigenvalues(&m));
            let got = match result {
                Ok(v) => v,
                Err(e) => {
                    bad.push(format!("{} k {k}: {e}", a.name()));
                    continue;
                }
            };
            let mut want: Vec<f64> = std::iter::repeat(lambda_k)
                .take(k)
                .chain(order.iter().skip(k).map(|&i| diag[i]))
                .collect();
            want.sort_by(|x, y| y.total_cmp(x));
            let worst = got.iter().zip(&want).map(|(g, w)| rel(*g, *w)).fold(0.0, f64::max);
            if !(worst <= EIGENPAIR_REL_TOL) {
                bad.push(format!("{} k {k}: max relative deviation {worst:.2e}", a.name()));
            }
        }
    }
    verdict(&bad, format!("{cases} (problem, k) cases within {EIGENPAIR_REL_TOL:e}"))
}

fn criterion_8() -> Outcome {
    let mut problems = Vec::new();
    let mut missing = Vec::new();
    for name in ["bcsstm07", "494_bus", "LFAT5"] {
        match suitesparse(name) {
            Ok(p) => problems.push(p),
            Err(_) => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return missing_data(&missing);
    }
    let report = match run_precond_on(&config(formats(&["fp16", "fp32", "fp64"]), vec![PCG_MU]), &problems) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut bad = Vec::new();
    for p in &problems {
        let mut beats_plain = false;
        for &k in &p.ks {
            let m = |up: &str, c: &str| cell_mean(&report, p, k, up, Some(PCG_MU), c);
            let Some(base) = m("fp64", "iters_prec") else {
                bad.push(format!("{} k {k}: no fp64 iteration count", p.name));
                continue;
            };
            for up in ["fp16", "fp32"] {
                // half precision is out of range on some matrices
                if let Some(it) = m(up, "iters_prec") {
                    if rel(it, base) > PCG_ITER_REL_TOL {
                        bad.push(format!("{} k {k} {up}: {it:.1} vs fp64 {base:.1}", p.name));
                    }
                }
            }
            let all_below = ["fp16", "fp32", "fp64"].iter().all(|up| {
                match (m(up, "iters_prec"), m(up, "iters_unprec")) {
                    (Some(a), Some(b)) => a < b,
                    _ => true,
                }
            });
            beats_plain |= all_below;
        }
        if !beats_plain {
            bad.push(format!("{}: preconditioning never beats plain CG", p.name));
        }
    }
    verdict(&bad, format!("iteration counts within {}% on {} problems", PCG_ITER_REL_TOL * 100.0, problems.len()))
}

fn criterion_9() -> Outcome {
    let (mut problems, _) = available_suitesparse();
    problems.extend(generated_suite());
    let report = match run_approx_on(&config(formats(&["fp64"]), vec![0.5]), &problems) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut bad = Vec::new();
    let mut cells = 0;
    for p in &problems {
        for &k in p.ks.iter().filter(|&&k| k >= 4) {
            cells += 1;
            let m = |c: &str| cell_mean(&report, p, k, "fp64", None, c);
            match (m("total_error"), m("expected_bound")) {
                (Some(err), Some(bound)) if err <= bound => {}
                (err, bound) => bad.push(format!("{} k {k}: mean {err:?} bound {bound:?}", p.name)),
            }
        }
    }
    verdict(&bad, format!("{cells} cells on {} problems", problems.len()))
}

fn criterion_10() -> Outcome {
    let (a1, a2) = a1_a2();
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for a in [&a1, &a2] {
        let mut holds = 0;
        let mut samples = 0;
        for k in 1..=90 {
            for seed in SEEDS {
                let x = GaussianStream::new(seed).matrix(a.n(), k);
                let (norm, bounds) = match (weighted_pseudoinv_norm(a, &x), lemma_bounds(a, &x, k, LEMMA_ALPHA)) {
                    (Ok(n), Ok(b)) => (n, b),
                    (Err(e), _) | (_, Err(e)) => {
                        bad.push(format!("{} k {k} seed {seed}: {e}", a.name()));
                        continue;
                    }
                };
                if !(norm <= bounds.deterministic * (1.0 + LEMMA_ROUNDOFF)) {
                    bad.push(format!(
                        "{} k {k} seed {seed}: {norm:.4e} > deterministic {:.4e}",
                        a.name(),
                        bounds.deterministic
                    ));
                }
                if k % 9 == 0 {
                    samples += 1;
                    holds += usize::from(norm <= bounds.probabilistic);
                }
            }
        }
        summary.push(format!("{}: probabilistic {holds}/{samples}", a.name()));
        if holds < LEMMA_MIN_HOLDS {
            bad.push(format!("{}: probabilistic bound held {holds}/{samples}", a.name()));
        }
    }
    verdict(&bad, format!("deterministic on 1800 samples; {}", summary.join(", ")))
}

fn criterion_11() -> Outcome {
    let p = match suitesparse("bcsstm07") {
        Ok(p) => p,
        Err(_) => return missing_data(&["bcsstm07".to_string()]),
    };
    let problems = [p];
    let cfg = config(formats(&["fp8e5m2"]), vec![PCG_MU]);
    let (approx, pre) = match (run_approx_on(&cfg, &problems), run_precond_on(&cfg, &problems)) {
        (Ok(a), Ok(p)) => (a, p),
        (Err(e), _) | (_, Err(e)) => return fail(e.to_string()),
    };
    let p = &problems[0];
    let mut bad = Vec::new();
    let mut detrimental = false;
    for &k in &p.ks {
        let fin = cell_mean(&approx, p, k, "fp8e5m2", None, "finite_error");
        let total = cell_mean(&approx, p, k, "fp8e5m2", None, "total_error");
        match (fin, total) {
            (Some(f), Some(t)) if f >= FP8_FINITE_SHARE * t => {}
            (f, t) => bad.push(format!("k {k}: finite {f:?} total {t:?}")),
        }
        let it = |c: &str| cell_mean(&pre, p, k, "fp8e5m2", Some(PCG_MU), c);
        if let (Some(a), Some(b)) = (it("iters_prec"), it("iters_unprec")) {
            detrimental |= a >= b;
        }
    }
    if !detrimental {
        bad.push("preconditioned PCG beats plain CG at every k".into());
    }
    verdict(&bad, format!("finite error dominates at {} ranks", p.ks.len()))
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    (1, "format table", criterion_1),
    (2, "finite-precision proxy table", criterion_2),
    (3, "precision crossover", criterion_3),
    (4, "proxy fidelity on collection matrices", criterion_4),
    (5, "exact error is PSD", criterion_5),
    (6, "condition number sandwich", criterion_6),
    (7, "exact eigenpair mapping", criterion_7),
    (8, "PCG precision insensitivity", criterion_8),
    (9, "expected error bound", criterion_9),
    (10, "pseudoinverse bounds", criterion_10),
    (11, "fp8 degradation", criterion_11),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, title, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {title} ({secs:.1}s): {}", outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
