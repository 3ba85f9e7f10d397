//! Multi-seed sweeps over `(problem, k, format, mu)`.
//!
//! Cells run in parallel; rows are assembled in grid order afterwards, so
//! the output never depends on scheduling.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{CellStatus, ColumnKind, ExperimentReport, Row};
use crate::analysis;
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::{self, SpdMatrix};
use crate::nystrom::{approx_errors, nystrom_approx, NystromApprox};
use crate::pcg::{pcg_solve, rhs_uniform, PcgConfig, PcgResult};
use crate::precision::FloatFormat;
use crate::precond::{bound_values, build_lmp, measured_condition_number, shifted_condition_number};

pub const APPROX_COLUMNS: [(&str, ColumnKind); 8] = [
    ("total_error", ColumnKind::Float),
    ("finite_error", ColumnKind::Float),
    ("proxy", ColumnKind::Float),
    ("theorem_term", ColumnKind::Float),
    ("expected_bound", ColumnKind::Float),
    ("heuristic_ratio", ColumnKind::Float),
    ("heuristic_threshold", ColumnKind::Float),
    ("heuristic_flag", ColumnKind::Bool),
];

pub const PRECOND_COLUMNS: [(&str, ColumnKind); 20] = [
    ("e_norm", ColumnKind::Float),
    ("eps_norm", ColumnKind::Float),
    ("kappa_unprec", ColumnKind::Float),
    ("kappa_prec", ColumnKind::Float),
    ("b_low", ColumnKind::Float),
    ("b_upp", ColumnKind::Float),
    ("b_uppspd", ColumnKind::Float),
    ("e_norm_est", ColumnKind::Float),
    ("eps_norm_est", ColumnKind::Float),
    ("b_low_est", ColumnKind::Float),
    ("b_upp_est", ColumnKind::Float),
    ("b_uppspd_est", ColumnKind::Float),
    ("iters_unprec", ColumnKind::Int),
    ("iters_prec", ColumnKind::Int),
    ("converged_unprec", ColumnKind::Bool),
    ("converged_prec", ColumnKind::Bool),
    ("relres_unprec", ColumnKind::Float),
    ("relres_prec", ColumnKind::Float),
    ("heuristic_flag", ColumnKind::Bool),
    ("lambda_k_hat", ColumnKind::Float),
];

/// A loaded problem with its rank grid.
pub struct LoadedProblem {
    pub matrix: SpdMatrix,
    pub name: String,
    pub ks: Vec<usize>,
}

/// Load every problem, compute its spectrum once and resolve its ranks.
pub fn load_problems(cfg: &ExperimentConfig) -> Result<Vec<LoadedProblem>> {
    cfg.validate()?;
    cfg.problems
        .iter()
        .map(|spec| {
            let matrix = spec.load()?;
            matrix.spectrum()?;
            let name = matrix.name();
            let ks = cfg.ranks_for(matrix.n(), &name)?;
            Ok(LoadedProblem { matrix, name, ks })
        })
        .collect()
}

/// Reason a format is not run on a matrix, if any.
pub fn out_of_range(a: &SpdMatrix, up: &FloatFormat) -> Option<String> {
    let m = a.max_abs_entry();
    (m > up.x_max).then(|| format!("max |a_ij| = {m:e} exceeds x_max = {:e} of {}", up.x_max, up.name))
}

fn b(flag: bool) -> Option<f64> {
    Some(if flag { 1.0 } else { 0.0 })
}

fn fail_note(e: &Error) -> String {
    e.to_string()
}

/// `(problem, k, seed)` grid flattened in order.
fn jobs(problems: &[LoadedProblem], seeds: &[u64]) -> Vec<(usize, usize, u64)> {
    let mut out = Vec::new();
    for (pi, p) in problems.iter().enumerate() {
        for &k in &p.ks {
            for &seed in seeds {
                out.push((pi, k, seed));
            }
        }
    }
    out
}

/// An approximation at format `up` sharing its sketch with `reference`,
/// or the reason it is missing.
fn low_precision_run(
    cfg: &ExperimentConfig,
    a: &SpdMatrix,
    k: usize,
    seed: u64,
    up: &FloatFormat,
    reference: &Result<NystromApprox>,
) -> std::result::Result<NystromApprox, CellStatus> {
    if let Some(reason) = out_of_range(a, up) {
        return Err(CellStatus::Skipped(reason));
    }
    let reference = reference
        .as_ref()
        .map_err(|e| CellStatus::Failed(format!("fp64 reference: {}", fail_note(e))))?;
    if up.is_working_precision() {
        return Ok(reference.clone());
    }
    nystrom_approx(a, k, cfg.l, up, cfg.mode, seed).map_err(|e| CellStatus::Failed(fail_note(&e)))
}

fn approx_cell(cfg: &ExperimentConfig, p: &LoadedProblem, k: usize, seed: u64) -> Vec<Row> {
    let a = &p.matrix;
    let eig = a.spectrum().expect("spectrum computed at load");
    let reference = nystrom_approx(a, k, cfg.l, &FloatFormat::fp64(), cfg.mode, seed);
    cfg.formats
        .iter()
        .map(|up| {
            let key = vec![p.name.clone(), a.n().to_string(), k.to_string(), up.name.to_string()];
            let heur = analysis::heuristic_check(eig, k, a.n(), up).ok();
            let mut values = vec![
                None,
                None,
                analysis::proxy_from_norm(a.n(), eig[0], up).ok(),
                analysis::theorem_term_from_spectrum(eig, k, up, cfg.alpha, cfg.t).ok(),
                analysis::expected_exact_error_bound(eig, k).ok(),
                heur.map(|h| h.ratio),
                heur.map(|h| h.threshold),
                heur.and_then(|h| b(h.flag)),
            ];
            let status = match low_precision_run(cfg, a, k, seed, up, &reference) {
                Err(status) => status,
                Ok(approx) => match approx_errors(a, &approx, reference.as_ref().ok()) {
                    Ok(err) => {
                        values[0] = Some(err.total);
                        values[1] = err.finite_precision;
                        CellStatus::Ok
                    }
                    Err(e) => CellStatus::Failed(fail_note(&e)),
                },
            };
            Row {
                key,
                seed,
                status,
                values,
            }
        })
        .collect()
}

/// Reassemble per-job rows (one per format, and per mu inside) into
/// `problem, k, format, [mu,] seed` order.
fn assemble(
    problems: &[LoadedProblem],
    seeds: &[u64],
    jobs: &[(usize, usize, u64)],
    mut results: Vec<Vec<Row>>,
    per_job: usize,
) -> Vec<Row> {
    let index: HashMap<(usize, usize, u64), usize> = jobs.iter().enumerate().map(|(i, j)| (*j, i)).collect();
    let mut rows = Vec::new();
    for (pi, p) in problems.iter().enumerate() {
        for &k in &p.ks {
            for slot in 0..per_job {
                for &seed in seeds {
                    let job = index[&(pi, k, seed)];
                    rows.push(std::mem::replace(
                        &mut results[job][slot],
                        Row {
                            key: Vec::new(),
                            seed,
                            status: CellStatus::Ok,
                            values: Vec::new(),
                        },
                    ));
                }
            }
        }
    }
    rows
}

fn unique_seeds(seeds: &[u64]) -> Vec<u64> {
    let mut out = Vec::new();
    for &s in seeds {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Approximation errors, bounds and heuristic for every grid point.
pub fn run_approx_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let problems = load_problems(cfg)?;
    run_approx_on(cfg, &problems)
}

/// [`run_approx_experiment`] on already loaded problems.
pub fn run_approx_on(cfg: &ExperimentConfig, problems: &[LoadedProblem]) -> Result<ExperimentReport> {
    let seeds = unique_seeds(&cfg.seeds);
    let jobs = jobs(problems, &seeds);
    let results: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(pi, k, seed)| approx_cell(cfg, &problems[pi], k, seed))
        .collect();
    let mut report = ExperimentReport::new("approx", vec!["problem", "n", "k", "up"], APPROX_COLUMNS.to_vec());
    report.rows = assemble(problems, &seeds, &jobs, results, cfg.formats.len());
    Ok(report)
}

/// Plain CG on `A + mu I`, shared by every cell with the same `(problem, mu)`.
struct Baseline {
    kappa: f64,
    solve: Result<PcgResult>,
}

fn pcg_config(cfg: &ExperimentConfig, mu: f64) -> PcgConfig {
    PcgConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        mu,
        record_history: false,
    }
}

#[allow(clippy::too_many_arguments)]
fn precond_row(
    cfg: &ExperimentConfig,
    p: &LoadedProblem,
    k: usize,
    seed: u64,
    up: &FloatFormat,
    mu: f64,
    approx: &std::result::Result<(NystromApprox, f64, f64), CellStatus>,
    baseline: &Baseline,
) -> Row {
    let a = &p.matrix;
    let eig = a.spectrum().expect("spectrum computed at load");
    let n = a.n();
    let key = vec![p.name.clone(), n.to_string(), k.to_string(), up.name.to_string(), format!("{mu}")];
    let mut v: Vec<Option<f64>> = vec![None; PRECOND_COLUMNS.len()];
    let set = |v: &mut Vec<Option<f64>>, name: &str, x: Option<f64>| {
        let i = PRECOND_COLUMNS.iter().position(|(c, _)| *c == name).expect("known column");
        v[i] = x;
    };
    let heur = analysis::heuristic_check(eig, k, n, up).ok();
    set(&mut v, "heuristic_flag", heur.and_then(|h| b(h.flag)));
    set(&mut v, "kappa_unprec", Some(baseline.kappa));
    let e_est = analysis::expected_exact_error_bound(eig, k).ok();
    let eps_est = analysis::proxy_from_norm(n, eig[0], up).ok();
    set(&mut v, "e_norm_est", e_est);
    set(&mut v, "eps_norm_est", eps_est);

    let unprec = match &baseline.solve {
        Ok(r) => r,
        Err(e) => {
            return Row {
                key,
                seed,
                status: CellStatus::Failed(format!("unpreconditioned solve: {}", fail_note(e))),
                values: v,
            }
        }
    };
    set(&mut v, "iters_unprec", Some(unprec.iterations as f64));
    set(&mut v, "converged_unprec", b(unprec.converged));
    set(&mut v, "relres_unprec", Some(unprec.final_relres));

    let (approx, e_norm, eps_norm) = match approx {
        Ok(x) => x,
        Err(status) => {
            return Row {
                key,
                seed,
                status: status.clone(),
                values: v,
            }
        }
    };
    set(&mut v, "e_norm", Some(*e_norm));
    set(&mut v, "eps_norm", Some(*eps_norm));

    let outcome = (|| -> Result<()> {
        let lambda_min = eig[n - 1];
        if !cfg.precondition {
            set(&mut v, "kappa_prec", Some(baseline.kappa));
            set(&mut v, "iters_prec", Some(unprec.iterations as f64));
            set(&mut v, "converged_prec", b(unprec.converged));
            set(&mut v, "relres_prec", Some(unprec.final_relres));
            return Ok(());
        }
        let pre = build_lmp(approx, mu)?;
        set(&mut v, "lambda_k_hat", Some(pre.lambda_k_hat()));
        let measured = bound_values(lambda_min, pre.lambda_k_hat(), mu, *e_norm, *eps_norm)?;
        set(&mut v, "b_low", Some(measured.b_low));
        set(&mut v, "b_upp", measured.b_upp);
        set(&mut v, "b_uppspd", measured.b_uppspd);
        if let (Some(e), Some(eps)) = (e_est, eps_est) {
            let est = bound_values(lambda_min, pre.lambda_k_hat(), mu, e, eps)?;
            set(&mut v, "b_low_est", Some(est.b_low));
            set(&mut v, "b_upp_est", est.b_upp);
            set(&mut v, "b_uppspd_est", est.b_uppspd);
        }
        set(&mut v, "kappa_prec", Some(measured_condition_number(a, &pre, mu)?));
        let rhs = rhs_uniform(n, cfg.rhs_seed);
        let solve = pcg_solve(a, &rhs, Some(&pre), &pcg_config(cfg, mu))?;
        set(&mut v, "iters_prec", Some(solve.iterations as f64));
        set(&mut v, "converged_prec", b(solve.converged));
        set(&mut v, "relres_prec", Some(solve.final_relres));
        Ok(())
    })();
    let status = match outcome {
        Ok(()) => CellStatus::Ok,
        Err(e) => CellStatus::Failed(fail_note(&e)),
    };
    Row {
        key,
        seed,
        status,
        values: v,
    }
}

fn precond_cell(cfg: &ExperimentConfig, p: &LoadedProblem, k: usize, seed: u64, baselines: &[Baseline]) -> Vec<Row> {
    let a = &p.matrix;
    let reference = nystrom_approx(a, k, cfg.l, &FloatFormat::fp64(), cfg.mode, seed);
    let e_norm = reference
        .as_ref()
        .ok()
        .map(|r| linalg::sym_norm2(&(a.entries() - r.dense())));
    let mut rows = Vec::with_capacity(cfg.formats.len() * cfg.mus.len());
    for up in &cfg.formats {
        let approx = low_precision_run(cfg, a, k, seed, up, &reference).and_then(|x| {
            let r = reference.as_ref().expect("checked by low_precision_run");
            let e = match &e_norm {
                Some(Ok(e)) => *e,
                Some(Err(err)) => return Err(CellStatus::Failed(fail_note(err))),
                None => unreachable!("reference exists"),
            };
            let eps = linalg::sym_norm2(&(r.dense() - x.dense())).map_err(|err| CellStatus::Failed(fail_note(&err)))?;
            Ok((x, e, eps))
        });
        for (mi, &mu) in cfg.mus.iter().enumerate() {
            rows.push(precond_row(cfg, p, k, seed, up, mu, &approx, &baselines[mi]));
        }
    }
    rows
}

/// Condition numbers, bounds and PCG iteration counts for every grid point.
pub fn run_precond_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let problems = load_problems(cfg)?;
    run_precond_on(cfg, &problems)
}

/// [`run_precond_experiment`] on already loaded problems.
pub fn run_precond_on(cfg: &ExperimentConfig, problems: &[LoadedProblem]) -> Result<ExperimentReport> {
    let seeds = unique_seeds(&cfg.seeds);
    let baselines: Vec<Vec<Baseline>> = problems
        .par_iter()
        .map(|p| {
            let rhs = rhs_uniform(p.matrix.n(), cfg.rhs_seed);
            cfg.mus
                .iter()
                .map(|&mu| -> Result<Baseline> {
                    Ok(Baseline {
                        kappa: shifted_condition_number(&p.matrix, mu)?,
                        solve: pcg_solve(&p.matrix, &rhs, None, &pcg_config(cfg, mu)),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let jobs = jobs(problems, &seeds);
    let results: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(pi, k, seed)| precond_cell(cfg, &problems[pi], k, seed, &baselines[pi]))
        .collect();
    let mut report = ExperimentReport::new(
        "precond",
        vec!["problem", "n", "k", "up", "mu"],
        PRECOND_COLUMNS.to_vec(),
    );
    report.rows = assemble(problems, &seeds, &jobs, results, cfg.formats.len() * cfg.mus.len());
    Ok(report)
}

/// Write the descending eigenvalues of a Matrix Market file as CSV.
pub fn write_spectrum(matrix: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<usize> {
    let a = matrices::load_matrix_market(matrix)?;
    let eig = a.spectrum()?;
    matrices::write_spectrum_csv(eig, out)?;
    Ok(eig.len())
}
