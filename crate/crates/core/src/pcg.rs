//! Preconditioned conjugate gradients for `(A + mu I) x = b`.
//!
//! Convergence is judged on the true residual `||b - (A + mu I) x|| / ||b||`
//! recomputed every iteration; the initial guess is zero.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrices::SpdMatrix;
use crate::precond::LmpPreconditioner;
use crate::rng::UniformStream;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_RHS_SEED: u64 = 1234;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgConfig {
    pub tol: f64,
    /// `None` means `5 n`.
    pub max_iter: Option<usize>,
    pub mu: f64,
    pub record_history: bool,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            mu: 0.0,
            record_history: false,
        }
    }
}

impl PcgConfig {
    pub fn with_mu(mu: f64) -> Self {
        Self { mu, ..Self::default() }
    }

    fn validate(&self, n: usize) -> Result<usize> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::Config(format!("mu must be nonnegative, got {}", self.mu)));
        }
        let max_iter = self.max_iter.unwrap_or(5 * n);
        if max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(max_iter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative true residual, entry `i` after iteration `i` (entry 0 is the
    /// initial residual).
    pub relres_history: Option<Vec<f64>>,
    pub final_relres: f64,
}

impl PcgResult {
    /// Write `iter,relres` rows; fails if no history was recorded.
    pub fn write_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let hist = self
            .relres_history
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("solve did not record a residual history".into()))?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "iter,relres").map_err(io)?;
        for (i, r) in hist.iter().enumerate() {
            writeln!(w, "{i},{r:.16e}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Uniform (0, 1) right-hand side.
pub fn rhs_uniform(n: usize, seed: u64) -> DVector<f64> {
    UniformStream::new(seed).vector(n)
}

fn shifted_mul(a: &SpdMatrix, mu: f64, v: &DVector<f64>) -> DVector<f64> {
    let mut y = a.entries() * v;
    y.axpy(mu, v, 1.0);
    y
}

fn check_rhs(a: &SpdMatrix, b: &DVector<f64>, p: Option<&LmpPreconditioner>) -> Result<()> {
    if b.len() != a.n() {
        return Err(Error::DimensionMismatch(format!("b has length {}, A has n = {}", b.len(), a.n())));
    }
    if let Some(p) = p {
        if p.n() != a.n() {
            return Err(Error::DimensionMismatch(format!("preconditioner has n = {}, A has n = {}", p.n(), a.n())));
        }
    }
    Ok(())
}

/// Left-preconditioned CG with `z = P^-1 r`; plain CG when `p` is `None`.
pub fn pcg_solve(a: &SpdMatrix, b: &DVector<f64>, p: Option<&LmpPreconditioner>, cfg: &PcgConfig) -> Result<PcgResult> {
    check_rhs(a, b, p)?;
    let max_iter = cfg.validate(a.n())?;
    let precondition = |r: &DVector<f64>| match p {
        Some(p) => p.apply_inv(r),
        None => Ok(r.clone()),
    };
    let bnorm = b.norm();
    let n = a.n();
    let mut x = DVector::zeros(n);
    let mut history = cfg.record_history.then(|| vec![1.0]);
    if bnorm == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            converged: true,
            relres_history: history.map(|_| vec![0.0]),
            final_relres: 0.0,
        });
    }

    let mut r = b.clone();
    let mut z = precondition(&r)?;
    let mut rz = r.dot(&z);
    if !(rz > 0.0) {
        return Err(Error::Breakdown {
            iteration: 0,
            reason: format!("r'z = {rz:e} with nonzero residual"),
        });
    }
    let mut dir = z.clone();
    let mut relres = 1.0;
    for it in 1..=max_iter {
        let q = shifted_mul(a, cfg.mu, &dir);
        let curvature = dir.dot(&q);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("p'Ap = {curvature:e}"),
            });
        }
        let step = rz / curvature;
        x.axpy(step, &dir, 1.0);
        r.axpy(-step, &q, 1.0);

        relres = (b - shifted_mul(a, cfg.mu, &x)).norm() / bnorm;
        if let Some(h) = history.as_mut() {
            h.push(relres);
        }
        if relres <= cfg.tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                converged: true,
                relres_history: history,
                final_relres: relres,
            });
        }

        z = precondition(&r)?;
        let rz_next = r.dot(&z);
        if !(rz_next > 0.0) {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("r'z = {rz_next:e} with nonzero residual"),
            });
        }
        let beta = rz_next / rz;
        rz = rz_next;
        dir = &z + &dir * beta;
    }
    Ok(PcgResult {
        x,
        iterations: max_iter,
        converged: false,
        relres_history: history,
        final_relres: relres,
    })
}

/// CG on the split system `P^{-1/2} (A + mu I) P^{-1/2} y = P^{-1/2} b`,
/// returning `x = P^{-1/2} y`. The stopping test uses the residual of the
/// original system.
pub fn pcg_solve_split(a: &SpdMatrix, b: &DVector<f64>, p: &LmpPreconditioner, cfg: &PcgConfig) -> Result<PcgResult> {
    check_rhs(a, b, Some(p))?;
    let max_iter = cfg.validate(a.n())?;
    let op = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let w = p.apply_inv_sqrt(v)?;
        p.apply_inv_sqrt(&shifted_mul(a, cfg.mu, &w))
    };
    let bnorm = b.norm();
    let n = a.n();
    let mut y = DVector::zeros(n);
    let mut history = cfg.record_history.then(|| vec![1.0]);
    if bnorm == 0.0 {
        return Ok(PcgResult {
            x: y,
            iterations: 0,
            converged: true,
            relres_history: history.map(|_| vec![0.0]),
            final_relres: 0.0,
        });
    }
    let mut r = p.apply_inv_sqrt(b)?;
    let mut rr = r.dot(&r);
    let mut dir = r.clone();
    let mut relres = 1.0;
    let mut x = DVector::zeros(n);
    for it in 1..=max_iter {
        let q = op(&dir)?;
        let curvature = dir.dot(&q);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("p'Ap = {curvature:e}"),
            });
        }
        let step = rr / curvature;
        y.axpy(step, &dir, 1.0);
        r.axpy(-step, &q, 1.0);
        x = p.apply_inv_sqrt(&y)?;
        relres = (b - shifted_mul(a, cfg.mu, &x)).norm() / bnorm;
        if let Some(h) = history.as_mut() {
            h.push(relres);
        }
        if relres <= cfg.tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                converged: true,
                relres_history: history,
                final_relres: relres,
            });
        }
        let rr_next = r.dot(&r);
        dir = &r + &dir * (rr_next / rr);
        rr = rr_next;
    }
    Ok(PcgResult {
        x,
        iterations: max_iter,
        converged: false,
        relres_history: history,
        final_relres: relres,
    })
}
