//! Error-model quantities, a-priori bounds and the precision-selection
//! heuristic for the mixed-precision Nyström approximation.
//!
//! The universal constant `c1` of the smallest-singular-value tail bound is
//! never instantiated; failure probabilities are reported with `c1 = 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::SpdMatrix;
use crate::precision::FloatFormat;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_T: f64 = 3.0;
/// Constant in the accumulated rounding factor.
pub const DEFAULT_C: f64 = 1.0;

/// Rounding-error accumulation factors for inner products of length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFactors {
    pub n: usize,
    pub up: FloatFormat,
    pub c: f64,
    /// `n u / (1 - n u)`, `None` when `n u >= 1`.
    pub gamma: Option<f64>,
    /// `c n u / (1 - c n u)`, `None` when `c n u >= 1`.
    pub gamma_tilde: Option<f64>,
    pub valid: bool,
}

impl GammaFactors {
    /// `gamma_tilde`, or the out-of-range error naming `c n u`.
    pub fn require_tilde(&self) -> Result<f64> {
        self.gamma_tilde.ok_or(Error::TheoryOutOfRange {
            n_up: self.c * self.n as f64 * self.up.unit_roundoff,
        })
    }
}

pub fn gamma_factors(n: usize, up: &FloatFormat, c: f64) -> GammaFactors {
    let nu = n as f64 * up.unit_roundoff;
    let cnu = c * nu;
    let gamma = (nu < 1.0).then(|| nu / (1.0 - nu));
    let valid = cnu < 1.0;
    let gamma_tilde = valid.then(|| cnu / (1.0 - cnu));
    GammaFactors {
        n,
        up: *up,
        c,
        gamma,
        gamma_tilde,
        valid,
    }
}

fn require_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `sqrt(n) * gamma_tilde * ||A||_2` with `c = 1`.
pub fn finite_error_proxy(a: &SpdMatrix, up: &FloatFormat) -> Result<f64> {
    proxy_from_norm(a.n(), a.norm2()?, up)
}

/// [`finite_error_proxy`] from a known dimension and spectral norm.
pub fn proxy_from_norm(n: usize, norm: f64, up: &FloatFormat) -> Result<f64> {
    let g = gamma_factors(n, up, DEFAULT_C).require_tilde()?;
    Ok((n as f64).sqrt() * g * norm)
}

fn check_sketch(a: &SpdMatrix, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != a.n() || x.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, A is {}x{}",
            x.nrows(),
            x.ncols(),
            a.n(),
            a.n()
        )));
    }
    Ok(())
}

/// `||A X (X^T A X)^+||_2`.
pub fn weighted_pseudoinv_norm(a: &SpdMatrix, x: &DMatrix<f64>) -> Result<f64> {
    check_sketch(a, x)?;
    let ax = a.entries() * x;
    let core = linalg::symmetrize(&(x.transpose() * &ax));
    let pinv = linalg::sym_pinv(&core)?;
    Ok(linalg::norm2(&(ax * pinv)))
}

/// Symmetric square root with negative eigenvalues clamped to zero.
fn sqrt_psd(a: &SpdMatrix) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::sym_eigen(a.entries())?;
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    Ok(linalg::symmetrize(&(scaled * vecs.transpose())))
}

/// `lambda_k^{1/2} / sigma_k(X^T A^{1/2})` with `k` the number of columns
/// of `X`; `+inf` when `sigma_k` is numerically zero.
pub fn eta_ratio(a: &SpdMatrix, x: &DMatrix<f64>) -> Result<f64> {
    check_sketch(a, x)?;
    let k = x.ncols();
    let n = a.n();
    if k > n {
        return Err(Error::DimensionMismatch(format!("k = {k} exceeds n = {n}")));
    }
    let lambda_k = a.spectrum()?[k - 1].max(0.0);
    let s = linalg::singular_values(&(x.transpose() * sqrt_psd(a)?));
    let cutoff = n.max(k) as f64 * f64::EPSILON / 2.0 * s[0];
    let sk = s[k - 1];
    if !(sk > cutoff) {
        return Ok(f64::INFINITY);
    }
    Ok(lambda_k.sqrt() / sk)
}

/// Condition number `lambda_1 / lambda_k` of the best rank-`k` part.
pub fn kappa_k(eigenvalues: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside 1..={}",
            eigenvalues.len()
        )));
    }
    let lk = eigenvalues[k - 1];
    if !(lk > 0.0) {
        return Err(Error::RankDeficient(format!("lambda_{k} = {lk:e} is not positive")));
    }
    Ok(eigenvalues[0] / lk)
}

/// Deterministic and probabilistic bounds on the weighted pseudoinverse norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaBounds {
    /// `kappa(A_k)^{1/2} eta_k`.
    pub deterministic: f64,
    /// `kappa(A_k)^{1/2} k^{1/2} / alpha`.
    pub probabilistic: f64,
    /// `c1 alpha` with `c1 = 1`; the true constant is unspecified.
    pub failure_probability: f64,
}

pub fn lemma_bounds(a: &SpdMatrix, x: &DMatrix<f64>, k: usize, alpha: f64) -> Result<LemmaBounds> {
    require_alpha(alpha)?;
    if x.ncols() != k {
        return Err(Error::DimensionMismatch(format!("X has {} columns, k = {k}", x.ncols())));
    }
    let root_kappa = kappa_k(a.spectrum()?, k)?.sqrt();
    Ok(LemmaBounds {
        deterministic: root_kappa * eta_ratio(a, x)?,
        probabilistic: root_kappa * (k as f64).sqrt() / alpha,
        failure_probability: alpha,
    })
}

/// Tighter probabilistic bound from splitting the spectrum into `j` blocks
/// of size `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionedBound {
    pub bound: f64,
    pub blocks: usize,
    /// `j c1 alpha` with `c1 = 1`.
    pub failure_probability: f64,
}

/// Numerical rank: eigenvalues above `n u lambda_max`.
pub fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let cutoff = eigenvalues.len() as f64 * f64::EPSILON / 2.0 * top;
    eigenvalues.iter().filter(|&&v| v > cutoff).count()
}

pub fn partitioned_bound(a: &SpdMatrix, k: usize, alpha: f64) -> Result<PartitionedBound> {
    require_alpha(alpha)?;
    let eig = a.spectrum()?;
    let rank = numerical_rank(eig);
    if k == 0 || rank < k {
        return Err(Error::RankDeficient(format!("rank(A) = {rank} is below k = {k}")));
    }
    let j = rank / k;
    let block_sum: f64 = (1..=j).map(|i| eig[i * k - 1]).sum();
    Ok(PartitionedBound {
        bound: eig[0].sqrt() * (k as f64).sqrt() / (alpha * block_sum.sqrt()),
        blocks: j,
        failure_probability: j as f64 * alpha,
    })
}

/// Finite-precision term of the total-error bound,
/// `alpha^-1 sqrt(n) k (sqrt(n) + sqrt(k) + t)^2 gamma_tilde ||A||_2 kappa(A_k)`.
/// The caller adds an estimate of the exact error.
pub fn theorem_total_bound(a: &SpdMatrix, k: usize, up: &FloatFormat, alpha: f64, t: f64) -> Result<f64> {
    theorem_term_from_spectrum(a.spectrum()?, k, up, alpha, t)
}

/// [`theorem_total_bound`] from a descending spectrum.
pub fn theorem_term_from_spectrum(eigenvalues: &[f64], k: usize, up: &FloatFormat, alpha: f64, t: f64) -> Result<f64> {
    require_alpha(alpha)?;
    let n = eigenvalues.len();
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("theorem needs 2 <= k <= n, got k = {k}, n = {n}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let g = gamma_factors(n, up, DEFAULT_C).require_tilde()?;
    let kappa = kappa_k(eigenvalues, k)?;
    let (nf, kf) = (n as f64, k as f64);
    let norm = eigenvalues[0];
    Ok(nf.sqrt() * kf * (nf.sqrt() + kf.sqrt() + t).powi(2) * g * norm * kappa / alpha)
}

/// Failure probability attached to the theorem term, `exp(-t^2/2) + c1 alpha`
/// with `c1 = 1`.
pub fn theorem_failure_probability(alpha: f64, t: f64) -> f64 {
    (-t * t / 2.0).exp() + alpha
}

/// Bound on the expected exact error of a rank-`k` randomized Nyström
/// approximation, minimised over the split `p` in `2..=k-2`.
pub fn expected_exact_error_bound(eigenvalues: &[f64], k: usize) -> Result<f64> {
    let n = eigenvalues.len();
    if k < 4 {
        return Err(Error::InvalidInput(format!("expected-error bound needs k >= 4, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds n = {n}")));
    }
    let e2 = std::f64::consts::E.powi(2);
    let kf = k as f64;
    let mut best = f64::INFINITY;
    for p in 2..=(k - 2) {
        let pf = p as f64;
        let lead = eigenvalues[k - p];
        let tail: f64 = eigenvalues[(k - p)..].iter().sum();
        let value = (1.0 + 2.0 * (kf - pf) / (pf - 1.0)) * lead + 2.0 * e2 * kf / (pf * pf - 1.0) * tail;
        best = best.min(value);
    }
    Ok(best)
}

/// Outcome of the precision-selection heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heuristic {
    /// `lambda_{k+1} / lambda_max`.
    pub ratio: f64,
    /// `sqrt(n) u_p`.
    pub threshold: f64,
    /// True when rounding in `u_p` is expected to degrade the rank-`k`
    /// approximation.
    pub flag: bool,
}

pub fn heuristic_check(eigenvalues: &[f64], k: usize, n: usize, up: &FloatFormat) -> Result<Heuristic> {
    if k >= eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "heuristic needs k < n, got k = {k}, n = {}",
            eigenvalues.len()
        )));
    }
    let top = eigenvalues[0];
    if !(top > 0.0) {
        return Err(Error::InvalidInput(format!("lambda_max = {top:e} is not positive")));
    }
    let ratio = eigenvalues[k] / top;
    let threshold = (n as f64).sqrt() * up.unit_roundoff;
    Ok(Heuristic {
        ratio,
        threshold,
        flag: ratio <= threshold,
    })
}

/// All a-priori quantities for one `(A, k, u_p)` cell. Quantities whose
/// preconditions fail are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub exact_error_expected: Option<f64>,
    pub finite_error_proxy: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub heuristic: Option<Heuristic>,
    pub alpha: f64,
    pub t: f64,
    pub failure_probability: f64,
}

pub fn bound_report(a: &SpdMatrix, k: usize, up: &FloatFormat, alpha: f64, t: f64) -> Result<BoundReport> {
    require_alpha(alpha)?;
    let eig = a.spectrum()?;
    let n = a.n();
    Ok(BoundReport {
        exact_error_expected: expected_exact_error_bound(eig, k).ok(),
        finite_error_proxy: proxy_from_norm(n, eig[0], up).ok(),
        theorem_bound: theorem_term_from_spectrum(eig, k, up, alpha, t).ok(),
        heuristic: heuristic_check(eig, k, n, up).ok(),
        alpha,
        t,
        failure_probability: theorem_failure_probability(alpha, t),
    })
}
