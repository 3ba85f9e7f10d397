//! Spectral limited-memory preconditioner built from approximate eigenpairs
//! `(U, theta)`:
//!
//! ```text
//! P^-1 = I - U U^T + (alpha + mu) U (Theta + mu I)^-1 U^T
//! P    = I - U U^T + U (Theta + mu I) U^T / (alpha + mu)
//! ```
//!
//! with `alpha` the smallest retained eigenvalue estimate.

use nalgebra::{DMatrix, DVector};

use crate::analysis;
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::SpdMatrix;
use crate::nystrom::NystromApprox;
use crate::precision::FloatFormat;

#[derive(Debug, Clone, PartialEq)]
pub struct LmpPreconditioner {
    u: DMatrix<f64>,
    theta: Vec<f64>,
    alpha: f64,
    mu: f64,
    up: FloatFormat,
}

/// Preconditioner with `alpha = theta_k` from a Nyström approximation.
pub fn build_lmp(approx: &NystromApprox, mu: f64) -> Result<LmpPreconditioner> {
    LmpPreconditioner::from_eigenpairs(approx.u.clone(), approx.theta.clone(), mu, approx.up)
}

impl LmpPreconditioner {
    /// `alpha = theta_k`; `theta` must be non-increasing.
    pub fn from_eigenpairs(u: DMatrix<f64>, theta: Vec<f64>, mu: f64, up: FloatFormat) -> Result<Self> {
        let alpha = *theta
            .last()
            .ok_or_else(|| Error::InvalidInput("preconditioner needs k >= 1".into()))?;
        Self::with_alpha(u, theta, alpha, mu, up)
    }

    /// General form with a free `alpha`.
    pub fn with_alpha(u: DMatrix<f64>, theta: Vec<f64>, alpha: f64, mu: f64, up: FloatFormat) -> Result<Self> {
        if u.ncols() != theta.len() || theta.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, theta has {} entries",
                u.ncols(),
                theta.len()
            )));
        }
        if !(mu >= 0.0) {
            return Err(Error::InvalidInput(format!("mu must be nonnegative, got {mu}")));
        }
        if theta.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::InvalidInput("theta must be nonnegative".into()));
        }
        let smallest = theta.iter().fold(f64::INFINITY, |m, &t| m.min(t));
        if !(smallest + mu > 0.0) || !(alpha + mu > 0.0) {
            return Err(Error::SingularPreconditioner(smallest + mu));
        }
        Ok(Self {
            u,
            theta,
            alpha,
            mu,
            up,
        })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The `alpha` of the construction; `theta_k` unless built with
    /// [`LmpPreconditioner::with_alpha`].
    pub fn lambda_k_hat(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn up(&self) -> &FloatFormat {
        &self.up
    }

    /// Eigenvalues of `P^-1` on `range(U)`: `(alpha + mu) / (theta_i + mu)`.
    pub fn inv_ratios(&self) -> Vec<f64> {
        self.theta.iter().map(|t| (self.alpha + self.mu) / (t + self.mu)).collect()
    }

    /// `x + U diag(f - 1) U^T x` for each column of `x`.
    fn spectral_apply(&self, x: &DMatrix<f64>, factors: &[f64]) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "operand has {} rows, preconditioner has n = {}",
                x.nrows(),
                self.n()
            )));
        }
        let mut coeffs = self.u.transpose() * x;
        for (i, f) in factors.iter().enumerate() {
            coeffs.row_mut(i).scale_mut(f - 1.0);
        }
        Ok(x + &self.u * coeffs)
    }

    fn apply_vec(&self, x: &DVector<f64>, factors: &[f64]) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        Ok(DVector::from_column_slice(self.spectral_apply(&m, factors)?.as_slice()))
    }

    /// `P^-1 x` in `O(nk)` work.
    pub fn apply_inv(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply_vec(x, &self.inv_ratios())
    }

    /// `P x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let f: Vec<f64> = self.inv_ratios().iter().map(|r| 1.0 / r).collect();
        self.apply_vec(x, &f)
    }

    /// `P^{-1/2} x`.
    pub fn apply_inv_sqrt(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply_vec(x, &self.inv_sqrt_ratios())
    }

    /// `P^{-1/2} X` column by column.
    pub fn apply_inv_sqrt_mat(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.spectral_apply(x, &self.inv_sqrt_ratios())
    }

    fn inv_sqrt_ratios(&self) -> Vec<f64> {
        self.inv_ratios().iter().map(|r| r.sqrt()).collect()
    }
}

/// `P^{-1/2} (A + mu I) P^{-1/2}`, symmetrized.
pub fn split_preconditioned(a: &SpdMatrix, p: &LmpPreconditioner, mu: f64) -> Result<DMatrix<f64>> {
    let mut shifted = a.entries().clone();
    for i in 0..a.n() {
        shifted[(i, i)] += mu;
    }
    let half = p.apply_inv_sqrt_mat(&shifted)?;
    let full = p.apply_inv_sqrt_mat(&half.transpose())?;
    Ok(linalg::symmetrize(&full))
}

/// `lambda_max / lambda_min` of the split-preconditioned matrix.
pub fn measured_condition_number(a: &SpdMatrix, p: &LmpPreconditioner, mu: f64) -> Result<f64> {
    let eig = linalg::sym_eigenvalues(&split_preconditioned(a, p, mu)?)?;
    let (top, bottom) = (eig[0], eig[eig.len() - 1]);
    if !(bottom > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "split-preconditioned matrix has lambda_min = {bottom:e}"
        )));
    }
    Ok(top / bottom)
}

/// `kappa(A + mu I)` from the spectrum of `A`.
pub fn shifted_condition_number(a: &SpdMatrix, mu: f64) -> Result<f64> {
    let eig = a.spectrum()?;
    let bottom = eig[eig.len() - 1] + mu;
    if !(bottom > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("lambda_min(A) + mu = {bottom:e}")));
    }
    Ok((eig[0] + mu) / bottom)
}

/// Measured condition numbers and the theoretical bounds for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondReport {
    pub kappa_unprec: f64,
    pub kappa_prec: f64,
    pub b_low: f64,
    /// Present only when `mu > ||Eps||`.
    pub b_upp: Option<f64>,
    /// Present only when `lambda_min(A) > 0`.
    pub b_uppspd: Option<f64>,
    pub mu: f64,
    pub e_norm_used: f64,
    pub eps_norm_used: f64,
    /// True when the norms are a-priori estimates rather than measurements.
    pub estimates_used: bool,
}

/// The three bounds only, without measuring any condition number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondBounds {
    pub b_low: f64,
    pub b_upp: Option<f64>,
    pub b_uppspd: Option<f64>,
}

/// Evaluate the condition-number bounds for a given exact error norm
/// `||E||` and finite-precision error norm `||Eps||`.
pub fn bound_values(lambda_min: f64, lambda_k_hat: f64, mu: f64, e_norm: f64, eps_norm: f64) -> Result<CondBounds> {
    if !(e_norm >= 0.0 && eps_norm >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "error norms must be nonnegative, got {e_norm}, {eps_norm}"
        )));
    }
    if !(mu + lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("lambda_min(A) + mu = {:e}", mu + lambda_min)));
    }
    let shifted = lambda_k_hat + mu;
    let b_low = ((shifted - eps_norm) / (mu + lambda_min)).max(1.0);
    let b_upp = (mu > eps_norm).then(|| 1.0 + (lambda_k_hat + e_norm + 2.0 * eps_norm) / (mu - eps_norm));
    let b_uppspd = (lambda_min > 0.0)
        .then(|| (shifted + e_norm + eps_norm) * (1.0 / shifted + (eps_norm + 1.0) / (lambda_min + mu)));
    Ok(CondBounds {
        b_low,
        b_upp,
        b_uppspd,
    })
}

/// Bounds with supplied norms plus measured condition numbers.
pub fn cond_bounds(a: &SpdMatrix, p: &LmpPreconditioner, e_norm: f64, eps_norm: f64) -> Result<CondReport> {
    report(a, p, e_norm, eps_norm, false)
}

/// Bounds with `||E||` replaced by the expected exact-error bound and
/// `||Eps||` by the finite-precision proxy for the preconditioner's
/// precision.
pub fn cond_bounds_estimated(a: &SpdMatrix, p: &LmpPreconditioner) -> Result<CondReport> {
    let e_norm = analysis::expected_exact_error_bound(a.spectrum()?, p.k())?;
    let eps_norm = analysis::finite_error_proxy(a, p.up())?;
    report(a, p, e_norm, eps_norm, true)
}

fn report(a: &SpdMatrix, p: &LmpPreconditioner, e_norm: f64, eps_norm: f64, estimates_used: bool) -> Result<CondReport> {
    let mu = p.mu();
    let bounds = bound_values(a.lambda_min()?, p.lambda_k_hat(), mu, e_norm, eps_norm)?;
    Ok(CondReport {
        kappa_unprec: shifted_condition_number(a, mu)?,
        kappa_prec: measured_condition_number(a, p, mu)?,
        b_low: bounds.b_low,
        b_upp: bounds.b_upp,
        b_uppspd: bounds.b_uppspd,
        mu,
        e_norm_used: e_norm,
        eps_norm_used: eps_norm,
        estimates_used,
    })
}
