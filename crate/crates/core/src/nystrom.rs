//! Stabilised single-pass Nyström approximation with the product `A Q`
//! executed in a simulated precision `u_p`. Every other step runs in f64.
//!
//! Steps:
//!
//! ```text
//! G = randn(n, k+l);  Q = qr(G)            working precision
//! Y = A Q                                  precision u_p, stored in f64
//! nu = 2 u_p ||Y||_F;  Y_nu = Y + nu Q
//! B = Q^T Y_nu;  C = chol((B + B^T)/2)     upper factor, C^T C = sym(B)
//! F = Y_nu C^-1;  [U, S] = svd(F)
//! U = U[:, :k];  theta = max(0, S^2 - nu)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::{Provenance, SpdMatrix};
use crate::precision::{builtin_format, matmul_lowprec, FloatFormat, MatmulMode};
use crate::rng::GaussianStream;

/// Seed increment used when a Gaussian draw is numerically rank deficient.
pub const SKETCH_RETRY_STRIDE: u64 = 0x9E37_79B9;
/// Number of re-draws attempted after the first.
pub const SKETCH_MAX_RETRIES: u64 = 3;

/// Orthonormal test matrix `Q` from the thin QR of a Gaussian draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    pub q: DMatrix<f64>,
    /// Seed requested by the caller.
    pub seed: u64,
    /// Seed actually used (differs after a rank-deficiency retry).
    pub effective_seed: u64,
}

/// Draw an `n x (k+l)` orthonormal sketch.
pub fn draw_sketch(n: usize, k: usize, l: usize, seed: u64) -> Result<SketchMatrix> {
    let m = k + l;
    if k == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "sketch needs 1 <= k and k + l <= n, got n = {n}, k = {k}, l = {l}"
        )));
    }
    for attempt in 0..=SKETCH_MAX_RETRIES {
        let effective_seed = seed.wrapping_add(attempt.wrapping_mul(SKETCH_RETRY_STRIDE));
        let g = GaussianStream::new(effective_seed).matrix(n, m);
        let qr = g.qr();
        let r = qr.r();
        let rmax = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let rmin = r.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if rmin > n as f64 * f64::EPSILON * rmax {
            return Ok(SketchMatrix {
                q: qr.q(),
                seed,
                effective_seed,
            });
        }
    }
    Err(Error::RankDeficient(format!(
        "Gaussian sketch {n}x{m} rank deficient after {} draws from seed {seed}",
        SKETCH_MAX_RETRIES + 1
    )))
}

/// Output of the approximation: `A_N = U diag(theta) U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromApprox {
    /// `n x k`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-negative, non-increasing.
    pub theta: Vec<f64>,
    pub nu: f64,
    pub k: usize,
    pub l: usize,
    pub up: FloatFormat,
    pub seed: u64,
    pub mode: MatmulMode,
}

/// Run the stabilised single-pass Nyström method on `a`.
pub fn nystrom_approx(
    a: &SpdMatrix,
    k: usize,
    l: usize,
    up: &FloatFormat,
    mode: MatmulMode,
    seed: u64,
) -> Result<NystromApprox> {
    let n = a.n();
    let sketch = draw_sketch(n, k, l, seed)?;
    let q = &sketch.q;

    let y = matmul_lowprec(a.entries(), q, up, mode)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            format: up.name,
            magnitude: f64::INFINITY,
            x_max: up.x_max,
        });
    }

    let nu = 2.0 * up.unit_roundoff * y.norm();
    let y_nu = &y + q * nu;
    let b = q.transpose() * &y_nu;
    let core = (&b + b.transpose()) * 0.5;
    let lower = linalg::cholesky_lower(&core)?;

    // F = Y_nu C^-1 with C = L^T  <=>  L F^T = Y_nu^T
    let ft = lower
        .solve_lower_triangular(&y_nu.transpose())
        .ok_or_else(|| Error::Numeric("triangular solve with singular Cholesky factor".into()))?;
    let f = ft.transpose();

    let (u_full, sigma) = linalg::thin_svd_left(&f)?;
    let u = u_full.columns(0, k).into_owned();
    let theta = sigma[..k].iter().map(|s| (s * s - nu).max(0.0)).collect();

    Ok(NystromApprox {
        u,
        theta,
        nu,
        k,
        l,
        up: *up,
        seed,
        mode,
    })
}

impl NystromApprox {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Dense `U diag(theta) U^T`, symmetrized.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (j, &t) in self.theta.iter().enumerate() {
            scaled.column_mut(j).scale_mut(t);
        }
        linalg::symmetrize(&(scaled * self.u.transpose()))
    }

    /// Write the approximation as a plain-text columnar file: a header with
    /// dimensions and metadata, `U` column-major, then `theta`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "# nystrom-approx v1").map_err(io)?;
        writeln!(w, "n {}", self.n()).map_err(io)?;
        writeln!(w, "k {}", self.k).map_err(io)?;
        writeln!(w, "l {}", self.l).map_err(io)?;
        writeln!(w, "up {}", self.up.name).map_err(io)?;
        writeln!(w, "mode {}", self.mode.name()).map_err(io)?;
        writeln!(w, "seed {}", self.seed).map_err(io)?;
        writeln!(w, "nu {:.16e}", self.nu).map_err(io)?;
        writeln!(w, "U").map_err(io)?;
        for v in self.u.iter() {
            writeln!(w, "{v:.16e}").map_err(io)?;
        }
        writeln!(w, "theta").map_err(io)?;
        for v in &self.theta {
            writeln!(w, "{v:.16e}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read a file written by [`NystromApprox::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            lines.push(line.map_err(|e| Error::io(path, e))?);
        }
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| perr(lines.len(), format!("unexpected end of file, expected {what}")))
        };
        let (ln, magic) = next("header")?;
        if magic != "# nystrom-approx v1" {
            return Err(perr(ln, format!("bad header '{magic}'")));
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (ln, line) = next(key)?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
                _ => Err(perr(ln, format!("expected '{key} <value>', got '{line}'"))),
            }
        };
        let num = |(ln, v): (usize, String)| -> Result<usize> {
            v.parse().map_err(|_| perr(ln, format!("bad integer '{v}'")))
        };
        let n = num(field("n")?)?;
        let k = num(field("k")?)?;
        let l = num(field("l")?)?;
        let (ln, up) = field("up")?;
        let up = builtin_format(&up).map_err(|e| perr(ln, e.to_string()))?;
        let (ln, mode) = field("mode")?;
        let mode: MatmulMode = mode.parse().map_err(|e: Error| perr(ln, e.to_string()))?;
        let (ln, seed) = field("seed")?;
        let seed: u64 = seed.parse().map_err(|_| perr(ln, format!("bad seed '{seed}'")))?;
        let (ln, nu) = field("nu")?;
        let nu: f64 = nu.parse().map_err(|_| perr(ln, format!("bad nu '{nu}'")))?;

        let mut floats = |label: &str, count: usize| -> Result<Vec<f64>> {
            let (ln, tag) = next(label)?;
            if tag != label {
                return Err(perr(ln, format!("expected section '{label}', got '{tag}'")));
            }
            (0..count)
                .map(|_| {
                    let (ln, v) = next("value")?;
                    v.parse::<f64>().map_err(|_| perr(ln, format!("bad value '{v}'")))
                })
                .collect()
        };
        let u = floats("U", n * k)?;
        let theta = floats("theta", k)?;
        Ok(Self {
            u: DMatrix::from_vec(n, k, u),
            theta,
            nu,
            k,
            l,
            up,
            seed,
            mode,
        })
    }
}

/// Dense PSD reconstruction `U diag(theta) U^T`.
pub fn reconstruct(approx: &NystromApprox) -> Result<SpdMatrix> {
    SpdMatrix::symmetric(
        approx.dense(),
        Provenance::Approximation {
            k: approx.k,
            seed: approx.seed,
        },
    )
}

/// Spectral norms of the total error and of the finite-precision error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxErrors {
    /// `||A - A_hat||_2`.
    pub total: f64,
    /// `||A_N^ref - A_hat||_2`, present when a reference was supplied.
    pub finite_precision: Option<f64>,
}

/// Measure `||A - A_hat||_2` and, against an f64 reference run with the same
/// sketch, `||A_N - A_hat||_2`.
pub fn approx_errors(
    a: &SpdMatrix,
    approx: &NystromApprox,
    reference: Option<&NystromApprox>,
) -> Result<ApproxErrors> {
    if approx.n() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "approximation has n = {}, matrix has n = {}",
            approx.n(),
            a.n()
        )));
    }
    let dense = approx.dense();
    let total = linalg::sym_norm2(&(a.entries() - &dense))?;
    let finite_precision = match reference {
        None => None,
        Some(r) => {
            if (r.k, r.l, r.seed, r.mode) != (approx.k, approx.l, approx.seed, approx.mode) || r.n() != approx.n() {
                return Err(Error::InvalidInput(format!(
                    "reference (k={}, l={}, seed={}) does not match approximation (k={}, l={}, seed={})",
                    r.k, r.l, r.seed, approx.k, approx.l, approx.seed
                )));
            }
            if !r.up.is_working_precision() {
                return Err(Error::InvalidInput(format!(
                    "reference must be computed in fp64, got {}",
                    r.up
                )));
            }
            Some(linalg::sym_norm2(&(r.dense() - &dense))?)
        }
    };
    Ok(ApproxErrors {
        total,
        finite_precision,
    })
}
