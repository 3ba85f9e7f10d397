//! Test matrices: the synthetic spectra, Gaussian kernel matrices, and
//! symmetric Matrix Market files, all densified to working precision.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::GaussianStream;

/// Relative tolerance for the PSD check: `lambda_min >= -PSD_TOL * lambda_max`.
pub const PSD_TOL: f64 = 1e-10;

/// Relative asymmetry accepted (and removed) on construction.
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Tail `10^-q, 10^-2q, ...`.
    ExpDecay { q: f64 },
    /// Tail `2^-p, 3^-p, ...`.
    PolyDecay { p: f64 },
    /// `diag(beta, .., beta, 0, .., 0) + xi/n * G G^T`.
    PsdNoise { xi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    /// Effective rank: number of leading eigenvalues equal to `beta`.
    pub r: usize,
    pub beta: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, r: usize, beta: f64) -> Self {
        Self {
            kind,
            n,
            r,
            beta,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.r >= self.n {
            return Err(Error::InvalidInput(format!(
                "synthetic matrix needs r < n, got n = {}, r = {}",
                self.n, self.r
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {}", self.beta)));
        }
        let ok = match self.kind {
            SyntheticKind::ExpDecay { q } => q > 0.0 && q.is_finite(),
            SyntheticKind::PolyDecay { p } => p > 0.0 && p.is_finite(),
            SyntheticKind::PsdNoise { xi } => xi >= 0.0 && xi.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidInput(format!("invalid decay parameter in {:?}", self.kind)));
        }
        Ok(())
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SyntheticKind::ExpDecay { q } => write!(f, "exp(q={q})")?,
            SyntheticKind::PolyDecay { p } => write!(f, "poly(p={p})")?,
            SyntheticKind::PsdNoise { xi } => write!(f, "noise(xi={xi})")?,
        }
        write!(f, "[n={},r={},beta={:e}", self.n, self.r, self.beta)?;
        if matches!(self.kind, SyntheticKind::PsdNoise { .. }) {
            write!(f, ",seed={}", self.seed)?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SyntheticSpec),
    Kernel { source: String, sigma: f64 },
    File(PathBuf),
    /// Dense reconstruction of a low-rank approximation.
    Approximation { k: usize, seed: u64 },
    /// Anything else built in code (tests, scaled copies).
    Custom(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Synthetic(s) => write!(f, "{s}"),
            Provenance::Kernel { source, sigma } => write!(f, "kernel({source},sigma={sigma})"),
            Provenance::File(p) => write!(
                f,
                "{}",
                p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_else(|| p.to_string_lossy())
            ),
            Provenance::Approximation { k, seed } => write!(f, "approx(k={k},seed={seed})"),
            Provenance::Custom(s) => f.write_str(s),
        }
    }
}

/// Dense symmetric positive semidefinite matrix in working precision.
#[derive(Debug)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
    spectrum: OnceLock<Vec<f64>>,
}

impl Clone for SpdMatrix {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            entries: self.entries.clone(),
            provenance: self.provenance.clone(),
            spectrum,
        }
    }
}

impl SpdMatrix {
    /// Symmetrize `entries` and verify positive semidefiniteness.
    pub fn new(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let m = Self::symmetric(entries, provenance)?;
        let spec = m.spectrum()?;
        let (lmax, lmin) = (spec[0], spec[spec.len() - 1]);
        if lmin < -PSD_TOL * lmax.max(0.0) || lmax < 0.0 {
            return Err(Error::NotPsd {
                lambda_min: lmin,
                lambda_max: lmax,
            });
        }
        Ok(m)
    }

    /// Symmetrize without the eigenvalue-based PSD check. For matrices that
    /// are PSD by construction.
    pub(crate) fn symmetric(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = entries.abs().max();
        let asym = (&entries - entries.transpose()).abs().max();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric: max |A - A^T| = {asym:e}"
            )));
        }
        Ok(Self {
            entries: linalg::symmetrize(&entries),
            provenance,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn name(&self) -> String {
        self.provenance.to_string()
    }

    /// Eigenvalues sorted descending; computed once and cached.
    pub fn spectrum(&self) -> Result<&[f64]> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let vals = linalg::sym_eigenvalues(&self.entries)?;
        // a concurrent writer computed the same values; either copy is fine
        let _ = self.spectrum.set(vals);
        Ok(self.spectrum.get().expect("spectrum just set"))
    }

    /// `lambda_max`, which equals the spectral norm of a PSD matrix.
    pub fn norm2(&self) -> Result<f64> {
        Ok(self.spectrum()?[0])
    }

    pub fn lambda_min(&self) -> Result<f64> {
        let s = self.spectrum()?;
        Ok(s[s.len() - 1])
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.abs().max()
    }

    /// `beta * A`.
    pub fn scaled(&self, beta: f64) -> Result<SpdMatrix> {
        if !(beta > 0.0) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {beta}")));
        }
        Ok(Self {
            entries: &self.entries * beta,
            provenance: Provenance::Custom(format!("{beta:e}*{}", self.provenance)),
            spectrum: OnceLock::new(),
        })
    }
}

/// Build one of the synthetic test matrices.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SpdMatrix> {
    spec.validate()?;
    let (n, r) = (spec.n, spec.r);
    let mut diag = vec![0.0; n];
    diag[..r].fill(spec.beta);
    match spec.kind {
        SyntheticKind::ExpDecay { q } => {
            for i in 1..=(n - r) {
                diag[r + i - 1] = 10f64.powf(-(i as f64) * q);
            }
        }
        SyntheticKind::PolyDecay { p } => {
            for i in 1..=(n - r) {
                diag[r + i - 1] = ((i + 1) as f64).powf(-p);
            }
        }
        SyntheticKind::PsdNoise { .. } => {}
    }
    let mut a = DMatrix::from_diagonal(&DVector::from_vec(diag));
    if let SyntheticKind::PsdNoise { xi } = spec.kind {
        if xi > 0.0 {
            let g = GaussianStream::new(spec.seed).matrix(n, n);
            a += (&g * g.transpose()) * (xi / n as f64);
        }
    }
    SpdMatrix::new(a, Provenance::Synthetic(*spec))
}

/// Gaussian kernel matrix `exp(-|y_i - y_j|^2 / (2 sigma^2))` of the rows of
/// `features`.
pub fn gen_gaussian_kernel(features: &DMatrix<f64>, sigma: f64, source: &str) -> Result<SpdMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("kernel needs at least one feature row".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("feature matrix has non-finite values".into()));
    }
    let denom = 2.0 * sigma * sigma;
    let mut a = DMatrix::from_element(n, n, 1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            let d2: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let v = (-d2 / denom).exp();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    SpdMatrix::new(
        a,
        Provenance::Kernel {
            source: source.to_string(),
            sigma,
        },
    )
}

/// Read a CSV file with one feature row per line. A first line that does
/// not parse as numbers is treated as a header.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if let Some(first) = rows.first() {
                    if first.len() != v.len() {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line,
                            message: format!("expected {} columns, found {}", first.len(), v.len()),
                        });
                    }
                }
                rows.push(v);
            }
            Err(e) if idx == 0 => {
                let _ = e; // header row
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no feature rows".into(),
        });
    }
    let d = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Load a real symmetric Matrix Market coordinate file into dense form.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SpdMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, format!("bad Matrix Market header '{header}'")));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("format '{}' is not supported, expected coordinate", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(1, format!("field '{}' is not supported, expected real", tokens[3])));
    }
    if tokens[4] != "symmetric" {
        return Err(parse_err(1, format!("symmetry '{}' is not supported, expected symmetric", tokens[4])));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut a = DMatrix::zeros(0, 0);
    let mut seen = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, format!("expected 'rows cols nnz', got '{t}'")));
                }
                let parse = |s: &str, what: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(lineno, format!("cannot parse {what} '{s}'")))
                };
                let (m, n, nnz) = (parse(fields[0], "rows")?, parse(fields[1], "cols")?, parse(fields[2], "nnz")?);
                if m != n || n == 0 {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: symmetric matrix must be square and non-empty, got {m}x{n}",
                        path.display()
                    )));
                }
                a = DMatrix::zeros(n, n);
                dims = Some((m, n, nnz));
            }
            Some((_, n, nnz)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, format!("expected 'i j value', got '{t}'")));
                }
                if seen == nnz {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: more than the declared {nnz} entries (line {lineno})",
                        path.display()
                    )));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("cannot parse row index '{}'", fields[0])))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("cannot parse column index '{}'", fields[1])))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("cannot parse value '{}'", fields[2])))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) outside {n}x{n}")));
                }
                let (i, j) = (i - 1, j - 1);
                a[(i, j)] += v;
                if i != j {
                    a[(j, i)] += v;
                }
                seen += 1;
            }
        }
    }
    let Some((_, _, nnz)) = dims else {
        return Err(parse_err(1, "missing size line".into()));
    };
    if seen != nnz {
        return Err(Error::DimensionMismatch(format!(
            "{}: declared {nnz} entries, found {seen}",
            path.display()
        )));
    }
    SpdMatrix::new(a, Provenance::File(path.to_path_buf()))
}

/// Write the lower triangle of `a` as a real symmetric Matrix Market file
/// with 17 significant digits.
pub fn save_matrix_market(a: &SpdMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let m = a.entries();
    let n = a.n();
    let mut entries = Vec::new();
    for j in 0..n {
        for i in j..n {
            if m[(i, j)] != 0.0 {
                entries.push((i + 1, j + 1, m[(i, j)]));
            }
        }
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric").map_err(io)?;
    writeln!(w, "{n} {n} {}", entries.len()).map_err(io)?;
    for (i, j, v) in entries {
        writeln!(w, "{i} {j} {v:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Write a spectrum as CSV rows `k,lambda_k` (1-based `k`).
pub fn write_spectrum_csv(eigenvalues: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "k,lambda_k").map_err(io)?;
    for (k, v) in eigenvalues.iter().enumerate() {
        writeln!(w, "{},{v:.16e}", k + 1).map_err(io)?;
    }
    w.flush().map_err(io)
}
