//! Test problems shared by the acceptance criteria.

use std::path::{Path, PathBuf};

use mpnystrom::harness::run::LoadedProblem;
use mpnystrom::matrices::{self, gen_gaussian_kernel, gen_synthetic, Provenance};
use mpnystrom::rng::UniformStream;
use mpnystrom::{SpdMatrix, SyntheticKind, SyntheticSpec};
use nalgebra::{DMatrix, DVector};

pub const SUITESPARSE_ENV: &str = "NYSTROM_MP_SUITESPARSE_DIR";

/// Name, n, ||A||_2 and whether half precision is in range.
pub const SUITESPARSE: [(&str, usize, f64, bool); 7] = [
    ("Journals", 124, 6.85e4, true),
    ("bcsstm07", 420, 2.51e3, true),
    ("plat362", 362, 7.74e-1, true),
    ("494_bus", 494, 3.00e4, true),
    ("nos7", 729, 9.86e6, false),
    ("bcsstk22", 138, 5.85e6, false),
    ("LFAT5", 14, 2.15e7, false),
];

/// Fractions of n used as the rank grid on the collection matrices.
pub const SUITESPARSE_K_FRACTIONS: [f64; 7] = [0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8];

/// Rank grid for the synthetic problems (n = 100 or 120).
pub const SYNTHETIC_KS: [usize; 10] = [2, 4, 6, 8, 10, 12, 15, 20, 30, 50];

pub fn loaded(matrix: SpdMatrix, ks: &[usize]) -> LoadedProblem {
    matrix.spectrum().expect("spectrum");
    LoadedProblem {
        name: matrix.name(),
        ks: ks.to_vec(),
        matrix,
    }
}

fn synthetic(kind: SyntheticKind, beta: f64) -> SpdMatrix {
    gen_synthetic(&SyntheticSpec::new(kind, 100, 10, beta).with_seed(7)).expect("synthetic")
}

/// Diagonal synthetic problems.
pub fn diagonal_suite() -> Vec<SpdMatrix> {
    vec![
        synthetic(SyntheticKind::PolyDecay { p: 1.0 }, 1.0),
        synthetic(SyntheticKind::PolyDecay { p: 1.0 }, 1e2),
        synthetic(SyntheticKind::PolyDecay { p: 1.0 }, 1e4),
        synthetic(SyntheticKind::PolyDecay { p: 2.0 }, 1.0),
        synthetic(SyntheticKind::ExpDecay { q: 0.25 }, 1.0),
        synthetic(SyntheticKind::ExpDecay { q: 0.25 }, 1e4),
    ]
}

/// Gaussian kernel of 120 uniform points in the unit cube.
pub fn kernel_problem() -> SpdMatrix {
    let features = UniformStream::new(11).matrix(120, 3);
    gen_gaussian_kernel(&features, 0.5, "uniform-cube").expect("kernel")
}

/// `W diag(d) W^T` with `W` the orthogonal factor of a uniform matrix.
fn rotated(diag: Vec<f64>, stream: &mut UniformStream, name: &str) -> SpdMatrix {
    let n = diag.len();
    let w = stream.matrix(n, n).qr().q();
    let a = &w * DMatrix::from_diagonal(&DVector::from_vec(diag)) * w.transpose();
    SpdMatrix::new(a, Provenance::Custom(name.into())).expect("rotated")
}

/// The two 100 x 100 matrices of the pseudoinverse study: a uniform
/// spectrum, and 15 large eigenvalues, a harmonic tail and a null space.
pub fn a1_a2() -> (SpdMatrix, SpdMatrix) {
    let mut s = UniformStream::new(2024);
    let w_stream_seed = 2025;
    let d1: Vec<f64> = (0..100).map(|_| s.next_open01()).collect();
    let mut d2: Vec<f64> = (0..15).map(|_| 1e2 * s.next_open01()).collect();
    d2.extend((2..=76).map(|i| 1.0 / i as f64));
    d2.extend(std::iter::repeat(0.0).take(10));
    let mut w = UniformStream::new(w_stream_seed);
    let a1 = rotated(d1, &mut w, "A1");
    let mut w = UniformStream::new(w_stream_seed);
    let a2 = rotated(d2, &mut w, "A2");
    (a1, a2)
}

/// Every locally generated problem, with its rank grid.
pub fn generated_suite() -> Vec<LoadedProblem> {
    let mut out: Vec<LoadedProblem> = diagonal_suite().into_iter().map(|m| loaded(m, &SYNTHETIC_KS)).collect();
    out.push(loaded(synthetic(SyntheticKind::PsdNoise { xi: 1e-2 }, 1.0), &SYNTHETIC_KS));
    out.push(loaded(synthetic(SyntheticKind::PsdNoise { xi: 1.0 }, 1e2), &SYNTHETIC_KS));
    out.push(loaded(kernel_problem(), &SYNTHETIC_KS));
    let (a1, a2) = a1_a2();
    out.push(loaded(a1, &SYNTHETIC_KS));
    out.push(loaded(a2, &SYNTHETIC_KS));
    out
}

pub fn suitesparse_dir() -> PathBuf {
    match std::env::var(SUITESPARSE_ENV) {
        Ok(d) if !d.is_empty() => PathBuf::from(d),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/suitesparse"),
    }
}

/// `<dir>/<name>.mtx` or `<dir>/<name>/<name>.mtx` as unpacked from the
/// collection's tarballs.
pub fn suitesparse_path(name: &str) -> Option<PathBuf> {
    let dir = suitesparse_dir();
    [dir.join(format!("{name}.mtx")), dir.join(name).join(format!("{name}.mtx"))]
        .into_iter()
        .find(|p| p.is_file())
}

pub fn suitesparse_ks(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = SUITESPARSE_K_FRACTIONS
        .iter()
        .map(|f| ((f * n as f64).round() as usize).clamp(1, n - 1))
        .collect();
    ks.dedup();
    ks
}

/// Load a collection matrix, or explain why it is unavailable.
pub fn suitesparse(name: &str) -> Result<LoadedProblem, String> {
    let path = suitesparse_path(name)
        .ok_or_else(|| format!("{name}.mtx not found under {}", suitesparse_dir().display()))?;
    let m = matrices::load_matrix_market(&path).map_err(|e| format!("{name}: {e}"))?;
    let ks = suitesparse_ks(m.n());
    let mut p = loaded(m, &ks);
    p.name = name.to_string();
    Ok(p)
}

/// All collection matrices that are present locally, plus the names of the
/// missing ones.
pub fn available_suitesparse() -> (Vec<LoadedProblem>, Vec<String>) {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for (name, ..) in SUITESPARSE {
        match suitesparse(name) {
            Ok(p) => found.push(p),
            Err(_) => missing.push(name.to_string()),
        }
    }
    (found, missing)
}
