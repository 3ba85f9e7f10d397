//! Experiment configuration: a flat `key = value` text file. Repeating a key
//! appends to its list, and list values may also be comma separated.
//!
//! ```text
//! # PolyDecay sweep
//! problem = poly:p=1,n=100,r=10,beta=1|1e2|1e4
//! problem = mtx:data/bcsstm07.mtx
//! problem = kernel:features.csv,sigma=1.5
//! k = 1..10
//! format = fp16, fp32, fp64
//! mu = 0.5
//! seed = 1..10
//! mode = perop
//! output = results
//! ```
//!
//! Integer lists accept inclusive ranges `a..b`. Relative paths are resolved
//! against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrices::{self, SpdMatrix, SyntheticKind, SyntheticSpec};
use crate::precision::{builtin_format, FloatFormat, MatmulMode};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "NYSTROM_MP_OUTPUT";

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Synthetic(SyntheticSpec),
    MatrixMarket(PathBuf),
    Kernel { features: PathBuf, sigma: f64 },
}

impl ProblemSpec {
    pub fn load(&self) -> Result<SpdMatrix> {
        match self {
            ProblemSpec::Synthetic(spec) => matrices::gen_synthetic(spec),
            ProblemSpec::MatrixMarket(path) => matrices::load_matrix_market(path),
            ProblemSpec::Kernel { features, sigma } => {
                let y = matrices::read_features_csv(features)?;
                let source = features
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| features.display().to_string());
                matrices::gen_gaussian_kernel(&y, *sigma, &source)
            }
        }
    }

    /// Parse one `problem =` value; a `beta` list expands to several specs.
    pub fn parse(text: &str, base: &Path) -> Result<Vec<ProblemSpec>> {
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("problem '{text}' lacks a 'kind:' prefix")))?;
        let resolve = |p: &str| {
            let p = Path::new(p.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        match kind.trim() {
            "mtx" => Ok(vec![ProblemSpec::MatrixMarket(resolve(rest))]),
            "kernel" => {
                let mut parts = rest.split(',');
                let path = parts.next().unwrap_or("").trim();
                if path.is_empty() {
                    return Err(Error::Config(format!("kernel problem '{text}' needs a features file")));
                }
                let mut sigma = None;
                for part in parts {
                    match part.split_once('=') {
                        Some((key, v)) if key.trim() == "sigma" => sigma = Some(parse_f64("sigma", v)?),
                        _ => return Err(Error::Config(format!("unknown kernel option '{part}'"))),
                    }
                }
                let sigma = sigma.ok_or_else(|| Error::Config(format!("kernel problem '{text}' needs sigma=")))?;
                Ok(vec![ProblemSpec::Kernel {
                    features: resolve(path),
                    sigma,
                }])
            }
            synthetic @ ("poly" | "exp" | "noise") => {
                let (mut decay, mut n, mut r, mut seed) = (None, None, None, 0u64);
                let mut betas = vec![1.0];
                let decay_key = match synthetic {
                    "poly" => "p",
                    "exp" => "q",
                    _ => "xi",
                };
                for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
                    let (key, v) = part
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("expected key=value in '{part}'")))?;
                    match key.trim() {
                        k if k == decay_key => decay = Some(parse_f64(k, v)?),
                        "n" => n = Some(parse_usize("n", v)?),
                        "r" => r = Some(parse_usize("r", v)?),
                        "seed" => seed = parse_u64("seed", v)?,
                        "beta" => betas = v.split('|').map(|b| parse_f64("beta", b)).collect::<Result<_>>()?,
                        other => return Err(Error::Config(format!("unknown option '{other}' for {synthetic}"))),
                    }
                }
                let missing = |what: &str| Error::Config(format!("problem '{text}' is missing {what}="));
                let decay = decay.ok_or_else(|| missing(decay_key))?;
                let kind = match synthetic {
                    "poly" => SyntheticKind::PolyDecay { p: decay },
                    "exp" => SyntheticKind::ExpDecay { q: decay },
                    _ => SyntheticKind::PsdNoise { xi: decay },
                };
                let n = n.ok_or_else(|| missing("n"))?;
                let r = r.ok_or_else(|| missing("r"))?;
                betas
                    .into_iter()
                    .map(|beta| {
                        let spec = SyntheticSpec::new(kind, n, r, beta).with_seed(seed);
                        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                        Ok(ProblemSpec::Synthetic(spec))
                    })
                    .collect()
            }
            other => Err(Error::Config(format!("unknown problem kind '{other}'"))),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Synthetic(s) => write!(f, "{s}"),
            ProblemSpec::MatrixMarket(p) => write!(f, "mtx:{}", p.display()),
            ProblemSpec::Kernel { features, sigma } => write!(f, "kernel:{},sigma={sigma}", features.display()),
        }
    }
}

/// Rank grid: absolute values or fractions of each problem's dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum RankGrid {
    Absolute(Vec<usize>),
    /// `k = max(1, round(f n))`, clamped below `n`.
    Fraction(Vec<f64>),
}

impl RankGrid {
    pub fn for_dimension(&self, n: usize) -> Vec<usize> {
        match self {
            RankGrid::Absolute(ks) => ks.clone(),
            RankGrid::Fraction(fs) => {
                let mut ks: Vec<usize> = fs
                    .iter()
                    .map(|f| ((f * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1)))
                    .collect();
                ks.dedup();
                ks
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problems: Vec<ProblemSpec>,
    pub ks: RankGrid,
    pub formats: Vec<FloatFormat>,
    pub mus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: MatmulMode,
    pub output: PathBuf,
    /// Oversampling.
    pub l: usize,
    pub alpha: f64,
    pub t: f64,
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// When false the "preconditioned" columns repeat the plain solve.
    pub precondition: bool,
    pub rhs_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problems: Vec::new(),
            ks: RankGrid::Absolute(Vec::new()),
            formats: vec![FloatFormat::fp16(), FloatFormat::fp32(), FloatFormat::fp64()],
            mus: vec![0.5],
            seeds: (1..=10).collect(),
            mode: MatmulMode::PerOp,
            output: PathBuf::from("results"),
            l: 0,
            alpha: crate::analysis::DEFAULT_ALPHA,
            t: crate::analysis::DEFAULT_T,
            tol: crate::pcg::DEFAULT_TOL,
            max_iter: None,
            precondition: true,
            rhs_seed: crate::pcg::DEFAULT_RHS_SEED,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{}' is not a number", v.trim())))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{}' is not a nonnegative integer", v.trim())))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    parse_u64(key, v).map(|x| x as usize)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: '{other}' is not a boolean"))),
    }
}

/// Comma list of integers and inclusive `a..b` ranges.
fn parse_int_list(key: &str, v: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (parse_u64(key, a)?, parse_u64(key, b)?);
                if a > b {
                    return Err(Error::Config(format!("{key}: empty range {item}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_u64(key, item)?),
        }
    }
    Ok(out)
}

fn parse_float_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        // list keys given in the file replace the defaults on first use
        let (mut formats, mut mus, mut seeds) = (Vec::new(), Vec::new(), Vec::new());
        let (mut ks, mut fracs) = (Vec::new(), Vec::new());
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", idx + 1)),
                other => other,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => cfg.problems.extend(ProblemSpec::parse(value, base).map_err(at)?),
                "k" => ks.extend(parse_int_list(key, value).map_err(at)?.into_iter().map(|k| k as usize)),
                "k_frac" => fracs.extend(parse_float_list(key, value).map_err(at)?),
                "format" => {
                    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        formats.push(builtin_format(name).map_err(at)?);
                    }
                }
                "mu" => mus.extend(parse_float_list(key, value).map_err(at)?),
                "seed" => seeds.extend(parse_int_list(key, value).map_err(at)?),
                "mode" => cfg.mode = value.parse().map_err(at)?,
                "output" => {
                    let p = Path::new(value);
                    cfg.output = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
                }
                "l" => cfg.l = parse_usize(key, value).map_err(at)?,
                "alpha" => cfg.alpha = parse_f64(key, value).map_err(at)?,
                "t" => cfg.t = parse_f64(key, value).map_err(at)?,
                "tol" => cfg.tol = parse_f64(key, value).map_err(at)?,
                "max_iter" => cfg.max_iter = Some(parse_usize(key, value).map_err(at)?),
                "precondition" => cfg.precondition = parse_bool(key, value).map_err(at)?,
                "rhs_seed" => cfg.rhs_seed = parse_u64(key, value).map_err(at)?,
                other => return Err(Error::Config(format!("line {}: unknown key '{other}'", idx + 1))),
            }
        }
        if !formats.is_empty() {
            cfg.formats = formats;
        }
        if !mus.is_empty() {
            cfg.mus = mus;
        }
        if !seeds.is_empty() {
            cfg.seeds = seeds;
        }
        cfg.ks = match (ks.is_empty(), fracs.is_empty()) {
            (false, true) => RankGrid::Absolute(ks),
            (true, false) => RankGrid::Fraction(fracs),
            (true, true) => return Err(Error::Config("no ranks given (k or k_frac)".into())),
            (false, false) => return Err(Error::Config("give either k or k_frac, not both".into())),
        };
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            if !dir.is_empty() {
                cfg.output = PathBuf::from(dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need the matrices loaded.
    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() {
            return Err(Error::Config("no problems given".into()));
        }
        match &self.ks {
            RankGrid::Absolute(ks) if ks.is_empty() || ks.contains(&0) => {
                return Err(Error::Config("k values must be positive".into()))
            }
            RankGrid::Fraction(fs) if fs.is_empty() || fs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) => {
                return Err(Error::Config("k_frac values must lie in (0, 1)".into()))
            }
            _ => {}
        }
        if self.formats.is_empty() || self.seeds.is_empty() || self.mus.is_empty() {
            return Err(Error::Config("format, seed and mu lists must be non-empty".into()));
        }
        if self.mus.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Config("mu values must be nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.t > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config("need 0 < alpha < 1, t > 0, tol > 0".into()));
        }
        Ok(())
    }

    /// Ranks for a problem of dimension `n`; each must satisfy `k + l < n`.
    pub fn ranks_for(&self, n: usize, name: &str) -> Result<Vec<usize>> {
        let ks = self.ks.for_dimension(n);
        if let Some(&bad) = ks.iter().find(|&&k| k + self.l >= n) {
            return Err(Error::Config(format!(
                "k = {bad} (with l = {}) is not below the dimension {n} of {name}",
                self.l
            )));
        }
        Ok(ks)
    }
}
