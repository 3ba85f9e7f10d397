//! Software simulation of low-precision floating-point formats.
//!
//! Values are held in `f64` but constrained to the grid of the target
//! format. Rounding is round-to-nearest, ties-to-even, with gradual
//! underflow through the subnormal range. Overflow is governed by the
//! format's [`OverflowPolicy`].
//!
//! [`matmul_lowprec`] simulates a matrix product executed in a format,
//! either rounding after every scalar multiply and add ([`MatmulMode::PerOp`])
//! or only at the inputs and output ([`MatmulMode::RoundIo`]).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// What happens when a rounded magnitude exceeds `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowPolicy {
    Error,
    SaturateToInf,
}

/// A simulated floating-point format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatFormat {
    pub name: &'static str,
    /// Stored significand bits, excluding the implicit bit.
    pub significand_bits: u32,
    pub exponent_bits: u32,
    pub unit_roundoff: f64,
    /// Smallest positive normal number.
    pub x_min: f64,
    /// Smallest positive subnormal number.
    pub x_s_min: f64,
    /// Largest finite number.
    pub x_max: f64,
    pub overflow: OverflowPolicy,
    emin: i32,
}

/// Exact power of two, including the f64 subnormal range.
pub(crate) fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        assert!(e <= 1023, "2^{e} overflows f64");
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        assert!(e >= -1074, "2^{e} underflows f64");
        f64::from_bits(1u64 << (e + 1074))
    }
}

impl FloatFormat {
    /// An IEEE-style binary format with `significand_bits` stored bits and
    /// `exponent_bits` exponent bits. Unit roundoff is `2^-(significand_bits+1)`.
    pub fn ieee(name: &'static str, significand_bits: u32, exponent_bits: u32) -> Self {
        assert!(
            (1..=52).contains(&significand_bits) && (2..=11).contains(&exponent_bits),
            "format {name} is not representable inside f64"
        );
        let emax = (1i32 << (exponent_bits - 1)) - 1;
        let emin = 1 - emax;
        let sb = significand_bits as i32;
        Self {
            name,
            significand_bits,
            exponent_bits,
            unit_roundoff: pow2(-(sb + 1)),
            x_min: pow2(emin),
            x_s_min: pow2(emin - sb),
            x_max: pow2(emax) * (2.0 - pow2(-sb)),
            overflow: OverflowPolicy::Error,
            emin,
        }
    }

    pub fn fp16() -> Self {
        Self::ieee("fp16", 10, 5)
    }

    pub fn fp32() -> Self {
        Self::ieee("fp32", 23, 8)
    }

    pub fn fp64() -> Self {
        Self::ieee("fp64", 52, 11)
    }

    /// NVIDIA fp8-e5m2. The reported unit roundoff is 2^-2.
    pub fn fp8e5m2() -> Self {
        Self {
            unit_roundoff: 0.25,
            x_max: 57344.0,
            ..Self::ieee("fp8e5m2", 2, 5)
        }
    }

    /// NVIDIA fp8-e4m3 (no infinities, largest finite value 448). The
    /// reported unit roundoff is 2^-3.
    pub fn fp8e4m3() -> Self {
        Self {
            unit_roundoff: 0.125,
            x_max: 448.0,
            ..Self::ieee("fp8e4m3", 3, 4)
        }
    }

    pub fn with_overflow(mut self, policy: OverflowPolicy) -> Self {
        self.overflow = policy;
        self
    }

    /// Smallest exponent of a normal number.
    pub fn emin(&self) -> i32 {
        self.emin
    }

    /// Largest exponent of a finite number.
    pub fn emax(&self) -> i32 {
        1 - self.emin
    }

    /// True when rounding into this format is the identity on f64.
    pub fn is_working_precision(&self) -> bool {
        self.significand_bits >= 52 && self.exponent_bits >= 11
    }

    pub const BUILTIN_NAMES: [&'static str; 5] = ["fp16", "fp32", "fp64", "fp8e5m2", "fp8e4m3"];
}

/// Look up a built-in format by name.
pub fn builtin_format(name: &str) -> Result<FloatFormat> {
    match name.trim().to_ascii_lowercase().as_str() {
        "fp16" | "half" => Ok(FloatFormat::fp16()),
        "fp32" | "single" => Ok(FloatFormat::fp32()),
        "fp64" | "double" => Ok(FloatFormat::fp64()),
        "fp8e5m2" | "fp8-e5m2" => Ok(FloatFormat::fp8e5m2()),
        "fp8e4m3" | "fp8-e4m3" => Ok(FloatFormat::fp8e4m3()),
        other => Err(Error::Config(format!(
            "unknown format '{other}', expected one of {}",
            FloatFormat::BUILTIN_NAMES.join("|")
        ))),
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        builtin_format(s)
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// Round `x` to the nearest value of `fmt`, ties to even.
pub fn round_to(x: f64, fmt: &FloatFormat) -> Result<f64> {
    debug_assert!(x.is_finite(), "round_to called with non-finite {x}");
    if fmt.is_working_precision() || x == 0.0 {
        return Ok(x);
    }
    let ax = x.abs();
    let biased = ((ax.to_bits() >> 52) & 0x7ff) as i32;
    // f64 subnormals are far below every simulated format's range.
    let exponent = (biased - 1023).max(fmt.emin);
    let quantum = pow2(exponent - fmt.significand_bits as i32);
    let rounded = (ax / quantum).round_ties_even() * quantum;
    if rounded > fmt.x_max {
        return match fmt.overflow {
            OverflowPolicy::Error => Err(Error::Overflow {
                format: fmt.name,
                magnitude: ax,
                x_max: fmt.x_max,
            }),
            OverflowPolicy::SaturateToInf => Ok(f64::INFINITY.copysign(x)),
        };
    }
    Ok(rounded.copysign(x))
}

/// Round every entry of `m` into `fmt`.
pub fn round_matrix(m: &DMatrix<f64>, fmt: &FloatFormat) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for v in out.iter_mut() {
        *v = round_to(*v, fmt)?;
    }
    Ok(out)
}

/// How a simulated low-precision matrix product is rounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatmulMode {
    /// Round after every scalar multiply and add.
    #[default]
    PerOp,
    /// Round inputs and outputs only; accumulate in working precision.
    RoundIo,
}

impl MatmulMode {
    pub fn name(&self) -> &'static str {
        match self {
            MatmulMode::PerOp => "perop",
            MatmulMode::RoundIo => "roundio",
        }
    }
}

impl FromStr for MatmulMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perop" | "per-op" | "per_op" => Ok(MatmulMode::PerOp),
            "roundio" | "round-io" | "round_io" => Ok(MatmulMode::RoundIo),
            other => Err(Error::Config(format!(
                "unknown matmul mode '{other}', expected perop|roundio"
            ))),
        }
    }
}

impl fmt::Display for MatmulMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_conformable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Working-precision product with sequential accumulation over the summation
/// index. This is the bit-reproducible reference for [`matmul_lowprec`].
pub fn matmul_sequential(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_conformable(a, b)?;
    let at = a.transpose();
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    for j in 0..b.ncols() {
        let bj = b.column(j);
        for i in 0..a.nrows() {
            let ai = at.column(i);
            let mut s = 0.0;
            for p in 0..a.ncols() {
                s += ai[p] * bj[p];
            }
            c[(i, j)] = s;
        }
    }
    Ok(c)
}

/// Product `A * B` simulated in `fmt`, returned in working precision.
pub fn matmul_lowprec(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    fmt: &FloatFormat,
    mode: MatmulMode,
) -> Result<DMatrix<f64>> {
    check_conformable(a, b)?;
    let ar = round_matrix(a, fmt)?;
    let br = round_matrix(b, fmt)?;
    match mode {
        MatmulMode::RoundIo => {
            let c = matmul_sequential(&ar, &br)?;
            round_matrix(&c, fmt)
        }
        MatmulMode::PerOp => {
            if fmt.is_working_precision() {
                return matmul_sequential(&ar, &br);
            }
            let at = ar.transpose();
            let mut c = DMatrix::zeros(a.nrows(), b.ncols());
            for j in 0..b.ncols() {
                let bj = br.column(j);
                for i in 0..a.nrows() {
                    let ai = at.column(i);
                    let mut s = 0.0;
                    for p in 0..a.ncols() {
                        let prod = round_to(ai[p] * bj[p], fmt)?;
                        s = round_to(s + prod, fmt)?;
                    }
                    c[(i, j)] = s;
                }
            }
            Ok(c)
        }
    }
}
