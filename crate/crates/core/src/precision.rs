//! Binary floating-point formats and bit-exact round-to-nearest emulation.
//!
//! The host `f64` is the exact reference. A value of a narrower format is
//! stored in an `f64` whose significand has been rounded to `p` bits with
//! ties to even. Formats are limited to `p <= 26` so that the exact `f64`
//! result of `+ - * /` on two representable operands followed by a second
//! rounding to `p` bits equals a single correct rounding (53 >= 2p + 1).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Largest significand width that can be emulated on top of `f64`
/// without double-rounding artifacts.
pub const MAX_EMULATED_PRECISION: u32 = 26;

/// What happens when a rounded magnitude drops below `2^e_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Underflow {
    /// Report [`Error::OverflowOrUnderflow`]. The rounding model assumes this never happens.
    Error,
    /// IEEE gradual underflow to subnormals. The relative error bound does not hold there.
    Gradual,
}

/// A binary floating-point system `(p, e_min, e_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    precision: u32,
    e_min: i32,
    e_max: i32,
    underflow: Underflow,
}

#[inline]
fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

impl FloatFormat {
    /// IEEE binary16.
    pub const FP16: FloatFormat = FloatFormat::preset(11, -14, 15);
    /// bfloat16.
    pub const BF16: FloatFormat = FloatFormat::preset(8, -126, 127);
    /// IEEE binary32.
    pub const FP32: FloatFormat = FloatFormat::preset(24, -126, 127);
    /// The host `f64`, treated as exact.
    pub const REFERENCE: FloatFormat = FloatFormat::preset(53, -1022, 1023);

    const fn preset(precision: u32, e_min: i32, e_max: i32) -> Self {
        FloatFormat {
            precision,
            e_min,
            e_max,
            underflow: Underflow::Error,
        }
    }

    pub fn new(precision: u32, e_min: i32, e_max: i32) -> Result<Self> {
        if precision < 2 {
            return Err(Error::invalid(format!("precision {precision} < 2")));
        }
        if precision > MAX_EMULATED_PRECISION && precision != 53 {
            return Err(Error::invalid(format!(
                "precision {precision} cannot be emulated exactly on f64 (max {MAX_EMULATED_PRECISION})"
            )));
        }
        if e_min >= e_max {
            return Err(Error::invalid(format!("e_min {e_min} >= e_max {e_max}")));
        }
        if e_min < -1022 || e_max > 1023 {
            return Err(Error::invalid(format!(
                "exponent range [{e_min}, {e_max}] exceeds the reference range"
            )));
        }
        Ok(FloatFormat::preset(precision, e_min, e_max))
    }

    pub fn with_underflow(mut self, underflow: Underflow) -> Self {
        self.underflow = underflow;
        self
    }

    /// Same format with IEEE subnormals.
    pub fn with_gradual_underflow(self) -> Self {
        self.with_underflow(Underflow::Gradual)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn base(&self) -> u32 {
        2
    }

    pub fn e_min(&self) -> i32 {
        self.e_min
    }

    pub fn e_max(&self) -> i32 {
        self.e_max
    }

    pub fn underflow(&self) -> Underflow {
        self.underflow
    }

    pub fn is_reference(&self) -> bool {
        self.precision == 53
    }

    /// `u = 2^-p`, half the gap between 1 and its successor.
    pub fn unit_roundoff(&self) -> f64 {
        pow2(-(self.precision as i32))
    }

    pub fn min_normal(&self) -> f64 {
        pow2(self.e_min)
    }

    pub fn max_value(&self) -> f64 {
        (2.0 - pow2(1 - self.precision as i32)) * pow2(self.e_max)
    }

    fn range_error(&self, value: f64) -> Error {
        Error::OverflowOrUnderflow {
            value,
            format: self.to_string(),
        }
    }

    /// Rounds `z` to the nearest member of this format, ties to even.
    pub fn round(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFinite(z));
        }
        if z == 0.0 {
            return Ok(z);
        }
        if self.is_reference() {
            if z.abs() < f64::MIN_POSITIVE && self.underflow == Underflow::Error {
                return Err(self.range_error(z));
            }
            return Ok(z);
        }
        let r = if z.abs() < f64::MIN_POSITIVE {
            // f64 subnormal, always below this format's normal range
            0.0
        } else {
            round_significand(z, self.precision)
        };
        if r.abs() > self.max_value() {
            return Err(self.range_error(z));
        }
        if r.abs() < self.min_normal() {
            return match self.underflow {
                Underflow::Error => Err(self.range_error(z)),
                Underflow::Gradual => {
                    let quantum = pow2(self.e_min - self.precision as i32 + 1);
                    Ok((z / quantum).round_ties_even() * quantum)
                }
            };
        }
        Ok(r)
    }

    /// Whether `x` is a member of this format.
    pub fn is_representable(&self, x: f64) -> bool {
        matches!(self.round(x), Ok(r) if r == x)
    }

    /// Rounds every element, as done when data enters a kernel.
    pub fn round_slice(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.round(x)).collect()
    }

    fn preset_name(&self) -> Option<&'static str> {
        let plain = self.with_underflow(Underflow::Error);
        [
            (FloatFormat::FP16, "fp16"),
            (FloatFormat::BF16, "bf16"),
            (FloatFormat::FP32, "fp32"),
            (FloatFormat::REFERENCE, "fp64"),
        ]
        .iter()
        .find(|(f, _)| *f == plain)
        .map(|(_, n)| *n)
    }
}

/// Round-to-nearest-even of a normal `f64` to `p` significand bits.
/// Carries out of the significand propagate into the exponent field.
#[inline]
fn round_significand(z: f64, p: u32) -> f64 {
    let shift = 53 - p;
    let bits = z.to_bits();
    let unit = 1u64 << shift;
    let mask = unit - 1;
    let half = unit >> 1;
    let rem = bits & mask;
    let base = bits & !mask;
    let up = rem > half || (rem == half && base & unit != 0);
    f64::from_bits(if up { base + unit } else { base })
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(n) => f.write_str(n)?,
            None => write!(f, "p{}e{}:{}", self.precision, self.e_min, self.e_max)?,
        }
        if self.underflow == Underflow::Gradual {
            f.write_str("+sub")?;
        }
        Ok(())
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    /// Accepts `fp16`, `bf16`, `fp32`, `fp64` (alias `reference`) or
    /// `p<P>e<Emin>:<Emax>`, optionally suffixed by `+sub` for subnormals.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, sub) = match s.strip_suffix("+sub") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let fmt = match body.to_ascii_lowercase().as_str() {
            "fp16" | "half" | "binary16" => FloatFormat::FP16,
            "bf16" | "bfloat16" => FloatFormat::BF16,
            "fp32" | "single" | "binary32" => FloatFormat::FP32,
            "fp64" | "double" | "reference" => FloatFormat::REFERENCE,
            other => parse_custom(other)
                .ok_or_else(|| Error::Parse(format!("unknown format '{s}'")))??,
        };
        Ok(if sub { fmt.with_gradual_underflow() } else { fmt })
    }
}

fn parse_custom(s: &str) -> Option<Result<FloatFormat>> {
    let rest = s.strip_prefix('p')?;
    let (p, range) = rest.split_once('e')?;
    let (lo, hi) = range.split_once(':')?;
    Some(FloatFormat::new(
        p.parse().ok()?,
        lo.parse().ok()?,
        hi.parse().ok()?,
    ))
}

/// Free-function form of [`FloatFormat::round`].
pub fn round_to_format(z: f64, fmt: &FloatFormat) -> Result<f64> {
    fmt.round(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    #[inline]
    pub fn exact(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
        }
    }
}

impl FromStr for Op {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" | "+" => Ok(Op::Add),
            "sub" | "-" => Ok(Op::Sub),
            "mul" | "*" => Ok(Op::Mul),
            "div" | "/" => Ok(Op::Div),
            _ => Err(Error::Parse(format!("unknown op '{s}'"))),
        }
    }
}

/// `fl(a op b)` in `fmt`. Both operands must already be members of `fmt`.
pub fn emulated_op(a: f64, b: f64, op: Op, fmt: &FloatFormat) -> Result<f64> {
    for x in [a, b] {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        if !fmt.is_representable(x) {
            return Err(Error::invalid(format!("operand {x:e} is not a member of {fmt}")));
        }
    }
    if op == Op::Div && b == 0.0 {
        return Err(Error::DivisionByZero);
    }
    fmt.round(op.exact(a, b))
}

/// `rho` in `fl(z) = z (1 + delta)^rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rho {
    #[default]
    Standard,
    Alternate,
}

impl Rho {
    pub fn sign(self) -> i32 {
        match self {
            Rho::Standard => 1,
            Rho::Alternate => -1,
        }
    }

    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Rho::Standard),
            -1 => Ok(Rho::Alternate),
            _ => Err(Error::invalid(format!("rho must be +1 or -1, got {sign}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TieRule {
    #[default]
    NearestEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RoundingMode {
    pub rho: Rho,
    pub tie_rule: TieRule,
}

impl RoundingMode {
    /// `z (1 + delta)^rho`.
    #[inline]
    pub fn apply(&self, z: f64, delta: f64) -> f64 {
        match self.rho {
            Rho::Standard => z * (1.0 + delta),
            Rho::Alternate => z / (1.0 + delta),
        }
    }
}

/// `delta` with `computed = exact (1 + delta)`.
pub fn realized_delta(exact: f64, computed: f64) -> Result<f64> {
    if exact == 0.0 {
        return if computed == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::ZeroReference { computed })
        };
    }
    Ok(computed / exact - 1.0)
}

/// Rounding errors modeled as i.i.d. `U[-u, u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    half_width: f64,
}

impl ErrorModel {
    pub fn uniform(u: f64) -> Result<Self> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("support half-width {u} not in (0, 1)")));
        }
        Ok(ErrorModel { half_width: u })
    }

    pub fn for_format(fmt: &FloatFormat) -> Self {
        ErrorModel {
            half_width: fmt.unit_roundoff(),
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn sample(&self, stream: &mut Stream) -> f64 {
        self.half_width * stream.next_symmetric()
    }
}

/// `count` draws from `model`, reproducible for a fixed seed.
pub fn sample_errors(model: &ErrorModel, count: usize, seed: u64) -> Vec<f64> {
    let mut stream = Stream::named(seed, "errors", 0);
    (0..count).map(|_| model.sample(&mut stream)).collect()
}

/// Scalar arithmetic used by the kernels: either a real (emulated) format
/// or the statistical rounding model.
pub trait Arithmetic {
    fn unit_roundoff(&self) -> f64;
    fn add(&mut self, a: f64, b: f64) -> Result<f64>;
    fn sub(&mut self, a: f64, b: f64) -> Result<f64>;
    fn mul(&mut self, a: f64, b: f64) -> Result<f64>;
    fn div(&mut self, a: f64, b: f64) -> Result<f64>;
}

impl Arithmetic for FloatFormat {
    fn unit_roundoff(&self) -> f64 {
        FloatFormat::unit_roundoff(self)
    }

    #[inline]
    fn add(&mut self, a: f64, b: f64) -> Result<f64> {
        self.round(a + b)
    }

    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> Result<f64> {
        self.round(a - b)
    }

    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> Result<f64> {
        self.round(a * b)
    }

    #[inline]
    fn div(&mut self, a: f64, b: f64) -> Result<f64> {
        if b == 0.0 {
            return Err(Error::DivisionByZero);
        }
        self.round(a / b)
    }
}

/// Reference arithmetic perturbed by the error model: every operation
/// returns `(a op b)(1 + delta)^rho` with a fresh `delta`, except additions
/// and subtractions with a zero operand, which are exact.
#[derive(Debug, Clone)]
pub struct Modeled {
    pub model: ErrorModel,
    pub mode: RoundingMode,
    stream: Stream,
}

impl Modeled {
    pub fn new(model: ErrorModel, stream: Stream) -> Self {
        Modeled {
            model,
            mode: RoundingMode::default(),
            stream,
        }
    }

    #[inline]
    fn perturb(&mut self, z: f64) -> f64 {
        let d = self.model.sample(&mut self.stream);
        self.mode.apply(z, d)
    }
}

impl Arithmetic for Modeled {
    fn unit_roundoff(&self) -> f64 {
        self.model.half_width()
    }

    fn add(&mut self, a: f64, b: f64) -> Result<f64> {
        if a == 0.0 || b == 0.0 {
            return Ok(a + b);
        }
        Ok(self.perturb(a + b))
    }

    fn sub(&mut self, a: f64, b: f64) -> Result<f64> {
        if a == 0.0 || b == 0.0 {
            return Ok(a - b);
        }
        Ok(self.perturb(a - b))
    }

    fn mul(&mut self, a: f64, b: f64) -> Result<f64> {
        Ok(self.perturb(a * b))
    }

    fn div(&mut self, a: f64, b: f64) -> Result<f64> {
        if b == 0.0 {
            return Err(Error::DivisionByZero);
        }
        Ok(self.perturb(a / b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FP16: FloatFormat = FloatFormat::FP16;

    /// Nearest of the two neighbours by direct distance comparison.
    fn nearest_of(z: f64, lo: f64, hi: f64) -> f64 {
        if (z - lo).abs() <= (hi - z).abs() {
            lo
        } else {
            hi
        }
    }

    #[test]
    fn unit_roundoff_presets() {
        assert_eq!(FloatFormat::FP16.unit_roundoff(), 2f64.powi(-11));
        assert_eq!(FloatFormat::FP32.unit_roundoff(), 2f64.powi(-24));
        assert_eq!(FloatFormat::FP16.max_value(), 65504.0);
        assert_eq!(FloatFormat::FP32.max_value(), f32::MAX as f64);
        assert_eq!(FloatFormat::FP32.min_normal(), f32::MIN_POSITIVE as f64);
    }

    #[test]
    fn round_examples() {
        assert_eq!(FP16.round(2.0).unwrap(), 2.0);
        assert_eq!(FP16.round(1.0 + 2f64.powi(-12)).unwrap(), 1.0);
        let z = 1.0 + 3.0 * 2f64.powi(-12);
        let expect = nearest_of(z, 1.0, 1.0 + 2f64.powi(-10));
        assert_eq!(expect, 1.0 + 2f64.powi(-10));
        assert_eq!(FP16.round(z).unwrap(), expect);
    }

    #[test]
    fn ties_go_to_even() {
        // halfway between 1 and 1 + 2^-10: even significand is 1.0
        assert_eq!(FP16.round(1.0 + 2f64.powi(-11)).unwrap(), 1.0);
        // halfway between 1 + 2^-10 (odd) and 1 + 2^-9 (even)
        let z = 1.0 + 3.0 * 2f64.powi(-11);
        assert_eq!(FP16.round(z).unwrap(), 1.0 + 2f64.powi(-9));
        // carry into the exponent
        assert_eq!(FP16.round(2.0 - 2f64.powi(-12)).unwrap(), 2.0);
    }

    #[test]
    fn agrees_with_native_f32() {
        let mut s = Stream::new(11, 0);
        for _ in 0..100_000 {
            let z = (s.next_symmetric() * 40.0).exp() * s.next_symmetric().signum();
            assert_eq!(FloatFormat::FP32.round(z).unwrap(), z as f32 as f64, "z = {z:e}");
        }
    }

    #[test]
    fn range_errors() {
        assert!(matches!(FP16.round(65520.0), Err(Error::OverflowOrUnderflow { .. })));
        assert_eq!(FP16.round(65519.0).unwrap(), 65504.0);
        assert!(matches!(FP16.round(1e-6), Err(Error::OverflowOrUnderflow { .. })));
        assert!(matches!(FP16.round(f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(FP16.round(f64::INFINITY), Err(Error::NonFinite(_))));
        assert_eq!(FP16.round(0.0).unwrap(), 0.0);
    }

    #[test]
    fn gradual_underflow_matches_ieee_half() {
        let f = FP16.with_gradual_underflow();
        // smallest subnormal 2^-24, ties to even
        assert_eq!(f.round(2f64.powi(-24)).unwrap(), 2f64.powi(-24));
        assert_eq!(f.round(2f64.powi(-25)).unwrap(), 0.0);
        assert_eq!(f.round(3.0 * 2f64.powi(-25)).unwrap(), 2f64.powi(-23));
        assert_eq!(f.round(1e-6).unwrap(), 17.0 * 2f64.powi(-24));
    }

    #[test]
    fn format_names_round_trip() {
        for s in ["fp16", "fp32", "bf16", "fp64", "p5e-6:7", "fp16+sub"] {
            let f: FloatFormat = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!("p11e-14:15".parse::<FloatFormat>().unwrap(), FloatFormat::FP16);
        assert!("p40e-10:10".parse::<FloatFormat>().is_err());
        assert!("p8e3:1".parse::<FloatFormat>().is_err());
        assert!("quad".parse::<FloatFormat>().is_err());
    }

    #[test]
    fn emulated_op_examples() {
        assert_eq!(emulated_op(1.0, 1.0, Op::Add, &FP16).unwrap(), 2.0);
        assert_eq!(emulated_op(1.0, 2f64.powi(-12), Op::Add, &FP16).unwrap(), 1.0);
        assert!(matches!(
            emulated_op(1.0, 0.0, Op::Div, &FP16),
            Err(Error::DivisionByZero)
        ));
        assert!(emulated_op(1.0 + 2f64.powi(-20), 1.0, Op::Add, &FP16).is_err());
    }

    #[test]
    fn emulated_mul_fp32_error_bound() {
        let f = FloatFormat::FP32;
        let u = f.unit_roundoff();
        let mut s = Stream::new(3, 0);
        for _ in 0..100_000 {
            let a = f.round(1.0 + s.next_unit()).unwrap();
            let b = f.round(1.0 + s.next_unit()).unwrap();
            let c = emulated_op(a, b, Op::Mul, &f).unwrap();
            assert_eq!(c, f.round(a * b).unwrap());
            assert!(realized_delta(a * b, c).unwrap().abs() <= u);
        }
    }

    #[test]
    fn realized_delta_examples() {
        assert_eq!(realized_delta(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(realized_delta(1.0, 1.0 + 2f64.powi(-11)).unwrap(), 2f64.powi(-11));
        assert_eq!(realized_delta(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(realized_delta(0.0, 1.0), Err(Error::ZeroReference { .. })));
    }

    #[test]
    fn realized_delta_fp16_additions() {
        let u = FP16.unit_roundoff();
        let mut s = Stream::new(5, 0);
        for _ in 0..10_000 {
            let a = FP16.round(1.0 + s.next_unit()).unwrap();
            let b = FP16.round(1.0 + s.next_unit()).unwrap();
            let c = emulated_op(a, b, Op::Add, &FP16).unwrap();
            let d = realized_delta(a + b, c).unwrap();
            assert!((-u..=u).contains(&d));
        }
    }

    #[test]
    fn sample_errors_moments() {
        let m = ErrorModel::uniform(0.5).unwrap();
        assert!(sample_errors(&m, 0, 1).is_empty());
        let xs = sample_errors(&m, 1_000_000, 1);
        assert_eq!(xs, sample_errors(&m, 1_000_000, 1));
        assert!(xs.iter().all(|x| x.abs() <= 0.5));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 0.5f64 * 0.5 / 3.0;
        assert!(((var - expected) / expected).abs() < 0.01, "var {var}");

        let u = 2f64.powi(-11);
        let xs = sample_errors(&ErrorModel::uniform(u).unwrap(), 1_000_000, 2);
        let mean = xs.iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 3.0 * (u / 3f64.sqrt()) / 1e3);
    }

    #[test]
    fn modeled_add_to_zero_is_exact() {
        let mut m = Modeled::new(ErrorModel::uniform(0.1).unwrap(), Stream::new(1, 0));
        assert_eq!(m.add(0.0, 3.0).unwrap(), 3.0);
        let x = m.mul(1.0, 1.0).unwrap();
        assert!(x != 1.0 && (x - 1.0).abs() <= 0.1);
    }

    #[test]
    fn alternate_rho_round_trip() {
        let mode = RoundingMode {
            rho: Rho::Alternate,
            ..Default::default()
        };
        let z = mode.apply(3.0, 0.25);
        assert!((z - 2.4).abs() < 1e-15);
        assert!(Rho::from_sign(0).is_err());
        assert_eq!(Rho::from_sign(-1).unwrap().sign(), -1);
    }

    fn finite_in_range() -> impl Strategy<Value = f64> {
        (-13.0f64..15.9, any::<bool>(), 0.0f64..1.0)
            .prop_map(|(e, neg, m)| (if neg { -1.0 } else { 1.0 }) * 2f64.powf(e) * (1.0 + m))
            .prop_filter("in range", |z| z.abs() < 65504.0 && z.abs() >= 2f64.powi(-14))
    }

    proptest! {
        #[test]
        fn relative_error_at_most_u(z in finite_in_range()) {
            let r = FP16.round(z).unwrap();
            prop_assert!((r - z).abs() <= FP16.unit_roundoff() * z.abs());
        }

        #[test]
        fn rounding_is_idempotent(z in finite_in_range()) {
            let r = FP16.round(z).unwrap();
            prop_assert_eq!(FP16.round(r).unwrap(), r);
        }

        #[test]
        fn rounding_is_monotone(a in finite_in_range(), b in finite_in_range()) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(FP16.round(lo).unwrap() <= FP16.round(hi).unwrap());
        }
    }
}
