//! Signed fixed-point format, round-to-nearest-even quantization with
//! saturation, and an exact wide accumulator for multiply-accumulate chains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Rounding {
    #[default]
    NearestEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Overflow {
    #[default]
    Saturate,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("total bits must be in [8, 32], got {0}")]
    TotalBits(u32),
    #[error("fractional bits ({frac}) must be below total bits ({total})")]
    FracBits { total: u32, frac: u32 },
    #[error("cannot parse fixed-point format `{0}` (expected Qm.n)")]
    Syntax(String),
}

/// Two's-complement `Qm.n` format: `m` integer bits including sign, `n`
/// fractional bits, `m + n` total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    total_bits: u32,
    frac_bits: u32,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

impl Default for FixedFormat {
    /// Q8.8.
    fn default() -> Self {
        FixedFormat::new(16, 8).expect("Q8.8 is valid")
    }
}

impl FixedFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, FormatError> {
        if !(8..=32).contains(&total_bits) {
            return Err(FormatError::TotalBits(total_bits));
        }
        if frac_bits >= total_bits {
            return Err(FormatError::FracBits {
                total: total_bits,
                frac: frac_bits,
            });
        }
        Ok(FixedFormat {
            total_bits,
            frac_bits,
            rounding: Rounding::NearestEven,
            overflow: Overflow::Saturate,
        })
    }

    /// `Qm.n` with `m` integer (sign included) and `n` fractional bits.
    pub fn q(int_bits: u32, frac_bits: u32) -> Result<Self, FormatError> {
        FixedFormat::new(int_bits + frac_bits, frac_bits)
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn raw_max(&self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    pub fn raw_min(&self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    /// Value of one LSB, `2^-frac_bits`.
    pub fn quantum(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.dequantize(self.raw_max())
    }

    pub fn min_value(&self) -> f64 {
        self.dequantize(self.raw_min())
    }

    /// Nearest representable value, ties to even, saturating. NaN maps to 0.
    pub fn quantize(&self, x: f64) -> Fixed {
        Fixed(self.quantize_raw(x))
    }

    pub fn quantize_raw(&self, x: f64) -> i32 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        scaled.clamp(self.raw_min() as f64, self.raw_max() as f64) as i32
    }

    pub fn dequantize(&self, raw: i32) -> f64 {
        raw as f64 * self.quantum()
    }

    pub fn saturate(&self, raw: i128) -> i32 {
        raw.clamp(self.raw_min() as i128, self.raw_max() as i128) as i32
    }

    /// Drops the extra `frac_bits` of a product-scale accumulator (rounding
    /// to nearest, ties to even) and saturates into this format.
    pub fn requantize(&self, acc: Accumulator) -> Fixed {
        Fixed(self.saturate(round_shift(acc.0, self.frac_bits)))
    }

    /// Real value held by a product-scale accumulator.
    pub fn acc_to_real(&self, acc: Accumulator) -> f64 {
        acc.0 as f64 * (-(2.0 * self.frac_bits as f64)).exp2()
    }

    /// Saturating addition of two values in this format.
    pub fn add(&self, a: i32, b: i32) -> i32 {
        self.saturate(a as i128 + b as i128)
    }

    /// Minimum accumulator width in bits for reductions of length `reduction_len`.
    pub fn accumulator_bits(&self, reduction_len: usize) -> u32 {
        let len = reduction_len.max(1) as u64;
        let log = 64 - (len - 1).leading_zeros();
        2 * self.total_bits + log
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total_bits - self.frac_bits, self.frac_bits)
    }
}

impl FromStr for FixedFormat {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || FormatError::Syntax(s.to_string());
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(syntax)?;
        let (m, n) = body.split_once('.').ok_or_else(syntax)?;
        let m: u32 = m.parse().map_err(|_| syntax())?;
        let n: u32 = n.parse().map_err(|_| syntax())?;
        FixedFormat::q(m, n)
    }
}

/// Raw fixed-point value; the format travels separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(pub i32);

impl Fixed {
    pub fn raw(self) -> i32 {
        self.0
    }
}

/// Exact accumulator at product scale (`2^(2·frac_bits)`).
///
/// 128 bits cover `2·32 + log2(L)` for any reduction length `L < 2^63`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Accumulator(pub i128);

impl Accumulator {
    pub const ZERO: Accumulator = Accumulator(0);

    /// `acc + a·b`, exact.
    #[inline]
    pub fn mac(self, a: i32, b: i32) -> Self {
        Accumulator(self.0 + a as i128 * b as i128)
    }

    #[inline]
    pub fn merge(self, other: Accumulator) -> Self {
        Accumulator(self.0 + other.0)
    }

    /// A value lifted to product scale, for adding biases before requantizing.
    pub fn lift(raw: i32, frac_bits: u32) -> Self {
        Accumulator((raw as i128) << frac_bits)
    }
}

/// `v / 2^shift` rounded to nearest, ties to even.
fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}
