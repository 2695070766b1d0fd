//! Arithmetic backends the datapath is generic over.
//!
//! [`FixedArith`] is the accelerator's number system: exact integer
//! multiply-accumulate, one requantization per output. [`RealArith`] is the
//! double-precision reference.

use std::fmt::Debug;

use crate::fixedpoint::{Accumulator, FixedFormat};

pub trait Arithmetic {
    type Value: Copy + PartialEq + Debug;
    type Acc: Copy + Debug;

    fn zero_acc(&self) -> Self::Acc;
    fn mac(&self, acc: Self::Acc, a: Self::Value, b: Self::Value) -> Self::Acc;
    /// Cross-tile accumulation of partial sums.
    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Self::Acc;
    /// A value brought to accumulator scale (bias addition before rounding).
    fn lift(&self, v: Self::Value) -> Self::Acc;
    /// Accumulator back to a storable value.
    fn round(&self, acc: Self::Acc) -> Self::Value;
    fn acc_to_real(&self, acc: Self::Acc) -> f64;

    fn add(&self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn from_real(&self, x: f64) -> Self::Value;
    fn to_real(&self, v: Self::Value) -> f64;
    fn zero(&self) -> Self::Value;
    /// Most negative storable value; stands in for -inf in masked scores.
    fn lowest(&self) -> Self::Value;
    fn relu(&self, v: Self::Value) -> Self::Value;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArith {
    pub format: FixedFormat,
}

impl FixedArith {
    pub fn new(format: FixedFormat) -> Self {
        FixedArith { format }
    }
}

impl Arithmetic for FixedArith {
    type Value = i32;
    type Acc = Accumulator;

    fn zero_acc(&self) -> Accumulator {
        Accumulator::ZERO
    }

    #[inline]
    fn mac(&self, acc: Accumulator, a: i32, b: i32) -> Accumulator {
        acc.mac(a, b)
    }

    fn merge(&self, a: Accumulator, b: Accumulator) -> Accumulator {
        a.merge(b)
    }

    fn lift(&self, v: i32) -> Accumulator {
        Accumulator::lift(v, self.format.frac_bits())
    }

    fn round(&self, acc: Accumulator) -> i32 {
        self.format.requantize(acc).raw()
    }

    fn acc_to_real(&self, acc: Accumulator) -> f64 {
        self.format.acc_to_real(acc)
    }

    fn add(&self, a: i32, b: i32) -> i32 {
        self.format.add(a, b)
    }

    fn from_real(&self, x: f64) -> i32 {
        self.format.quantize_raw(x)
    }

    fn to_real(&self, v: i32) -> f64 {
        self.format.dequantize(v)
    }

    fn zero(&self) -> i32 {
        0
    }

    fn lowest(&self) -> i32 {
        self.format.raw_min()
    }

    fn relu(&self, v: i32) -> i32 {
        v.max(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RealArith;

impl Arithmetic for RealArith {
    type Value = f64;
    type Acc = f64;

    fn zero_acc(&self) -> f64 {
        0.0
    }

    #[inline]
    fn mac(&self, acc: f64, a: f64, b: f64) -> f64 {
        acc + a * b
    }

    fn merge(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    fn lift(&self, v: f64) -> f64 {
        v
    }

    fn round(&self, acc: f64) -> f64 {
        acc
    }

    fn acc_to_real(&self, acc: f64) -> f64 {
        acc
    }

    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    fn from_real(&self, x: f64) -> f64 {
        x
    }

    fn to_real(&self, v: f64) -> f64 {
        v
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn lowest(&self) -> f64 {
        f64::MIN
    }

    fn relu(&self, v: f64) -> f64 {
        if v < 0.0 {
            0.0
        } else {
            v
        }
    }
}
