//! The polar transform and successive-cancellation decoding.
//!
//! Everything here uses the natural-order transform `x = u F^{⊗n}` with
//! `F = [[1, 0], [1, 1]]` and no bit-reversal permutation, the same index
//! order as the construction module's frozen masks.
//!
//! Two LLR representations are supported: `f64` as a reference, and signed
//! 16-bit fixed point with 8 fractional bits, where the check-node update goes
//! through a lookup table for `phi`.

mod decoder;
mod fixed;

use thiserror::Error;

pub use decoder::{sc_decode, sc_decode_fixed, Arithmetic, FixedArithmetic, FloatArithmetic, ScDecoder};
pub use fixed::{from_fixed, phi_fixed, to_fixed, FIXED_FRACTIONAL_BITS, FIXED_MAX, FIXED_ONE, LARGE_SUM, PHI_TABLE_LEN};

use crate::construction::MAX_BLOCK_EXPONENT;

#[derive(Debug, Error, PartialEq)]
pub enum PolarError {
    #[error("block length must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("block length 2^{0} exceeds the supported maximum 2^{MAX_BLOCK_EXPONENT}")]
    TooLong(u32),
    #[error("phi is defined for positive arguments only, got {0}")]
    NonPositive(f64),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bit values must be 0 or 1, found {0}")]
    NotABit(u8),
}

fn check_len(len: usize) -> Result<u32, PolarError> {
    if len == 0 || !len.is_power_of_two() {
        return Err(PolarError::NotPowerOfTwo(len));
    }
    let n = len.trailing_zeros();
    if n > MAX_BLOCK_EXPONENT as u32 {
        return Err(PolarError::TooLong(n));
    }
    Ok(n)
}

/// A block of bits, one per byte, whose length is a power of two.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock(Vec<u8>);

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self, PolarError> {
        check_len(bits.len())?;
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(PolarError::NotABit(b));
        }
        Ok(BitBlock(bits))
    }

    pub fn zeros(n: u8) -> Result<Self, PolarError> {
        check_len(1usize.checked_shl(n as u32).unwrap_or(0))?;
        Ok(BitBlock(vec![0; 1 << n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Base-2 logarithm of the length.
    pub fn n(&self) -> u8 {
        self.0.len().trailing_zeros() as u8
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl AsRef<[u8]> for BitBlock {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Computes `x = u F^{⊗n}` over GF(2).
pub fn polar_transform(u: &BitBlock) -> BitBlock {
    let mut x = u.0.clone();
    butterflies(&mut x);
    BitBlock(x)
}

/// In-place transform of a raw bit slice. The transform is its own inverse.
pub fn polar_transform_in_place(bits: &mut [u8]) -> Result<(), PolarError> {
    check_len(bits.len())?;
    butterflies(bits);
    Ok(())
}

pub(crate) fn butterflies(bits: &mut [u8]) {
    let len = bits.len();
    let mut half = 1;
    while half < len {
        for block in bits.chunks_exact_mut(2 * half) {
            let (a, b) = block.split_at_mut(half);
            a.iter_mut().zip(b.iter()).for_each(|(a, b)| *a ^= b);
        }
        half *= 2;
    }
}

/// `phi(x) = -ln(tanh(x / 2))` for `x > 0`.
pub fn phi(x: f64) -> Result<f64, PolarError> {
    if x.is_nan() || x <= 0.0 {
        return Err(PolarError::NonPositive(x));
    }
    Ok(phi_unchecked(x))
}

/// `phi` without the domain check; `phi(0) = inf`, `phi(inf) = 0`.
#[inline]
pub(crate) fn phi_unchecked(x: f64) -> f64 {
    // -ln tanh(x/2) = ln((e^x + 1) / (e^x - 1)) = ln(1 + 2 / (e^x - 1))
    (2.0 / x.exp_m1()).ln_1p()
}

/// Numeric representation of an [`LlrBlock`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Float64,
    /// Signed 16-bit, 8 fractional bits, saturating.
    Fixed16,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Float64 => "float",
            Representation::Fixed16 => "fixed",
        })
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "float" | "float64" | "f64" => Ok(Representation::Float64),
            "fixed" | "fixed16" | "i16" => Ok(Representation::Fixed16),
            other => Err(format!("unknown representation {other:?}, expected \"float\" or \"fixed\"")),
        }
    }
}

/// Channel LLRs for one block. Positive values favour bit 0.
#[derive(Debug, Clone, PartialEq)]
pub enum LlrBlock {
    Float(Vec<f64>),
    Fixed(Vec<i16>),
}

impl LlrBlock {
    pub fn float(values: Vec<f64>) -> Result<Self, PolarError> {
        check_len(values.len())?;
        Ok(LlrBlock::Float(values))
    }

    pub fn fixed(values: Vec<i16>) -> Result<Self, PolarError> {
        check_len(values.len())?;
        // i16::MIN is outside the symmetric range
        let values = values.into_iter().map(|v| v.max(-FIXED_MAX)).collect();
        Ok(LlrBlock::Fixed(values))
    }

    /// Quantizes float LLRs, saturating at the representable range.
    pub fn quantize(values: &[f64]) -> Result<Self, PolarError> {
        check_len(values.len())?;
        Ok(LlrBlock::Fixed(values.iter().map(|&v| to_fixed(v)).collect()))
    }

    pub fn representation(&self) -> Representation {
        match self {
            LlrBlock::Float(_) => Representation::Float64,
            LlrBlock::Fixed(_) => Representation::Fixed16,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LlrBlock::Float(v) => v.len(),
            LlrBlock::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts to the requested representation.
    pub fn to_representation(&self, repr: Representation) -> LlrBlock {
        match (self, repr) {
            (LlrBlock::Float(v), Representation::Fixed16) => {
                LlrBlock::Fixed(v.iter().map(|&x| to_fixed(x)).collect())
            }
            (LlrBlock::Fixed(v), Representation::Float64) => {
                LlrBlock::Float(v.iter().map(|&x| from_fixed(x)).collect())
            }
            _ => self.clone(),
        }
    }
}
