//! Successive-cancellation decoding without recursion.
//!
//! The decoder walks the bits in index order. LLRs for a subtree of size
//! `2^d` live in `alpha[2^d .. 2^(d+1)]`; the channel LLRs play the role of
//! stage `n` and are read in place. Moving from bit `i - 1` to bit `i` only
//! has to redo the stages below `trailing_zeros(i) + 1`: one `g` step at that
//! stage and `f` steps down to the leaf.
//!
//! Partial sums use the same stage layout in `beta`. Once bit `i` is known,
//! the `trailing_ones(i)` completed left siblings are folded with it into the
//! re-encoded block of the subtree it closes, which is stored at stage
//! `trailing_ones(i)` for the next `g` step. After the last bit, stage `n`
//! holds `x̂ = û F^{⊗n}`.

use super::fixed::{correction_table, phi_table, FIXED_MAX, LARGE_SUM, PHI_TABLE_LEN};
use super::{phi_unchecked, BitBlock, LlrBlock, PolarError};
use crate::construction::PolarCode;

/// LLR arithmetic used by the decoder.
pub trait Arithmetic {
    type Llr: Copy + Default + PartialEq + std::fmt::Debug;

    /// Check-node update `sign(a) sign(b) phi(phi(|a|) + phi(|b|))`.
    fn f(&self, a: Self::Llr, b: Self::Llr) -> Self::Llr;

    /// Variable-node update `b + (1 - 2s) a`.
    fn g(&self, a: Self::Llr, b: Self::Llr, s: u8) -> Self::Llr;

    /// Hard decision; ties go to 0.
    fn hard(&self, l: Self::Llr) -> u8;

    fn f_stage(&self, src: &[Self::Llr], dst: &mut [Self::Llr]) {
        let (a, b) = src.split_at(dst.len());
        for ((d, &a), &b) in dst.iter_mut().zip(a).zip(b) {
            *d = self.f(a, b);
        }
    }

    fn g_stage(&self, src: &[Self::Llr], s: &[u8], dst: &mut [Self::Llr]) {
        let (a, b) = src.split_at(dst.len());
        for (((d, &a), &b), &s) in dst.iter_mut().zip(a).zip(b).zip(s) {
            *d = self.g(a, b, s);
        }
    }
}

/// Reference `f64` arithmetic.
#[derive(Debug, Clone, Copy, Default)]
pub struct FloatArithmetic;

impl Arithmetic for FloatArithmetic {
    type Llr = f64;

    #[inline]
    fn f(&self, a: f64, b: f64) -> f64 {
        let (x, y) = (a.abs(), b.abs());
        // |f| never exceeds min(|a|, |b|); the clamp also keeps it finite
        // when both phi values underflow to zero
        let mag = phi_unchecked(phi_unchecked(x) + phi_unchecked(y)).min(x.min(y));
        if a.is_sign_negative() != b.is_sign_negative() {
            -mag
        } else {
            mag
        }
    }

    #[inline]
    fn g(&self, a: f64, b: f64, s: u8) -> f64 {
        if s == 0 {
            b + a
        } else {
            b - a
        }
    }

    #[inline]
    fn hard(&self, l: f64) -> u8 {
        u8::from(l < 0.0)
    }
}

/// Saturating 16-bit fixed point with a table-driven `phi`.
#[derive(Debug, Clone, Copy)]
pub struct FixedArithmetic {
    table: &'static [i16; PHI_TABLE_LEN + 1],
    correction: &'static [i16; PHI_TABLE_LEN + 1],
}

impl Default for FixedArithmetic {
    fn default() -> Self {
        FixedArithmetic { table: phi_table(), correction: correction_table() }
    }
}

impl FixedArithmetic {
    #[inline]
    fn phi(&self, raw: i32) -> i32 {
        // the index is clamped, so the lookup never goes out of bounds
        self.table[(raw as usize).min(PHI_TABLE_LEN)] as i32
    }
}

#[inline]
fn saturate(v: i32) -> i16 {
    v.clamp(-(FIXED_MAX as i32), FIXED_MAX as i32) as i16
}

impl Arithmetic for FixedArithmetic {
    type Llr = i16;

    #[inline]
    fn f(&self, a: i16, b: i16) -> i16 {
        let (x, y) = ((a as i32).abs(), (b as i32).abs());
        let mag = if x + y >= LARGE_SUM {
            let d = ((x - y).unsigned_abs() as usize).min(PHI_TABLE_LEN);
            (x.min(y) - self.correction[d] as i32).max(0)
        } else {
            let (px, py) = (self.phi(x), self.phi(y));
            // an operand whose phi rounds to zero is effectively infinite;
            // going through the table again would only add rounding error
            if px == 0 || py == 0 {
                x.min(y)
            } else {
                self.phi(px + py).min(x.min(y))
            }
        };
        if (a ^ b) < 0 {
            -mag as i16
        } else {
            mag as i16
        }
    }

    #[inline]
    fn g(&self, a: i16, b: i16, s: u8) -> i16 {
        if s == 0 {
            saturate(b as i32 + a as i32)
        } else {
            saturate(b as i32 - a as i32)
        }
    }

    #[inline]
    fn hard(&self, l: i16) -> u8 {
        u8::from(l < 0)
    }

    fn g_stage(&self, src: &[i16], s: &[u8], dst: &mut [i16]) {
        let (a, b) = src.split_at(dst.len());
        for (((d, &a), &b), &s) in dst.iter_mut().zip(a).zip(b).zip(s) {
            // branch-free so the loop vectorizes
            let sign = 1 - 2 * s as i32;
            *d = saturate(b as i32 + sign * a as i32);
        }
    }
}

/// A reusable SC decoder. Buffers grow to the largest block decoded so far.
#[derive(Debug, Clone, Default)]
pub struct ScDecoder<A: Arithmetic> {
    arith: A,
    alpha: Vec<A::Llr>,
    beta: Vec<u8>,
    n: u8,
}

impl<A: Arithmetic> ScDecoder<A> {
    pub fn new(arith: A) -> Self {
        ScDecoder {
            arith,
            alpha: Vec::new(),
            beta: Vec::new(),
            n: 0,
        }
    }

    pub fn arithmetic(&self) -> &A {
        &self.arith
    }

    /// Decodes one block and returns `û`.
    pub fn decode(&mut self, code: &PolarCode, llrs: &[A::Llr], frozen_values: &[u8]) -> Result<BitBlock, PolarError> {
        let mut u = vec![0u8; code.block_len()];
        self.decode_into(code, llrs, frozen_values, &mut u)?;
        Ok(BitBlock(u))
    }

    /// Decodes one block into `u`. Afterwards [`Self::encoded`] holds `x̂`.
    pub fn decode_into(
        &mut self,
        code: &PolarCode,
        llrs: &[A::Llr],
        frozen_values: &[u8],
        u: &mut [u8],
    ) -> Result<(), PolarError> {
        self.decode_observed(code, llrs, frozen_values, u, |_, _| {})
    }

    /// The re-encoded estimate `û F^{⊗n}` of the last decoded block.
    pub fn encoded(&self) -> &[u8] {
        let len = 1usize << self.n;
        &self.beta[len..2 * len]
    }

    /// Like [`Self::decode_into`], reporting each bit's decision LLR.
    pub(crate) fn decode_observed(
        &mut self,
        code: &PolarCode,
        llrs: &[A::Llr],
        frozen_values: &[u8],
        u: &mut [u8],
        mut observe: impl FnMut(usize, A::Llr),
    ) -> Result<(), PolarError> {
        let len = code.block_len();
        let n = code.n() as u32;
        let expect = |what, got| {
            if got == len {
                Ok(())
            } else {
                Err(PolarError::LengthMismatch { what, expected: len, got })
            }
        };
        expect("channel LLRs", llrs.len())?;
        expect("decoded bits", u.len())?;
        if frozen_values.len() != code.frozen_count() {
            return Err(PolarError::LengthMismatch {
                what: "frozen values",
                expected: code.frozen_count(),
                got: frozen_values.len(),
            });
        }
        if let Some(&b) = frozen_values.iter().find(|&&b| b > 1) {
            return Err(PolarError::NotABit(b));
        }

        self.n = code.n();
        self.alpha.resize(len.max(2), A::Llr::default());
        self.beta.resize(2 * len, 0);
        let frozen = code.frozen_mask();
        let mut next_frozen = frozen_values.iter();

        for i in 0..len {
            let top = if i == 0 {
                n
            } else {
                let t = i.trailing_zeros();
                let h = 1usize << t;
                let left = &self.beta[h..2 * h];
                let (lo, hi) = self.alpha.split_at_mut(2 * h);
                let src = if t + 1 == n { llrs } else { &hi[..2 * h] };
                self.arith.g_stage(src, left, &mut lo[h..]);
                t
            };
            for d in (1..=top).rev() {
                let h = 1usize << (d - 1);
                let (lo, hi) = self.alpha.split_at_mut(2 * h);
                let src = if d == n { llrs } else { &hi[..2 * h] };
                self.arith.f_stage(src, &mut lo[h..]);
            }

            let llr = self.alpha[1];
            observe(i, llr);
            let bit = if frozen[i] {
                *next_frozen.next().expect("frozen value count checked above")
            } else {
                self.arith.hard(llr)
            };
            u[i] = bit;

            // fold the finished left siblings into the block at stage `ones`
            let ones = (!i).trailing_zeros().min(n);
            let (done, stage) = self.beta.split_at_mut(1 << ones);
            let stage = &mut stage[..1 << ones];
            let end = stage.len();
            stage[end - 1] = bit;
            for k in 0..ones {
                let h = 1usize << k;
                let left = &done[h..2 * h];
                let (head, right) = stage[..end].split_at_mut(end - h);
                for ((o, &l), &r) in head[end - 2 * h..].iter_mut().zip(left).zip(right.iter()) {
                    *o = l ^ r;
                }
            }
        }
        if len == 1 {
            self.beta[1] = u[0];
        }
        Ok(())
    }
}

/// Decodes with whichever arithmetic matches the block's representation.
pub fn sc_decode(code: &PolarCode, llrs: &LlrBlock, frozen_values: &[u8]) -> Result<BitBlock, PolarError> {
    match llrs {
        LlrBlock::Float(v) => ScDecoder::new(FloatArithmetic).decode(code, v, frozen_values),
        LlrBlock::Fixed(v) => sc_decode_fixed(code, v, frozen_values),
    }
}

/// Fixed-point SC decoding of raw 8.8 LLRs.
pub fn sc_decode_fixed(code: &PolarCode, llrs: &[i16], frozen_values: &[u8]) -> Result<BitBlock, PolarError> {
    ScDecoder::new(FixedArithmetic::default()).decode(code, llrs, frozen_values)
}
