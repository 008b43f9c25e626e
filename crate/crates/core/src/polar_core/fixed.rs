//! Fixed-point LLR format and the `phi` lookup table.
//!
//! LLRs are `i16` with 8 fractional bits, saturating at `±FIXED_MAX`
//! (about ±128). The table holds `phi(k / 256)` for `k in 1..=4096`, i.e.
//! arguments on `(0, 16]` at the format's own resolution; arguments beyond 16
//! use the last entry, and slot 0 holds the saturation value.
//!
//! Once both operands are large, `phi` of the result falls below the
//! format's resolution and the table can no longer invert it. There the
//! decoder uses the equivalent form
//! `min(x, y) - ln(1 + e^-|x-y|) + ln(1 + e^-(x+y))`, where the last term is
//! below half an LSB, with the correction term tabulated on the same grid.

use std::sync::OnceLock;

use super::phi_unchecked;

pub const FIXED_FRACTIONAL_BITS: u32 = 8;
pub const FIXED_ONE: i16 = 1 << FIXED_FRACTIONAL_BITS;
/// Largest magnitude; the range is symmetric so negation never overflows.
pub const FIXED_MAX: i16 = i16::MAX;
/// Number of non-zero table arguments.
pub const PHI_TABLE_LEN: usize = 4096;

/// Rounds to the nearest representable value, saturating.
pub fn to_fixed(x: f64) -> i16 {
    if x.is_nan() {
        return 0;
    }
    let scaled = (x * FIXED_ONE as f64).round();
    scaled.clamp(-(FIXED_MAX as f64), FIXED_MAX as f64) as i16
}

pub fn from_fixed(v: i16) -> f64 {
    v as f64 / FIXED_ONE as f64
}

fn table() -> &'static [i16; PHI_TABLE_LEN + 1] {
    static TABLE: OnceLock<[i16; PHI_TABLE_LEN + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i16; PHI_TABLE_LEN + 1];
        t[0] = FIXED_MAX;
        for (k, slot) in t.iter_mut().enumerate().skip(1) {
            *slot = to_fixed(phi_unchecked(k as f64 / FIXED_ONE as f64));
        }
        t
    })
}

/// Operand-sum (raw) from which the correction form replaces the table.
pub const LARGE_SUM: i32 = 8 * FIXED_ONE as i32;

fn correction() -> &'static [i16; PHI_TABLE_LEN + 1] {
    static TABLE: OnceLock<[i16; PHI_TABLE_LEN + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i16; PHI_TABLE_LEN + 1];
        for (k, slot) in t.iter_mut().enumerate() {
            *slot = to_fixed((-(k as f64) / FIXED_ONE as f64).exp().ln_1p());
        }
        t
    })
}

/// Table lookup of `phi` for a non-negative raw fixed-point magnitude.
#[inline]
pub fn phi_fixed(raw: i32) -> i16 {
    debug_assert!(raw >= 0);
    table()[(raw as usize).min(PHI_TABLE_LEN)]
}

/// Direct table access for the decoder's hot loop.
#[inline]
pub(super) fn phi_table() -> &'static [i16; PHI_TABLE_LEN + 1] {
    table()
}

#[inline]
pub(super) fn correction_table() -> &'static [i16; PHI_TABLE_LEN + 1] {
    correction()
}
