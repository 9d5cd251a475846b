//! IEEE 754 binary16 truncation.
//!
//! The half-precision twin of a model is simulated by keeping every value in
//! `f32` storage but forcing it through binary16 and back after each
//! operation. Conversion to binary16 rounds to nearest, ties to even —
//! matching what real half-precision hardware would store — and conversion
//! back is exact, since every binary16 value is representable in `f32`.

use alloc::vec::Vec;

use crate::tensor::Vector;

const F16_SIGN: u32 = 0x8000;
const F16_EXP_MAX: u16 = 0x1f;
const F16_INF: u16 = 0x7c00;
const F16_QNAN: u16 = 0x7e00;

/// Converts an `f32` to binary16 bits, rounding to nearest (ties to even).
pub fn to_f16_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & F16_SIGN) as u16;
    let exp = ((bits >> 23) & 0xff) as i32;
    let man = bits & 0x007f_ffff;

    if exp == 0xff {
        // Infinities map to infinities; every NaN becomes the quiet NaN.
        return if man == 0 { sign | F16_INF } else { sign | F16_QNAN };
    }

    let unbiased = exp - 127;
    if unbiased >= 16 {
        // At least 2^16: past the largest finite half even after rounding.
        return sign | F16_INF;
    }

    if unbiased >= -14 {
        // Lands in the normal half range (rounding may still carry to inf).
        let out = sign | (((unbiased + 15) as u16) << 10) | (man >> 13) as u16;
        // Bit 12 of the f32 mantissa is the round bit; the tie is broken
        // upward when any lower bit or the kept lsb (bit 13) is set.
        if man & 0x1000 != 0 && man & 0x2fff != 0 {
            return out + 1;
        }
        return out;
    }

    if unbiased < -25 {
        // Below half the smallest subnormal: rounds to signed zero.
        // (All f32 subnormals land here as well.)
        return sign;
    }

    // Subnormal half: the represented value is man16 * 2^-24, so shift the
    // full 24-bit significand (implicit bit restored) down into place.
    let significand = man | 0x0080_0000;
    let shift = (-unbiased - 1) as u32; // 14..=24
    let kept = (significand >> shift) as u16;
    let round = significand & (1 << (shift - 1));
    let sticky = significand & ((1 << (shift - 1)) - 1);
    let lsb = significand & (1 << shift);
    if round != 0 && (sticky != 0 || lsb != 0) {
        // A carry out of the top subnormal yields the smallest normal half,
        // whose bit pattern follows contiguously.
        return sign | (kept + 1);
    }
    sign | kept
}

/// Converts binary16 bits to the exactly equal `f32`.
pub fn from_f16_bits(h: u16) -> f32 {
    let sign = ((h as u32) & F16_SIGN) << 16;
    let exp = (h >> 10) & F16_EXP_MAX;
    let man = (h & 0x3ff) as u32;
    let bits = match (exp, man) {
        (0, 0) => sign,
        (0, _) => {
            // Subnormal: value is man * 2^-24. Renormalize around the top
            // set bit (position p gives value 1.f * 2^(p-24)).
            let p = 31 - man.leading_zeros();
            let frac = (man << (23 - p)) & 0x007f_ffff;
            sign | ((p + 127 - 24) << 23) | frac
        }
        (F16_EXP_MAX, 0) => sign | 0x7f80_0000,
        (F16_EXP_MAX, _) => sign | 0x7f80_0000 | (man << 13),
        _ => sign | ((exp as u32 + 127 - 15) << 23) | (man << 13),
    };
    f32::from_bits(bits)
}

/// Rounds an `f32` through binary16 and back.
#[inline]
pub fn truncate(x: f32) -> f32 {
    from_f16_bits(to_f16_bits(x))
}

/// Rounds every element of a vector through binary16 and back.
pub fn truncate_vector(v: &Vector) -> Vector {
    let data: Vec<f32> = v.as_slice().iter().map(|&x| truncate(x)).collect();
    Vector::from_vec(data)
}
