//! Integer-only rescaling: a real multiplier `M` is carried as a Q31
//! mantissa `m0 ∈ [2^30, 2^31)` and a right shift, so that
//! `M ≈ m0 · 2^(−31 − right_shift)`. Every rounding step rounds half away
//! from zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointMultiplier {
    pub m0: i32,
    pub right_shift: u8,
}

impl FixedPointMultiplier {
    /// The real value represented.
    pub fn value(&self) -> f64 {
        self.m0 as f64 * 2f64.powi(-31 - self.right_shift as i32)
    }
}

/// Splits `M ∈ (0, 1)` into a Q31 mantissa and right shift.
pub fn decompose_multiplier(m: f64) -> Result<FixedPointMultiplier> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "multiplier {m} outside (0, 1)"
        )));
    }
    let mut shift = 0i32;
    let mut scaled = m;
    while scaled < 0.5 {
        scaled *= 2.0;
        shift += 1;
    }
    // scaled · 2^31 is exact (power-of-two scaling); round it once
    let mut m0 = (scaled * 2f64.powi(31)).round() as i64;
    if m0 == 1i64 << 31 {
        if shift == 0 {
            return Err(Error::InvalidArgument(format!(
                "multiplier {m} rounds to 1.0 in Q31"
            )));
        }
        m0 >>= 1;
        shift -= 1;
    }
    if shift > u8::MAX as i32 - 31 {
        return Err(Error::InvalidArgument(format!(
            "multiplier {m} too small to represent"
        )));
    }
    Ok(FixedPointMultiplier {
        m0: m0 as i32,
        right_shift: shift as u8,
    })
}

/// `round_half_away(a · b / 2^31)`, saturating to the i32 range.
#[inline]
pub fn saturating_rounding_doubling_high_mul(a: i32, b: i32) -> i32 {
    let prod = a as i64 * b as i64;
    let mag = (prod.unsigned_abs() + (1u64 << 30)) >> 31;
    let signed = if prod < 0 { -(mag as i64) } else { mag as i64 };
    signed.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// `round_half_away(x / 2^shift)`.
#[inline]
pub fn rounding_divide_by_pot(x: i32, shift: u8) -> i32 {
    if shift == 0 {
        return x;
    }
    let mag = (x.unsigned_abs() as u64 + (1u64 << (shift - 1))) >> shift;
    if x < 0 {
        -(mag as i64) as i32
    } else {
        mag as i32
    }
}

/// `x · M` in integer arithmetic: doubling high multiply by `m0`, then a
/// rounding right shift.
#[inline]
pub fn fixed_point_mul(x: i32, m: FixedPointMultiplier) -> i32 {
    rounding_divide_by_pot(
        saturating_rounding_doubling_high_mul(x, m.m0),
        m.right_shift,
    )
}

/// A positive real rescale, including factors ≥ 1, as
/// `fixed_point_mul(x << left_shift, multiplier)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requantizer {
    pub left_shift: u8,
    pub multiplier: FixedPointMultiplier,
}

impl Requantizer {
    pub fn value(&self) -> f64 {
        self.multiplier.value() * 2f64.powi(self.left_shift as i32)
    }

    /// Applies the rescale; the left shift saturates at the i32 range.
    #[inline]
    pub fn apply(&self, x: i32) -> i32 {
        // Fused form of `fixed_point_mul(sat(x << ls), multiplier)`: both
        // roundings are symmetric, so they can run on the magnitude, and the
        // intermediate never leaves the i32 range (|v·m0| < 2^62).
        let v = if self.left_shift == 0 {
            x as i64
        } else {
            ((x as i64) << self.left_shift).clamp(i32::MIN as i64, i32::MAX as i64)
        };
        let prod = v * self.multiplier.m0 as i64;
        let mut mag = (prod.unsigned_abs() + (1u64 << 30)) >> 31;
        let rs = self.multiplier.right_shift.min(40);
        if rs > 0 {
            mag = (mag + (1u64 << (rs - 1))) >> rs;
        }
        if prod < 0 {
            -(mag as i64) as i32
        } else {
            mag as i32
        }
    }
}

/// Decomposes any `M > 0`; values ≥ 1 (or rounding to 1) take a left shift.
pub fn decompose_scale(m: f64) -> Result<Requantizer> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rescale factor {m} must be positive and finite"
        )));
    }
    let mut left = 0u8;
    let mut scaled = m;
    while scaled >= 1.0 && left < 31 {
        scaled *= 0.5;
        left += 1;
    }
    if scaled >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "rescale factor {m} too large"
        )));
    }
    match decompose_multiplier(scaled) {
        Ok(multiplier) => Ok(Requantizer {
            left_shift: left,
            multiplier,
        }),
        Err(_) if left < 31 => {
            // scaled rounds to 1.0 in Q31: move one more factor into the shift
            let multiplier = decompose_multiplier(scaled * 0.5)?;
            Ok(Requantizer {
                left_shift: left + 1,
                multiplier,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Exact decomposition via the f64 bit pattern: M = mant · 2^exp with
    /// integer mant, so M · 2^(31+s) can be rounded in 128-bit integers.
    fn oracle_decompose(m: f64) -> (i64, u32) {
        let bits = m.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32 - 1075;
        let mant = ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as u128;
        // smallest s with M·2^s >= 1/2
        let mut s = 0u32;
        while ((mant << (s + 1)) as f64) * 2f64.powi(exp) < 1.0 {
            s += 1;
        }
        // m0 = round(mant · 2^(exp + 31 + s)), exp + 31 + s is negative here
        let down = -(exp + 31 + s as i32);
        assert!(down > 0);
        let q = (mant + (1u128 << (down - 1))) >> down;
        (q as i64, s)
    }

    #[test]
    fn half_is_exact() {
        let m = decompose_multiplier(0.5).unwrap();
        assert_eq!(
            m,
            FixedPointMultiplier {
                m0: 1 << 30,
                right_shift: 0
            }
        );
    }

    #[test]
    fn point_three() {
        let m = decompose_multiplier(0.3).unwrap();
        assert_eq!((m.m0 as i64, m.right_shift as u32), oracle_decompose(0.3));
        assert_eq!(
            m,
            FixedPointMultiplier {
                m0: 1_288_490_189,
                right_shift: 1
            }
        );
    }

    #[test]
    fn close_to_one() {
        let m = decompose_multiplier(0.9999999).unwrap();
        assert_eq!(m.right_shift, 0);
        assert_eq!((m.m0 as i64, 0), oracle_decompose(0.9999999));
        assert_eq!(m.m0 as i64, (0.9999999f64 * 2f64.powi(31)).round() as i64);
    }

    #[test]
    fn out_of_range_rejected() {
        for m in [0.0, -0.2, 1.0, 1.5, f64::NAN] {
            assert!(decompose_multiplier(m).is_err(), "{m}");
        }
    }

    #[test]
    fn random_decompositions_match_oracle() {
        let mut r = rng::seeded(5);
        for _ in 0..20_000 {
            let m = rng::uniform(&mut r).powi(3).max(1e-9);
            let d = decompose_multiplier(m).unwrap();
            assert_eq!(
                (d.m0 as i64, d.right_shift as u32),
                oracle_decompose(m),
                "M={m}"
            );
            assert!((m - d.value()).abs() <= 2f64.powi(-31));
            assert!(d.m0 >= 1 << 30);
        }
    }

    #[test]
    fn zero_times_anything() {
        let m = decompose_multiplier(0.7).unwrap();
        assert_eq!(fixed_point_mul(0, m), 0);
    }

    #[test]
    fn power_of_two_input() {
        let m = decompose_multiplier(0.5).unwrap();
        let y = fixed_point_mul(1 << 30, m);
        assert!((y - (1 << 29)).abs() <= 1);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(rounding_divide_by_pot(5, 1), 3);
        assert_eq!(rounding_divide_by_pot(-5, 1), -3);
        assert_eq!(rounding_divide_by_pot(-4, 1), -2);
        assert_eq!(rounding_divide_by_pot(6, 2), 2);
        assert_eq!(rounding_divide_by_pot(-6, 2), -2);
        // a·b/2^31 = ±0.5 exactly
        assert_eq!(saturating_rounding_doubling_high_mul(1, 1 << 30), 1);
        assert_eq!(saturating_rounding_doubling_high_mul(-1, 1 << 30), -1);
        assert_eq!(
            saturating_rounding_doubling_high_mul(i32::MIN, i32::MIN),
            i32::MAX
        );
    }

    #[test]
    fn million_draws_within_one_of_wide_reference() {
        let mut r = rng::seeded(31337);
        for _ in 0..1_000_000 {
            let m = rng::uniform(&mut r).clamp(1e-6, 0.999_999);
            let x = (rng::uniform_range(&mut r, -1.0, 1.0) * (1u64 << 31) as f64) as i32;
            let d = decompose_multiplier(m).unwrap();
            let got = fixed_point_mul(x, d) as i64;
            let reference = (x as f64 * m).round() as i64;
            assert!(
                (got - reference).abs() <= 1,
                "x={x} M={m}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn requantizer_handles_factors_above_one() {
        for m in [0.3, 1.0, 1.7, 12.5, 1000.0] {
            let q = decompose_scale(m).unwrap();
            assert!(
                (q.value() - m).abs() <= m * 2f64.powi(-29),
                "{m}: {}",
                q.value()
            );
            for x in [-1000, -3, 0, 7, 4096] {
                assert!((q.apply(x) as f64 - x as f64 * m).abs() <= 1.0, "{m} {x}");
            }
        }
        assert!(decompose_scale(0.0).is_err());
    }

    #[test]
    fn fused_apply_matches_composed_steps() {
        let mut r = rng::seeded(99);
        for _ in 0..200_000 {
            let m = 2f64.powf(rng::uniform_range(&mut r, -20.0, 14.0));
            let q = decompose_scale(m).unwrap();
            let x = match rng::uniform(&mut r) {
                u if u < 0.1 => [i32::MIN, i32::MAX, 0, -1, 1][(u * 50.0) as usize],
                u if u < 0.5 => (rng::uniform_range(&mut r, -1.0, 1.0) * 70_000.0) as i32,
                _ => (rng::uniform_range(&mut r, -1.0, 1.0) * 2_147_483_647.0) as i32,
            };
            let shifted =
                ((x as i64) << q.left_shift).clamp(i32::MIN as i64, i32::MAX as i64) as i32;
            assert_eq!(
                q.apply(x),
                fixed_point_mul(shifted, q.multiplier),
                "x={x} m={m}"
            );
        }
    }
}
