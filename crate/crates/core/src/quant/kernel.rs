//! Output-stationary i16 convolution kernel.
//!
//! The flattened receptive field (`k · cin` taps) is consumed two taps at a
//! time, and eight output channels share one accumulator vector, so each
//! step is a single `pmaddwd`. Weights are packed as
//! `[block][pair][lane 0..8][tap 0..2]`, zero-filled past `k · cin` and
//! `cout`. Inputs are pre-paired (see [`pair_up`]) and up to four output
//! rows share each weight load. All code paths do exact integer
//! arithmetic and agree bit for bit.

use super::fixed_point::rounding_divide_by_pot;
use super::Requantizer;

pub(super) const LANES: usize = 8;
/// Output rows accumulated together.
const ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Isa {
    // the portable fallback; on x86_64 only the tests pick it
    #[cfg_attr(target_arch = "x86_64", allow(dead_code))]
    Scalar,
    #[cfg(target_arch = "x86_64")]
    Sse2,
    #[cfg(target_arch = "x86_64")]
    Avx2,
}

impl Isa {
    pub(super) fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                return Isa::Avx2;
            }
            Isa::Sse2
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            Isa::Scalar
        }
    }
}

/// Packs `w[p][o]` (`p < taps`, `o < cout`) into the kernel layout.
pub(super) fn pack(w: impl Fn(usize, usize) -> i16, taps: usize, cout: usize) -> Vec<i16> {
    let pairs = taps.div_ceil(2);
    let blocks = cout.div_ceil(LANES);
    let mut packed = vec![0i16; blocks * pairs * LANES * 2];
    for b in 0..blocks {
        for q in 0..pairs {
            for l in 0..LANES {
                for s in 0..2 {
                    let (p, o) = (2 * q + s, b * LANES + l);
                    if p < taps && o < cout {
                        packed[((b * pairs + q) * LANES + l) * 2 + s] = w(p, o);
                    }
                }
            }
        }
    }
    packed
}

/// `out[i] = x[i] − z` as i16; values stay within ±255.
pub(super) fn centre(isa: Isa, x: &[i8], z: i32, out: &mut [i16]) {
    assert_eq!(x.len(), out.len());
    match isa {
        // SAFETY: avx2 was detected at runtime; lengths checked above
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::centre(x, z, out) },
        _ => out
            .iter_mut()
            .zip(x)
            .for_each(|(d, &q)| *d = (q as i32 - z) as i16),
    }
}

/// `out[i]` holds `x[i]` in its low and `x[i + 1]` in its high 16 bits,
/// the operand layout of `pmaddwd`.
pub(super) fn pair_up(isa: Isa, x: &[i16], out: &mut Vec<i32>) {
    out.clear();
    out.resize(x.len().saturating_sub(1), 0);
    match isa {
        // SAFETY: avx2 was detected at runtime; out is one shorter than x
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::pair_up(x, out) },
        _ => out
            .iter_mut()
            .zip(x.windows(2))
            .for_each(|(d, p)| *d = pair(p[0], p[1])),
    }
}

#[inline(always)]
fn pair(lo: i16, hi: i16) -> i32 {
    (lo as u16 as u32 | (hi as u16 as u32) << 16) as i32
}

/// `out[i] = (x[i] − z) · 2^shift`.
pub(super) fn widen(isa: Isa, x: &[i8], z: i32, shift: u8, out: &mut Vec<i32>) {
    out.clear();
    out.resize(x.len(), 0);
    match isa {
        // SAFETY: avx2 was detected at runtime; lengths are equal
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::widen(x, z, shift, out) },
        _ => out
            .iter_mut()
            .zip(x)
            .for_each(|(d, &q)| *d = (q as i32 - z) << shift),
    }
}

/// `a[i] = round_half_away((a[i] ⊕ b[i]) / 2^shift)`, `⊕` saturating.
pub(super) fn add_shift_down(isa: Isa, a: &mut [i32], b: &[i32], shift: u8) {
    assert_eq!(a.len(), b.len());
    match isa {
        // SAFETY: avx2 was detected at runtime; lengths checked above
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::add_shift_down(a, b, shift) },
        _ => a
            .iter_mut()
            .zip(b)
            .for_each(|(x, &y)| *x = rounding_divide_by_pot(x.saturating_add(y), shift)),
    }
}

/// `out[r][o] = clamp(clamp(acc[r][o], ±2^16) + z, lo, 127)` for the
/// first `cout` of each `acc` row; the pre-clamp keeps the add in range
/// without changing the result.
pub(super) fn finish(
    isa: Isa,
    acc: &[i32],
    width: usize,
    cout: usize,
    z: i32,
    lo: i32,
    out: &mut Vec<i8>,
) {
    let rows = acc.len().checked_div(width).unwrap_or(0);
    out.clear();
    out.resize(rows * cout, 0);
    #[cfg(target_arch = "x86_64")]
    if isa == Isa::Avx2 && width == cout {
        // SAFETY: avx2 was detected at runtime; out and acc have equal length
        unsafe { x86::finish(acc, z, lo, out) };
        return;
    }
    let _ = isa;
    for (dst, row) in out.chunks_exact_mut(cout).zip(acc.chunks_exact(width)) {
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = finish_one(v, z, lo);
        }
    }
}

#[inline(always)]
pub(super) fn finish_one(v: i32, z: i32, lo: i32) -> i8 {
    (v.clamp(-65_536, 65_536) + z).clamp(lo, 127) as i8
}

#[inline(always)]
fn unpair(p: i32) -> (i32, i32) {
    (p as i16 as i32, p >> 16)
}

/// For every row `r < rows` and output `o`:
/// `acc[r][o] += Σ_q xs[r · stride + 2q] ⊙ w[q][o]`, where `⊙` is the
/// two-tap product of a paired input and a packed weight pair. Rows of
/// `acc` are `acc.len() / rows` wide, a whole number of blocks.
#[inline]
pub(super) fn accumulate(
    isa: Isa,
    xs: &[i32],
    stride: usize,
    rows: usize,
    w: &[i16],
    pairs: usize,
    acc: &mut [i32],
) {
    if rows == 0 {
        return;
    }
    let width = acc.len() / rows;
    assert!(
        pairs > 0
            && width.is_multiple_of(LANES)
            && width * rows == acc.len()
            && w.len() == width / LANES * pairs * 2 * LANES
            && xs.len() > (rows - 1) * stride + 2 * (pairs - 1)
    );
    match isa {
        Isa::Scalar => scalar(xs, stride, rows, w, pairs, acc),
        // SAFETY: shapes checked above; the feature was detected at runtime
        // (SSE2 is part of the x86_64 baseline).
        #[cfg(target_arch = "x86_64")]
        Isa::Sse2 => unsafe { x86::sse2(xs, stride, rows, w, pairs, acc) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::avx2(xs, stride, rows, w, pairs, acc) },
    }
}

/// Row indices of the group starting at `r`; past the end, the last row
/// is repeated (computed again, never stored).
#[inline(always)]
fn group(r: usize, rows: usize) -> [usize; ROWS] {
    std::array::from_fn(|i| (r + i).min(rows - 1))
}

/// `xs[i] = r.apply(xs[i])` for every element.
pub(super) fn requantize(isa: Isa, r: &Requantizer, xs: &mut [i32]) {
    match isa {
        // SAFETY: avx2 was detected at runtime
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::requantize(r, xs) },
        _ => xs.iter_mut().for_each(|v| *v = r.apply(*v)),
    }
}

fn scalar(xs: &[i32], stride: usize, rows: usize, w: &[i16], pairs: usize, acc: &mut [i32]) {
    let width = acc.len() / rows;
    for (b, wb) in w.chunks_exact(pairs * 2 * LANES).enumerate() {
        for r in 0..rows {
            let x = &xs[r * stride..];
            let a = &mut acc[r * width + b * LANES..][..LANES];
            for (q, wq) in wb.chunks_exact(2 * LANES).enumerate() {
                let (x0, x1) = unpair(x[2 * q]);
                for (a, wl) in a.iter_mut().zip(wq.chunks_exact(2)) {
                    *a += x0 * wl[0] as i32 + x1 * wl[1] as i32;
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use super::{group, Requantizer, LANES, ROWS};
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn avx2(
        xs: &[i32],
        stride: usize,
        rows: usize,
        w: &[i16],
        pairs: usize,
        acc: &mut [i32],
    ) {
        let width = acc.len() / rows;
        let span = 2 * pairs - 1;
        for (b, wb) in w.chunks_exact(pairs * 2 * LANES).enumerate() {
            for r in (0..rows).step_by(ROWS) {
                let g = group(r, rows);
                let x = g.map(|i| &xs[i * stride..][..span]);
                let mut a = g.map(|i| {
                    _mm256_loadu_si256(
                        acc[i * width + b * LANES..][..LANES].as_ptr() as *const __m256i
                    )
                });
                for (q, wq) in wb.chunks_exact(2 * LANES).enumerate() {
                    let wv = _mm256_loadu_si256(wq.as_ptr() as *const __m256i);
                    for i in 0..ROWS {
                        a[i] = _mm256_add_epi32(
                            a[i],
                            _mm256_madd_epi16(_mm256_set1_epi32(x[i][2 * q]), wv),
                        );
                    }
                }
                for (i, v) in a.iter().enumerate().take(rows - r) {
                    _mm256_storeu_si256(
                        acc[(r + i) * width + b * LANES..][..LANES].as_mut_ptr() as *mut __m256i,
                        *v,
                    );
                }
            }
        }
    }

    #[target_feature(enable = "sse2")]
    pub(super) unsafe fn sse2(
        xs: &[i32],
        stride: usize,
        rows: usize,
        w: &[i16],
        pairs: usize,
        acc: &mut [i32],
    ) {
        let width = acc.len() / rows;
        let span = 2 * pairs - 1;
        let half = LANES / 2;
        let load = |acc: &[i32], i: usize, h: usize| {
            _mm_loadu_si128(acc[i * width + h..][..half].as_ptr() as *const __m128i)
        };
        for (b, wb) in w.chunks_exact(pairs * 2 * LANES).enumerate() {
            let (o_lo, o_hi) = (b * LANES, b * LANES + half);
            for r in (0..rows).step_by(ROWS) {
                let g = group(r, rows);
                let x = g.map(|i| &xs[i * stride..][..span]);
                let mut lo = g.map(|i| load(acc, i, o_lo));
                let mut hi = g.map(|i| load(acc, i, o_hi));
                for (q, wq) in wb.chunks_exact(2 * LANES).enumerate() {
                    let w_lo = _mm_loadu_si128(wq.as_ptr() as *const __m128i);
                    let w_hi = _mm_loadu_si128(wq[LANES..].as_ptr() as *const __m128i);
                    for i in 0..ROWS {
                        let xv = _mm_set1_epi32(x[i][2 * q]);
                        lo[i] = _mm_add_epi32(lo[i], _mm_madd_epi16(xv, w_lo));
                        hi[i] = _mm_add_epi32(hi[i], _mm_madd_epi16(xv, w_hi));
                    }
                }
                for i in 0..(rows - r).min(ROWS) {
                    let row = (r + i) * width;
                    _mm_storeu_si128(
                        acc[row + o_lo..][..half].as_mut_ptr() as *mut __m128i,
                        lo[i],
                    );
                    _mm_storeu_si128(
                        acc[row + o_hi..][..half].as_mut_ptr() as *mut __m128i,
                        hi[i],
                    );
                }
            }
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn centre(x: &[i8], z: i32, out: &mut [i16]) {
        let zv = _mm256_set1_epi16(z as i16);
        let n = x.len() / 16 * 16;
        for (d, q) in out[..n].chunks_exact_mut(16).zip(x[..n].chunks_exact(16)) {
            let wide = _mm256_cvtepi8_epi16(_mm_loadu_si128(q.as_ptr() as *const __m128i));
            _mm256_storeu_si256(d.as_mut_ptr() as *mut __m256i, _mm256_sub_epi16(wide, zv));
        }
        for (d, &q) in out[n..].iter_mut().zip(&x[n..]) {
            *d = (q as i32 - z) as i16;
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn pair_up(x: &[i16], out: &mut [i32]) {
        let mask = _mm256_set1_epi32(0xFFFF);
        let n = out.len() / LANES * LANES;
        for (i, d) in out[..n].chunks_exact_mut(LANES).enumerate() {
            let at = |o: usize| {
                _mm256_cvtepi16_epi32(_mm_loadu_si128(
                    x[i * LANES + o..][..LANES].as_ptr() as *const __m128i
                ))
            };
            let v = _mm256_or_si256(_mm256_and_si256(at(0), mask), _mm256_slli_epi32(at(1), 16));
            _mm256_storeu_si256(d.as_mut_ptr() as *mut __m256i, v);
        }
        for (j, d) in out.iter_mut().enumerate().skip(n) {
            *d = super::pair(x[j], x[j + 1]);
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn finish(acc: &[i32], z: i32, lo: i32, out: &mut [i8]) {
        let (min, max) = (_mm256_set1_epi32(-65_536), _mm256_set1_epi32(65_536));
        let (zv, lov, hiv) = (
            _mm256_set1_epi32(z),
            _mm256_set1_epi32(lo),
            _mm256_set1_epi32(127),
        );
        let one = |p: &[i32]| {
            let v = _mm256_loadu_si256(p.as_ptr() as *const __m256i);
            let v = _mm256_add_epi32(_mm256_min_epi32(_mm256_max_epi32(v, min), max), zv);
            _mm256_min_epi32(_mm256_max_epi32(v, lov), hiv)
        };
        // packs interleave the 128-bit halves; the permute restores order
        let order = _mm256_setr_epi32(0, 4, 1, 5, 2, 6, 3, 7);
        let n = acc.len() / 32 * 32;
        for (d, a) in out[..n].chunks_exact_mut(32).zip(acc[..n].chunks_exact(32)) {
            let ab = _mm256_packs_epi32(one(&a[0..8]), one(&a[8..16]));
            let cd = _mm256_packs_epi32(one(&a[16..24]), one(&a[24..32]));
            let v = _mm256_permutevar8x32_epi32(_mm256_packs_epi16(ab, cd), order);
            _mm256_storeu_si256(d.as_mut_ptr() as *mut __m256i, v);
        }
        for (d, &v) in out[n..].iter_mut().zip(&acc[n..]) {
            *d = super::finish_one(v, z, lo);
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn widen(x: &[i8], z: i32, shift: u8, out: &mut [i32]) {
        let zv = _mm256_set1_epi32(z);
        let count = _mm_cvtsi32_si128(shift as i32);
        let n = x.len() / LANES * LANES;
        for (d, q) in out[..n]
            .chunks_exact_mut(LANES)
            .zip(x[..n].chunks_exact(LANES))
        {
            let wide = _mm256_cvtepi8_epi32(_mm_loadl_epi64(q.as_ptr() as *const __m128i));
            _mm256_storeu_si256(
                d.as_mut_ptr() as *mut __m256i,
                _mm256_sll_epi32(_mm256_sub_epi32(wide, zv), count),
            );
        }
        for (d, &q) in out[n..].iter_mut().zip(&x[n..]) {
            *d = (q as i32 - z) << shift;
        }
    }

    /// Saturation: the wrapped sum is wrong exactly when both operands
    /// share a sign the sum does not; then `MAX` or `MIN` by that sign.
    /// The rounding shift works on the magnitude as unsigned, which also
    /// covers `|MIN| = 2^31`.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn add_shift_down(a: &mut [i32], b: &[i32], shift: u8) {
        let half = _mm256_set1_epi32(if shift > 0 { 1 << (shift - 1) } else { 0 });
        let count = _mm_cvtsi32_si128(shift as i32);
        let max = _mm256_set1_epi32(i32::MAX);
        let n = a.len() / LANES * LANES;
        for (x, y) in a[..n]
            .chunks_exact_mut(LANES)
            .zip(b[..n].chunks_exact(LANES))
        {
            let p = x.as_mut_ptr() as *mut __m256i;
            let (u, v) = (
                _mm256_loadu_si256(p),
                _mm256_loadu_si256(y.as_ptr() as *const __m256i),
            );
            let sum = _mm256_add_epi32(u, v);
            let overflow = _mm256_andnot_si256(_mm256_xor_si256(u, v), _mm256_xor_si256(u, sum));
            // MAX for positive operands, MIN (= MAX + 1) for negative ones
            let sat = _mm256_sub_epi32(max, _mm256_srai_epi32(u, 31));
            let sum = _mm256_blendv_ps(
                _mm256_castsi256_ps(sum),
                _mm256_castsi256_ps(sat),
                _mm256_castsi256_ps(overflow),
            );
            let sum = _mm256_castps_si256(sum);
            let mag = _mm256_srl_epi32(_mm256_add_epi32(_mm256_abs_epi32(sum), half), count);
            _mm256_storeu_si256(p, _mm256_sign_epi32(mag, sum));
        }
        for (x, &y) in a[n..].iter_mut().zip(&b[n..]) {
            *x = super::rounding_divide_by_pot(x.saturating_add(y), shift);
        }
    }

    /// Same arithmetic as [`Requantizer::apply`], on magnitudes: `|v| · m0`
    /// is an exact 64-bit unsigned product, both roundings add half and
    /// shift, and the sign of `v` is restored at the end. Chunks where the
    /// left shift could saturate, and the tail, go through the scalar path.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn requantize(r: &Requantizer, xs: &mut [i32]) {
        let ls = r.left_shift as u32;
        let limit = if ls >= 31 { 0 } else { (1u32 << (31 - ls)) - 1 };
        // unsigned compare against the limit, via the sign-flip trick
        let flip = _mm256_set1_epi32(i32::MIN);
        let limit = _mm256_set1_epi32((limit ^ 0x8000_0000) as i32);
        let count = _mm_cvtsi32_si128(ls as i32);
        let m0 = _mm256_set1_epi64x(r.multiplier.m0 as i64);
        let round = _mm256_set1_epi64x(1 << 30);
        let rs = r.multiplier.right_shift.min(40) as i64;
        let half = _mm256_set1_epi64x(if rs > 0 { 1 << (rs - 1) } else { 0 });
        let rsc = _mm_cvtsi64_si128(rs);
        let scale = |x: __m256i| {
            let hi = _mm256_srli_epi64(_mm256_add_epi64(_mm256_mul_epu32(x, m0), round), 31);
            _mm256_srl_epi64(_mm256_add_epi64(hi, half), rsc)
        };
        let mut chunks = xs.chunks_exact_mut(LANES);
        for c in &mut chunks {
            let p = c.as_mut_ptr() as *mut __m256i;
            let mut v = _mm256_loadu_si256(p);
            let mut mag = _mm256_abs_epi32(v);
            if ls > 0 {
                let over = _mm256_cmpgt_epi32(_mm256_xor_si256(mag, flip), limit);
                if _mm256_movemask_epi8(over) != 0 {
                    c.iter_mut().for_each(|x| *x = r.apply(*x));
                    continue;
                }
                v = _mm256_sll_epi32(v, count);
                mag = _mm256_sll_epi32(mag, count);
            }
            let even = scale(mag);
            let odd = scale(_mm256_srli_epi64(mag, 32));
            let res = _mm256_blend_epi32(even, _mm256_slli_epi64(odd, 32), 0b1010_1010);
            _mm256_storeu_si256(p, _mm256_sign_epi32(res, v));
        }
        chunks
            .into_remainder()
            .iter_mut()
            .for_each(|v| *v = r.apply(*v));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::decompose_scale;
    use crate::rng;

    #[test]
    fn vector_requantize_matches_scalar() {
        let mut r = rng::seeded(8);
        for _ in 0..2000 {
            let m = 2f64.powf(rng::uniform_range(&mut r, -24.0, 16.0));
            let q = decompose_scale(m).unwrap();
            let span = 2f64.powf(rng::uniform_range(&mut r, 0.0, 31.0));
            let mut xs: Vec<i32> = (0..37)
                .map(|_| (rng::uniform_range(&mut r, -1.0, 1.0) * span) as i32)
                .collect();
            xs[3] = i32::MIN;
            xs[4] = i32::MAX;
            xs[5] = 0;
            let want: Vec<i32> = xs.iter().map(|&x| q.apply(x)).collect();
            let mut got = xs.clone();
            requantize(Isa::detect(), &q, &mut got);
            assert_eq!(got, want, "m={m}");
            // a chunk that never saturates takes the vector path
            let mut small: Vec<i32> = xs.iter().map(|&x| x >> 20).collect();
            let want: Vec<i32> = small.iter().map(|&x| q.apply(x)).collect();
            requantize(Isa::detect(), &q, &mut small);
            assert_eq!(small, want, "m={m}");
        }
    }

    #[test]
    fn every_isa_matches_naive_sum() {
        let mut r = rng::seeded(5);
        for (taps, cout, rows, stride) in [
            (7usize, 16usize, 9usize, 1usize),
            (48, 16, 4, 32),
            (16, 16, 1, 16),
            (1, 3, 5, 1),
            (9, 8, 6, 2),
            (30, 20, 7, 3),
        ] {
            let w: Vec<i16> = (0..taps * cout)
                .map(|_| rng::uniform_range(&mut r, -127.0, 128.0) as i16)
                .collect();
            let len = (rows - 1) * stride + taps + 1;
            let x: Vec<i16> = (0..len)
                .map(|_| rng::uniform_range(&mut r, -255.0, 256.0) as i16)
                .collect();
            let packed = pack(|p, o| w[p * cout + o], taps, cout);
            let mut xs = Vec::new();
            pair_up(Isa::Scalar, &x, &mut xs);
            let pairs = taps.div_ceil(2);
            let width = cout.div_ceil(LANES) * LANES;
            let mut want = vec![7i32; rows * cout];
            for t in 0..rows {
                for p in 0..taps {
                    for o in 0..cout {
                        want[t * cout + o] += x[t * stride + p] as i32 * w[p * cout + o] as i32;
                    }
                }
            }
            let mut isas = vec![Isa::Scalar, Isa::detect()];
            #[cfg(target_arch = "x86_64")]
            isas.push(Isa::Sse2);
            for isa in isas {
                let mut acc = vec![7i32; rows * width];
                accumulate(isa, &xs, stride, rows, &packed, pairs, &mut acc);
                let got: Vec<i32> = acc
                    .chunks_exact(width)
                    .flat_map(|row| row[..cout].to_vec())
                    .collect();
                assert_eq!(got, want, "{isa:?} taps={taps} cout={cout} rows={rows}");
            }
        }
    }

    #[test]
    fn vector_helpers_match_scalar() {
        let mut r = rng::seeded(9);
        for len in [0usize, 1, 7, 16, 33, 129, 2048] {
            let x: Vec<i8> = (0..len)
                .map(|_| rng::uniform_range(&mut r, -128.0, 128.0).floor() as i8)
                .collect();
            let z = rng::uniform_range(&mut r, -128.0, 128.0).floor() as i32;
            let (mut a, mut b) = (vec![0i16; len], vec![0i16; len]);
            centre(Isa::Scalar, &x, z, &mut a);
            centre(Isa::detect(), &x, z, &mut b);
            assert_eq!(a, b);
            let (mut pa, mut pb) = (Vec::new(), Vec::new());
            pair_up(Isa::Scalar, &a, &mut pa);
            pair_up(Isa::detect(), &a, &mut pb);
            assert_eq!(pa, pb);
            if len > 1 {
                assert_eq!(unpair(pa[0]), (a[0] as i32, a[1] as i32));
            }
            let acc: Vec<i32> = (0..len * 16)
                .map(|_| {
                    (rng::uniform_range(&mut r, -1.0, 1.0)
                        * 2f64.powf(rng::uniform_range(&mut r, 0.0, 31.0)))
                        as i32
                })
                .chain(
                    [i32::MIN, i32::MAX, 65_537, -65_537]
                        .into_iter()
                        .take(if len > 0 { 4 } else { 0 }),
                )
                .take(len * 16)
                .collect();
            let (mut fa, mut fb) = (Vec::new(), Vec::new());
            finish(Isa::Scalar, &acc, 16, 16, z, z.max(-128), &mut fa);
            finish(Isa::detect(), &acc, 16, 16, z, z.max(-128), &mut fb);
            assert_eq!(fa, fb, "len {len}");
        }
    }

    #[test]
    fn vector_add_path_matches_scalar() {
        let mut r = rng::seeded(10);
        for len in [0usize, 5, 8, 64, 1001] {
            let x: Vec<i8> = (0..len)
                .map(|_| rng::uniform_range(&mut r, -128.0, 128.0).floor() as i8)
                .collect();
            let (mut wa, mut wb) = (Vec::new(), Vec::new());
            widen(Isa::Scalar, &x, -7, 12, &mut wa);
            widen(Isa::detect(), &x, -7, 12, &mut wb);
            assert_eq!(wa, wb);
            let big = |r: &mut crate::rng::Rng| {
                (rng::uniform_range(r, -1.0, 1.0) * 2f64.powf(rng::uniform_range(r, 0.0, 31.5)))
                    as i32
            };
            let mut a: Vec<i32> = (0..len).map(|_| big(&mut r)).collect();
            let mut b: Vec<i32> = (0..len).map(|_| big(&mut r)).collect();
            for (i, (x, y)) in [
                (i32::MAX, 1),
                (i32::MIN, -1),
                (i32::MIN, 0),
                (i32::MIN, i32::MIN),
                (-5, 4),
            ]
            .into_iter()
            .enumerate()
            .take(len)
            {
                a[i] = x;
                b[i] = y;
            }
            for shift in [0u8, 1, 12] {
                let (mut sa, mut sb) = (a.clone(), a.clone());
                add_shift_down(Isa::Scalar, &mut sa, &b, shift);
                add_shift_down(Isa::detect(), &mut sb, &b, shift);
                assert_eq!(sa, sb, "len {len} shift {shift}");
            }
        }
    }
}
