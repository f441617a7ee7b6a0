//! Hyperbolic tangent without a libm call per element.
//!
//! `tanh(x) = sign(x) e / (e + 2)` with `e = expm1(2|x|)`. The exponential
//! is reduced as `2|x| = k ln2 + r`, `|r| <= ln2 / 2`, and `expm1(r)` is a
//! Taylor polynomial, so `expm1(2|x|) = 2^k expm1(r) + (2^k - 1)` keeps full
//! relative precision near zero. Straight-line code, so slice loops over it
//! vectorise.

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
/// Adding and subtracting this rounds to the nearest integer and leaves the
/// integer in the low mantissa bits.
const ROUND: f64 = 6_755_399_441_055_744.0;
/// Beyond this argument of the exponential, tanh is 1 in double precision.
const SATURATION: f64 = 40.0;
/// `1 / n!` for `n = 1..=13`; the Taylor series of `expm1(r) / r`.
const INV_FACTORIAL: [f64; 13] = [
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
    1.0 / 39916800.0,
    1.0 / 479001600.0,
    1.0 / 6227020800.0,
];

#[inline(always)]
pub(crate) fn tanh(x: f64) -> f64 {
    let y = 2.0 * x.abs();
    // NaN fails the comparison and passes through.
    let y = if y > SATURATION { SATURATION } else { y };
    let t = y * LOG2_E + ROUND;
    let k = t - ROUND;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut q = INV_FACTORIAL[12];
    for c in INV_FACTORIAL[..12].iter().rev() {
        q = q * r + c;
    }
    let p = r * q;
    let scale = f64::from_bits((t.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(1023)) << 52);
    let e = scale * p + (scale - 1.0);
    (e / (e + 2.0)).copysign(x)
}

pub(crate) fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = tanh(*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn matches_libm_on_a_dense_sweep() {
        let mut worst = 0;
        for k in -400_000..=400_000 {
            let x = k as f64 * 5e-5;
            worst = worst.max(ulps(tanh(x), x.tanh()));
        }
        assert!(worst <= 4, "{worst} ulp");
    }

    #[test]
    fn tiny_large_and_special_arguments() {
        for x in [1e-300, 1e-20, 1e-9, 3e-5] {
            assert!(ulps(tanh(x), x.tanh()) <= 2, "{x}");
            assert_eq!(tanh(-x), -tanh(x));
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(25.0), 1.0);
        assert_eq!(tanh(-1e300), -1.0);
        assert_eq!(tanh(f64::INFINITY), 1.0);
        assert!(tanh(f64::NAN).is_nan());
    }

    proptest! {
        #[test]
        fn close_to_libm(x in -30.0f64..30.0) {
            prop_assert!(ulps(tanh(x), x.tanh()) <= 4);
        }
    }
}
