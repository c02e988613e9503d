//! Small exact-arithmetic helpers shared by the other modules.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// `(-1)^b`: bit `0` maps to `+1`, bit `1` maps to `-1`.
#[inline]
pub fn sign_from_bit(b: bool) -> i8 {
    if b {
        -1
    } else {
        1
    }
}

/// Inverse of [`sign_from_bit`]; panics on values outside `{-1, +1}`.
#[inline]
pub fn bit_from_sign(s: i8) -> bool {
    match s {
        1 => false,
        -1 => true,
        other => panic!("not a sign value: {other}"),
    }
}

/// The point of `{-1,+1}^n` selected by the low `n` bits of `mask`
/// (bit `j` gives coordinate `j`).
pub fn signs_from_mask(n: usize, mask: u64) -> Vec<i8> {
    (0..n).map(|j| sign_from_bit(mask >> j & 1 == 1)).collect()
}

/// Rational `p/q` from integer parts, with `q != 0`.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Exact sign of a rational: `-1`, `0`, or `+1`.
pub fn rational_sign(x: &BigRational) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

/// Sum of squares of a weight vector, as an exact (nonnegative) integer.
pub fn sum_of_squares(weights: &[BigInt]) -> BigInt {
    weights.iter().map(|w| w * w).sum()
}

/// Sum of absolute values of a weight vector.
pub fn l1_norm(weights: &[BigInt]) -> BigInt {
    weights.iter().map(|w| w.abs()).sum()
}

/// Smallest `m >= 0` with `m^b >= c^b * n^a`, i.e. the exact ceiling of
/// `c * n^(a/b)` for integer `c, n` and a rational exponent `a/b` (`b >= 1`).
pub fn ceil_mul_pow(c: u64, n: u64, a: u32, b: u32) -> u64 {
    assert!(b >= 1, "exponent denominator must be positive");
    if n == 0 || c == 0 {
        return 0;
    }
    let target = BigUint::from(c).pow(b) * BigUint::from(n).pow(a);
    // binary search on m
    let mut lo: u64 = 0;
    let mut hi: u64 = 1;
    while BigUint::from(hi).pow(b) < target {
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if BigUint::from(mid).pow(b) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Exact ceiling of `n^(a/b)`.
pub fn ceil_pow(n: u64, a: u32, b: u32) -> u64 {
    ceil_mul_pow(1, n, a, b)
}

/// Largest `m >= 0` with `m^b <= c^b * n^a`, i.e. the exact floor of
/// `c * n^(a/b)`.
pub fn floor_mul_pow(c: u64, n: u64, a: u32, b: u32) -> u64 {
    let m = ceil_mul_pow(c, n, a, b);
    // The floor equals the ceiling exactly when c * n^(a/b) is an integer.
    if BigUint::from(m).pow(b) == BigUint::from(c).pow(b) * BigUint::from(n).pow(a) {
        m
    } else {
        m - 1
    }
}

/// Exact floor of `n^(a/b)`.
pub fn floor_pow(n: u64, a: u32, b: u32) -> u64 {
    floor_mul_pow(1, n, a, b)
}

/// Smallest `m >= 0` with `(m * 2^shift)^b >= c^b * n^a`, i.e. the exact
/// ceiling of `c * n^(a/b) / 2^shift`.
pub fn ceil_mul_pow_shifted(c: u64, n: u64, a: u32, b: u32, shift: u32) -> u64 {
    assert!(b >= 1, "exponent denominator must be positive");
    if n == 0 || c == 0 {
        return 0;
    }
    let target = BigUint::from(c).pow(b) * BigUint::from(n).pow(a);
    let scaled = |m: u64| (BigUint::from(m) << shift as usize).pow(b);
    let mut lo: u64 = 0;
    let mut hi: u64 = 1;
    while scaled(hi) < target {
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if scaled(mid) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// `true` iff `n^(a/b) < 2^q`, decided exactly as `n^a < 2^(q*b)`.
pub fn pow_less_than_pow2(n: u64, a: u32, b: u32, q: u32) -> bool {
    BigUint::from(n).pow(a) < (BigUint::one() << (q as usize * b as usize))
}

/// `true` iff `2^q < n^(a/b)`, decided exactly as `2^(q*b) < n^a`.
pub fn pow2_less_than_pow(q: u32, n: u64, a: u32, b: u32) -> bool {
    (BigUint::one() << (q as usize * b as usize)) < BigUint::from(n).pow(a)
}

/// `x^k` for a rational base and nonnegative integer exponent.
pub fn ratio_pow(x: &BigRational, k: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_mapping_follows_sign_convention() {
        assert_eq!(signs_from_mask(3, 0b000), vec![1, 1, 1]);
        assert_eq!(signs_from_mask(3, 0b101), vec![-1, 1, -1]);
    }

    #[test]
    fn ceilings_of_rational_powers_are_exact() {
        // 12^(3/5) = 4.437..., so the ceiling is 5.
        assert_eq!(ceil_pow(12, 3, 5), 5);
        // 2 * 12^(1/20) = 2.26...
        assert_eq!(ceil_mul_pow(2, 12, 1, 20), 3);
        // exact powers stay exact: 16^(3/4) = 8
        assert_eq!(ceil_pow(16, 3, 4), 8);
        assert_eq!(ceil_pow(1, 7, 3), 1);
        assert_eq!(ceil_pow(0, 2, 3), 0);
    }

    #[test]
    fn power_comparisons_match_logs() {
        // 10^(5/18) < 2 and 2 < 10^(12/36) = 10^(1/3)
        assert!(pow_less_than_pow2(10, 5, 18, 1));
        assert!(pow2_less_than_pow(1, 10, 12, 36));
    }

    #[test]
    fn floors_of_rational_powers_are_exact() {
        // 2 * 16^(1/44) = 2.13...
        assert_eq!(floor_mul_pow(2, 16, 1, 44), 2);
        // 16^(12/44) = 2.13...
        assert_eq!(floor_pow(16, 12, 44), 2);
        // 16^(45/44) = 17.04...
        assert_eq!(floor_pow(16, 45, 44), 17);
        // exact powers stay exact: 16^(3/4) = 8, and floor == ceil there
        assert_eq!(floor_pow(16, 3, 4), 8);
        assert_eq!(floor_pow(12, 3, 5), 4);
        assert_eq!(floor_mul_pow(0, 5, 1, 2), 0);
        assert_eq!(floor_mul_pow(5, 0, 1, 2), 0);
    }

    #[test]
    fn shifted_ceilings_divide_by_powers_of_two() {
        // ceil(7 / 4) = 2 with trivial exponent
        assert_eq!(ceil_mul_pow_shifted(7, 1, 0, 1, 2), 2);
        // ceil(8 / 4) = 2 exactly
        assert_eq!(ceil_mul_pow_shifted(8, 1, 0, 1, 2), 2);
        // shift 0 agrees with the unshifted ceiling
        assert_eq!(ceil_mul_pow_shifted(2, 12, 1, 20, 0), ceil_mul_pow(2, 12, 1, 20));
        assert_eq!(ceil_mul_pow_shifted(0, 12, 1, 20, 3), 0);
    }
}
