//! Fixed-point encoding of decimals into a prime field.
//!
//! A decimal `x` is carried as the integer `f(x) = round(x * 2^L)` where `L`
//! is [`CodecParams::fractional_bits`]. Products of encoded quantities carry a
//! larger power of `2^L`; [`ScaledInt::scale`] records that power so that
//! decoding divides by `2^(scale * L)`.
//!
//! Negative integers map into `Z_p` through [`mod_repr`]. As long as every
//! verified sum stays inside `(-p, p)` the residue together with the sign of
//! the true value recovers the value exactly, which is what [`lemma_check`]
//! tests and what [`split_dot`] relies on.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Largest scale any committed quantity may carry (a product of four encodings).
pub const MAX_SCALE: u8 = 4;

/// Decimal digits of the BLS12-381 scalar field order `r`.
const BLS12_381_ORDER: &str = "52435875175126190479447740508185965837690552500527637822603658699938581184513";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("value {0} does not fit the field range")]
    Overflow(String),
    #[error("cannot encode non-finite value {0}")]
    NotFinite(f64),
    #[error("scale {0} outside 1..={MAX_SCALE}")]
    InvalidScale(u8),
    #[error("scale mismatch: expected {expected}, found {found}")]
    ScaleMismatch { expected: u8, found: u8 },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),
}

/// Encoding parameters shared by prover and verifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodecParams {
    /// Bits after the binary point (`L_T`).
    pub fractional_bits: u32,
    /// Prime order `p` of the pairing groups.
    pub field_order: BigUint,
    /// Upper bound on the number of summands in any verified sum.
    pub max_terms: u64,
    /// Integer-part headroom for a product of [`MAX_SCALE`] encodings.
    pub magnitude_bits: u32,
}

impl CodecParams {
    pub const DEFAULT_FRACTIONAL_BITS: u32 = 20;
    pub const DEFAULT_MAX_TERMS: u64 = 1 << 16;
    pub const DEFAULT_MAGNITUDE_BITS: u32 = 24;

    pub fn new(
        fractional_bits: u32,
        field_order: BigUint,
        max_terms: u64,
        magnitude_bits: u32,
    ) -> Result<Self, CodecError> {
        if fractional_bits == 0 {
            return Err(CodecError::InvalidParams("fractional_bits must be >= 1".into()));
        }
        if max_terms == 0 {
            return Err(CodecError::InvalidParams("max_terms must be >= 1".into()));
        }
        if !is_probable_prime(&field_order) {
            return Err(CodecError::InvalidParams(format!("{field_order} is not prime")));
        }
        let params = Self { fractional_bits, field_order, max_terms, magnitude_bits };
        let headroom = params.headroom_bits();
        // values are carried in i128, so the bound applies to the carrier as well
        if headroom > 126 {
            return Err(CodecError::InvalidParams(format!(
                "headroom of {headroom} bits exceeds the 126-bit integer carrier"
            )));
        }
        if BigUint::one() << headroom >= params.field_order {
            return Err(CodecError::InvalidParams(format!("2^{headroom} is not below the field order")));
        }
        Ok(params)
    }

    /// Parameters over the BLS12-381 scalar field.
    pub fn bls12_381(fractional_bits: u32) -> Result<Self, CodecError> {
        Self::new(fractional_bits, bls12_381_order(), Self::DEFAULT_MAX_TERMS, Self::DEFAULT_MAGNITUDE_BITS)
    }

    /// `4 L + magnitude_bits + ceil(log2(max_terms))`.
    pub fn headroom_bits(&self) -> u32 {
        4 * self.fractional_bits + self.magnitude_bits + ceil_log2(self.max_terms)
    }

    /// `2^(scale * L)` as a float; exact for every legal scale.
    pub fn unit(&self, scale: u8) -> f64 {
        libm::ldexp(1.0, (scale as u32 * self.fractional_bits) as i32)
    }

    /// Whether `|value| < p / 2`, the range every plaintext scalar taken from
    /// a proof must satisfy.
    pub fn in_half_range(&self, value: i128) -> bool {
        self.field_order.bits() > 129 || BigUint::from(value.unsigned_abs()) * 2u32 < self.field_order
    }

    /// `|value| < p`.
    pub fn in_range(&self, value: i128) -> bool {
        self.field_order.bits() > 128 || BigUint::from(value.unsigned_abs()) < self.field_order
    }
}

impl Default for CodecParams {
    fn default() -> Self {
        Self::bls12_381(Self::DEFAULT_FRACTIONAL_BITS).expect("default codec parameters are valid")
    }
}

pub fn bls12_381_order() -> BigUint {
    BLS12_381_ORDER.parse().expect("constant parses")
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// An integer standing for `value / 2^(scale * L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaledInt {
    pub value: i128,
    pub scale: u8,
}

impl ScaledInt {
    pub fn new(value: i128, scale: u8) -> Result<Self, CodecError> {
        if scale == 0 || scale > MAX_SCALE {
            return Err(CodecError::InvalidScale(scale));
        }
        Ok(Self { value, scale })
    }

    pub const fn zero(scale: u8) -> Self {
        Self { value: 0, scale }
    }

    pub fn expect_scale(&self, scale: u8) -> Result<(), CodecError> {
        if self.scale != scale {
            return Err(CodecError::ScaleMismatch { expected: scale, found: self.scale });
        }
        Ok(())
    }

    pub fn is_negative(&self) -> bool {
        self.value < 0
    }
}

impl fmt::Display for ScaledInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.value, self.scale)
    }
}

/// Sign of a flagged plaintext value; `Positive` covers zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignFlag {
    Positive,
    Negative,
}

impl SignFlag {
    pub fn of(value: i128) -> Self {
        if value < 0 {
            SignFlag::Negative
        } else {
            SignFlag::Positive
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            SignFlag::Positive => 0,
            SignFlag::Negative => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SignFlag::Positive),
            1 => Some(SignFlag::Negative),
            _ => None,
        }
    }
}

/// A dot product split into its nonnegative-product and negative-product parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSum {
    pub pos_sum: ScaledInt,
    pub neg_sum: ScaledInt,
    pub total: ScaledInt,
    pub neg_count: u32,
}

impl SplitSum {
    pub fn zero(scale: u8) -> Self {
        Self {
            pos_sum: ScaledInt::zero(scale),
            neg_sum: ScaledInt::zero(scale),
            total: ScaledInt::zero(scale),
            neg_count: 0,
        }
    }

    /// Checks the structural invariants: signs of the parts, a common scale
    /// and `pos + neg = total` over the integers.
    pub fn is_consistent(&self) -> bool {
        let scale = self.total.scale;
        self.pos_sum.scale == scale
            && self.neg_sum.scale == scale
            && self.pos_sum.value >= 0
            && self.neg_sum.value <= 0
            && self.pos_sum.value.checked_add(self.neg_sum.value) == Some(self.total.value)
    }
}

/// `f(x)`: round-half-to-even of `x * 2^L`, scale 1.
pub fn encode(x: f64, params: &CodecParams) -> Result<ScaledInt, CodecError> {
    encode_at(x, 1, params)
}

/// Encodes `x` at an arbitrary scale, i.e. `round(x * 2^(scale * L))`.
pub fn encode_at(x: f64, scale: u8, params: &CodecParams) -> Result<ScaledInt, CodecError> {
    if !x.is_finite() {
        return Err(CodecError::NotFinite(x));
    }
    let scaled = (x * params.unit(scale)).round_ties_even();
    // 2^127 bounds the i128 carrier; the field bound is checked after conversion
    if scaled.abs() >= libm::ldexp(1.0, 127) {
        return Err(CodecError::Overflow(format!("{x}")));
    }
    let value = scaled as i128;
    if !params.in_range(value) {
        return Err(CodecError::Overflow(format!("{x}")));
    }
    ScaledInt::new(value, scale)
}

pub fn decode(v: ScaledInt, params: &CodecParams) -> f64 {
    let shift = (v.scale as u32 * params.fractional_bits) as i32;
    libm::ldexp(v.value as f64, -shift)
}

/// `[v] = v mod p`, in `[0, p)`.
pub fn mod_repr(v: ScaledInt, params: &CodecParams) -> BigUint {
    mod_repr_int(v.value, &params.field_order)
}

pub(crate) fn mod_repr_int(value: i128, p: &BigUint) -> BigUint {
    let magnitude = BigUint::from(value.unsigned_abs()) % p;
    if value < 0 && !magnitude.is_zero() {
        p - magnitude
    } else {
        magnitude
    }
}

/// Exact dot product of two encoded vectors, split by the sign of each product.
pub fn split_dot(u: &[ScaledInt], w: &[ScaledInt], params: &CodecParams) -> Result<SplitSum, CodecError> {
    if u.len() != w.len() {
        return Err(CodecError::LengthMismatch(u.len(), w.len()));
    }
    let (Some(first_u), Some(first_w)) = (u.first(), w.first()) else {
        return Ok(SplitSum::zero(2));
    };
    for x in u {
        x.expect_scale(first_u.scale)?;
    }
    for x in w {
        x.expect_scale(first_w.scale)?;
    }
    let scale = first_u.scale + first_w.scale;
    if scale > MAX_SCALE {
        return Err(CodecError::InvalidScale(scale));
    }
    let (mut pos, mut neg, mut total, mut neg_count) = (0i128, 0i128, 0i128, 0u32);
    let overflow = || CodecError::Overflow("partial sum".into());
    for (a, b) in u.iter().zip(w) {
        let prod = a.value.checked_mul(b.value).ok_or_else(overflow)?;
        if prod < 0 {
            neg = neg.checked_add(prod).ok_or_else(overflow)?;
            neg_count += 1;
        } else {
            pos = pos.checked_add(prod).ok_or_else(overflow)?;
        }
        total = total.checked_add(prod).ok_or_else(overflow)?;
        for partial in [pos, neg, total] {
            if !params.in_range(partial) {
                return Err(overflow());
            }
        }
    }
    Ok(SplitSum {
        pos_sum: ScaledInt { value: pos, scale },
        neg_sum: ScaledInt { value: neg, scale },
        total: ScaledInt { value: total, scale },
        neg_count,
    })
}

/// Checks `[Σ [u_i][w_i]] = z` for `z >= 0` and `z + p` otherwise, where
/// `z = Σ u_i w_i`. Test oracle for the modular representation of negatives.
pub fn lemma_check(u: &[i128], w: &[i128], p: &BigUint) -> bool {
    if u.len() != w.len() {
        return false;
    }
    let residue =
        u.iter().zip(w).fold(BigUint::zero(), |acc, (&a, &b)| (acc + mod_repr_int(a, p) * mod_repr_int(b, p)) % p);
    let z: BigInt = u.iter().zip(w).map(|(&a, &b)| BigInt::from(a) * BigInt::from(b)).sum();
    let expected = if z.sign() == Sign::Minus { z + BigInt::from(p.clone()) } else { z };
    expected.to_biguint().is_some_and(|e| e == residue)
}

/// Recovers a signed integer from its residue, assuming `|value| < p / 2`.
pub fn centered_lift(residue: &BigUint, p: &BigUint) -> Option<i128> {
    if residue >= p {
        return None;
    }
    if residue * 2u32 < *p {
        residue.to_i128()
    } else {
        (p - residue).to_i128().map(|m| -m)
    }
}

/// `num / den` rounded half-to-even; `den` must be positive.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den > 0, "denominator must be positive");
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    // compare 2r with den without overflowing
    match r.cmp(&(den - r)) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Deterministic Miller-Rabin with fixed bases. Exact for `n < 3.3e24` and
/// overwhelmingly reliable above.
pub fn is_probable_prime(n: &BigUint) -> bool {
    const BASES: [u32; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for b in BASES {
        let b = BigUint::from(b);
        if *n == b {
            return true;
        }
        if (n % &b).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for b in BASES {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Exact comparison `|a - b| <= theta * denom` for nonnegative `theta`,
/// treating `theta` as the dyadic rational it represents.
pub fn abs_diff_within(a: i128, b: i128, theta: f64, denom: u128) -> bool {
    if theta.is_nan() || theta < 0.0 {
        return false;
    }
    if theta.is_infinite() {
        return true;
    }
    let diff = BigInt::from(a) - BigInt::from(b);
    let diff = diff.abs();
    let (mantissa, exponent, _) = num_traits::float::FloatCore::integer_decode(theta);
    let bound = BigInt::from(mantissa) * BigInt::from(denom);
    if exponent >= 0 {
        diff <= bound << exponent as usize
    } else {
        diff << (-exponent) as usize <= bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(l: u32) -> CodecParams {
        CodecParams::bls12_381(l).unwrap()
    }

    fn si(v: i128, s: u8) -> ScaledInt {
        ScaledInt::new(v, s).unwrap()
    }

    #[test]
    fn encode_examples() {
        let p = small(4);
        assert_eq!(encode(0.0, &p).unwrap(), si(0, 1));
        assert_eq!(encode(1.5, &p).unwrap(), si(24, 1));
        assert_eq!(encode(-0.25, &p).unwrap(), si(-4, 1));
    }

    #[test]
    fn encode_rounds_half_to_even() {
        let p = small(1);
        // 0.25 * 2 = 0.5 -> 0, 0.75 * 2 = 1.5 -> 2, -0.25 * 2 = -0.5 -> 0
        assert_eq!(encode(0.25, &p).unwrap().value, 0);
        assert_eq!(encode(0.75, &p).unwrap().value, 2);
        assert_eq!(encode(-0.25, &p).unwrap().value, 0);
        assert_eq!(encode(-0.75, &p).unwrap().value, -2);
    }

    #[test]
    fn encode_overflow_and_nonfinite() {
        let p = small(20);
        assert!(matches!(encode(f64::NAN, &p), Err(CodecError::NotFinite(_))));
        assert!(matches!(encode(1e40, &p), Err(CodecError::Overflow(_))));
        let tiny = CodecParams::new(1, 97u32.into(), 1, 0).unwrap();
        assert!(encode(48.0, &tiny).is_ok());
        assert!(matches!(encode(48.5, &tiny), Err(CodecError::Overflow(_))));
    }

    #[test]
    fn decode_examples() {
        let p = small(4);
        assert_eq!(decode(si(24, 1), &p), 1.5);
        assert_eq!(decode(si(64, 2), &p), 0.25);
        assert_eq!(decode(si(0, 3), &p), 0.0);
    }

    #[test]
    fn mod_repr_examples() {
        let p = CodecParams::new(1, 97u32.into(), 1, 0).unwrap();
        assert_eq!(mod_repr(si(-5, 1), &p), 92u32.into());
        assert_eq!(mod_repr(si(12, 1), &p), 12u32.into());
        assert_eq!(mod_repr(si(-96, 1), &p), 1u32.into());
    }

    #[test]
    fn split_dot_examples() {
        let p = small(4);
        let s = split_dot(&[si(24, 1), si(-4, 1)], &[si(8, 1), si(32, 1)], &p).unwrap();
        assert_eq!((s.pos_sum.value, s.neg_sum.value, s.total.value, s.neg_count), (192, -128, 64, 1));
        assert_eq!(s.total.scale, 2);

        let s = split_dot(&[si(0, 1), si(0, 1)], &[si(5, 1), si(7, 1)], &p).unwrap();
        assert_eq!((s.pos_sum.value, s.neg_sum.value, s.total.value, s.neg_count), (0, 0, 0, 0));

        let s = split_dot(&[si(3, 1), si(-2, 1)], &[si(4, 1), si(5, 1)], &p).unwrap();
        assert_eq!((s.pos_sum.value, s.neg_sum.value, s.total.value, s.neg_count), (12, -10, 2, 1));
        assert!(s.is_consistent());
        // the same witness through the modular identity, for several primes above 22
        for q in [23u32, 29, 97, 101] {
            assert!(lemma_check(&[3, -2], &[4, 5], &q.into()));
        }
    }

    #[test]
    fn split_dot_errors() {
        let p = small(4);
        assert!(matches!(split_dot(&[si(1, 1)], &[si(1, 1), si(2, 1)], &p), Err(CodecError::LengthMismatch(1, 2))));
        assert!(matches!(
            split_dot(&[si(1, 1), si(1, 2)], &[si(1, 1), si(2, 1)], &p),
            Err(CodecError::ScaleMismatch { .. })
        ));
        assert!(matches!(split_dot(&[si(1, 3)], &[si(1, 2)], &p), Err(CodecError::InvalidScale(5))));
        let tiny = CodecParams::new(1, 97u32.into(), 1, 0).unwrap();
        assert!(matches!(split_dot(&[si(10, 1)], &[si(10, 1)], &tiny), Err(CodecError::Overflow(_))));
    }

    #[test]
    fn lemma_examples() {
        assert!(lemma_check(&[-1], &[1], &7u32.into()));
        assert!(lemma_check(&[2, 3], &[1, 1], &11u32.into()));
    }

    #[test]
    fn params_validation() {
        assert!(CodecParams::new(0, 97u32.into(), 1, 0).is_err());
        assert!(CodecParams::new(1, 91u32.into(), 1, 0).is_err()); // 7 * 13
        assert!(CodecParams::new(8, 97u32.into(), 1, 0).is_err()); // 2^32 > 97
        let d = CodecParams::default();
        assert_eq!(d.fractional_bits, 20);
        assert_eq!(d.field_order.bits(), 255);
        assert_eq!(d.headroom_bits(), 80 + 24 + 16);
    }

    #[test]
    fn primality() {
        let primes = [2u32, 3, 5, 7, 11, 13, 97, 101, 7919];
        for p in primes {
            assert!(is_probable_prime(&p.into()), "{p}");
        }
        for c in [0u32, 1, 4, 9, 91, 561, 1105, 7917] {
            assert!(!is_probable_prime(&c.into()), "{c}");
        }
        assert!(is_probable_prime(&bls12_381_order()));
    }

    #[test]
    fn rounding_division() {
        assert_eq!(div_round_half_even(5, 2), 2);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(10, 3), 3);
        assert_eq!(div_round_half_even(-10, 3), -3);
        assert_eq!(div_round_half_even(11, 3), 4);
    }

    #[test]
    fn centered_lift_inverts_mod_repr() {
        let p: BigUint = 101u32.into();
        for v in -50i128..=50 {
            assert_eq!(centered_lift(&mod_repr_int(v, &p), &p), Some(v));
        }
        assert_eq!(centered_lift(&p, &p), None);
    }

    #[test]
    fn dyadic_threshold_comparison() {
        assert!(abs_diff_within(10, 7, 0.75, 4));
        assert!(!abs_diff_within(10, 6, 0.75, 4));
        assert!(abs_diff_within(i128::MAX, 0, f64::INFINITY, 1));
        assert!(!abs_diff_within(1, 0, 0.0, 1_000));
        assert!(abs_diff_within(5, 5, 0.0, 1));
        assert!(!abs_diff_within(0, 0, f64::NAN, 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn roundtrip_on_grid(n in -(1i64 << 40)..(1i64 << 40)) {
                let p = small(20);
                let x = libm::ldexp(n as f64, -20);
                let e = encode(x, &p).unwrap();
                prop_assert_eq!(e.value, n as i128);
                prop_assert_eq!(decode(e, &p), x);
            }

            #[test]
            fn mod_repr_in_range(v in any::<i64>()) {
                let p = CodecParams::default();
                let r = mod_repr(ScaledInt { value: v as i128, scale: 1 }, &p);
                prop_assert!(r < p.field_order);
                let back = BigInt::from(r) - BigInt::from(v);
                prop_assert!(back.is_zero() || back == BigInt::from(p.field_order.clone()));
            }

            #[test]
            fn split_sum_consistent(
                u in prop::collection::vec(-1000i128..1000, 0..12),
                seed in any::<u64>(),
            ) {
                let p = small(4);
                let w: Vec<i128> = u.iter().enumerate()
                    .map(|(i, _)| ((seed >> (i % 32)) as i128 % 2001) - 1000)
                    .collect();
                let su: Vec<_> = u.iter().map(|&v| si(v, 1)).collect();
                let sw: Vec<_> = w.iter().map(|&v| si(v, 2)).collect();
                let s = split_dot(&su, &sw, &p).unwrap();
                prop_assert!(s.is_consistent());
                if !u.is_empty() {
                    prop_assert_eq!(s.total.scale, 3);
                }
                let direct: i128 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                prop_assert_eq!(s.total.value, direct);
            }

            #[test]
            fn residue_and_sign_recover_total(
                u in prop::collection::vec(-40i128..40, 1..6),
                w in prop::collection::vec(-40i128..40, 1..6),
            ) {
                let n = u.len().min(w.len());
                let p = BigUint::from(10_007u32);
                let z: i128 = u[..n].iter().zip(&w[..n]).map(|(a, b)| a * b).sum();
                let residue = u[..n].iter().zip(&w[..n]).fold(BigUint::zero(), |acc, (&a, &b)| {
                    (acc + mod_repr_int(a, &p) * mod_repr_int(b, &p)) % &p
                });
                prop_assert_eq!(centered_lift(&residue, &p), Some(z));
                prop_assert!(lemma_check(&u[..n], &w[..n], &p));
            }
        }
    }
}
