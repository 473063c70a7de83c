//! Arithmetic in `Z_{2^64}` and the fixed-point embedding of reals.
//!
//! All secure computation happens on 64-bit ring elements. Real-valued
//! inputs (pixels, model weights) are embedded as `round(x * 2^a)` for a
//! fixed number of fractional bits `a`, with negative values living in the
//! top half of the ring via two's complement.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Bit width of the ring; all arithmetic wraps mod `2^64`.
pub const RING_BITS: u32 = 64;

/// An element of `Z_{2^64}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);

    /// Two's-complement signed interpretation in `[-2^63, 2^63)`.
    #[inline]
    pub fn to_signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn from_signed(v: i64) -> Self {
        RingElement(v as u64)
    }

    #[inline]
    pub fn wrapping_shl_pow2(self, shift: u32) -> Self {
        RingElement(self.0.wrapping_shl(shift))
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for RingElement {
    type Output = RingElement;
    #[inline]
    fn add(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for RingElement {
    #[inline]
    fn add_assign(&mut self, rhs: RingElement) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    #[inline]
    fn sub(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl SubAssign for RingElement {
    #[inline]
    fn sub_assign(&mut self, rhs: RingElement) {
        self.0 = self.0.wrapping_sub(rhs.0);
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    #[inline]
    fn mul(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    #[inline]
    fn neg(self) -> RingElement {
        RingElement(self.0.wrapping_neg())
    }
}

impl Sum for RingElement {
    fn sum<I: Iterator<Item = RingElement>>(iter: I) -> RingElement {
        iter.fold(RingElement::ZERO, |acc, x| acc + x)
    }
}

/// Fixed-point codec: reals are stored as `round(x * 2^frac_bits)`.
///
/// `frac_bits = 16` throughout this engine; the codec is parameterized so
/// that internal protocols can rescale at other shift amounts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    pub frac_bits: u32,
}

/// Fractional bits used for all externally visible values.
pub const DEFAULT_FRAC_BITS: u32 = 16;

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32) -> Self {
        assert!(frac_bits > 0 && frac_bits < 32, "unsupported precision");
        FixedPointCodec { frac_bits }
    }

    /// Ring element for the real value 1.0.
    #[inline]
    pub fn one(&self) -> RingElement {
        RingElement(1u64 << self.frac_bits)
    }

    /// Encode a real, rounding half away from zero.
    ///
    /// Fails when `|x| >= 2^(63 - frac_bits)`.
    pub fn encode(&self, x: f64) -> Result<RingElement> {
        let limit = (2f64).powi(63 - self.frac_bits as i32);
        if !x.is_finite() || x.abs() >= limit {
            return Err(Error::EncodingRange {
                value: x,
                frac_bits: self.frac_bits,
            });
        }
        let scaled = (x * (1u64 << self.frac_bits) as f64).round();
        Ok(RingElement::from_signed(scaled as i64))
    }

    /// Decode via the signed interpretation.
    #[inline]
    pub fn decode(&self, v: RingElement) -> f64 {
        v.to_signed() as f64 / (1u64 << self.frac_bits) as f64
    }

    /// Encode a whole slice.
    pub fn encode_all(&self, xs: &[f64]) -> Result<Vec<RingElement>> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    /// Plaintext reference for a fixed-point product: multiply in the ring
    /// and floor-shift the surplus fractional bits away.
    ///
    /// The secure path (`pi_fpmul`) reconstructs to this up to one unit in
    /// the last place.
    pub fn mul_then_shift(&self, x: RingElement, y: RingElement) -> Result<RingElement> {
        let p = (x.to_signed() as i128) * (y.to_signed() as i128);
        // decoded product must stay below 2^(63 - a); p carries 2a fractional bits
        let limit = 1i128 << (63 + self.frac_bits);
        if p.abs() >= limit {
            return Err(Error::EncodingRange {
                value: p as f64 / (2f64).powi(2 * self.frac_bits as i32),
                frac_bits: self.frac_bits,
            });
        }
        Ok(RingElement::from_signed((p >> self.frac_bits) as i64))
    }
}

/// Floor division of the signed value by `2^shift`, as a ring element.
///
/// This is the plaintext semantics that `pi_trunc` approximates (the secure
/// protocol may additionally add one unit in the last place).
#[inline]
pub fn floor_shift_signed(v: RingElement, shift: u32) -> RingElement {
    RingElement::from_signed(v.to_signed() >> shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_known_values() {
        let c = FixedPointCodec::default();
        assert_eq!(c.encode(1.0).unwrap(), RingElement(65536));
        assert_eq!(c.encode(0.0).unwrap(), RingElement(0));
        assert_eq!(c.encode(-0.5).unwrap(), RingElement(u64::MAX - 32768 + 1));
    }

    #[test]
    fn decode_known_values() {
        let c = FixedPointCodec::default();
        assert_eq!(c.decode(RingElement(65536)), 1.0);
        assert_eq!(c.decode(RingElement(0)), 0.0);
        assert_eq!(c.decode(RingElement(u64::MAX - 32768 + 1)), -0.5);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let c = FixedPointCodec::default();
        let limit = (2f64).powi(63 - 16);
        assert!(c.encode(limit).is_err());
        assert!(c.encode(-limit * 2.0).is_err());
        assert!(c.encode(f64::NAN).is_err());
        assert!(c.encode(limit - 1.0).is_ok());
    }

    #[test]
    fn round_trip_exhaustive_small_range() {
        // every 16-bit fraction in [-4, 4)
        let c = FixedPointCodec::default();
        for k in -(4i64 << 16)..(4i64 << 16) {
            let x = k as f64 / 65536.0;
            let enc = c.encode(x).unwrap();
            assert_eq!(enc, RingElement::from_signed(k));
            assert_eq!(c.decode(enc), x);
        }
    }

    #[test]
    fn rounding_half_away_from_zero() {
        let c = FixedPointCodec::default();
        // 1.5 ulp exactly at half: 3 / 2^17 = 1.5 * 2^-16
        let x = 3.0 / 131072.0;
        assert_eq!(c.encode(x).unwrap(), RingElement(2));
        assert_eq!(c.encode(-x).unwrap(), RingElement::from_signed(-2));
    }

    #[test]
    fn mul_then_shift_known_values() {
        let c = FixedPointCodec::default();
        let check = |a: f64, b: f64| {
            let got = c
                .mul_then_shift(c.encode(a).unwrap(), c.encode(b).unwrap())
                .unwrap();
            let want = c.encode(a * b).unwrap();
            let diff = (got.to_signed() - want.to_signed()).abs();
            assert!(diff <= 1, "{a} * {b}: got {got:?}, want {want:?}");
        };
        check(2.0, 3.0);
        check(0.5, 0.5);
        check(-1.5, 2.0);
    }

    #[test]
    fn mul_then_shift_matches_exact_rational_oracle() {
        // exact oracle: products of encoded values are integers at 2a scale
        let c = FixedPointCodec::default();
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 20) as i64 % (1 << 24)) - (1 << 23)
        };
        for _ in 0..10_000 {
            let xi = next();
            let yi = next();
            let x = RingElement::from_signed(xi);
            let y = RingElement::from_signed(yi);
            let exact_num = (xi as i128) * (yi as i128); // value * 2^32
            let want = exact_num >> 16;
            let got = c.mul_then_shift(x, y).unwrap();
            assert_eq!(got.to_signed() as i128, want);
        }
    }

    #[test]
    fn mul_then_shift_overflow_is_error() {
        let c = FixedPointCodec::default();
        let big = c.encode((2f64).powi(30)).unwrap();
        assert!(c.mul_then_shift(big, big).is_err());
    }

    #[test]
    fn floor_shift_matches_arithmetic_shift() {
        assert_eq!(
            floor_shift_signed(RingElement::from_signed(-65537), 16),
            RingElement::from_signed(-2)
        );
        assert_eq!(
            floor_shift_signed(RingElement(1 << 32), 16),
            RingElement(1 << 16)
        );
    }

    proptest! {
        #[test]
        fn additive_homomorphism(a in -1_000_000.0f64..1_000_000.0, b in -1_000_000.0f64..1_000_000.0) {
            let c = FixedPointCodec::default();
            // quantize first so that the sum is exactly representable
            let a = c.decode(c.encode(a).unwrap());
            let b = c.decode(c.encode(b).unwrap());
            let lhs = c.encode(a).unwrap() + c.encode(b).unwrap();
            let rhs = c.encode(a + b).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn ring_ops_wrap(a: u64, b: u64) {
            let x = RingElement(a);
            let y = RingElement(b);
            prop_assert_eq!((x + y).0, a.wrapping_add(b));
            prop_assert_eq!((x - y).0, a.wrapping_sub(b));
            prop_assert_eq!((x * y).0, a.wrapping_mul(b));
            prop_assert_eq!((-x).0, a.wrapping_neg());
        }
    }
}
