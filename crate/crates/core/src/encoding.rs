//! Numeric encodings that carry real values into the two cryptographic
//! domains: fixed point in `Z_{2^l}` for secret sharing, and
//! significand/exponent pairs in base `B` for Paillier plaintexts.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("invalid encoding configuration: {0}")]
    Config(String),
    #[error("value {value} outside representable range (|x| < {bound})")]
    Range { value: f64, bound: f64 },
    #[error("significand exceeds plaintext bound")]
    SignificandOverflow,
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("base mismatch: {0} vs {1}")]
    BaseMismatch(u32, u32),
    #[error("decoded value is not finite")]
    DecodeOverflow,
    #[error("at ({row}, {col}): {source}")]
    At {
        row: usize,
        col: usize,
        #[source]
        source: Box<EncodingError>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl EncodingError {
    fn at(self, row: usize, col: usize) -> Self {
        EncodingError::At { row, col, source: Box::new(self) }
    }
}

/// Fixed-point layout in the ring `Z_{2^l}`, two's complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Ring bit width `l`.
    pub bits: u32,
    /// Fractional bits `f`.
    pub frac_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { bits: 64, frac_bits: 24 }
    }
}

impl FixedPointConfig {
    pub fn new(bits: u32, frac_bits: u32) -> Result<Self, EncodingError> {
        let cfg = Self { bits, frac_bits };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.frac_bits == 0 || self.frac_bits >= self.bits || self.bits > 128 {
            return Err(EncodingError::Config(format!(
                "need 0 < f < l <= 128, got l={} f={}",
                self.bits, self.frac_bits
            )));
        }
        Ok(())
    }

    pub fn mask(&self) -> u128 {
        ring_mask(self.bits)
    }

    /// Exclusive magnitude bound `2^(l-f-1)`.
    pub fn max_magnitude(&self) -> f64 {
        2f64.powi((self.bits - self.frac_bits - 1) as i32)
    }

    /// Resolution `2^-f`.
    pub fn resolution(&self) -> f64 {
        2f64.powi(-(self.frac_bits as i32))
    }
}

pub fn ring_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

pub fn ring_add(a: u128, b: u128, bits: u32) -> u128 {
    a.wrapping_add(b) & ring_mask(bits)
}

pub fn ring_sub(a: u128, b: u128, bits: u32) -> u128 {
    a.wrapping_sub(b) & ring_mask(bits)
}

pub fn encode_fixed(x: f64, cfg: &FixedPointConfig) -> Result<u128, EncodingError> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(EncodingError::NonFinite(x));
    }
    let bound = cfg.max_magnitude();
    // f64::round is half-away-from-zero.
    let scaled = (x * 2f64.powi(cfg.frac_bits as i32)).round();
    if x.abs() >= bound || scaled.abs() >= 2f64.powi(cfg.bits as i32 - 1) {
        return Err(EncodingError::Range { value: x, bound });
    }
    Ok((scaled as i128) as u128 & cfg.mask())
}

pub fn decode_fixed(z: u128, cfg: &FixedPointConfig) -> f64 {
    let z = z & cfg.mask();
    let signed: i128 = if cfg.bits == 128 {
        z as i128
    } else if z >> (cfg.bits - 1) == 1 {
        z as i128 - (1i128 << cfg.bits)
    } else {
        z as i128
    };
    signed as f64 * 2f64.powi(-(cfg.frac_bits as i32))
}

/// Row-major matrix of ring elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u128>,
}

impl RingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0; rows * cols] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub fn matrix_encode_fixed(m: &Matrix, cfg: &FixedPointConfig) -> Result<RingMatrix, EncodingError> {
    let values = m
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| encode_fixed(x, cfg).map_err(|e| e.at(i / m.cols(), i % m.cols())))
        .collect::<Result<_, _>>()?;
    Ok(RingMatrix { rows: m.rows(), cols: m.cols(), values })
}

pub fn matrix_decode_fixed(m: &RingMatrix, cfg: &FixedPointConfig) -> Result<Matrix, EncodingError> {
    Ok(Matrix::new(m.rows, m.cols, m.values.iter().map(|&z| decode_fixed(z, cfg)).collect())?)
}

/// Base and digit count of the significand/exponent encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloatEncodingConfig {
    pub base: u32,
    /// Significant base-`B` digits kept when encoding.
    pub precision: u32,
}

impl Default for FloatEncodingConfig {
    fn default() -> Self {
        // 15 hex digits hold any f64 significand exactly.
        Self { base: 16, precision: 15 }
    }
}

impl FloatEncodingConfig {
    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.base < 2 || self.precision == 0 {
            return Err(EncodingError::Config(format!(
                "need base >= 2 and precision >= 1, got base={} precision={}",
                self.base, self.precision
            )));
        }
        Ok(())
    }
}

/// `significand × base^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFloat {
    pub significand: BigInt,
    pub exponent: i32,
    pub base: u32,
}

/// Exact decomposition `x = m · 2^e` of a finite double.
fn split_f64(x: f64) -> (i64, i32) {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    if exp_bits == 0 {
        (sign * frac, -1074)
    } else {
        (sign * (frac | (1i64 << 52)), exp_bits - 1075)
    }
}

/// `num / den` as a ratio of `|m|·2^e` against `B^j`.
fn ratio_parts(m_abs: &BigUint, e: i32, base: u32, j: i32) -> (BigUint, BigUint) {
    let mut num = m_abs.clone();
    let mut den = BigUint::one();
    if e >= 0 {
        num <<= e as usize;
    } else {
        den <<= (-e) as usize;
    }
    let b = BigUint::from(base);
    if j >= 0 {
        den *= b.pow(j as u32);
    } else {
        num *= b.pow((-j) as u32);
    }
    (num, den)
}

/// `floor(log_B |x|)` computed exactly.
fn floor_log(m_abs: &BigUint, e: i32, base: u32, estimate: f64) -> i32 {
    let mut j = estimate.floor() as i32;
    loop {
        let (num, den) = ratio_parts(m_abs, e, base, j);
        if num < den {
            j -= 1;
            continue;
        }
        let (num, den) = ratio_parts(m_abs, e, base, j + 1);
        if num >= den {
            j += 1;
            continue;
        }
        return j;
    }
}

pub fn encode_float(x: f64, cfg: &FloatEncodingConfig) -> Result<EncodedFloat, EncodingError> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(EncodingError::NonFinite(x));
    }
    if x == 0.0 {
        return Ok(EncodedFloat { significand: BigInt::zero(), exponent: 0, base: cfg.base });
    }
    let (m, e) = split_f64(x);
    let m_abs = BigUint::from(m.unsigned_abs());
    let lead = floor_log(&m_abs, e, cfg.base, x.abs().ln() / (cfg.base as f64).ln());
    let mut exponent = lead + 1 - cfg.precision as i32;
    let (num, den) = ratio_parts(&m_abs, e, cfg.base, exponent);
    // round half away from zero on the magnitude
    let mut mag = (num * 2u32 + &den) / (den * 2u32);
    let b = BigUint::from(cfg.base);
    while !mag.is_zero() {
        let (q, r) = mag.div_rem(&b);
        if !r.is_zero() {
            break;
        }
        mag = q;
        exponent += 1;
    }
    let sign = if x < 0.0 { Sign::Minus } else { Sign::Plus };
    Ok(EncodedFloat { significand: BigInt::from_biguint(sign, mag), exponent, base: cfg.base })
}

fn ldexp(mut v: f64, mut exp: i64) -> f64 {
    while exp > 1000 {
        v *= 2f64.powi(1000);
        exp -= 1000;
    }
    while exp < -1000 {
        v *= 2f64.powi(-1000);
        exp += 1000;
    }
    v * 2f64.powi(exp as i32)
}

pub fn decode_float(v: &EncodedFloat) -> Result<f64, EncodingError> {
    if v.significand.is_zero() {
        return Ok(0.0);
    }
    let b = BigUint::from(v.base);
    let mag = v.significand.magnitude();
    let value = if v.exponent >= 0 {
        (mag * b.pow(v.exponent as u32)).to_f64().unwrap_or(f64::INFINITY)
    } else {
        let den = b.pow((-v.exponent) as u32);
        // Shift so the integer quotient carries at least 64 significant bits.
        let shift = (den.bits() as i64 - mag.bits() as i64 + 66).max(0);
        let q = (mag << shift as usize) / den;
        ldexp(q.to_f64().unwrap_or(f64::INFINITY), -shift)
    };
    if !value.is_finite() {
        return Err(EncodingError::DecodeOverflow);
    }
    Ok(if v.significand.is_negative() { -value } else { value })
}

/// Rewrites the operand with the larger exponent onto the smaller one by
/// scaling its significand by `B^Δ`. `limit` bounds the resulting magnitude.
pub fn align_exponents(
    a: &EncodedFloat,
    b: &EncodedFloat,
    limit: &BigUint,
) -> Result<(EncodedFloat, EncodedFloat), EncodingError> {
    if a.base != b.base {
        return Err(EncodingError::BaseMismatch(a.base, b.base));
    }
    let shift = |v: &EncodedFloat, to: i32| -> Result<EncodedFloat, EncodingError> {
        let factor = BigInt::from(v.base).pow((v.exponent - to) as u32);
        let significand = &v.significand * factor;
        if significand.magnitude() >= limit {
            return Err(EncodingError::SignificandOverflow);
        }
        Ok(EncodedFloat { significand, exponent: to, base: v.base })
    };
    match a.exponent.cmp(&b.exponent) {
        Ordering::Equal => Ok((a.clone(), b.clone())),
        Ordering::Greater => Ok((shift(a, b.exponent)?, b.clone())),
        Ordering::Less => Ok((a.clone(), shift(b, a.exponent)?)),
    }
}

/// Row-major matrix of encoded floats.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<EncodedFloat>,
}

pub fn matrix_encode_float(m: &Matrix, cfg: &FloatEncodingConfig) -> Result<FloatMatrix, EncodingError> {
    let entries = m
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| encode_float(x, cfg).map_err(|e| e.at(i / m.cols(), i % m.cols())))
        .collect::<Result<_, _>>()?;
    Ok(FloatMatrix { rows: m.rows(), cols: m.cols(), entries })
}

pub fn matrix_decode_float(m: &FloatMatrix) -> Result<Matrix, EncodingError> {
    let data = m
        .entries
        .iter()
        .enumerate()
        .map(|(i, v)| decode_float(v).map_err(|e| e.at(i / m.cols, i % m.cols)))
        .collect::<Result<_, _>>()?;
    Ok(Matrix::new(m.rows, m.cols, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const CFG: FixedPointConfig = FixedPointConfig { bits: 64, frac_bits: 24 };

    #[test]
    fn fixed_point_examples() {
        assert_eq!(encode_fixed(0.0, &CFG).unwrap(), 0);
        assert_eq!(encode_fixed(1.5, &CFG).unwrap(), 3 << 23);
        assert_eq!(decode_fixed(0, &CFG), 0.0);
        assert_eq!(decode_fixed((1u128 << 64) - (1u128 << 24), &CFG), -1.0);
        assert_eq!(encode_fixed(-1.0, &CFG).unwrap(), (1u128 << 64) - (1u128 << 24));
    }

    #[test]
    fn fixed_point_range_and_config_errors() {
        assert!(matches!(encode_fixed(2f64.powi(39), &CFG), Err(EncodingError::Range { .. })));
        assert!(matches!(encode_fixed(-2f64.powi(39), &CFG), Err(EncodingError::Range { .. })));
        assert!(encode_fixed(2f64.powi(39) - 1.0, &CFG).is_ok());
        assert!(matches!(encode_fixed(f64::NAN, &CFG), Err(EncodingError::NonFinite(_))));
        assert!(FixedPointConfig::new(64, 0).is_err());
        assert!(FixedPointConfig::new(64, 64).is_err());
        assert!(FixedPointConfig::new(129, 24).is_err());
        let wide = FixedPointConfig::new(128, 40).unwrap();
        assert_eq!(decode_fixed(encode_fixed(-12.25, &wide).unwrap(), &wide), -12.25);
    }

    #[test]
    fn fixed_point_round_trip_on_random_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-1000.0..1000.0);
            let back = decode_fixed(encode_fixed(x, &CFG).unwrap(), &CFG);
            assert!((back - x).abs() <= 2f64.powi(-24), "{x} -> {back}");
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let cfg = FixedPointConfig::new(16, 1).unwrap();
        assert_eq!(decode_fixed(encode_fixed(0.25, &cfg).unwrap(), &cfg), 0.5);
        assert_eq!(decode_fixed(encode_fixed(-0.25, &cfg).unwrap(), &cfg), -0.5);
    }

    #[test]
    fn float_encoding_examples() {
        let cfg = FloatEncodingConfig::default();
        let zero = encode_float(0.0, &cfg).unwrap();
        assert_eq!((zero.significand.clone(), zero.exponent), (BigInt::zero(), 0));
        let e = encode_float(2.5, &cfg).unwrap();
        assert_eq!((e.significand.clone(), e.exponent), (BigInt::from(40), -1));
        let e = encode_float(-256.0, &cfg).unwrap();
        assert_eq!((e.significand.clone(), e.exponent), (BigInt::from(-1), 2));
        assert_eq!(decode_float(&e).unwrap(), -256.0);
    }

    #[test]
    fn float_encoding_respects_precision() {
        let cfg = FloatEncodingConfig { base: 16, precision: 3 };
        let x = 1.0 / 3.0;
        let e = encode_float(x, &cfg).unwrap();
        let back = decode_float(&e).unwrap();
        assert!(((back - x) / x).abs() <= 16f64.powi(1 - 3));
        assert!(e.significand.magnitude().bits() <= 12);
        let cfg10 = FloatEncodingConfig { base: 10, precision: 4 };
        let e = encode_float(123456.0, &cfg10).unwrap();
        assert_eq!((e.significand.clone(), e.exponent), (BigInt::from(1235), 2));
    }

    #[test]
    fn float_round_trip_on_random_values() {
        let cfg = FloatEncodingConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let x: f64 = rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-30..30));
            let back = decode_float(&encode_float(x, &cfg).unwrap()).unwrap();
            assert!(((back - x) / x).abs() <= 1e-12, "{x} -> {back}");
            assert!(((back - x) / x).abs() <= 16f64.powi(1 - cfg.precision as i32));
        }
    }

    #[test]
    fn alignment_examples() {
        let limit = BigUint::from(1u64 << 62);
        let ef = |s: i64, e: i32| EncodedFloat { significand: BigInt::from(s), exponent: e, base: 16 };
        assert_eq!(align_exponents(&ef(3, 0), &ef(5, 0), &limit).unwrap(), (ef(3, 0), ef(5, 0)));
        assert_eq!(align_exponents(&ef(1, 1), &ef(5, 0), &limit).unwrap(), (ef(16, 0), ef(5, 0)));
        assert_eq!(align_exponents(&ef(5, 0), &ef(1, 1), &limit).unwrap(), (ef(5, 0), ef(16, 0)));
        assert_eq!(
            align_exponents(&ef(1, 20), &ef(1, 0), &limit),
            Err(EncodingError::SignificandOverflow)
        );
        let other = EncodedFloat { significand: BigInt::one(), exponent: 0, base: 10 };
        assert_eq!(align_exponents(&ef(1, 0), &other, &limit), Err(EncodingError::BaseMismatch(16, 10)));
    }

    #[test]
    fn matrix_helpers() {
        let z = Matrix::zeros(2, 3).unwrap();
        assert_eq!(matrix_decode_fixed(&matrix_encode_fixed(&z, &CFG).unwrap(), &CFG).unwrap(), z);
        let cfg = FloatEncodingConfig::default();
        assert_eq!(matrix_decode_float(&matrix_encode_float(&z, &cfg).unwrap()).unwrap(), z);

        let dyadic = Matrix::from_rows(&[vec![0.5, -1.25], vec![3.0, 1024.125]]).unwrap();
        assert_eq!(matrix_decode_fixed(&matrix_encode_fixed(&dyadic, &CFG).unwrap(), &CFG).unwrap(), dyadic);
        assert_eq!(matrix_decode_float(&matrix_encode_float(&dyadic, &cfg).unwrap()).unwrap(), dyadic);

        let big = Matrix::from_rows(&[vec![0.0, 1e15]]).unwrap();
        match matrix_encode_fixed(&big, &CFG) {
            Err(EncodingError::At { row: 0, col: 1, .. }) => {}
            other => panic!("expected located range error, got {other:?}"),
        }
    }

    #[test]
    fn covariance_scale_matrix_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let m = Matrix::from_fn(11, 11, |_, _| rng.gen_range(-50.0..50.0)).unwrap();
        let back = matrix_decode_fixed(&matrix_encode_fixed(&m, &CFG).unwrap(), &CFG).unwrap();
        assert!(back.max_abs_diff(&m) <= 2f64.powi(-24));
    }

    proptest! {
        #[test]
        fn fixed_addition_commutes_with_decoding(xs in proptest::collection::vec(-1e6f64..1e6, 1..=16)) {
            let sum = xs.iter().fold(0u128, |acc, &x| ring_add(acc, encode_fixed(x, &CFG).unwrap(), CFG.bits));
            let expected: f64 = xs.iter().sum();
            prop_assert!((decode_fixed(sum, &CFG) - expected).abs() <= xs.len() as f64 * 2f64.powi(-24));
        }

        #[test]
        fn fixed_encoding_is_monotone(a in -1e9f64..1e9, b in -1e9f64..1e9) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let dl = decode_fixed(encode_fixed(lo, &CFG).unwrap(), &CFG);
            let dh = decode_fixed(encode_fixed(hi, &CFG).unwrap(), &CFG);
            prop_assert!(dl <= dh);
        }

        #[test]
        fn alignment_preserves_decoded_values(s1 in -1_000_000i64..1_000_000, e1 in -8i32..8, s2 in -1_000_000i64..1_000_000, e2 in -8i32..8) {
            let limit = BigUint::one() << 512usize;
            let a = EncodedFloat { significand: BigInt::from(s1), exponent: e1, base: 16 };
            let b = EncodedFloat { significand: BigInt::from(s2), exponent: e2, base: 16 };
            let (a2, b2) = align_exponents(&a, &b, &limit).unwrap();
            prop_assert_eq!(a2.exponent, b2.exponent);
            prop_assert_eq!(decode_float(&a2).unwrap(), decode_float(&a).unwrap());
            prop_assert_eq!(decode_float(&b2).unwrap(), decode_float(&b).unwrap());
        }
    }
}
