//! Paillier cryptosystem with `g = n + 1`, plus the signed-plaintext mapping
//! and element-wise operations on matrices of encrypted floats.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::encoding::{
    encode_float, EncodedFloat, EncodingError, FloatEncodingConfig, FloatMatrix,
};
use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaillierError {
    #[error("unsupported key size {bits} (allowed: 1024, 2048, 3072; 512 in test mode)")]
    KeySize { bits: u64 },
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("plaintext outside [0, n)")]
    PlaintextRange,
    #[error("signed plaintext magnitude exceeds n/3")]
    SignedRange,
    #[error("decrypted value lies in the overflow band")]
    Overflow,
    #[error("ciphertext was produced under a different public key")]
    KeyMismatch,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("at ({row}, {col}): {source}")]
    At {
        row: usize,
        col: usize,
        #[source]
        source: Box<PaillierError>,
    },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl PaillierError {
    fn at(self, row: usize, col: usize) -> Self {
        PaillierError::At { row, col, source: Box::new(self) }
    }
}

/// Who may use a key size: 512-bit keys exist only for fast tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    Production,
    Test,
}

pub const MILLER_RABIN_ROUNDS: usize = 40;

fn fingerprint_of(n: &BigUint) -> u64 {
    // FNV-1a over the big-endian modulus bytes.
    n.to_bytes_be().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    fingerprint: u64,
}

impl PublicKey {
    /// Rebuilds a key from its modulus (the wire representation).
    pub fn from_modulus(n: BigUint) -> Self {
        let g = &n + 1u32;
        let n_squared = &n * &n;
        let fingerprint = fingerprint_of(&n);
        Self { n, g, n_squared, fingerprint }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Largest magnitude accepted by the signed mapping.
    pub fn max_signed(&self) -> BigUint {
        &self.n / 3u32
    }

    /// Wraps a raw residue mod `n²` as a ciphertext under this key.
    pub fn ciphertext(&self, value: BigUint) -> Result<Ciphertext, PaillierError> {
        if value >= self.n_squared || value.is_zero() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(Ciphertext { value, fingerprint: self.fingerprint })
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.fingerprint != self.fingerprint {
            return Err(PaillierError::KeyMismatch);
        }
        if c.value >= self.n_squared || c.value.is_zero() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(())
    }

    /// Maps a signed integer into `[0, n)`: negatives become `n − |m|`.
    pub fn encode_signed(&self, m: &BigInt) -> Result<BigUint, PaillierError> {
        if m.magnitude() > &self.max_signed() {
            return Err(PaillierError::SignedRange);
        }
        Ok(if m.is_negative() { &self.n - m.magnitude() } else { m.magnitude().clone() })
    }

    /// Inverse of [`encode_signed`](Self::encode_signed); residues above
    /// `n/2` are negative. Values between `n/3` and `n − n/3` can only come
    /// from overflowing sums and are rejected.
    pub fn decode_signed(&self, m: &BigUint) -> Result<BigInt, PaillierError> {
        let max = self.max_signed();
        if m <= &max {
            Ok(BigInt::from(m.clone()))
        } else if m >= &(&self.n - &max) {
            Ok(-BigInt::from(&self.n - m))
        } else {
            Err(PaillierError::Overflow)
        }
    }
}

#[derive(Clone)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_q: BigUint,
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrivateKey").field("public", &self.public).finish_non_exhaustive()
    }
}

impl PrivateKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    fingerprint: u64,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        const LIMIT: usize = 4096;
        let mut sieve = vec![true; LIMIT];
        let mut out = Vec::new();
        for i in 2..LIMIT {
            if sieve[i] {
                out.push(i as u32);
                for j in (i * i..LIMIT).step_by(i) {
                    sieve[j] = false;
                }
            }
        }
        out
    })
}

/// Miller–Rabin with random bases after trial division.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn random_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        // Top two bits set so the product has exactly 2·bits bits.
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let a = BigInt::from(a.clone());
    let m = BigInt::from(m.clone());
    let e = a.extended_gcd(&m);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m).to_biguint()
}

pub fn keygen<R: RngCore + CryptoRng + ?Sized>(
    bits: u64,
    mode: KeyMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    match (bits, mode) {
        (1024 | 2048 | 3072, _) | (512, KeyMode::Test) => {}
        _ => return Err(PaillierError::KeySize { bits }),
    }
    loop {
        let p = random_prime(bits / 2, rng);
        let q = random_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let Some(mu) = mod_inverse(&lambda, &n) else { continue };
        let public = PublicKey::from_modulus(n);
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let h = |prime: &BigUint, prime_sq: &BigUint| -> Option<BigUint> {
            let gp = public.g.modpow(&(prime - 1u32), prime_sq);
            mod_inverse(&((gp - 1u32) / prime), prime)
        };
        let (Some(hp), Some(hq), Some(p_inv_q)) = (h(&p, &p_squared), h(&q, &q_squared), mod_inverse(&p, &q))
        else {
            continue;
        };
        let private = PrivateKey { lambda, mu, public: public.clone(), p, q, p_squared, q_squared, hp, hq, p_inv_q };
        return Ok((public, private));
    }
}

/// Draws `r ∈ (0, n)` coprime to `n` and returns `r^n mod n²`.
pub fn random_mask<R: RngCore + CryptoRng + ?Sized>(pk: &PublicKey, rng: &mut R) -> BigUint {
    loop {
        let r = rng.gen_biguint_range(&BigUint::one(), &pk.n);
        if r.gcd(&pk.n).is_one() {
            return r.modpow(&pk.n, &pk.n_squared);
        }
    }
}

pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::PlaintextRange);
    }
    // g^m = 1 + m·n (mod n²) when g = n + 1.
    let gm = (BigUint::one() + m * &pk.n) % &pk.n_squared;
    let value = gm * random_mask(pk, rng) % &pk.n_squared;
    Ok(Ciphertext { value, fingerprint: pk.fingerprint })
}

/// Decryption, evaluated modulo `p²` and `q²` and recombined; equal to
/// `L(c^λ mod n²)·μ mod n`.
pub fn decrypt(sk: &PrivateKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    let pk = &sk.public;
    pk.check(c)?;
    if !c.value.gcd(&pk.n).is_one() {
        return Err(PaillierError::MalformedCiphertext);
    }
    let part = |prime: &BigUint, prime_sq: &BigUint, h: &BigUint| -> BigUint {
        let u = (&c.value % prime_sq).modpow(&(prime - 1u32), prime_sq);
        ((u - 1u32) / prime) * h % prime
    };
    let mp = part(&sk.p, &sk.p_squared, &sk.hp);
    let mq = part(&sk.q, &sk.q_squared, &sk.hq);
    // m = mp + p·((mq − mp)·p⁻¹ mod q)
    let diff = (&mq + &sk.q - (&mp % &sk.q)) % &sk.q;
    Ok(mp + &sk.p * (diff * &sk.p_inv_q % &sk.q))
}

pub fn add_cipher(pk: &PublicKey, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, PaillierError> {
    pk.check(c1)?;
    pk.check(c2)?;
    Ok(Ciphertext { value: &c1.value * &c2.value % &pk.n_squared, fingerprint: pk.fingerprint })
}

pub fn mul_plain(pk: &PublicKey, c: &Ciphertext, s: &BigUint) -> Result<Ciphertext, PaillierError> {
    pk.check(c)?;
    Ok(Ciphertext { value: c.value.modpow(s, &pk.n_squared), fingerprint: pk.fingerprint })
}

/// Encrypted significand with its plaintext exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedFloat {
    pub ciphertext: Ciphertext,
    pub exponent: i32,
    pub base: u32,
}

pub fn encrypt_encoded<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    v: &EncodedFloat,
    rng: &mut R,
) -> Result<EncryptedFloat, PaillierError> {
    let m = pk.encode_signed(&v.significand)?;
    Ok(EncryptedFloat { ciphertext: encrypt(pk, &m, rng)?, exponent: v.exponent, base: v.base })
}

pub fn decrypt_encoded(sk: &PrivateKey, v: &EncryptedFloat) -> Result<EncodedFloat, PaillierError> {
    let m = decrypt(sk, &v.ciphertext)?;
    Ok(EncodedFloat { significand: sk.public.decode_signed(&m)?, exponent: v.exponent, base: v.base })
}

/// Moves `v` down to exponent `to` by raising the ciphertext to `B^Δ`.
fn lower_exponent(pk: &PublicKey, v: &EncryptedFloat, to: i32) -> Result<EncryptedFloat, PaillierError> {
    let factor = BigUint::from(v.base).pow((v.exponent - to) as u32);
    if factor >= pk.max_signed() {
        return Err(EncodingError::SignificandOverflow.into());
    }
    Ok(EncryptedFloat { ciphertext: mul_plain(pk, &v.ciphertext, &factor)?, exponent: to, base: v.base })
}

pub fn add_encrypted(pk: &PublicKey, a: &EncryptedFloat, b: &EncryptedFloat) -> Result<EncryptedFloat, PaillierError> {
    if a.base != b.base {
        return Err(EncodingError::BaseMismatch(a.base, b.base).into());
    }
    let to = a.exponent.min(b.exponent);
    let a = if a.exponent > to { lower_exponent(pk, a, to)? } else { a.clone() };
    let b = if b.exponent > to { lower_exponent(pk, b, to)? } else { b.clone() };
    Ok(EncryptedFloat { ciphertext: add_cipher(pk, &a.ciphertext, &b.ciphertext)?, exponent: to, base: a.base })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<EncryptedFloat>,
}

impl EncryptedMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub fn enc_matrix<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    m: &Matrix,
    cfg: &FloatEncodingConfig,
    rng: &mut R,
) -> Result<EncryptedMatrix, PaillierError> {
    let mut entries = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let enc = encode_float(m.get(r, c), cfg)
                .map_err(PaillierError::from)
                .and_then(|v| encrypt_encoded(pk, &v, rng))
                .map_err(|e| e.at(r, c))?;
            entries.push(enc);
        }
    }
    Ok(EncryptedMatrix { rows: m.rows(), cols: m.cols(), entries })
}

/// Encrypts the upper triangle of a symmetric matrix and mirrors those
/// ciphertexts into the lower triangle.
pub fn enc_symmetric_matrix<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    m: &Matrix,
    cfg: &FloatEncodingConfig,
    rng: &mut R,
) -> Result<EncryptedMatrix, PaillierError> {
    let d = m.rows();
    if m.cols() != d {
        return Err(PaillierError::Shape(m.shape(), (d, d)));
    }
    let mut slots: Vec<Option<EncryptedFloat>> = vec![None; d * d];
    for r in 0..d {
        for c in r..d {
            let enc = encode_float(m.get(r, c), cfg)
                .map_err(PaillierError::from)
                .and_then(|v| encrypt_encoded(pk, &v, rng))
                .map_err(|e| e.at(r, c))?;
            slots[c * d + r] = Some(enc.clone());
            slots[r * d + c] = Some(enc);
        }
    }
    Ok(EncryptedMatrix { rows: d, cols: d, entries: slots.into_iter().flatten().collect() })
}

pub fn add_enc_matrix(
    pk: &PublicKey,
    a: &EncryptedMatrix,
    b: &EncryptedMatrix,
) -> Result<EncryptedMatrix, PaillierError> {
    if a.shape() != b.shape() {
        return Err(PaillierError::Shape(a.shape(), b.shape()));
    }
    let entries = a
        .entries
        .iter()
        .zip(&b.entries)
        .enumerate()
        .map(|(i, (x, y))| add_encrypted(pk, x, y).map_err(|e| e.at(i / a.cols, i % a.cols)))
        .collect::<Result<_, _>>()?;
    Ok(EncryptedMatrix { rows: a.rows, cols: a.cols, entries })
}

/// Repeated ciphertexts, such as the mirrored triangle of a symmetric
/// matrix, are decrypted once.
pub fn dec_matrix_encoded(sk: &PrivateKey, m: &EncryptedMatrix) -> Result<FloatMatrix, PaillierError> {
    let mut seen: HashMap<&BigUint, BigInt> = HashMap::new();
    let mut entries = Vec::with_capacity(m.entries.len());
    for (i, v) in m.entries.iter().enumerate() {
        let significand = match seen.get(v.ciphertext.value()) {
            Some(s) => s.clone(),
            None => {
                let s = decrypt_encoded(sk, v).map_err(|e| e.at(i / m.cols, i % m.cols))?.significand;
                seen.insert(v.ciphertext.value(), s.clone());
                s
            }
        };
        entries.push(EncodedFloat { significand, exponent: v.exponent, base: v.base });
    }
    Ok(FloatMatrix { rows: m.rows, cols: m.cols, entries })
}

pub fn dec_matrix(sk: &PrivateKey, m: &EncryptedMatrix) -> Result<Matrix, PaillierError> {
    Ok(crate::encoding::matrix_decode_float(&dec_matrix_encoded(sk, m)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn test_key(seed: u64) -> (PublicKey, PrivateKey, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = keygen(512, KeyMode::Test, &mut rng).unwrap();
        (pk, sk, rng)
    }

    /// Textbook decryption, kept as an independent check of the CRT path.
    fn decrypt_textbook(sk: &PrivateKey, c: &Ciphertext) -> BigUint {
        let pk = sk.public();
        let u = c.value().modpow(sk.lambda(), pk.n_squared());
        ((u - 1u32) / pk.n()) * sk.mu() % pk.n()
    }

    #[test]
    fn key_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(keygen(512, KeyMode::Production, &mut rng).unwrap_err(), PaillierError::KeySize { bits: 512 });
        assert_eq!(keygen(768, KeyMode::Test, &mut rng).unwrap_err(), PaillierError::KeySize { bits: 768 });
        let (pk, _, _) = test_key(1);
        assert_eq!(pk.bits(), 512);
        assert_eq!(pk.g(), &(pk.n() + 1u32));
    }

    #[test]
    fn round_trips_including_boundaries() {
        let (pk, sk, mut rng) = test_key(2);
        for _ in 0..100 {
            let m = rng.gen_biguint_below(pk.n());
            let c = encrypt(&pk, &m, &mut rng).unwrap();
            assert_eq!(decrypt(&sk, &c).unwrap(), m);
            assert_eq!(decrypt_textbook(&sk, &c), m);
        }
        for m in [BigUint::zero(), pk.n() - 1u32, BigUint::from(42u32)] {
            assert_eq!(decrypt(&sk, &encrypt(&pk, &m, &mut rng).unwrap()).unwrap(), m);
        }
        assert_eq!(encrypt(&pk, pk.n(), &mut rng).unwrap_err(), PaillierError::PlaintextRange);
    }

    #[test]
    fn encryption_is_randomized() {
        let (pk, _, mut rng) = test_key(3);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            seen.insert(encrypt(&pk, &BigUint::zero(), &mut rng).unwrap().value().clone());
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn wrong_key_is_rejected() {
        let (pk, _, mut rng) = test_key(4);
        let (_, sk2, _) = test_key(5);
        let c = encrypt(&pk, &BigUint::from(7u32), &mut rng).unwrap();
        assert_eq!(decrypt(&sk2, &c).unwrap_err(), PaillierError::KeyMismatch);
        assert_eq!(add_cipher(sk2.public(), &c, &c).unwrap_err(), PaillierError::KeyMismatch);
        assert_eq!(pk.ciphertext(pk.n_squared().clone()).unwrap_err(), PaillierError::MalformedCiphertext);
    }

    #[test]
    fn homomorphic_addition() {
        let (pk, sk, mut rng) = test_key(6);
        let enc = |v: u32, rng: &mut ChaCha20Rng| encrypt(&pk, &BigUint::from(v), rng).unwrap();
        let five = add_cipher(&pk, &enc(2, &mut rng), &enc(3, &mut rng)).unwrap();
        assert_eq!(decrypt(&sk, &five).unwrap(), BigUint::from(5u32));
        let same = add_cipher(&pk, &enc(9, &mut rng), &enc(0, &mut rng)).unwrap();
        assert_eq!(decrypt(&sk, &same).unwrap(), BigUint::from(9u32));

        let values: Vec<BigUint> = (0..8).map(|_| rng.gen_biguint_below(pk.n())).collect();
        let total = values
            .iter()
            .map(|v| encrypt(&pk, v, &mut rng).unwrap())
            .reduce(|a, b| add_cipher(&pk, &a, &b).unwrap())
            .unwrap();
        let expected = values.iter().fold(BigUint::zero(), |acc, v| (acc + v) % pk.n());
        assert_eq!(decrypt(&sk, &total).unwrap(), expected);
    }

    #[test]
    fn scalar_multiplication() {
        let (pk, sk, mut rng) = test_key(7);
        let u = rng.gen_biguint_below(pk.n());
        let c = encrypt(&pk, &u, &mut rng).unwrap();
        assert_eq!(decrypt(&sk, &mul_plain(&pk, &c, &BigUint::one()).unwrap()).unwrap(), u);
        assert_eq!(decrypt(&sk, &mul_plain(&pk, &c, &BigUint::zero()).unwrap()).unwrap(), BigUint::zero());
        let s = rng.gen_biguint(200);
        assert_eq!(decrypt(&sk, &mul_plain(&pk, &c, &s).unwrap()).unwrap(), (&s * &u) % pk.n());

        let mut folded = c.clone();
        for k in 2..=16u32 {
            folded = add_cipher(&pk, &folded, &c).unwrap();
            let scaled = mul_plain(&pk, &c, &BigUint::from(k)).unwrap();
            assert_eq!(decrypt(&sk, &folded).unwrap(), decrypt(&sk, &scaled).unwrap());
        }
    }

    #[test]
    fn signed_mapping() {
        let (pk, sk, mut rng) = test_key(8);
        for v in [-5i64, 0, 5, -1] {
            let m = pk.encode_signed(&BigInt::from(v)).unwrap();
            let back = pk.decode_signed(&decrypt(&sk, &encrypt(&pk, &m, &mut rng).unwrap()).unwrap()).unwrap();
            assert_eq!(back, BigInt::from(v));
        }
        let too_big = BigInt::from(pk.max_signed()) + 1;
        assert_eq!(pk.encode_signed(&too_big).unwrap_err(), PaillierError::SignedRange);
        assert_eq!(pk.decode_signed(&(pk.n() / 2u32)).unwrap_err(), PaillierError::Overflow);
    }

    #[test]
    fn encrypted_matrix_sums() {
        let (pk, sk, mut rng) = test_key(9);
        let cfg = FloatEncodingConfig::default();
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let sum = add_enc_matrix(
            &pk,
            &enc_matrix(&pk, &a, &cfg, &mut rng).unwrap(),
            &enc_matrix(&pk, &b, &cfg, &mut rng).unwrap(),
        )
        .unwrap();
        assert_eq!(dec_matrix(&sk, &sum).unwrap(), Matrix::from_rows(&[vec![6.0, 8.0], vec![10.0, 12.0]]).unwrap());

        let zero = Matrix::zeros(2, 2).unwrap();
        let plus_zero = add_enc_matrix(
            &pk,
            &enc_matrix(&pk, &a, &cfg, &mut rng).unwrap(),
            &enc_matrix(&pk, &zero, &cfg, &mut rng).unwrap(),
        )
        .unwrap();
        assert_eq!(dec_matrix(&sk, &plus_zero).unwrap(), a);

        let wrong = enc_matrix(&pk, &Matrix::zeros(1, 2).unwrap(), &cfg, &mut rng).unwrap();
        assert!(matches!(add_enc_matrix(&pk, &sum, &wrong), Err(PaillierError::Shape(..))));
    }

    #[test]
    fn four_random_matrices_sum_to_plaintext_sum() {
        use rand::Rng;
        let (pk, sk, mut rng) = test_key(10);
        let cfg = FloatEncodingConfig::default();
        let ms: Vec<Matrix> =
            (0..4).map(|_| Matrix::from_fn(11, 11, |_, _| rng.gen_range(-100.0..100.0)).unwrap()).collect();
        let enc: Vec<EncryptedMatrix> = ms.iter().map(|m| enc_matrix(&pk, m, &cfg, &mut rng).unwrap()).collect();
        let total = enc.iter().skip(1).fold(enc[0].clone(), |acc, m| add_enc_matrix(&pk, &acc, m).unwrap());
        let plain = ms.iter().skip(1).fold(ms[0].clone(), |acc, m| acc.add(m).unwrap());
        assert!(dec_matrix(&sk, &total).unwrap().max_abs_diff(&plain) <= 1e-9);
    }

    #[test]
    fn symmetric_encryption_mirrors_ciphertexts() {
        let (pk, sk, mut rng) = test_key(11);
        let m = Matrix::from_rows(&[vec![1.0, -0.5], vec![-0.5, 2.0]]).unwrap();
        let e = enc_symmetric_matrix(&pk, &m, &FloatEncodingConfig::default(), &mut rng).unwrap();
        assert_eq!(e.entries[1], e.entries[2]);
        assert_eq!(dec_matrix(&sk, &e).unwrap(), m);
    }
}
