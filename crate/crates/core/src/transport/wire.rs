//! Frame layout and payload codecs. All integers are big-endian.
//!
//! ```text
//! frame   = "PPCA" version:u8 type:u8 sender:u16 receiver:u16 step:u32 len:u32 payload
//! real    = rows:u32 cols:u32 (f64)*
//! shares  = owner:u16 secret_id:u64 bits:u8 rows:u32 cols:u32 (u128)*
//! cipher  = rows:u32 cols:u32 (exponent:i32 len:u32 magnitude)*
//! pubkey  = len:u32 modulus
//! count   = u64
//! ```

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::paillier::{EncryptedFloat, EncryptedMatrix, PaillierError, PublicKey};
use crate::party::PartyId;
use crate::protocol::message::{MessageType, ProtocolMessage};
use crate::sharing::{SecretId, ShareMatrix};

pub const MAGIC: [u8; 4] = *b"PPCA";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const MAX_PAYLOAD: usize = 256 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("payload length {0} exceeds the 256 MiB cap")]
    TooLong(usize),
    #[error("{0} trailing bytes after the encoded value")]
    TrailingBytes(usize),
    #[error("invalid payload: {0}")]
    Invalid(String),
}

impl From<LinalgError> for WireError {
    fn from(e: LinalgError) -> Self {
        WireError::Invalid(e.to_string())
    }
}

impl From<PaillierError> for WireError {
    fn from(e: PaillierError) -> Self {
        WireError::Invalid(e.to_string())
    }
}

pub fn serialize(msg: &ProtocolMessage) -> Result<Vec<u8>, WireError> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(WireError::TooLong(msg.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + msg.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.msg_type as u8);
    out.extend_from_slice(&msg.sender.0.to_be_bytes());
    out.extend_from_slice(&msg.receiver.0.to_be_bytes());
    out.extend_from_slice(&msg.step.to_be_bytes());
    out.extend_from_slice(&(msg.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

/// Parsed header fields; `len` is the payload length still to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: MessageType,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub step: u32,
    pub len: usize,
}

pub fn parse_header(h: &[u8; HEADER_LEN]) -> Result<FrameHeader, WireError> {
    let magic = [h[0], h[1], h[2], h[3]];
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(WireError::UnsupportedVersion(h[4]));
    }
    let msg_type = MessageType::from_byte(h[5]).ok_or(WireError::UnknownType(h[5]))?;
    let len = u32::from_be_bytes([h[14], h[15], h[16], h[17]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLong(len));
    }
    Ok(FrameHeader {
        msg_type,
        sender: PartyId(u16::from_be_bytes([h[6], h[7]])),
        receiver: PartyId(u16::from_be_bytes([h[8], h[9]])),
        step: u32::from_be_bytes([h[10], h[11], h[12], h[13]]),
        len,
    })
}

/// Decodes the first frame of `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(ProtocolMessage, usize), WireError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(WireError::Truncated { needed: HEADER_LEN, available: bytes.len() })?;
    let h = parse_header(header)?;
    let end = HEADER_LEN + h.len;
    if bytes.len() < end {
        return Err(WireError::Truncated { needed: end, available: bytes.len() });
    }
    let msg = ProtocolMessage {
        msg_type: h.msg_type,
        sender: h.sender,
        receiver: h.receiver,
        step: h.step,
        payload: bytes[HEADER_LEN..end].to_vec(),
    };
    Ok((msg, end))
}

/// Decodes exactly one frame.
pub fn deserialize(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - used));
    }
    Ok(msg)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(WireError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32, WireError> {
        Ok(i32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn u128(&mut self) -> Result<u128, WireError> {
        Ok(u128::from_be_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.array()?))
    }

    fn big(&mut self) -> Result<BigUint, WireError> {
        let len = self.u32()? as usize;
        Ok(BigUint::from_bytes_be(self.take(len)?))
    }

    fn shape(&mut self) -> Result<(usize, usize), WireError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let cells = rows.checked_mul(cols).ok_or_else(|| WireError::Invalid("shape overflows".into()))?;
        if cells > self.buf.len() {
            return Err(WireError::Truncated { needed: cells, available: self.buf.len() });
        }
        Ok((rows, cols))
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

fn put_big(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn put_shape(out: &mut Vec<u8>, rows: usize, cols: usize) {
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
}

pub fn encode_real_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * m.data().len());
    put_shape(&mut out, m.rows(), m.cols());
    for v in m.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_real_matrix(bytes: &[u8]) -> Result<Matrix, WireError> {
    let mut r = Reader::new(bytes);
    let (rows, cols) = r.shape()?;
    let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(Matrix::new(rows, cols, data)?)
}

/// Real vectors travel as `1 × len` matrices.
pub fn encode_real_vector(v: &[f64]) -> Result<Vec<u8>, WireError> {
    Ok(encode_real_matrix(&Matrix::new(1, v.len(), v.to_vec())?))
}

pub fn decode_real_vector(bytes: &[u8]) -> Result<Vec<f64>, WireError> {
    let m = decode_real_matrix(bytes)?;
    if m.rows() != 1 {
        return Err(WireError::Invalid(format!("expected a row vector, got {} rows", m.rows())));
    }
    Ok(m.into_data())
}

pub fn encode_shares(m: &ShareMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(19 + 16 * m.values.len());
    out.extend_from_slice(&m.owner.0.to_be_bytes());
    out.extend_from_slice(&m.secret_id.0.to_be_bytes());
    out.push(m.bits as u8);
    put_shape(&mut out, m.rows, m.cols);
    for v in &m.values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_shares(bytes: &[u8]) -> Result<ShareMatrix, WireError> {
    let mut r = Reader::new(bytes);
    let owner = PartyId(r.u16()?);
    let secret_id = SecretId(r.u64()?);
    let bits = match r.u8()? {
        0 => 128,
        b if b <= 128 => b as u32,
        b => return Err(WireError::Invalid(format!("ring width {b}"))),
    };
    let (rows, cols) = r.shape()?;
    let mask = crate::encoding::ring_mask(bits);
    let values = (0..rows * cols)
        .map(|_| {
            let v = r.u128()?;
            if v & !mask != 0 {
                return Err(WireError::Invalid(format!("share value exceeds {bits} bits")));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(ShareMatrix { rows, cols, values, owner, secret_id, bits })
}

pub fn encode_encrypted(m: &EncryptedMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    put_shape(&mut out, m.rows, m.cols);
    for e in &m.entries {
        out.extend_from_slice(&e.exponent.to_be_bytes());
        put_big(&mut out, e.ciphertext.value());
    }
    out
}

/// Ciphertexts carry no key id on the wire; they are bound to `pk` here.
pub fn decode_encrypted(bytes: &[u8], pk: &PublicKey, base: u32) -> Result<EncryptedMatrix, WireError> {
    let mut r = Reader::new(bytes);
    let (rows, cols) = r.shape()?;
    let entries = (0..rows * cols)
        .map(|_| {
            let exponent = r.i32()?;
            let ciphertext = pk.ciphertext(r.big()?)?;
            Ok(EncryptedFloat { ciphertext, exponent, base })
        })
        .collect::<Result<Vec<_>, WireError>>()?;
    r.finish()?;
    Ok(EncryptedMatrix { rows, cols, entries })
}

/// Structural check of an encrypted-matrix payload without a key. A
/// ciphertext is a unit modulo `n²`, so zero entries are rejected.
pub fn is_encrypted_matrix(bytes: &[u8]) -> bool {
    let mut r = Reader::new(bytes);
    let Ok((rows, cols)) = r.shape() else { return false };
    for _ in 0..rows * cols {
        if r.i32().is_err() || r.big().map_or(true, |c| c.is_zero()) {
            return false;
        }
    }
    r.finish().is_ok()
}

/// Like [`is_encrypted_matrix`], and every ciphertext lies in `(0, n²)`
/// and is coprime to `n`.
pub fn is_encrypted_under(bytes: &[u8], pk: &PublicKey) -> bool {
    decode_encrypted(bytes, pk, 16)
        .is_ok_and(|m| m.entries.iter().all(|e| e.ciphertext.value().gcd(pk.n()).is_one()))
}

pub fn encode_public_key(pk: &PublicKey) -> Vec<u8> {
    let mut out = Vec::new();
    put_big(&mut out, pk.n());
    out
}

pub fn decode_public_key(bytes: &[u8]) -> Result<PublicKey, WireError> {
    let mut r = Reader::new(bytes);
    let n = r.big()?;
    r.finish()?;
    if n.bits() < 16 {
        return Err(WireError::Invalid("public modulus too small".into()));
    }
    Ok(PublicKey::from_modulus(n))
}

pub fn encode_count(n: u64) -> Vec<u8> {
    n.to_be_bytes().to_vec()
}

pub fn decode_count(bytes: &[u8]) -> Result<u64, WireError> {
    let mut r = Reader::new(bytes);
    let n = r.u64()?;
    r.finish()?;
    Ok(n)
}
