//! n-out-of-n additive secret sharing over `Z_{2^l}`.

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::encoding::{ring_add, ring_mask, ring_sub, RingMatrix};
use crate::party::PartyId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SharingError {
    #[error("additive sharing needs at least 2 parties, got {0}")]
    TooFewParties(usize),
    #[error("ring width {0} outside 1..=128")]
    Width(u32),
    #[error("secret {value:#x} does not fit in {bits} bits")]
    ValueRange { value: u128, bits: u32 },
    #[error("share of {0} is missing; all shares are required")]
    Incomplete(PartyId),
    #[error("{0} contributed more than one share")]
    Duplicate(PartyId),
    #[error("share from unexpected party {0}")]
    UnexpectedOwner(PartyId),
    #[error("shares belong to different secrets ({0:?} vs {1:?})")]
    Binding(SecretId, SecretId),
    #[error("local addition over shares of different owners ({0} vs {1})")]
    Ownership(PartyId, PartyId),
    #[error("ring widths differ ({0} vs {1})")]
    WidthMismatch(u32, u32),
    #[error("shape mismatch: expected {expected:?}, got {found:?} from {owner}")]
    Shape { expected: (usize, usize), found: (usize, usize), owner: PartyId },
    #[error("nothing to combine")]
    Empty,
}

/// Binds the shares of one secret together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SecretId(pub u64);

impl SecretId {
    pub fn new(tag: u32, dealer: PartyId) -> Self {
        SecretId(((tag as u64) << 16) | dealer.0 as u64)
    }

    /// Identifier for the local sum of several secrets; independent of the
    /// order the operands are listed in.
    pub fn sum_of(ids: &[SecretId]) -> SecretId {
        let mut sorted: Vec<u64> = ids.iter().map(|s| s.0).collect();
        sorted.sort_unstable();
        let mut h = 0x5355_4d5f_4f46_5f53u64;
        for v in sorted {
            h ^= v;
            // splitmix64 finalizer
            h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
            h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            h ^= h >> 31;
        }
        SecretId(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub value: u128,
    pub owner: PartyId,
    pub secret_id: SecretId,
    pub bits: u32,
}

fn check_width(bits: u32) -> Result<(), SharingError> {
    if bits == 0 || bits > 128 {
        return Err(SharingError::Width(bits));
    }
    Ok(())
}

fn random_ring<R: RngCore + ?Sized>(rng: &mut R, bits: u32) -> u128 {
    rng.gen::<u128>() & ring_mask(bits)
}

/// Splits `secret` among `owners`: all but the last share come from `prg`,
/// the last is `s − Σ rᵢ mod 2^l`.
pub fn share<R: RngCore + ?Sized>(
    secret: u128,
    owners: &[PartyId],
    bits: u32,
    secret_id: SecretId,
    prg: &mut R,
) -> Result<Vec<Share>, SharingError> {
    check_width(bits)?;
    if owners.len() < 2 {
        return Err(SharingError::TooFewParties(owners.len()));
    }
    if secret & !ring_mask(bits) != 0 {
        return Err(SharingError::ValueRange { value: secret, bits });
    }
    let mut out = Vec::with_capacity(owners.len());
    let mut last = secret;
    for &owner in &owners[..owners.len() - 1] {
        let r = random_ring(prg, bits);
        last = ring_sub(last, r, bits);
        out.push(Share { value: r, owner, secret_id, bits });
    }
    out.push(Share { value: last, owner: owners[owners.len() - 1], secret_id, bits });
    Ok(out)
}

/// Checks that `present` names every party in `owners` exactly once.
fn check_complete(present: impl Iterator<Item = PartyId>, owners: &[PartyId]) -> Result<(), SharingError> {
    let mut seen = vec![false; owners.len()];
    for p in present {
        let idx = owners.iter().position(|&o| o == p).ok_or(SharingError::UnexpectedOwner(p))?;
        if seen[idx] {
            return Err(SharingError::Duplicate(p));
        }
        seen[idx] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(SharingError::Incomplete(owners[i])),
        None => Ok(()),
    }
}

pub fn reconstruct(shares: &[Share], owners: &[PartyId]) -> Result<u128, SharingError> {
    let first = shares.first().ok_or(SharingError::Empty)?;
    for s in shares {
        if s.secret_id != first.secret_id {
            return Err(SharingError::Binding(first.secret_id, s.secret_id));
        }
        if s.bits != first.bits {
            return Err(SharingError::WidthMismatch(first.bits, s.bits));
        }
    }
    check_complete(shares.iter().map(|s| s.owner), owners)?;
    Ok(shares.iter().fold(0, |acc, s| ring_add(acc, s.value, first.bits)))
}

/// Sum of one party's shares of different secrets.
pub fn add_local(shares: &[Share]) -> Result<Share, SharingError> {
    let first = shares.first().ok_or(SharingError::Empty)?;
    let mut value = 0;
    for s in shares {
        if s.owner != first.owner {
            return Err(SharingError::Ownership(first.owner, s.owner));
        }
        if s.bits != first.bits {
            return Err(SharingError::WidthMismatch(first.bits, s.bits));
        }
        value = ring_add(value, s.value, s.bits);
    }
    let ids: Vec<SecretId> = shares.iter().map(|s| s.secret_id).collect();
    Ok(Share { value, owner: first.owner, secret_id: SecretId::sum_of(&ids), bits: first.bits })
}

/// One party's shares of every entry of a secret matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u128>,
    pub owner: PartyId,
    pub secret_id: SecretId,
    pub bits: u32,
}

impl ShareMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub fn share_matrix<R: RngCore + ?Sized>(
    secret: &RingMatrix,
    owners: &[PartyId],
    bits: u32,
    secret_id: SecretId,
    prg: &mut R,
) -> Result<Vec<ShareMatrix>, SharingError> {
    check_width(bits)?;
    if owners.len() < 2 {
        return Err(SharingError::TooFewParties(owners.len()));
    }
    let mut out: Vec<ShareMatrix> = owners
        .iter()
        .map(|&owner| ShareMatrix {
            rows: secret.rows,
            cols: secret.cols,
            values: Vec::with_capacity(secret.values.len()),
            owner,
            secret_id,
            bits,
        })
        .collect();
    for &v in &secret.values {
        for (m, s) in out.iter_mut().zip(share(v, owners, bits, secret_id, prg)?) {
            m.values.push(s.value);
        }
    }
    Ok(out)
}

fn check_matrix_group(parts: &[ShareMatrix]) -> Result<&ShareMatrix, SharingError> {
    let first = parts.first().ok_or(SharingError::Empty)?;
    for p in parts {
        if p.shape() != first.shape() {
            return Err(SharingError::Shape { expected: first.shape(), found: p.shape(), owner: p.owner });
        }
        if p.bits != first.bits {
            return Err(SharingError::WidthMismatch(first.bits, p.bits));
        }
    }
    Ok(first)
}

pub fn reconstruct_matrix(parts: &[ShareMatrix], owners: &[PartyId]) -> Result<RingMatrix, SharingError> {
    let first = check_matrix_group(parts)?;
    if let Some(p) = parts.iter().find(|p| p.secret_id != first.secret_id) {
        return Err(SharingError::Binding(first.secret_id, p.secret_id));
    }
    check_complete(parts.iter().map(|p| p.owner), owners)?;
    let mut out = RingMatrix::zeros(first.rows, first.cols);
    for p in parts {
        for (o, &v) in out.values.iter_mut().zip(&p.values) {
            *o = ring_add(*o, v, first.bits);
        }
    }
    Ok(out)
}

pub fn add_local_matrix(parts: &[ShareMatrix]) -> Result<ShareMatrix, SharingError> {
    let first = check_matrix_group(parts)?;
    if let Some(p) = parts.iter().find(|p| p.owner != first.owner) {
        return Err(SharingError::Ownership(first.owner, p.owner));
    }
    let mut values = vec![0u128; first.values.len()];
    for p in parts {
        for (o, &v) in values.iter_mut().zip(&p.values) {
            *o = ring_add(*o, v, first.bits);
        }
    }
    let ids: Vec<SecretId> = parts.iter().map(|p| p.secret_id).collect();
    Ok(ShareMatrix {
        rows: first.rows,
        cols: first.cols,
        values,
        owner: first.owner,
        secret_id: SecretId::sum_of(&ids),
        bits: first.bits,
    })
}
