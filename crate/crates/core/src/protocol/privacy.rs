//! Routing policy over a transcript: who may receive what.

use std::fmt;

use super::{Method, MessageType, SessionConfig, Transcript};
use crate::paillier::PublicKey as PaillierKey;
use crate::party::{PartyId, RoleKind};
use crate::transport::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// Reduced or raw rows reached someone other than the consumer.
    RowsExposed,
    /// The HE aggregator received something other than ciphertexts and
    /// server broadcasts.
    AggregatorPlaintext,
    /// The server received something other than aggregates.
    ServerNonAggregate,
    /// A provider received a type it has no use for.
    ProviderForbidden,
    /// The consumer received something other than reduced rows.
    ConsumerForbidden,
    /// A message type came from a party that never sends it.
    UnexpectedSender,
    UnknownParty,
    MalformedPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position in the transcript.
    pub index: usize,
    pub kind: ViolationKind,
    pub msg_type: MessageType,
    pub sender: PartyId,
    pub receiver: PartyId,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#{}: {:?} {} -> {}: {:?}",
            self.index, self.msg_type, self.sender, self.receiver, self.kind
        )
    }
}

fn ciphertexts_ok(payload: &[u8], key: Option<&PaillierKey>) -> bool {
    match key {
        Some(pk) => wire::is_encrypted_under(payload, pk),
        None => wire::is_encrypted_matrix(payload),
    }
}

fn payload_ok(t: MessageType, payload: &[u8], key: Option<&PaillierKey>) -> bool {
    use MessageType::*;
    match t {
        PublicKey => wire::decode_public_key(payload).is_ok(),
        EncryptedSums | EncryptedSumAggregate | EncryptedCov | EncryptedCovAggregate => ciphertexts_ok(payload, key),
        PlainMean => wire::decode_real_vector(payload).is_ok(),
        TransferMatrix | ReducedRows => wire::decode_real_matrix(payload).is_ok(),
        ShareBundle | LocalShareSum => wire::decode_shares(payload).is_ok(),
        SampleCount => wire::decode_count(payload).is_ok(),
    }
}

/// Checks every delivered message against the routing policy and returns
/// all violations found. Ciphertexts are checked against the key the server
/// broadcast, when the transcript holds one.
pub fn assert_privacy(t: &Transcript, cfg: &SessionConfig) -> Result<(), Vec<Violation>> {
    use MessageType::*;
    let he = cfg.method == Method::He;
    let key = t
        .messages()
        .iter()
        .filter(|m| m.msg_type == PublicKey && m.sender == PartyId::SERVER)
        .find_map(|m| wire::decode_public_key(&m.payload).ok());
    let aggregator = cfg.aggregator_id();
    let mut found = Vec::new();
    for (index, m) in t.messages().iter().enumerate() {
        let mut flag = |kind| {
            found.push(Violation { index, kind, msg_type: m.msg_type, sender: m.sender, receiver: m.receiver })
        };
        let (Some(from), Some(to)) = (cfg.role_of(m.sender), cfg.role_of(m.receiver)) else {
            flag(ViolationKind::UnknownParty);
            continue;
        };

        let sender_ok = match m.msg_type {
            PublicKey | PlainMean | TransferMatrix => from == RoleKind::Server,
            EncryptedSumAggregate | EncryptedCovAggregate => he && m.sender == aggregator,
            SampleCount | EncryptedSums | EncryptedCov | ShareBundle | LocalShareSum | ReducedRows => {
                from == RoleKind::Provider
            }
        };
        if !sender_ok {
            flag(ViolationKind::UnexpectedSender);
        }
        if !payload_ok(m.msg_type, &m.payload, key.as_ref()) {
            flag(ViolationKind::MalformedPayload);
        }

        if m.msg_type == ReducedRows && to != RoleKind::Consumer {
            flag(ViolationKind::RowsExposed);
            continue;
        }

        let broadcast = matches!(m.msg_type, PublicKey | PlainMean | TransferMatrix) && from == RoleKind::Server;
        match to {
            RoleKind::Server => {
                let allowed = match m.msg_type {
                    SampleCount => true,
                    EncryptedSumAggregate | EncryptedCovAggregate => he,
                    LocalShareSum => !he,
                    _ => false,
                };
                if !allowed {
                    flag(ViolationKind::ServerNonAggregate);
                }
            }
            RoleKind::Provider if he && m.receiver == aggregator => {
                let allowed = match m.msg_type {
                    EncryptedSums | EncryptedCov => ciphertexts_ok(&m.payload, key.as_ref()),
                    PublicKey | PlainMean | TransferMatrix => broadcast,
                    SampleCount => true,
                    _ => false,
                };
                if !allowed {
                    flag(ViolationKind::AggregatorPlaintext);
                }
            }
            RoleKind::Provider => {
                let allowed = match m.msg_type {
                    PublicKey => he && broadcast,
                    PlainMean | TransferMatrix => broadcast,
                    ShareBundle => !he,
                    SampleCount => true,
                    _ => false,
                };
                if !allowed {
                    flag(ViolationKind::ProviderForbidden);
                }
            }
            RoleKind::Consumer if m.msg_type != ReducedRows => flag(ViolationKind::ConsumerForbidden),
            RoleKind::Consumer => {}
        }
    }
    if found.is_empty() {
        Ok(())
    } else {
        Err(found)
    }
}
