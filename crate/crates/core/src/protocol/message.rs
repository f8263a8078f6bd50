use crate::party::PartyId;

/// Closed message taxonomy. The discriminants are the on-wire type bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageType {
    PublicKey = 1,
    EncryptedSums = 2,
    EncryptedSumAggregate = 3,
    PlainMean = 4,
    EncryptedCov = 5,
    EncryptedCovAggregate = 6,
    ShareBundle = 7,
    LocalShareSum = 8,
    TransferMatrix = 9,
    ReducedRows = 10,
    SampleCount = 11,
}

impl MessageType {
    pub const ALL: [MessageType; 11] = [
        MessageType::PublicKey,
        MessageType::EncryptedSums,
        MessageType::EncryptedSumAggregate,
        MessageType::PlainMean,
        MessageType::EncryptedCov,
        MessageType::EncryptedCovAggregate,
        MessageType::ShareBundle,
        MessageType::LocalShareSum,
        MessageType::TransferMatrix,
        MessageType::ReducedRows,
        MessageType::SampleCount,
    ];

    pub fn from_byte(b: u8) -> Option<MessageType> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtocolMessage {
    pub msg_type: MessageType,
    pub sender: PartyId,
    pub receiver: PartyId,
    /// Per-sender sequence number, strictly increasing.
    pub step: u32,
    pub payload: Vec<u8>,
}

/// Everything delivered during a session, in delivery order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    messages: Vec<ProtocolMessage>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, msg: ProtocolMessage) {
        self.messages.push(msg);
    }

    pub fn messages(&self) -> &[ProtocolMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn count(&self, t: MessageType) -> usize {
        self.messages.iter().filter(|m| m.msg_type == t).count()
    }

    pub fn sent_by(&self, p: PartyId) -> usize {
        self.messages.iter().filter(|m| m.sender == p).count()
    }

    /// Delivery order is only meaningful within one sender once several
    /// execution contexts are involved; this orders by `(sender, step)`.
    pub fn canonical(&self) -> Transcript {
        let mut messages = self.messages.clone();
        messages.sort_by_key(|m| (m.sender, m.step));
        Transcript { messages }
    }

    /// Message types with consecutive repeats collapsed.
    pub fn type_runs(&self) -> Vec<(MessageType, usize)> {
        let mut runs: Vec<(MessageType, usize)> = Vec::new();
        for m in &self.messages {
            match runs.last_mut() {
                Some((t, n)) if *t == m.msg_type => *n += 1,
                _ => runs.push((m.msg_type, 1)),
            }
        }
        runs
    }

    /// Per-sender step numbers strictly increase in delivery order.
    pub fn steps_increase_per_sender(&self) -> bool {
        let mut last: std::collections::HashMap<PartyId, u32> = Default::default();
        self.messages.iter().all(|m| match last.insert(m.sender, m.step) {
            Some(prev) => m.step > prev,
            None => true,
        })
    }

    /// Step numbers strictly increase on every sender-receiver channel.
    /// Receivers that log concurrently only preserve this weaker order.
    pub fn steps_increase_per_channel(&self) -> bool {
        let mut last: std::collections::HashMap<(PartyId, PartyId), u32> = Default::default();
        self.messages.iter().all(|m| match last.insert((m.sender, m.receiver), m.step) {
            Some(prev) => m.step > prev,
            None => true,
        })
    }
}

impl FromIterator<ProtocolMessage> for Transcript {
    fn from_iter<I: IntoIterator<Item = ProtocolMessage>>(iter: I) -> Self {
        Transcript { messages: iter.into_iter().collect() }
    }
}
