//! Message delivery: an in-process FIFO bus for simulation and a TCP
//! transport for parties running in separate processes.

pub mod tcp;
pub mod wire;

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::party::PartyId;
use crate::protocol::message::{ProtocolMessage, Transcript};

pub use tcp::TcpTransport;
pub use wire::{deserialize, serialize, WireError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o error talking to {peer}: {source}")]
    Io {
        peer: PartyId,
        #[source]
        source: std::io::Error,
    },
    #[error("no endpoint known for {0}")]
    UnknownPeer(PartyId),
    #[error("no message for {party} within {waited:?}")]
    Timeout { party: PartyId, waited: Duration },
    #[error("frame addressed to {found} arrived at {expected}")]
    Misrouted { expected: PartyId, found: PartyId },
    #[error("all peer connections closed")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Address {
    Sim,
    Tcp(SocketAddr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub party: PartyId,
    pub address: Address,
}

/// Shared, append-only transcript that several transports may log into.
#[derive(Debug, Clone, Default)]
pub struct TranscriptSink(Arc<Mutex<Transcript>>);

impl TranscriptSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, msg: &ProtocolMessage) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).push(msg.clone());
    }

    pub fn snapshot(&self) -> Transcript {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Point-to-point delivery for one party.
pub trait Transport {
    fn party(&self) -> PartyId;
    fn send(&mut self, msg: ProtocolMessage) -> Result<(), TransportError>;
    fn recv(&mut self, timeout: Duration) -> Result<ProtocolMessage, TransportError>;
}

/// Single FIFO queue shared by every simulated party. Each message is
/// serialized on send and parsed on delivery so the simulated path
/// exercises the same framing as the network.
#[derive(Debug, Default)]
pub struct SimulationBus {
    queue: VecDeque<Vec<u8>>,
    sink: TranscriptSink,
}

impl SimulationBus {
    pub fn new(sink: TranscriptSink) -> Self {
        Self { queue: VecDeque::new(), sink }
    }

    pub fn send(&mut self, msg: &ProtocolMessage) -> Result<(), TransportError> {
        self.queue.push_back(serialize(msg)?);
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Delivers the oldest queued message.
    pub fn deliver_next(&mut self) -> Result<Option<ProtocolMessage>, TransportError> {
        let Some(frame) = self.queue.pop_front() else { return Ok(None) };
        let msg = deserialize(&frame)?;
        self.sink.record(&msg);
        Ok(Some(msg))
    }

    /// Delivers the oldest message addressed to `party`.
    pub fn recv_for(&mut self, party: PartyId) -> Result<Option<ProtocolMessage>, TransportError> {
        let Some(pos) = self.queue.iter().position(|f| f.get(8..10) == Some(&party.0.to_be_bytes()[..])) else {
            return Ok(None);
        };
        let frame = self.queue.remove(pos).expect("index in range");
        let msg = deserialize(&frame)?;
        self.sink.record(&msg);
        Ok(Some(msg))
    }

    pub fn transcript(&self) -> Transcript {
        self.sink.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::message::MessageType;

    fn msg(receiver: u16, step: u32) -> ProtocolMessage {
        ProtocolMessage {
            msg_type: MessageType::SampleCount,
            sender: PartyId(1),
            receiver: PartyId(receiver),
            step,
            payload: wire::encode_count(3),
        }
    }

    #[test]
    fn bus_is_fifo_and_logs_deliveries() {
        let sink = TranscriptSink::new();
        let mut bus = SimulationBus::new(sink.clone());
        for (r, s) in [(0, 0), (2, 1), (0, 2)] {
            bus.send(&msg(r, s)).unwrap();
        }
        assert_eq!(bus.recv_for(PartyId(2)).unwrap().unwrap().step, 1);
        assert_eq!(bus.deliver_next().unwrap().unwrap().step, 0);
        assert_eq!(bus.deliver_next().unwrap().unwrap().step, 2);
        assert!(bus.deliver_next().unwrap().is_none());
        let steps: Vec<u32> = sink.snapshot().messages().iter().map(|m| m.step).collect();
        assert_eq!(steps, vec![1, 0, 2]);
    }
}
