use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{self, FrameHeader, HEADER_LEN};
use super::{Transport, TranscriptSink, TransportError};
use crate::party::PartyId;
use crate::protocol::message::ProtocolMessage;

const ACCEPT_POLL: Duration = Duration::from_millis(5);
const CONNECT_RETRY: Duration = Duration::from_millis(20);

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<ProtocolMessage>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(wire::WireError::Truncated { needed: HEADER_LEN, available: got }.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(TransportError::Io { peer: PartyId(u16::MAX), source: e }),
        }
    }
    let FrameHeader { msg_type, sender, receiver, step, len } = wire::parse_header(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            wire::WireError::Truncated { needed: HEADER_LEN + len, available: HEADER_LEN }.into()
        }
        _ => TransportError::Io { peer: sender, source: e },
    })?;
    Ok(Some(ProtocolMessage { msg_type, sender, receiver, step, payload }))
}

/// One party's network endpoint: a listener feeding an inbox, plus one
/// lazily opened outgoing connection per peer.
pub struct TcpTransport {
    me: PartyId,
    local: SocketAddr,
    peers: HashMap<PartyId, SocketAddr>,
    outgoing: HashMap<PartyId, TcpStream>,
    inbox: Receiver<Result<ProtocolMessage, TransportError>>,
    sink: Option<TranscriptSink>,
    connect_timeout: Duration,
    shutdown: Arc<AtomicBool>,
}

impl TcpTransport {
    pub fn bind(
        me: PartyId,
        listen: SocketAddr,
        peers: HashMap<PartyId, SocketAddr>,
        sink: Option<TranscriptSink>,
    ) -> Result<Self, TransportError> {
        let io_err = |source| TransportError::Io { peer: me, source };
        let listener = TcpListener::bind(listen).map_err(io_err)?;
        listener.set_nonblocking(true).map_err(io_err)?;
        let local = listener.local_addr().map_err(io_err)?;
        let (tx, inbox) = mpsc::channel();
        let shutdown = Arc::new(AtomicBool::new(false));
        let stop = shutdown.clone();
        thread::spawn(move || accept_loop(listener, tx, stop));
        Ok(Self {
            me,
            local,
            peers,
            outgoing: HashMap::new(),
            inbox,
            sink,
            connect_timeout: super::DEFAULT_TIMEOUT,
            shutdown,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn set_peers(&mut self, peers: HashMap<PartyId, SocketAddr>) {
        self.peers = peers;
    }

    pub fn set_connect_timeout(&mut self, t: Duration) {
        self.connect_timeout = t;
    }

    fn connect(&mut self, to: PartyId) -> Result<&mut TcpStream, TransportError> {
        if !self.outgoing.contains_key(&to) {
            let addr = *self.peers.get(&to).ok_or(TransportError::UnknownPeer(to))?;
            let deadline = Instant::now() + self.connect_timeout;
            let stream = loop {
                match TcpStream::connect(addr) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() >= deadline => return Err(TransportError::Io { peer: to, source: e }),
                    Err(_) => thread::sleep(CONNECT_RETRY),
                }
            };
            stream.set_nodelay(true).map_err(|source| TransportError::Io { peer: to, source })?;
            self.outgoing.insert(to, stream);
        }
        Ok(self.outgoing.get_mut(&to).expect("inserted above"))
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Result<ProtocolMessage, TransportError>>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let tx = tx.clone();
                thread::spawn(move || read_loop(stream, tx));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(_) => thread::sleep(ACCEPT_POLL),
        }
    }
}

fn read_loop(mut stream: TcpStream, tx: Sender<Result<ProtocolMessage, TransportError>>) {
    loop {
        match read_frame(&mut stream) {
            Ok(Some(msg)) => {
                if tx.send(Ok(msg)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    }
}

impl Transport for TcpTransport {
    fn party(&self) -> PartyId {
        self.me
    }

    fn send(&mut self, msg: ProtocolMessage) -> Result<(), TransportError> {
        let bytes = wire::serialize(&msg)?;
        let to = msg.receiver;
        let stream = self.connect(to)?;
        stream.write_all(&bytes).and_then(|_| stream.flush()).map_err(|source| TransportError::Io { peer: to, source })
    }

    fn recv(&mut self, timeout: Duration) -> Result<ProtocolMessage, TransportError> {
        let msg = match self.inbox.recv_timeout(timeout) {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(TransportError::Timeout { party: self.me, waited: timeout }),
            Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Disconnected),
        };
        if msg.receiver != self.me {
            return Err(TransportError::Misrouted { expected: self.me, found: msg.receiver });
        }
        if let Some(sink) = &self.sink {
            sink.record(&msg);
        }
        Ok(msg)
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::message::MessageType;
    use crate::transport::wire::encode_count;

    fn loopback() -> SocketAddr {
        "127.0.0.1:0".parse().unwrap()
    }

    #[test]
    fn frames_cross_a_socket_in_order() {
        let sink = TranscriptSink::new();
        let mut a = TcpTransport::bind(PartyId(1), loopback(), HashMap::new(), None).unwrap();
        let mut b = TcpTransport::bind(PartyId(0), loopback(), HashMap::new(), Some(sink.clone())).unwrap();
        a.set_peers([(PartyId(0), b.local_addr())].into());
        for step in 0..5 {
            a.send(ProtocolMessage {
                msg_type: MessageType::SampleCount,
                sender: PartyId(1),
                receiver: PartyId(0),
                step,
                payload: encode_count(step as u64),
            })
            .unwrap();
        }
        for step in 0..5 {
            let m = b.recv(Duration::from_secs(5)).unwrap();
            assert_eq!(m.step, step);
            assert_eq!(wire::decode_count(&m.payload).unwrap(), step as u64);
        }
        assert_eq!(sink.snapshot().len(), 5);
        assert!(matches!(b.recv(Duration::from_millis(50)), Err(TransportError::Timeout { .. })));
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let msg = ProtocolMessage {
            msg_type: MessageType::SampleCount,
            sender: PartyId(1),
            receiver: PartyId(0),
            step: 0,
            payload: encode_count(1),
        };
        let bytes = wire::serialize(&msg).unwrap();
        assert_eq!(read_frame(&mut &bytes[..]).unwrap(), Some(msg));
        assert!(read_frame(&mut &bytes[..0]).unwrap().is_none());
        assert!(read_frame(&mut &bytes[..bytes.len() - 2]).is_err());
        assert!(read_frame(&mut &bytes[..4]).is_err());
    }
}
