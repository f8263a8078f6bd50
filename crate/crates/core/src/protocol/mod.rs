//! The multi-party PCA protocol: role state machines for data providers,
//! the server and the data consumer, a deterministic simulation scheduler,
//! a networked driver, and transcript policy checks.

pub mod message;
pub mod privacy;
mod roles;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    matrix_decode_fixed, matrix_encode_fixed, EncodingError, FixedPointConfig, FloatEncodingConfig,
};
use crate::linalg::{LinalgError, Matrix};
use crate::paillier::{
    add_enc_matrix, dec_matrix, enc_matrix, KeyMode, PaillierError, PrivateKey, PublicKey,
};
use crate::party::{providers, PartyId, RoleKind};
use crate::sharing::{add_local_matrix, reconstruct_matrix, share_matrix, SecretId, SharingError};
use crate::transport::{SimulationBus, TcpTransport, TranscriptSink, Transport, TransportError, WireError};

pub use message::{MessageType, ProtocolMessage, Transcript};
pub use privacy::{assert_privacy, Violation, ViolationKind};
pub use roles::{Consumer, DataProvider, Role, Server, ServerResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    He,
    Ss,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::He => "he",
            Method::Ss => "ss",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "he" => Ok(Method::He),
            "ss" => Ok(Method::Ss),
            other => Err(format!("unknown method {other:?}, expected he or ss")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Number of data providers `M`.
    pub parties: u16,
    pub method: Method,
    pub k: usize,
    /// Provider that aggregates ciphertexts on the HE path.
    pub aggregator: u16,
    pub fixed_point: FixedPointConfig,
    pub float_encoding: FloatEncodingConfig,
    pub key_bits: u64,
    /// Admits 512-bit keys.
    pub test_keys: bool,
    /// Seeds every party's generator; `None` draws from the OS.
    pub seed: Option<u64>,
    pub timeout_secs: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            parties: 2,
            method: Method::He,
            k: 2,
            aggregator: 1,
            fixed_point: FixedPointConfig::default(),
            float_encoding: FloatEncodingConfig::default(),
            key_bits: 2048,
            test_keys: false,
            seed: None,
            timeout_secs: 30.0,
        }
    }
}

impl SessionConfig {
    pub fn new(method: Method, parties: u16, k: usize) -> Self {
        Self { method, parties, k, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_test_keys(mut self, bits: u64) -> Self {
        self.key_bits = bits;
        self.test_keys = true;
        self
    }

    pub fn providers(&self) -> Vec<PartyId> {
        providers(self.parties)
    }

    pub fn aggregator_id(&self) -> PartyId {
        PartyId::provider(self.aggregator)
    }

    pub fn consumer(&self) -> PartyId {
        PartyId::consumer(self.parties)
    }

    pub fn role_of(&self, id: PartyId) -> Option<RoleKind> {
        RoleKind::of(id, self.parties)
    }

    pub fn key_mode(&self) -> KeyMode {
        if self.test_keys {
            KeyMode::Test
        } else {
            KeyMode::Production
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        if self.parties < 2 {
            return bad(format!("at least 2 data providers are required, got {}", self.parties));
        }
        if self.parties == u16::MAX {
            return bad("too many data providers".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.method == Method::He && !(1..self.parties).contains(&self.aggregator) {
            return bad(format!("aggregator must be a provider in 1..={}, got {}", self.parties - 1, self.aggregator));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return bad(format!("timeout must be positive, got {}", self.timeout_secs));
        }
        self.fixed_point.validate().map_err(|e| ProtocolError::Config(e.to_string()))?;
        self.float_encoding.validate().map_err(|e| ProtocolError::Config(e.to_string()))?;
        match (self.key_bits, self.test_keys) {
            (1024 | 2048 | 3072, _) | (512, true) => Ok(()),
            (bits, _) => bad(format!("unsupported key size {bits}")),
        }
    }

    /// Checks the horizontally partitioned inputs against the configuration.
    pub fn validate_data(&self, parts: &[Matrix]) -> Result<(), ProtocolError> {
        if parts.len() != self.parties as usize {
            return Err(ProtocolError::Data(format!(
                "{} data partitions for {} providers",
                parts.len(),
                self.parties
            )));
        }
        let d = parts[0].cols();
        if let Some((i, p)) = parts.iter().enumerate().find(|(_, p)| p.cols() != d) {
            return Err(ProtocolError::Data(format!(
                "provider {} has {} columns, provider 1 has {d}",
                i + 1,
                p.cols()
            )));
        }
        if self.k >= d {
            return Err(ProtocolError::Data(format!("k = {} must be below the feature count {d}", self.k)));
        }
        let n: usize = parts.iter().map(Matrix::rows).sum();
        if n < 2 {
            return Err(ProtocolError::Data(format!("at least 2 samples are required, got {n}")));
        }
        Ok(())
    }
}

/// Protocol stage a party was in when something happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Setup,
    ColumnSums,
    SumAggregation,
    Centering,
    Covariance,
    CovarianceAggregation,
    Eigen,
    Projection,
    Collection,
    Done,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::Setup => "setup",
            Step::ColumnSums => "column sums",
            Step::SumAggregation => "sum aggregation",
            Step::Centering => "centering",
            Step::Covariance => "local covariance",
            Step::CovarianceAggregation => "covariance aggregation",
            Step::Eigen => "eigendecomposition",
            Step::Projection => "projection",
            Step::Collection => "collection",
            Step::Done => "done",
        })
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("invalid input data: {0}")]
    Data(String),
    #[error("{party} aborted during {step}: {source}")]
    Aborted {
        party: PartyId,
        step: Step,
        #[source]
        source: StepError,
    },
    #[error("{party} did not expect {msg_type:?} from {sender} during {step}")]
    Unexpected { party: PartyId, msg_type: MessageType, sender: PartyId, step: Step },
    #[error("message for unknown party {0}")]
    UnknownParty(PartyId),
    #[error("could not seed {0} from the OS entropy source")]
    Entropy(PartyId),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("session stalled with parties still running: {0}")]
    Stalled(String),
    #[error("party thread panicked")]
    Panicked,
}

impl ProtocolError {
    pub fn at(party: PartyId, step: Step) -> impl Fn(StepError) -> ProtocolError + Copy {
        move |source| ProtocolError::Aborted { party, step, source }
    }
}

/// Per-party generator. With a seed every party draws from its own stream
/// of the same ChaCha20 key.
pub fn party_rng(seed: Option<u64>, party: PartyId) -> Result<ChaCha20Rng, ProtocolError> {
    match seed {
        Some(s) => {
            let mut rng = ChaCha20Rng::seed_from_u64(s);
            rng.set_stream(party.0 as u64);
            Ok(rng)
        }
        None => ChaCha20Rng::from_rng(OsRng).map_err(|_| ProtocolError::Entropy(party)),
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    /// Row-stacked reduced data as received by the consumer.
    pub reduced: Matrix,
    pub transfer: Matrix,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub eigenvalues: Vec<f64>,
    pub transcript: Transcript,
    /// Computation seconds summed over all parties, per stage.
    pub phase_seconds: BTreeMap<Step, f64>,
}

/// Exact number of messages of each type a session produces.
pub fn expected_message_counts(method: Method, parties: u16) -> BTreeMap<MessageType, usize> {
    let m = parties as usize;
    let mut out = BTreeMap::new();
    out.insert(MessageType::SampleCount, m * m);
    match method {
        Method::He => {
            out.insert(MessageType::PublicKey, m);
            out.insert(MessageType::EncryptedSums, m - 1);
            out.insert(MessageType::EncryptedSumAggregate, 1);
            out.insert(MessageType::EncryptedCov, m - 1);
            out.insert(MessageType::EncryptedCovAggregate, 1);
        }
        Method::Ss => {
            out.insert(MessageType::ShareBundle, 2 * m * (m - 1));
            out.insert(MessageType::LocalShareSum, 2 * m);
        }
    }
    out.insert(MessageType::PlainMean, m);
    out.insert(MessageType::TransferMatrix, m);
    out.insert(MessageType::ReducedRows, m);
    out
}

/// Message-type sequence of a simulated session, consecutive repeats
/// collapsed.
pub fn expected_type_sequence(method: Method) -> Vec<MessageType> {
    use MessageType::*;
    match method {
        Method::He => vec![
            SampleCount,
            PublicKey,
            EncryptedSums,
            EncryptedSumAggregate,
            PlainMean,
            EncryptedCov,
            EncryptedCovAggregate,
            TransferMatrix,
            ReducedRows,
        ],
        Method::Ss => vec![
            SampleCount,
            ShareBundle,
            LocalShareSum,
            PlainMean,
            ShareBundle,
            LocalShareSum,
            TransferMatrix,
            ReducedRows,
        ],
    }
}

/// Builds every role of a session. Providers come first, then the server,
/// then the consumer; the simulation scheduler starts them in this order.
pub fn build_roles(cfg: &SessionConfig, data: Vec<Matrix>) -> Result<Vec<Role>, ProtocolError> {
    cfg.validate()?;
    cfg.validate_data(&data)?;
    let mut roles = Vec::with_capacity(data.len() + 2);
    for (id, x) in cfg.providers().into_iter().zip(data) {
        roles.push(Role::Provider(DataProvider::new(cfg.clone(), id, x)?));
    }
    roles.push(Role::Server(Server::new(cfg.clone())?));
    roles.push(Role::Consumer(Consumer::new(cfg.clone())));
    Ok(roles)
}

fn collect_outcome(roles: Vec<Role>, transcript: Transcript) -> Result<SessionOutcome, ProtocolError> {
    let mut phase_seconds: BTreeMap<Step, f64> = BTreeMap::new();
    for r in &roles {
        for (step, secs) in r.timings() {
            *phase_seconds.entry(*step).or_default() += secs;
        }
    }
    let mut server = None;
    let mut consumer = None;
    for r in roles {
        match r {
            Role::Server(s) => server = Some(s),
            Role::Consumer(c) => consumer = Some(c),
            Role::Provider(_) => {}
        }
    }
    let (server, consumer) = server.zip(consumer).ok_or_else(|| ProtocolError::Stalled("missing roles".into()))?;
    let reduced = consumer.into_reduced().ok_or_else(|| ProtocolError::Stalled("consumer".into()))?;
    let result = server.into_result().ok_or_else(|| ProtocolError::Stalled("server".into()))?;
    Ok(SessionOutcome {
        reduced,
        transfer: result.transfer,
        mean: result.mean,
        covariance: result.covariance,
        eigenvalues: result.eigenvalues,
        transcript,
        phase_seconds,
    })
}

/// Runs a whole session in one thread, delivering messages in FIFO order.
pub fn run_session(cfg: &SessionConfig, data: Vec<Matrix>) -> Result<SessionOutcome, ProtocolError> {
    let mut roles = build_roles(cfg, data)?;
    let index: HashMap<PartyId, usize> = roles.iter().enumerate().map(|(i, r)| (r.id(), i)).collect();
    let sink = TranscriptSink::new();
    let mut bus = SimulationBus::new(sink.clone());
    for role in roles.iter_mut() {
        for m in &role.start()? {
            bus.send(m)?;
        }
    }
    while let Some(msg) = bus.deliver_next()? {
        let role = &mut roles[*index.get(&msg.receiver).ok_or(ProtocolError::UnknownParty(msg.receiver))?];
        for m in &role.handle(msg)? {
            bus.send(m)?;
        }
    }
    let waiting: Vec<String> =
        roles.iter().filter(|r| !r.is_finished()).map(|r| format!("{} in {}", r.id(), r.step())).collect();
    if !waiting.is_empty() {
        return Err(ProtocolError::Stalled(waiting.join(", ")));
    }
    collect_outcome(roles, sink.snapshot())
}

pub fn run_he(cfg: &SessionConfig, data: Vec<Matrix>) -> Result<SessionOutcome, ProtocolError> {
    run_session(&SessionConfig { method: Method::He, ..cfg.clone() }, data)
}

pub fn run_ss(cfg: &SessionConfig, data: Vec<Matrix>) -> Result<SessionOutcome, ProtocolError> {
    run_session(&SessionConfig { method: Method::Ss, ..cfg.clone() }, data)
}

/// Drives one role over a transport until it finishes.
pub fn drive<T: Transport>(role: &mut Role, transport: &mut T, timeout: Duration) -> Result<(), ProtocolError> {
    for m in role.start()? {
        transport.send(m)?;
    }
    while !role.is_finished() {
        let msg = transport.recv(timeout)?;
        for m in role.handle(msg)? {
            transport.send(m)?;
        }
    }
    Ok(())
}

/// Runs every role on its own thread, connected over loopback TCP.
pub fn run_loopback(cfg: &SessionConfig, data: Vec<Matrix>) -> Result<SessionOutcome, ProtocolError> {
    let roles = build_roles(cfg, data)?;
    let sink = TranscriptSink::new();
    let loopback: std::net::SocketAddr = ([127, 0, 0, 1], 0).into();
    let mut transports = roles
        .iter()
        .map(|r| TcpTransport::bind(r.id(), loopback, HashMap::new(), Some(sink.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let book: HashMap<PartyId, std::net::SocketAddr> =
        roles.iter().zip(&transports).map(|(r, t)| (r.id(), t.local_addr())).collect();
    let timeout = cfg.timeout();
    for t in transports.iter_mut() {
        t.set_peers(book.clone());
        t.set_connect_timeout(timeout);
    }
    let handles: Vec<_> = roles
        .into_iter()
        .zip(transports)
        .map(|(mut role, mut transport)| {
            std::thread::spawn(move || {
                let r = drive(&mut role, &mut transport, timeout);
                r.map(|_| role)
            })
        })
        .collect();
    let mut finished = Vec::new();
    let mut first_err = None;
    for h in handles {
        match h.join() {
            Ok(Ok(role)) => finished.push(role),
            Ok(Err(e)) => {
                first_err.get_or_insert(e);
            }
            Err(_) => {
                first_err.get_or_insert(ProtocolError::Panicked);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    collect_outcome(finished, sink.snapshot())
}

/// Sums matrices held by separate parties under Paillier: every party
/// encrypts, party `aggregator` adds ciphertexts, the key holder decrypts.
pub fn secure_sum_he<R: RngCore + CryptoRng + ?Sized>(
    matrices: &[Matrix],
    aggregator: usize,
    pk: &PublicKey,
    sk: &PrivateKey,
    cfg: &FloatEncodingConfig,
    rng: &mut R,
) -> Result<Matrix, ProtocolError> {
    let abort = |e: StepError| ProtocolError::Aborted { party: PartyId::SERVER, step: Step::SumAggregation, source: e };
    if sk.public() != pk {
        return Err(abort(PaillierError::KeyMismatch.into()));
    }
    let first = matrices.first().ok_or_else(|| ProtocolError::Data("no matrices to sum".into()))?;
    if aggregator >= matrices.len() {
        return Err(ProtocolError::Config(format!("aggregator {aggregator} out of range")));
    }
    if let Some(m) = matrices.iter().find(|m| m.shape() != first.shape()) {
        return Err(abort(PaillierError::Shape(first.shape(), m.shape()).into()));
    }
    let encrypted = matrices
        .iter()
        .map(|m| enc_matrix(pk, m, cfg, rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| abort(e.into()))?;
    let mut acc = encrypted[aggregator].clone();
    for (i, e) in encrypted.iter().enumerate() {
        if i != aggregator {
            acc = add_enc_matrix(pk, &acc, e).map_err(|e| abort(e.into()))?;
        }
    }
    dec_matrix(sk, &acc).map_err(|e| abort(e.into()))
}

/// Sums matrices held by separate parties with additive sharing over
/// `Z_{2^l}`. A lone party's matrix only passes through the fixed-point
/// encoding.
pub fn secure_sum_ss<R: RngCore + ?Sized>(
    matrices: &[Matrix],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<Matrix, ProtocolError> {
    let abort = |e: StepError| ProtocolError::Aborted { party: PartyId::SERVER, step: Step::SumAggregation, source: e };
    let first = matrices.first().ok_or_else(|| ProtocolError::Data("no matrices to sum".into()))?;
    let parties = providers(matrices.len() as u16);
    let encoded = matrices
        .iter()
        .map(|m| {
            if m.shape() != first.shape() {
                return Err(StepError::Inconsistent(format!("shape {:?} vs {:?}", m.shape(), first.shape())));
            }
            Ok(matrix_encode_fixed(m, cfg)?)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(abort)?;
    if encoded.len() == 1 {
        return matrix_decode_fixed(&encoded[0], cfg).map_err(|e| abort(e.into()));
    }
    let dealt = encoded
        .iter()
        .zip(&parties)
        .map(|(secret, &dealer)| share_matrix(secret, &parties, cfg.bits, SecretId::new(1, dealer), rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| abort(e.into()))?;
    let locals = (0..parties.len())
        .map(|j| add_local_matrix(&dealt.iter().map(|d| d[j].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| abort(e.into()))?;
    let total = reconstruct_matrix(&locals, &parties).map_err(|e| abort(e.into()))?;
    matrix_decode_fixed(&total, cfg).map_err(|e| abort(e.into()))
}
