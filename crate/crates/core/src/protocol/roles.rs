use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;

use super::{party_rng, Method, MessageType, ProtocolError, ProtocolMessage, SessionConfig, Step, StepError};
use crate::encoding::{matrix_decode_fixed, matrix_encode_fixed};
use crate::linalg::{
    center_columns, column_sums, gram, jacobi_eigh, project, top_k_transfer, Matrix, EIGEN_TOLERANCE,
};
use crate::paillier::{
    add_enc_matrix, dec_matrix, enc_matrix, enc_symmetric_matrix, keygen, EncryptedMatrix, PrivateKey, PublicKey,
};
use crate::party::PartyId;
use crate::sharing::{add_local_matrix, reconstruct_matrix, share_matrix, SecretId, ShareMatrix};
use crate::transport::wire;

const SUM_TAG: u32 = 1;
const COV_TAG: u32 = 2;

/// Outgoing messages of one party, numbered by a per-sender step counter.
#[derive(Debug)]
struct Outbox {
    me: PartyId,
    next_step: u32,
    queue: Vec<ProtocolMessage>,
}

impl Outbox {
    fn new(me: PartyId) -> Self {
        Self { me, next_step: 0, queue: Vec::new() }
    }

    fn push(&mut self, msg_type: MessageType, receiver: PartyId, payload: Vec<u8>) {
        self.queue.push(ProtocolMessage { msg_type, sender: self.me, receiver, step: self.next_step, payload });
        self.next_step += 1;
    }

    fn take(&mut self) -> Vec<ProtocolMessage> {
        std::mem::take(&mut self.queue)
    }
}

/// Wall-clock seconds spent per stage.
#[derive(Debug)]
struct Clock {
    mark: Instant,
    spent: BTreeMap<Step, f64>,
}

impl Clock {
    fn new() -> Self {
        Self { mark: Instant::now(), spent: BTreeMap::new() }
    }

    fn mark(&mut self) {
        self.mark = Instant::now();
    }

    /// Books the time since the last mark to `step` and marks again.
    fn charge(&mut self, step: Step) {
        let now = Instant::now();
        *self.spent.entry(step).or_default() += (now - self.mark).as_secs_f64();
        self.mark = now;
    }
}

fn sum_id(tag: u32, providers: &[PartyId]) -> SecretId {
    SecretId::sum_of(&providers.iter().map(|&p| SecretId::new(tag, p)).collect::<Vec<_>>())
}

fn row_vector(v: Vec<f64>) -> Result<Matrix, StepError> {
    Ok(Matrix::new(1, v.len(), v)?)
}

/// A party of the protocol. Each reacts to delivered messages and returns
/// the messages it wants sent; messages that arrive early are buffered.
#[derive(Debug)]
pub enum Role {
    Provider(DataProvider),
    Server(Server),
    Consumer(Consumer),
}

impl Role {
    pub fn id(&self) -> PartyId {
        match self {
            Role::Provider(p) => p.id,
            Role::Server(_) => PartyId::SERVER,
            Role::Consumer(c) => c.id,
        }
    }

    pub fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        match self {
            Role::Provider(p) => p.start(),
            Role::Server(s) => s.start(),
            Role::Consumer(_) => Ok(Vec::new()),
        }
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        match self {
            Role::Provider(p) => p.handle(msg),
            Role::Server(s) => s.handle(msg),
            Role::Consumer(c) => c.handle(msg),
        }
    }

    /// Seconds this party spent computing, per stage.
    pub fn timings(&self) -> &BTreeMap<Step, f64> {
        static NONE: BTreeMap<Step, f64> = BTreeMap::new();
        match self {
            Role::Provider(p) => &p.clock.spent,
            Role::Server(s) => &s.clock.spent,
            Role::Consumer(_) => &NONE,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.step() == Step::Done
    }

    pub fn step(&self) -> Step {
        match self {
            Role::Provider(p) => p.step(),
            Role::Server(s) => s.step(),
            Role::Consumer(c) => c.step(),
        }
    }
}

#[derive(Debug)]
pub struct DataProvider {
    id: PartyId,
    cfg: SessionConfig,
    data: Matrix,
    rng: ChaCha20Rng,
    out: Outbox,
    clock: Clock,
    counts: BTreeMap<PartyId, u64>,
    public_key: Option<PublicKey>,
    mean: Option<Vec<f64>>,
    centered: Option<Matrix>,
    transfer: Option<Matrix>,
    // Aggregator only: serialized ciphertexts from the other providers.
    enc_sums: BTreeMap<PartyId, Vec<u8>>,
    enc_covs: BTreeMap<PartyId, Vec<u8>>,
    own_sum: Option<EncryptedMatrix>,
    own_cov: Option<EncryptedMatrix>,
    sum_shares: BTreeMap<PartyId, ShareMatrix>,
    cov_shares: BTreeMap<PartyId, ShareMatrix>,
    sums_sent: bool,
    sum_agg_sent: bool,
    cov_sent: bool,
    cov_agg_sent: bool,
    rows_sent: bool,
}

impl DataProvider {
    pub fn new(cfg: SessionConfig, id: PartyId, data: Matrix) -> Result<Self, ProtocolError> {
        if !cfg.providers().contains(&id) {
            return Err(ProtocolError::Config(format!("{id} is not a data provider")));
        }
        if data.rows() == 0 {
            return Err(ProtocolError::Data(format!("{id} holds no samples")));
        }
        if cfg.k >= data.cols() {
            return Err(ProtocolError::Data(format!("k = {} must be below the feature count {}", cfg.k, data.cols())));
        }
        let rng = party_rng(cfg.seed, id)?;
        Ok(Self {
            id,
            data,
            rng,
            out: Outbox::new(id),
            clock: Clock::new(),
            counts: BTreeMap::new(),
            public_key: None,
            mean: None,
            centered: None,
            transfer: None,
            enc_sums: BTreeMap::new(),
            enc_covs: BTreeMap::new(),
            own_sum: None,
            own_cov: None,
            sum_shares: BTreeMap::new(),
            cov_shares: BTreeMap::new(),
            sums_sent: false,
            sum_agg_sent: false,
            cov_sent: false,
            cov_agg_sent: false,
            rows_sent: false,
            cfg,
        })
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    fn is_aggregator(&self) -> bool {
        self.cfg.method == Method::He && self.id == self.cfg.aggregator_id()
    }

    pub fn step(&self) -> Step {
        if self.rows_sent {
            Step::Done
        } else if self.transfer.is_some() {
            Step::Projection
        } else if self.is_aggregator() && self.cov_sent && !self.cov_agg_sent {
            Step::CovarianceAggregation
        } else if self.cov_sent {
            Step::Eigen
        } else if self.mean.is_some() {
            Step::Covariance
        } else if self.is_aggregator() && self.sums_sent && !self.sum_agg_sent {
            Step::SumAggregation
        } else if self.sums_sent {
            Step::Centering
        } else if self.counts.len() == self.cfg.parties as usize {
            Step::ColumnSums
        } else {
            Step::Setup
        }
    }

    fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let n = self.data.rows() as u64;
        self.counts.insert(self.id, n);
        for p in self.cfg.providers().into_iter().filter(|&p| p != self.id) {
            self.out.push(MessageType::SampleCount, p, wire::encode_count(n));
        }
        self.out.push(MessageType::SampleCount, PartyId::SERVER, wire::encode_count(n));
        self.advance()?;
        Ok(self.out.take())
    }

    fn unexpected(&self, msg: &ProtocolMessage) -> ProtocolError {
        ProtocolError::Unexpected { party: self.id, msg_type: msg.msg_type, sender: msg.sender, step: self.step() }
    }

    fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let step = self.step();
        let fail = ProtocolError::at(self.id, step);
        let from_server = msg.sender == PartyId::SERVER;
        let from_peer = msg.sender != self.id && self.cfg.providers().contains(&msg.sender);
        let he = self.cfg.method == Method::He;
        match msg.msg_type {
            MessageType::SampleCount if from_peer && !self.counts.contains_key(&msg.sender) => {
                let n = wire::decode_count(&msg.payload).map_err(|e| fail(e.into()))?;
                if n == 0 {
                    return Err(fail(StepError::Inconsistent(format!("{} reported no samples", msg.sender))));
                }
                self.counts.insert(msg.sender, n);
            }
            MessageType::PublicKey if he && from_server && self.public_key.is_none() => {
                self.public_key = Some(wire::decode_public_key(&msg.payload).map_err(|e| fail(e.into()))?);
            }
            MessageType::EncryptedSums
                if self.is_aggregator() && from_peer && !self.sum_agg_sent && !self.enc_sums.contains_key(&msg.sender) =>
            {
                self.enc_sums.insert(msg.sender, msg.payload);
            }
            MessageType::EncryptedCov
                if self.is_aggregator() && from_peer && !self.cov_agg_sent && !self.enc_covs.contains_key(&msg.sender) =>
            {
                self.enc_covs.insert(msg.sender, msg.payload);
            }
            MessageType::PlainMean if from_server && self.mean.is_none() => {
                let mean = wire::decode_real_vector(&msg.payload).map_err(|e| fail(e.into()))?;
                self.mean = Some(mean);
            }
            MessageType::ShareBundle if !he && from_peer => {
                let s = wire::decode_shares(&msg.payload).map_err(|e| fail(e.into()))?;
                if s.owner != self.id {
                    return Err(fail(StepError::Inconsistent(format!("share for {} delivered to {}", s.owner, self.id))));
                }
                let slot = if s.secret_id == SecretId::new(SUM_TAG, msg.sender) {
                    &mut self.sum_shares
                } else if s.secret_id == SecretId::new(COV_TAG, msg.sender) {
                    &mut self.cov_shares
                } else {
                    return Err(fail(StepError::Inconsistent(format!("share bound to unknown secret {:?}", s.secret_id))));
                };
                if slot.insert(msg.sender, s).is_some() {
                    return Err(self.unexpected(&msg));
                }
            }
            MessageType::TransferMatrix if from_server && self.transfer.is_none() => {
                let t = wire::decode_real_matrix(&msg.payload).map_err(|e| fail(e.into()))?;
                if t.shape() != (self.data.cols(), self.cfg.k) {
                    return Err(fail(StepError::Inconsistent(format!(
                        "transfer matrix is {:?}, expected {:?}",
                        t.shape(),
                        (self.data.cols(), self.cfg.k)
                    ))));
                }
                self.transfer = Some(t);
            }
            _ => return Err(self.unexpected(&msg)),
        }
        self.advance()?;
        Ok(self.out.take())
    }

    fn advance(&mut self) -> Result<(), ProtocolError> {
        self.clock.mark();
        let parties = self.cfg.parties as usize;
        let counts_ready = self.counts.len() == parties;

        if !self.sums_sent && counts_ready {
            let fail = ProtocolError::at(self.id, Step::ColumnSums);
            let sums = row_vector(column_sums(&self.data)).map_err(fail)?;
            match self.cfg.method {
                Method::He => {
                    if let Some(pk) = &self.public_key {
                        let enc = enc_matrix(pk, &sums, &self.cfg.float_encoding, &mut self.rng)
                            .map_err(|e| ProtocolError::at(self.id, Step::ColumnSums)(e.into()))?;
                        if self.is_aggregator() {
                            self.own_sum = Some(enc);
                        } else {
                            self.out.push(MessageType::EncryptedSums, self.cfg.aggregator_id(), wire::encode_encrypted(&enc));
                        }
                        self.sums_sent = true;
                        self.clock.charge(Step::ColumnSums);
                    }
                }
                Method::Ss => {
                    self.deal(&sums, SUM_TAG).map_err(fail)?;
                    self.sums_sent = true;
                    self.clock.charge(Step::ColumnSums);
                }
            }
        }

        if self.is_aggregator() && self.sums_sent && !self.sum_agg_sent && self.enc_sums.len() == parties - 1 {
            let agg = self.aggregate(true).map_err(ProtocolError::at(self.id, Step::SumAggregation))?;
            self.out.push(MessageType::EncryptedSumAggregate, PartyId::SERVER, wire::encode_encrypted(&agg));
            self.sum_agg_sent = true;
            self.clock.charge(Step::SumAggregation);
        }

        if self.cfg.method == Method::Ss && self.sums_sent && !self.sum_agg_sent && self.sum_shares.len() == parties {
            let local = self.local_sum(true).map_err(ProtocolError::at(self.id, Step::SumAggregation))?;
            self.out.push(MessageType::LocalShareSum, PartyId::SERVER, wire::encode_shares(&local));
            self.sum_agg_sent = true;
            self.clock.charge(Step::SumAggregation);
        }

        if self.centered.is_none() {
            if let Some(mean) = &self.mean {
                let c = center_columns(&self.data, mean)
                    .map_err(|e| ProtocolError::at(self.id, Step::Centering)(e.into()))?;
                self.centered = Some(c);
                self.clock.charge(Step::Centering);
            }
        }

        if !self.cov_sent && counts_ready && self.sums_sent {
            if let Some(centered) = &self.centered {
                let fail = ProtocolError::at(self.id, Step::Covariance);
                // Unscaled scatter; the server divides the aggregate by n - 1.
                let scatter = gram(centered);
                match (&self.cfg.method, &self.public_key) {
                    (Method::He, Some(pk)) => {
                        let enc = enc_symmetric_matrix(pk, &scatter, &self.cfg.float_encoding, &mut self.rng)
                            .map_err(|e| fail(e.into()))?;
                        if self.is_aggregator() {
                            self.own_cov = Some(enc);
                        } else {
                            self.out.push(MessageType::EncryptedCov, self.cfg.aggregator_id(), wire::encode_encrypted(&enc));
                        }
                    }
                    (Method::He, None) => unreachable!("sums were sent, so the key is known"),
                    (Method::Ss, _) => self.deal(&scatter, COV_TAG).map_err(fail)?,
                }
                self.cov_sent = true;
                self.clock.charge(Step::Covariance);
            }
        }

        if self.is_aggregator() && self.cov_sent && !self.cov_agg_sent && self.enc_covs.len() == parties - 1 {
            let agg = self.aggregate(false).map_err(ProtocolError::at(self.id, Step::CovarianceAggregation))?;
            self.out.push(MessageType::EncryptedCovAggregate, PartyId::SERVER, wire::encode_encrypted(&agg));
            self.cov_agg_sent = true;
            self.clock.charge(Step::CovarianceAggregation);
        }

        if self.cfg.method == Method::Ss && self.cov_sent && !self.cov_agg_sent && self.cov_shares.len() == parties {
            let local = self.local_sum(false).map_err(ProtocolError::at(self.id, Step::CovarianceAggregation))?;
            self.out.push(MessageType::LocalShareSum, PartyId::SERVER, wire::encode_shares(&local));
            self.cov_agg_sent = true;
            self.clock.charge(Step::CovarianceAggregation);
        }

        if !self.rows_sent {
            if let (Some(t), Some(centered)) = (&self.transfer, &self.centered) {
                let reduced = project(centered, t).map_err(|e| ProtocolError::at(self.id, Step::Projection)(e.into()))?;
                self.out.push(MessageType::ReducedRows, self.cfg.consumer(), wire::encode_real_matrix(&reduced));
                self.rows_sent = true;
                self.clock.charge(Step::Projection);
            }
        }
        Ok(())
    }

    /// Splits `secret` among all providers, keeps this party's share and
    /// sends the others out.
    fn deal(&mut self, secret: &Matrix, tag: u32) -> Result<(), StepError> {
        let providers = self.cfg.providers();
        let ring = matrix_encode_fixed(secret, &self.cfg.fixed_point)?;
        let id = SecretId::new(tag, self.id);
        let shares = share_matrix(&ring, &providers, self.cfg.fixed_point.bits, id, &mut self.rng)?;
        for s in shares {
            if s.owner == self.id {
                let slot = if tag == SUM_TAG { &mut self.sum_shares } else { &mut self.cov_shares };
                slot.insert(self.id, s);
            } else {
                self.out.push(MessageType::ShareBundle, s.owner, wire::encode_shares(&s));
            }
        }
        Ok(())
    }

    fn local_sum(&self, sums: bool) -> Result<ShareMatrix, StepError> {
        let held = if sums { &self.sum_shares } else { &self.cov_shares };
        Ok(add_local_matrix(&held.values().cloned().collect::<Vec<_>>())?)
    }

    /// Adds this party's ciphertexts to everyone else's, in provider order.
    fn aggregate(&mut self, sums: bool) -> Result<EncryptedMatrix, StepError> {
        let pk = self.public_key.as_ref().ok_or_else(|| StepError::Inconsistent("no public key".into()))?;
        let (own, received) = if sums { (&self.own_sum, &self.enc_sums) } else { (&self.own_cov, &self.enc_covs) };
        let mut acc = own.clone().ok_or_else(|| StepError::Inconsistent("own ciphertexts missing".into()))?;
        for payload in received.values() {
            let m = wire::decode_encrypted(payload, pk, self.cfg.float_encoding.base)?;
            acc = add_enc_matrix(pk, &acc, &m)?;
        }
        Ok(acc)
    }
}

/// What the server learns: the mean, the covariance and its eigenvectors.
#[derive(Debug, Clone)]
pub struct ServerResult {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub eigenvalues: Vec<f64>,
    pub transfer: Matrix,
}

#[derive(Debug)]
pub struct Server {
    cfg: SessionConfig,
    rng: ChaCha20Rng,
    out: Outbox,
    clock: Clock,
    keys: Option<(PublicKey, PrivateKey)>,
    counts: BTreeMap<PartyId, u64>,
    sum_aggregate: Option<Vec<u8>>,
    cov_aggregate: Option<Vec<u8>>,
    sum_locals: BTreeMap<PartyId, ShareMatrix>,
    cov_locals: BTreeMap<PartyId, ShareMatrix>,
    mean: Option<Vec<f64>>,
    result: Option<ServerResult>,
}

impl Server {
    pub fn new(cfg: SessionConfig) -> Result<Self, ProtocolError> {
        let rng = party_rng(cfg.seed, PartyId::SERVER)?;
        Ok(Self {
            cfg,
            rng,
            out: Outbox::new(PartyId::SERVER),
            clock: Clock::new(),
            keys: None,
            counts: BTreeMap::new(),
            sum_aggregate: None,
            cov_aggregate: None,
            sum_locals: BTreeMap::new(),
            cov_locals: BTreeMap::new(),
            mean: None,
            result: None,
        })
    }

    pub fn step(&self) -> Step {
        if self.result.is_some() {
            Step::Done
        } else if self.mean.is_some() {
            Step::CovarianceAggregation
        } else if self.counts.len() == self.cfg.parties as usize {
            Step::SumAggregation
        } else {
            Step::Setup
        }
    }

    pub fn result(&self) -> Option<&ServerResult> {
        self.result.as_ref()
    }

    pub fn into_result(self) -> Option<ServerResult> {
        self.result
    }

    fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        self.clock.mark();
        if self.cfg.method == Method::He {
            let (pk, sk) = keygen(self.cfg.key_bits, self.cfg.key_mode(), &mut self.rng)
                .map_err(|e| ProtocolError::at(PartyId::SERVER, Step::Setup)(e.into()))?;
            for p in self.cfg.providers() {
                self.out.push(MessageType::PublicKey, p, wire::encode_public_key(&pk));
            }
            self.keys = Some((pk, sk));
            self.clock.charge(Step::Setup);
        }
        Ok(self.out.take())
    }

    fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let fail = ProtocolError::at(PartyId::SERVER, self.step());
        let providers = self.cfg.providers();
        let from_provider = providers.contains(&msg.sender);
        let from_aggregator = msg.sender == self.cfg.aggregator_id();
        let he = self.cfg.method == Method::He;
        match msg.msg_type {
            MessageType::SampleCount if from_provider && !self.counts.contains_key(&msg.sender) => {
                let n = wire::decode_count(&msg.payload).map_err(|e| fail(e.into()))?;
                self.counts.insert(msg.sender, n);
            }
            MessageType::EncryptedSumAggregate if he && from_aggregator && self.sum_aggregate.is_none() => {
                self.sum_aggregate = Some(msg.payload);
            }
            MessageType::EncryptedCovAggregate if he && from_aggregator && self.cov_aggregate.is_none() => {
                self.cov_aggregate = Some(msg.payload);
            }
            MessageType::LocalShareSum if !he && from_provider => {
                let s = wire::decode_shares(&msg.payload).map_err(|e| fail(e.into()))?;
                if s.owner != msg.sender {
                    return Err(fail(StepError::Inconsistent(format!("{} forwarded shares of {}", msg.sender, s.owner))));
                }
                let slot = if s.secret_id == sum_id(SUM_TAG, &providers) {
                    &mut self.sum_locals
                } else if s.secret_id == sum_id(COV_TAG, &providers) {
                    &mut self.cov_locals
                } else {
                    return Err(fail(StepError::Inconsistent(format!("local sum of unknown secrets {:?}", s.secret_id))));
                };
                if slot.contains_key(&msg.sender) {
                    return Err(self.unexpected(&msg));
                }
                slot.insert(msg.sender, s);
            }
            _ => return Err(self.unexpected(&msg)),
        }
        self.advance()?;
        Ok(self.out.take())
    }

    fn unexpected(&self, msg: &ProtocolMessage) -> ProtocolError {
        ProtocolError::Unexpected { party: PartyId::SERVER, msg_type: msg.msg_type, sender: msg.sender, step: self.step() }
    }

    /// Decrypts or reconstructs an aggregate, if it is complete.
    fn open(&self, sums: bool) -> Result<Option<Matrix>, StepError> {
        let parties = self.cfg.parties as usize;
        match self.cfg.method {
            Method::He => {
                let payload = if sums { &self.sum_aggregate } else { &self.cov_aggregate };
                let (Some(payload), Some((pk, sk))) = (payload, &self.keys) else { return Ok(None) };
                let enc = wire::decode_encrypted(payload, pk, self.cfg.float_encoding.base)?;
                Ok(Some(dec_matrix(sk, &enc)?))
            }
            Method::Ss => {
                let locals = if sums { &self.sum_locals } else { &self.cov_locals };
                if locals.len() < parties {
                    return Ok(None);
                }
                let parts: Vec<ShareMatrix> = locals.values().cloned().collect();
                let ring = reconstruct_matrix(&parts, &self.cfg.providers())?;
                Ok(Some(matrix_decode_fixed(&ring, &self.cfg.fixed_point)?))
            }
        }
    }

    fn advance(&mut self) -> Result<(), ProtocolError> {
        self.clock.mark();
        let parties = self.cfg.parties as usize;
        if self.counts.len() < parties {
            return Ok(());
        }
        if self.mean.is_none() {
            let fail = ProtocolError::at(PartyId::SERVER, Step::SumAggregation);
            let Some(sums) = self.open(true).map_err(fail)? else { return Ok(()) };
            let fail = ProtocolError::at(PartyId::SERVER, Step::SumAggregation);
            if sums.rows() != 1 {
                return Err(fail(StepError::Inconsistent(format!("column sums have shape {:?}", sums.shape()))));
            }
            if self.cfg.k >= sums.cols() {
                return Err(fail(StepError::Inconsistent(format!(
                    "k = {} must be below the feature count {}",
                    self.cfg.k,
                    sums.cols()
                ))));
            }
            let n = self.counts.values().sum::<u64>() as f64;
            let mean: Vec<f64> = sums.data().iter().map(|s| s / n).collect();
            let payload = wire::encode_real_vector(&mean).map_err(|e| fail(e.into()))?;
            for p in self.cfg.providers() {
                self.out.push(MessageType::PlainMean, p, payload.clone());
            }
            self.mean = Some(mean);
            self.clock.charge(Step::SumAggregation);
        }
        if self.result.is_none() {
            let fail = ProtocolError::at(PartyId::SERVER, Step::CovarianceAggregation);
            let Some(scatter) = self.open(false).map_err(fail)? else { return Ok(()) };
            let n = self.counts.values().sum::<u64>() as usize;
            let covariance = scatter.scale(1.0 / (n as f64 - 1.0)).map_err(|e| fail(e.into()))?;
            let d = self.mean.as_ref().map_or(0, Vec::len);
            if covariance.shape() != (d, d) {
                return Err(fail(StepError::Inconsistent(format!(
                    "covariance has shape {:?}, expected {:?}",
                    covariance.shape(),
                    (d, d)
                ))));
            }
            self.clock.charge(Step::CovarianceAggregation);
            let fail = ProtocolError::at(PartyId::SERVER, Step::Eigen);
            let eigen = jacobi_eigh(&covariance, EIGEN_TOLERANCE).map_err(|e| fail(e.into()))?;
            let fail = ProtocolError::at(PartyId::SERVER, Step::Eigen);
            let transfer = top_k_transfer(&eigen, self.cfg.k).map_err(|e| fail(e.into()))?;
            let payload = wire::encode_real_matrix(&transfer);
            for p in self.cfg.providers() {
                self.out.push(MessageType::TransferMatrix, p, payload.clone());
            }
            self.result = Some(ServerResult {
                mean: self.mean.clone().unwrap_or_default(),
                covariance,
                eigenvalues: eigen.values,
                transfer,
            });
            self.clock.charge(Step::Eigen);
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Consumer {
    id: PartyId,
    cfg: SessionConfig,
    parts: BTreeMap<PartyId, Matrix>,
    reduced: Option<Matrix>,
}

impl Consumer {
    pub fn new(cfg: SessionConfig) -> Self {
        Self { id: cfg.consumer(), cfg, parts: BTreeMap::new(), reduced: None }
    }

    pub fn step(&self) -> Step {
        if self.reduced.is_some() {
            Step::Done
        } else {
            Step::Collection
        }
    }

    pub fn reduced(&self) -> Option<&Matrix> {
        self.reduced.as_ref()
    }

    pub fn into_reduced(self) -> Option<Matrix> {
        self.reduced
    }

    fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let fail = ProtocolError::at(self.id, Step::Collection);
        let from_provider = self.cfg.providers().contains(&msg.sender);
        if msg.msg_type != MessageType::ReducedRows || !from_provider || self.parts.contains_key(&msg.sender) {
            return Err(ProtocolError::Unexpected {
                party: self.id,
                msg_type: msg.msg_type,
                sender: msg.sender,
                step: self.step(),
            });
        }
        let rows = wire::decode_real_matrix(&msg.payload).map_err(|e| fail(e.into()))?;
        if rows.cols() != self.cfg.k {
            return Err(fail(StepError::Inconsistent(format!(
                "{} sent {} columns, expected {}",
                msg.sender,
                rows.cols(),
                self.cfg.k
            ))));
        }
        self.parts.insert(msg.sender, rows);
        if self.parts.len() == self.cfg.parties as usize {
            let blocks: Vec<Matrix> = self.parts.values().cloned().collect();
            self.reduced = Some(Matrix::vstack(&blocks).map_err(|e| fail(e.into()))?);
        }
        Ok(Vec::new())
    }
}
