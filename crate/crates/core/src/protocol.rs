//! SECU and ECU state machines for pairwise, group and session key establishment.
//!
//! The state machines are pure message-in/message-out logic. Timing, framing and
//! delivery live in [`crate::bus`].

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::StateError;
use crate::group::GroupParams;
use crate::kem::{self, EcuKeyPair, KemCiphertext, PairwiseKey, PublicKey};
use crate::primitives::{
    hkdf_session, hkdf_split, hmac, hmac_verify, sha256, sym_decrypt, sym_encrypt, CipherKey,
    MacKey, MacTag, SessionKey, NONCE_LEN, TAG_LEN,
};

pub type NodeId = u16;

/// Node id of the central security ECU. ECUs use ids `1..=N`.
pub const SECU_ID: NodeId = 0;

pub const GROUP_SECRET_LEN: usize = 16;
pub const SEED_LEN: usize = 16;
pub const GROUP_SECRET_BODY_LEN: usize = NONCE_LEN + GROUP_SECRET_LEN + TAG_LEN;
pub const SEED_BODY_LEN: usize = SEED_LEN + TAG_LEN;

pub const DEFAULT_CTR_MAX: u64 = 65_535;
pub const DEFAULT_REPLAY_CACHE: usize = 64;

const PHASE3_INFO: &[u8] = b"phase3";
const PHASE4_INFO: &[u8] = b"phase4";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    PairwiseCipher,
    GroupSecret,
    SeedBroadcast,
}

impl MessageKind {
    pub const ALL: [MessageKind; 3] = [
        MessageKind::PairwiseCipher,
        MessageKind::GroupSecret,
        MessageKind::SeedBroadcast,
    ];

    pub fn body_len(self, params: &GroupParams) -> usize {
        match self {
            MessageKind::PairwiseCipher => KemCiphertext::encoded_len(params),
            MessageKind::GroupSecret => GROUP_SECRET_BODY_LEN,
            MessageKind::SeedBroadcast => SEED_BODY_LEN,
        }
    }

    /// Protocol phase the message belongs to.
    pub fn phase(self) -> u8 {
        match self {
            MessageKind::PairwiseCipher => 2,
            MessageKind::GroupSecret => 3,
            MessageKind::SeedBroadcast => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Node(NodeId),
    Broadcast,
}

impl Destination {
    pub fn includes(self, id: NodeId) -> bool {
        match self {
            Destination::Node(n) => n == id,
            Destination::Broadcast => true,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub receiver: Destination,
    pub body: Vec<u8>,
}

impl fmt::Debug for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WireMessage")
            .field("kind", &self.kind)
            .field("sender", &self.sender)
            .field("receiver", &self.receiver)
            .field("body_len", &self.body.len())
            .finish()
    }
}

/// Why a node discarded a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Malformed body or a group element outside the subgroup.
    Decode,
    /// `α` does not match `c^(x·tem+y)`.
    Consistency,
    Mac,
    Replay,
    NoPairwiseKey,
    NoGroupSecret,
    AlreadyKeyed,
    UnexpectedKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    /// Not addressed to this node, or sent by it.
    Ignored,
    Rejected(RejectReason),
}

impl Outcome {
    pub fn is_rejected(self) -> bool {
        matches!(self, Outcome::Rejected(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub ctr_max: u64,
    pub replay_cache: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            ctr_max: DEFAULT_CTR_MAX,
            replay_cache: DEFAULT_REPLAY_CACHE,
        }
    }
}

/// Group shared secret `SK`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupSecret(pub [u8; GROUP_SECRET_LEN]);

impl fmt::Debug for GroupSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupSecret({}..)", hex::encode(&self.0[..4]))
    }
}

/// Bounded FIFO of fingerprints of accepted messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayCache {
    capacity: usize,
    entries: VecDeque<[u8; 32]>,
}

impl ReplayCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn contains(&self, fp: &[u8; 32]) -> bool {
        self.entries.iter().any(|e| e == fp)
    }

    pub fn insert(&mut self, fp: [u8; 32]) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(fp);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SecuPhase {
    Init,
    Pairwise,
    GroupSecret,
    Done,
}

impl SecuPhase {
    fn name(self) -> &'static str {
        match self {
            SecuPhase::Init => "Init",
            SecuPhase::Pairwise => "Pairwise",
            SecuPhase::GroupSecret => "GroupSecret",
            SecuPhase::Done => "Done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecuState {
    params: GroupParams,
    registry: Vec<(NodeId, PublicKey)>,
    pairwise: BTreeMap<NodeId, PairwiseKey>,
    group_secret: Option<GroupSecret>,
    phase: SecuPhase,
}

impl SecuState {
    pub fn new(params: GroupParams, registry: Vec<(NodeId, PublicKey)>) -> Self {
        Self {
            params,
            registry,
            pairwise: BTreeMap::new(),
            group_secret: None,
            phase: SecuPhase::Init,
        }
    }

    pub fn phase(&self) -> SecuPhase {
        self.phase
    }

    pub fn registry(&self) -> &[(NodeId, PublicKey)] {
        &self.registry
    }

    pub fn pairwise(&self) -> &BTreeMap<NodeId, PairwiseKey> {
        &self.pairwise
    }

    pub fn group_secret(&self) -> Option<&GroupSecret> {
        self.group_secret.as_ref()
    }

    fn require(&self, phase: SecuPhase, op: &'static str) -> Result<(), StateError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(StateError::OutOfOrder {
                op,
                phase: self.phase.name(),
            })
        }
    }

    /// One KEM ciphertext per registered ECU.
    pub fn run_phase2<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<Vec<WireMessage>, StateError> {
        self.require(SecuPhase::Init, "run_phase2")?;
        if self.registry.is_empty() {
            return Err(StateError::EmptyRegistry);
        }
        let mut out = Vec::with_capacity(self.registry.len());
        for (id, pk) in &self.registry {
            let (key, ct) = kem::encapsulate(&self.params, pk, rng);
            self.pairwise.insert(*id, key);
            out.push(WireMessage {
                kind: MessageKind::PairwiseCipher,
                sender: SECU_ID,
                receiver: Destination::Node(*id),
                body: ct.encode(&self.params),
            });
        }
        self.phase = SecuPhase::Pairwise;
        Ok(out)
    }

    /// Draws `SK` and wraps it for every ECU under keys split from `K_i`.
    pub fn run_phase3<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<Vec<WireMessage>, StateError> {
        self.require(SecuPhase::Pairwise, "run_phase3")?;
        let mut sk = [0u8; GROUP_SECRET_LEN];
        rng.fill_bytes(&mut sk);
        let mut out = Vec::with_capacity(self.pairwise.len());
        for (id, _) in &self.registry {
            let k_i = self.pairwise[id];
            let mut nonce = [0u8; NONCE_LEN];
            rng.fill_bytes(&mut nonce);
            let (enc_key, mac_key) = hkdf_split(k_i.as_bytes(), PHASE3_INFO);
            let mut body = sym_encrypt(&sk, &enc_key, &nonce);
            let tag = hmac(&body, &mac_key);
            body.extend_from_slice(tag.as_bytes());
            out.push(WireMessage {
                kind: MessageKind::GroupSecret,
                sender: SECU_ID,
                receiver: Destination::Node(*id),
                body,
            });
        }
        self.group_secret = Some(GroupSecret(sk));
        self.phase = SecuPhase::GroupSecret;
        Ok(out)
    }

    /// The SECU watches the bus; an authentic seed broadcast closes its part.
    pub fn handle(&mut self, msg: &WireMessage) -> Outcome {
        if msg.sender == SECU_ID || !msg.receiver.includes(SECU_ID) {
            return Outcome::Ignored;
        }
        if msg.kind != MessageKind::SeedBroadcast {
            return Outcome::Rejected(RejectReason::UnexpectedKind);
        }
        let Some(sk) = self.group_secret else {
            return Outcome::Rejected(RejectReason::NoGroupSecret);
        };
        if self.phase == SecuPhase::Done {
            return Outcome::Rejected(RejectReason::AlreadyKeyed);
        }
        match SeedBody::parse(&msg.body) {
            Some(seed) if seed.verify(&sk) => {
                self.phase = SecuPhase::Done;
                Outcome::Accepted
            }
            Some(_) => Outcome::Rejected(RejectReason::Mac),
            None => Outcome::Rejected(RejectReason::Decode),
        }
    }
}

/// Round state for phases 4 and 5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub round: u64,
    pub counter: u64,
    pub ctr_max: u64,
    pub key: SessionKey,
    pub derivation_key: CipherKey,
    pub mac_key: MacKey,
}

/// Emitted when the counter rolls over and `SSK_R` is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshEvent {
    pub round: u64,
}

impl SessionState {
    fn start(sk: &GroupSecret, seed: &[u8], ctr_max: u64) -> Self {
        let (derivation_key, mac_key) = hkdf_split(&sk.0, PHASE4_INFO);
        Self {
            round: 0,
            counter: 0,
            ctr_max,
            key: hkdf_session(seed, 0, &derivation_key),
            derivation_key,
            mac_key,
        }
    }

    /// Counts one data frame; at `ctr_max` the round advances without any traffic.
    pub fn tick(&mut self) -> Option<RefreshEvent> {
        if self.counter == self.ctr_max {
            self.counter = 0;
            self.round += 1;
            self.key = hkdf_session(self.key.as_bytes(), self.round, &self.derivation_key);
            Some(RefreshEvent { round: self.round })
        } else {
            self.counter += 1;
            None
        }
    }
}

struct SeedBody<'a> {
    seed: &'a [u8],
    tag: MacTag,
}

impl<'a> SeedBody<'a> {
    fn parse(body: &'a [u8]) -> Option<Self> {
        if body.len() != SEED_BODY_LEN {
            return None;
        }
        let (seed, tag) = body.split_at(SEED_LEN);
        Some(Self {
            seed,
            tag: MacTag::from_slice(tag)?,
        })
    }

    fn verify(&self, sk: &GroupSecret) -> bool {
        let (_, mac_key) = hkdf_split(&sk.0, PHASE4_INFO);
        hmac_verify(self.seed, &mac_key, &self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcuState {
    params: GroupParams,
    keypair: EcuKeyPair,
    config: ProtocolConfig,
    pairwise: Option<PairwiseKey>,
    group_secret: Option<GroupSecret>,
    session: Option<SessionState>,
    replay_cache: ReplayCache,
}

impl EcuState {
    pub fn new(params: GroupParams, keypair: EcuKeyPair, config: ProtocolConfig) -> Self {
        Self {
            params,
            keypair,
            config,
            pairwise: None,
            group_secret: None,
            session: None,
            replay_cache: ReplayCache::new(config.replay_cache),
        }
    }

    pub fn id(&self) -> NodeId {
        self.keypair.ecu_id
    }

    pub fn keypair(&self) -> &EcuKeyPair {
        &self.keypair
    }

    pub fn pairwise(&self) -> Option<&PairwiseKey> {
        self.pairwise.as_ref()
    }

    pub fn group_secret(&self) -> Option<&GroupSecret> {
        self.group_secret.as_ref()
    }

    pub fn session(&self) -> Option<&SessionState> {
        self.session.as_ref()
    }

    pub fn replay_cache(&self) -> &ReplayCache {
        &self.replay_cache
    }

    /// Dispatches on message kind after the addressing check.
    pub fn handle(&mut self, msg: &WireMessage) -> Outcome {
        if msg.sender == self.id() || !msg.receiver.includes(self.id()) {
            return Outcome::Ignored;
        }
        match msg.kind {
            MessageKind::PairwiseCipher => self.handle_pairwise(msg),
            MessageKind::GroupSecret => self.handle_group_secret(msg),
            MessageKind::SeedBroadcast => self.handle_seed(msg),
        }
    }

    pub fn handle_pairwise(&mut self, msg: &WireMessage) -> Outcome {
        if !msg.receiver.includes(self.id()) || msg.kind != MessageKind::PairwiseCipher {
            return Outcome::Ignored;
        }
        let fp = sha256(&msg.body);
        if self.replay_cache.contains(&fp) {
            return Outcome::Rejected(RejectReason::Replay);
        }
        if self.pairwise.is_some() {
            return Outcome::Rejected(RejectReason::AlreadyKeyed);
        }
        let ct = match KemCiphertext::decode(&self.params, &msg.body) {
            Ok(ct) => ct,
            Err(_) => return Outcome::Rejected(RejectReason::Decode),
        };
        match kem::decapsulate(&self.params, &self.keypair, &ct) {
            Ok(k) => {
                self.pairwise = Some(k);
                self.replay_cache.insert(fp);
                Outcome::Accepted
            }
            Err(_) => Outcome::Rejected(RejectReason::Consistency),
        }
    }

    pub fn handle_group_secret(&mut self, msg: &WireMessage) -> Outcome {
        if !msg.receiver.includes(self.id()) || msg.kind != MessageKind::GroupSecret {
            return Outcome::Ignored;
        }
        if msg.body.len() != GROUP_SECRET_BODY_LEN {
            return Outcome::Rejected(RejectReason::Decode);
        }
        let (m1, m2) = msg.body.split_at(NONCE_LEN + GROUP_SECRET_LEN);
        let tag = MacTag::from_slice(m2).expect("fixed layout");
        if self.replay_cache.contains(tag.as_bytes()) {
            return Outcome::Rejected(RejectReason::Replay);
        }
        let Some(k_i) = self.pairwise else {
            return Outcome::Rejected(RejectReason::NoPairwiseKey);
        };
        if self.group_secret.is_some() {
            return Outcome::Rejected(RejectReason::AlreadyKeyed);
        }
        let (enc_key, mac_key) = hkdf_split(k_i.as_bytes(), PHASE3_INFO);
        if !hmac_verify(m1, &mac_key, &tag) {
            return Outcome::Rejected(RejectReason::Mac);
        }
        let sk = sym_decrypt(m1, &enc_key).expect("m1 carries a full nonce");
        self.group_secret = Some(GroupSecret(sk.try_into().expect("16-byte secret")));
        self.replay_cache.insert(*tag.as_bytes());
        Outcome::Accepted
    }

    pub fn handle_seed(&mut self, msg: &WireMessage) -> Outcome {
        if msg.sender == self.id() || msg.kind != MessageKind::SeedBroadcast {
            return Outcome::Ignored;
        }
        let Some(body) = SeedBody::parse(&msg.body) else {
            return Outcome::Rejected(RejectReason::Decode);
        };
        if self.replay_cache.contains(body.tag.as_bytes()) {
            return Outcome::Rejected(RejectReason::Replay);
        }
        let Some(sk) = self.group_secret else {
            return Outcome::Rejected(RejectReason::NoGroupSecret);
        };
        if self.session.is_some() {
            return Outcome::Rejected(RejectReason::AlreadyKeyed);
        }
        if !body.verify(&sk) {
            return Outcome::Rejected(RejectReason::Mac);
        }
        self.session = Some(SessionState::start(&sk, body.seed, self.config.ctr_max));
        self.replay_cache.insert(*body.tag.as_bytes());
        Outcome::Accepted
    }

    /// Elected sender: draw a seed, start round 0 and produce the authenticated broadcast.
    pub fn run_phase4<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<WireMessage, StateError> {
        let sk = self.group_secret.ok_or(StateError::NoGroupSecret)?;
        if self.session.is_some() {
            return Err(StateError::OutOfOrder {
                op: "run_phase4",
                phase: "Session",
            });
        }
        let mut seed = [0u8; SEED_LEN];
        rng.fill_bytes(&mut seed);
        let session = SessionState::start(&sk, &seed, self.config.ctr_max);
        let tag = hmac(&seed, &session.mac_key);
        self.session = Some(session);
        self.replay_cache.insert(*tag.as_bytes());
        let mut body = seed.to_vec();
        body.extend_from_slice(tag.as_bytes());
        Ok(WireMessage {
            kind: MessageKind::SeedBroadcast,
            sender: self.id(),
            receiver: Destination::Broadcast,
            body,
        })
    }

    pub fn tick_counter(&mut self) -> Result<Option<RefreshEvent>, StateError> {
        self.session
            .as_mut()
            .map(SessionState::tick)
            .ok_or(StateError::NoSession)
    }
}
