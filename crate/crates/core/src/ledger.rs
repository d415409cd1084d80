//! Permissioned hash-chained event ledger with M-of-N transaction approval.
//!
//! Events are grouped into transactions that must collect at least `K`
//! signatures from a named signer set before a block may include them.
//! Registration of signers is itself recorded on-chain as self-signed
//! `FarmRegistration` transactions, so the signer registry is always
//! recoverable from the blocks alone.
//!
//! # Canonical encoding
//!
//! All hashes are SHA-256 over a length-prefixed byte encoding:
//!
//! * `u64`: 8 bytes little-endian.
//! * `bytes(b)`: `u64(len(b)) ‖ b`; strings are their UTF-8 bytes.
//! * event: `bytes(kind) ‖ u64(timestamp) ‖ u64(n) ‖ n × (bytes(key) ‖ bytes(value))`,
//!   keys in ascending byte order.
//! * transaction id: `SHA-256(bytes("chainfis.tx.v1") ‖ u64(#events) ‖ events ‖
//!   u64(#signers) ‖ signer ids as bytes, ascending ‖ u64(K))`.
//! * transactions root: `SHA-256(bytes("chainfis.root.v1") ‖ u64(#tx) ‖ tx ids)`.
//! * block hash: `SHA-256(bytes("chainfis.header.v1") ‖ u64(height) ‖
//!   previous_hash ‖ transactions_root ‖ u64(timestamp))`.
//! * keyed-hash signature: `SHA-256(bytes("chainfis.sig.v1") ‖ bytes(key) ‖ tx id)`.
//!
//! Signatures are deliberately outside the transaction id and the root; they
//! are checked against the recomputed id during verification.
//!
//! The export format is one JSON object per block per line, keys sorted,
//! hashes and signatures as lowercase hex.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::forecast::{DemandForecastState, ForecastError};
use crate::scalar::Scalar;

pub type Hash = [u8; 32];

pub const ZERO_HASH: Hash = [0; 32];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("signer `{0}` is already registered")]
    DuplicateSigner(String),
    #[error("signer `{0}` is not registered")]
    UnknownSigner(String),
    #[error("threshold {threshold} invalid for {signers} required signer(s)")]
    InvalidThreshold { threshold: usize, signers: usize },
    #[error("malformed {kind} event: {reason}")]
    MalformedEvent { kind: EventKind, reason: String },
    #[error("{0} events are reserved for signer registration")]
    ReservedEvent(EventKind),
    #[error("`{signer}` is not a required signer of transaction {tx}")]
    NotRequiredSigner { tx: String, signer: String },
    #[error("`{signer}` already signed transaction {tx}")]
    AlreadySigned { tx: String, signer: String },
    #[error("transaction {tx} has {valid} valid signature(s), needs {threshold}")]
    UnderSigned {
        tx: String,
        valid: usize,
        threshold: usize,
    },
    #[error("transaction {tx} carries an invalid signature from `{signer}`")]
    InvalidSignature { tx: String, signer: String },
    #[error("transaction {0} content no longer matches its id")]
    Tampered(String),
    #[error("event timestamps decrease within the block")]
    TimestampOrder,
    #[error("a block must contain at least one transaction")]
    EmptyBlock,
    #[error("invalid contract parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("chain file line {line}: {message}")]
    Parse { line: usize, message: String },
}

// ---------------------------------------------------------------------------
// Canonical encoding helpers

#[derive(Default)]
struct Encoder(Vec<u8>);

impl Encoder {
    fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
        self
    }

    fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }

    fn digest(&self) -> Hash {
        Sha256::digest(&self.0).into()
    }
}

pub fn to_hex(h: &[u8]) -> String {
    hex::encode(h)
}

mod hex_hash {
    use super::Hash;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(h: &Hash, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(h))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Hash, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom(
                "hash must be 64 lowercase hex digits",
            ));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

mod hex_signatures {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<String, Vec<u8>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, v)| (k, hex::encode(v)))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, Vec<u8>>, D::Error> {
        BTreeMap::<String, String>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                if v.bytes().any(|b| b.is_ascii_uppercase()) {
                    return Err(serde::de::Error::custom("signature hex must be lowercase"));
                }
                hex::decode(&v)
                    .map(|b| (k, b))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Signers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Supplier,
    Producer,
    Distributor,
    Retailer,
    Auditor,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Supplier => "supplier",
            Self::Producer => "producer",
            Self::Distributor => "distributor",
            Self::Retailer => "retailer",
            Self::Auditor => "auditor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::Supplier,
            Self::Producer,
            Self::Distributor,
            Self::Retailer,
            Self::Auditor,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

/// Opaque secret handed to a [`SignatureScheme`].
#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey(Vec<u8>);

impl SigningKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    /// Deterministic key derived from a label, for simulations and tests.
    pub fn derive(label: &str) -> Self {
        Self(Sha256::digest(label.as_bytes()).to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stakeholder {
    pub id: String,
    pub role: Role,
    pub key: SigningKey,
}

impl Stakeholder {
    pub fn new(id: impl Into<String>, role: Role, key: SigningKey) -> Self {
        Self {
            id: id.into(),
            role,
            key,
        }
    }
}

/// Pluggable signing primitive. `verification_key` is what gets published
/// on-chain; verification only ever sees that.
pub trait SignatureScheme: Send + Sync + fmt::Debug {
    fn verification_key(&self, key: &SigningKey) -> Vec<u8>;
    fn sign(&self, key: &SigningKey, message: &[u8]) -> Vec<u8>;
    fn verify(&self, verification_key: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

/// Simulated signatures: `SHA-256(tag ‖ key ‖ message)`. The verification key
/// is the key itself, so this only models authorization, not secrecy.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyedHashScheme;

impl SignatureScheme for KeyedHashScheme {
    fn verification_key(&self, key: &SigningKey) -> Vec<u8> {
        key.0.clone()
    }

    fn sign(&self, key: &SigningKey, message: &[u8]) -> Vec<u8> {
        let mut enc = Encoder::default();
        enc.bytes(b"chainfis.sig.v1").bytes(&key.0).raw(message);
        enc.digest().to_vec()
    }

    fn verify(&self, verification_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let mut enc = Encoder::default();
        enc.bytes(b"chainfis.sig.v1")
            .bytes(verification_key)
            .raw(message);
        enc.digest().as_slice() == signature
    }
}

/// Registry entry recovered from a registration event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerRecord {
    pub id: String,
    pub role: Role,
    pub verification_key: Vec<u8>,
}

// ---------------------------------------------------------------------------
// Events and transactions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FarmRegistration,
    Hatch,
    Measurement,
    Processing,
    Distribution,
    RetailDelivery,
    Reorder,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FarmRegistration => "FarmRegistration",
            Self::Hatch => "Hatch",
            Self::Measurement => "Measurement",
            Self::Processing => "Processing",
            Self::Distribution => "Distribution",
            Self::RetailDelivery => "RetailDelivery",
            Self::Reorder => "Reorder",
        }
    }

    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Self::FarmRegistration => &["role", "stakeholder_id", "verification_key"],
            Self::Hatch | Self::Measurement | Self::Processing => {
                &["location", "period", "production_type"]
            }
            Self::Distribution => &["location", "period", "production_type", "quantity"],
            Self::RetailDelivery => &["location", "period", "price", "production_type", "quantity"],
            Self::Reorder => &["period", "quantity", "validator"],
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyChainEvent {
    pub kind: EventKind,
    pub payload: BTreeMap<String, String>,
    pub timestamp: u64,
}

impl SupplyChainEvent {
    pub fn new<K, V>(
        kind: EventKind,
        payload: impl IntoIterator<Item = (K, V)>,
        timestamp: u64,
    ) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            kind,
            payload: payload
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            timestamp,
        }
    }

    fn malformed(&self, reason: impl Into<String>) -> LedgerError {
        LedgerError::MalformedEvent {
            kind: self.kind,
            reason: reason.into(),
        }
    }

    fn number(&self, key: &str) -> Result<f64, LedgerError> {
        let raw = &self.payload[key];
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.malformed(format!("`{key}` = `{raw}` is not a number")))
    }

    /// Checks the per-kind required payload keys and value constraints.
    pub fn validate(&self) -> Result<(), LedgerError> {
        for key in self.kind.required_keys() {
            if !self.payload.contains_key(*key) {
                return Err(self.malformed(format!("missing `{key}`")));
            }
        }
        match self.kind {
            EventKind::Reorder => {
                if !(self.number("quantity")? > 0.0) {
                    return Err(self.malformed("quantity must be > 0"));
                }
            }
            EventKind::Distribution | EventKind::RetailDelivery => {
                if self.number("quantity")? < 0.0 {
                    return Err(self.malformed("quantity must be >= 0"));
                }
                if self.kind == EventKind::RetailDelivery && self.number("price")? < 0.0 {
                    return Err(self.malformed("price must be >= 0"));
                }
            }
            EventKind::FarmRegistration => {
                if Role::parse(&self.payload["role"]).is_none() {
                    return Err(self.malformed("unknown role"));
                }
                if hex::decode(&self.payload["verification_key"]).is_err() {
                    return Err(self.malformed("verification_key is not hex"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self.kind.as_str().as_bytes())
            .u64(self.timestamp)
            .u64(self.payload.len() as u64);
        for (k, v) in &self.payload {
            enc.bytes(k.as_bytes()).bytes(v.as_bytes());
        }
    }

    fn signer_record(&self) -> Option<SignerRecord> {
        if self.kind != EventKind::FarmRegistration {
            return None;
        }
        Some(SignerRecord {
            id: self.payload.get("stakeholder_id")?.clone(),
            role: Role::parse(self.payload.get("role")?)?,
            verification_key: hex::decode(self.payload.get("verification_key")?).ok()?,
        })
    }
}

/// A set of events awaiting (or carrying) its M-of-N approval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub events: Vec<SupplyChainEvent>,
    #[serde(with = "hex_hash")]
    pub id: Hash,
    pub required_signers: BTreeSet<String>,
    #[serde(with = "hex_signatures")]
    pub signatures: BTreeMap<String, Vec<u8>>,
    pub threshold: usize,
}

pub type PendingTransaction = Transaction;

impl Transaction {
    /// Content hash over events, required signer set and threshold.
    pub fn content_id(&self) -> Hash {
        content_id(&self.events, &self.required_signers, self.threshold)
    }

    pub fn id_hex(&self) -> String {
        to_hex(&self.id)
    }

    /// Stores `signer`'s signature over the transaction id.
    pub fn add_signature(
        &mut self,
        signer: &Stakeholder,
        scheme: &dyn SignatureScheme,
    ) -> Result<(), LedgerError> {
        if !self.required_signers.contains(&signer.id) {
            return Err(LedgerError::NotRequiredSigner {
                tx: self.id_hex(),
                signer: signer.id.clone(),
            });
        }
        if self.signatures.contains_key(&signer.id) {
            return Err(LedgerError::AlreadySigned {
                tx: self.id_hex(),
                signer: signer.id.clone(),
            });
        }
        let sig = scheme.sign(&signer.key, &self.id);
        self.signatures.insert(signer.id.clone(), sig);
        Ok(())
    }

    /// Signers whose signature verifies against the recomputed content id.
    pub fn valid_signers(
        &self,
        registry: &BTreeMap<String, SignerRecord>,
        scheme: &dyn SignatureScheme,
    ) -> Vec<String> {
        let id = self.content_id();
        self.signatures
            .iter()
            .filter(|(signer, sig)| {
                self.required_signers.contains(*signer)
                    && registry
                        .get(*signer)
                        .is_some_and(|rec| scheme.verify(&rec.verification_key, &id, sig))
            })
            .map(|(signer, _)| signer.clone())
            .collect()
    }

    fn check_threshold(&self) -> Result<(), LedgerError> {
        if self.threshold == 0 || self.threshold > self.required_signers.len() {
            return Err(LedgerError::InvalidThreshold {
                threshold: self.threshold,
                signers: self.required_signers.len(),
            });
        }
        Ok(())
    }
}

fn content_id(events: &[SupplyChainEvent], signers: &BTreeSet<String>, threshold: usize) -> Hash {
    let mut enc = Encoder::default();
    enc.bytes(b"chainfis.tx.v1").u64(events.len() as u64);
    for e in events {
        e.encode(&mut enc);
    }
    enc.u64(signers.len() as u64);
    for s in signers {
        enc.bytes(s.as_bytes());
    }
    enc.u64(threshold as u64);
    enc.digest()
}

fn transactions_root<'a>(ids: impl ExactSizeIterator<Item = &'a Hash>) -> Hash {
    let mut enc = Encoder::default();
    enc.bytes(b"chainfis.root.v1").u64(ids.len() as u64);
    for id in ids {
        enc.raw(id);
    }
    enc.digest()
}

// ---------------------------------------------------------------------------
// Blocks and chain

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    #[serde(with = "hex_hash")]
    pub hash: Hash,
    pub height: u64,
    #[serde(with = "hex_hash")]
    pub previous_hash: Hash,
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    #[serde(with = "hex_hash")]
    pub transactions_root: Hash,
}

impl Block {
    pub fn header_hash(&self) -> Hash {
        let mut enc = Encoder::default();
        enc.bytes(b"chainfis.header.v1")
            .u64(self.height)
            .raw(&self.previous_hash)
            .raw(&self.transactions_root)
            .u64(self.timestamp);
        enc.digest()
    }

    /// Canonical single-line JSON (sorted keys, lowercase hex).
    pub fn to_json_line(&self) -> String {
        let value = serde_json::to_value(self).expect("block serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonitorKind {
    Registered,
    Sealed,
    Rejected,
}

/// Layer-2 monitoring record of a chain operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorEntry {
    pub kind: MonitorKind,
    pub height: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationReason {
    HeightMismatch {
        found: u64,
    },
    PreviousHashMismatch,
    HeaderHashMismatch,
    TransactionsRootMismatch,
    TransactionIdMismatch {
        tx: usize,
    },
    TimestampOrder,
    GenesisNotEmpty,
    MalformedEvent {
        tx: usize,
        message: String,
    },
    InvalidThreshold {
        tx: usize,
    },
    DuplicateSigner {
        id: String,
    },
    UnknownSigner {
        tx: usize,
        id: String,
    },
    InvalidSignature {
        tx: usize,
        signer: String,
    },
    SignatureThreshold {
        tx: usize,
        valid: usize,
        threshold: usize,
    },
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HeightMismatch { found } => write!(f, "height field is {found}"),
            Self::PreviousHashMismatch => f.write_str("previous_hash mismatch"),
            Self::HeaderHashMismatch => f.write_str("header hash mismatch"),
            Self::TransactionsRootMismatch => f.write_str("transactions_root mismatch"),
            Self::TransactionIdMismatch { tx } => write!(f, "transaction {tx} id mismatch"),
            Self::TimestampOrder => f.write_str("timestamps out of order"),
            Self::GenesisNotEmpty => f.write_str("genesis block carries transactions"),
            Self::MalformedEvent { tx, message } => {
                write!(f, "transaction {tx} has a malformed event: {message}")
            }
            Self::InvalidThreshold { tx } => write!(f, "transaction {tx} has an invalid threshold"),
            Self::DuplicateSigner { id } => write!(f, "signer `{id}` registered twice"),
            Self::UnknownSigner { tx, id } => {
                write!(f, "transaction {tx} requires unregistered signer `{id}`")
            }
            Self::InvalidSignature { tx, signer } => {
                write!(
                    f,
                    "transaction {tx} has an invalid signature from `{signer}`"
                )
            }
            Self::SignatureThreshold {
                tx,
                valid,
                threshold,
            } => write!(
                f,
                "signature threshold violated in transaction {tx}: {valid} of {threshold}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerificationReport {
    Ok {
        blocks: usize,
    },
    Violation {
        height: u64,
        reason: ViolationReason,
    },
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok { .. })
    }

    pub fn bad_height(&self) -> Option<u64> {
        match self {
            Self::Ok { .. } => None,
            Self::Violation { height, .. } => Some(*height),
        }
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ok { blocks } => write!(f, "ok ({blocks} blocks)"),
            Self::Violation { height, reason } => write!(f, "bad height {height}: {reason}"),
        }
    }
}

/// Single authoritative chain. Mutations (`register_signer`, `seal_block`)
/// need `&mut self`; sealed blocks are never modified afterwards.
#[derive(Debug, Clone)]
pub struct LedgerChain {
    blocks: Vec<Block>,
    registry: BTreeMap<String, SignerRecord>,
    scheme: Arc<dyn SignatureScheme>,
    monitor: Vec<MonitorEntry>,
}

impl Default for LedgerChain {
    fn default() -> Self {
        Self::new(0)
    }
}

impl LedgerChain {
    pub fn new(genesis_timestamp: u64) -> Self {
        Self::with_scheme(genesis_timestamp, Arc::new(KeyedHashScheme))
    }

    pub fn with_scheme(genesis_timestamp: u64, scheme: Arc<dyn SignatureScheme>) -> Self {
        let mut genesis = Block {
            hash: ZERO_HASH,
            height: 0,
            previous_hash: ZERO_HASH,
            timestamp: genesis_timestamp,
            transactions: Vec::new(),
            transactions_root: transactions_root(std::iter::empty()),
        };
        genesis.hash = genesis.header_hash();
        Self {
            blocks: vec![genesis],
            registry: BTreeMap::new(),
            scheme,
            monitor: Vec::new(),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn registry(&self) -> &BTreeMap<String, SignerRecord> {
        &self.registry
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    pub fn monitor(&self) -> &[MonitorEntry] {
        &self.monitor
    }

    /// Adds a signer by sealing a self-signed registration block.
    pub fn register_signer(&mut self, stakeholder: &Stakeholder) -> Result<u64, LedgerError> {
        if self.registry.contains_key(&stakeholder.id) {
            return Err(LedgerError::DuplicateSigner(stakeholder.id.clone()));
        }
        let vk = self.scheme.verification_key(&stakeholder.key);
        let event = SupplyChainEvent::new(
            EventKind::FarmRegistration,
            [
                ("role", stakeholder.role.as_str().to_string()),
                ("stakeholder_id", stakeholder.id.clone()),
                ("verification_key", to_hex(&vk)),
            ],
            self.tip().timestamp,
        );
        let mut tx = build_transaction(vec![event], [stakeholder.id.clone()].into(), 1);
        tx.add_signature(stakeholder, self.scheme.as_ref())?;
        let height = self.append_block(vec![tx]);
        self.monitor.push(MonitorEntry {
            kind: MonitorKind::Registered,
            height,
            detail: stakeholder.id.clone(),
        });
        Ok(height)
    }

    /// Builds a content-addressed pending transaction. Does not touch the chain.
    pub fn propose_transaction(
        &self,
        events: Vec<SupplyChainEvent>,
        required: BTreeSet<String>,
        threshold: usize,
    ) -> Result<Transaction, LedgerError> {
        if threshold == 0 || threshold > required.len() {
            return Err(LedgerError::InvalidThreshold {
                threshold,
                signers: required.len(),
            });
        }
        if let Some(unknown) = required.iter().find(|id| !self.registry.contains_key(*id)) {
            return Err(LedgerError::UnknownSigner(unknown.clone()));
        }
        for e in &events {
            if e.kind == EventKind::FarmRegistration {
                return Err(LedgerError::ReservedEvent(e.kind));
            }
            e.validate()?;
        }
        Ok(build_transaction(events, required, threshold))
    }

    /// Signs `tx` as `signer` with the chain's scheme.
    pub fn sign(&self, tx: &mut Transaction, signer: &Stakeholder) -> Result<(), LedgerError> {
        tx.add_signature(signer, self.scheme.as_ref())
    }

    /// Appends a block holding `txs`, each of which must carry at least its
    /// threshold of valid signatures over unmodified content.
    pub fn seal_block(&mut self, txs: Vec<Transaction>) -> Result<u64, LedgerError> {
        if let Err(e) = self.check_sealable(&txs) {
            self.monitor.push(MonitorEntry {
                kind: MonitorKind::Rejected,
                height: self.height() + 1,
                detail: e.to_string(),
            });
            return Err(e);
        }
        let height = self.append_block(txs);
        self.monitor.push(MonitorEntry {
            kind: MonitorKind::Sealed,
            height,
            detail: format!("{} transaction(s)", self.tip().transactions.len()),
        });
        Ok(height)
    }

    fn check_sealable(&self, txs: &[Transaction]) -> Result<(), LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBlock);
        }
        let mut last_ts = self.tip().timestamp;
        for tx in txs {
            tx.check_threshold()?;
            if tx.content_id() != tx.id {
                return Err(LedgerError::Tampered(tx.id_hex()));
            }
            for e in &tx.events {
                if e.kind == EventKind::FarmRegistration {
                    return Err(LedgerError::ReservedEvent(e.kind));
                }
                e.validate()?;
                if e.timestamp < last_ts {
                    return Err(LedgerError::TimestampOrder);
                }
                last_ts = e.timestamp;
            }
            let valid = tx.valid_signers(&self.registry, self.scheme.as_ref());
            if let Some(bad) = tx.signatures.keys().find(|s| !valid.contains(*s)) {
                return Err(LedgerError::InvalidSignature {
                    tx: tx.id_hex(),
                    signer: bad.clone(),
                });
            }
            if valid.len() < tx.threshold {
                return Err(LedgerError::UnderSigned {
                    tx: tx.id_hex(),
                    valid: valid.len(),
                    threshold: tx.threshold,
                });
            }
        }
        Ok(())
    }

    fn append_block(&mut self, txs: Vec<Transaction>) -> u64 {
        let prev = self.tip();
        let timestamp = txs
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.timestamp))
            .fold(prev.timestamp, u64::max);
        let mut block = Block {
            hash: ZERO_HASH,
            height: prev.height + 1,
            previous_hash: prev.hash,
            timestamp,
            transactions_root: transactions_root(txs.iter().map(|t| &t.id)),
            transactions: txs,
        };
        block.hash = block.header_hash();
        for tx in &block.transactions {
            for rec in tx.events.iter().filter_map(SupplyChainEvent::signer_record) {
                self.registry.insert(rec.id.clone(), rec);
            }
        }
        self.blocks.push(block);
        self.height()
    }

    /// Number of sealed events of `kind`, registrations included.
    pub fn count_events(&self, kind: EventKind) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.transactions)
            .flat_map(|t| &t.events)
            .filter(|e| e.kind == kind)
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&b.to_json_line());
            out.push('\n');
        }
        out
    }

    /// Parses the JSON-lines export. Structural problems are errors naming
    /// the line; integrity problems are left to [`verify_chain`].
    pub fn from_jsonl(text: &str) -> Result<Self, LedgerError> {
        Self::from_jsonl_with_scheme(text, Arc::new(KeyedHashScheme))
    }

    pub fn from_jsonl_with_scheme(
        text: &str,
        scheme: Arc<dyn SignatureScheme>,
    ) -> Result<Self, LedgerError> {
        let mut blocks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let block: Block = serde_json::from_str(line).map_err(|e| LedgerError::Parse {
                line: i + 1,
                message: format!("column {}: {e}", e.column()),
            })?;
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(LedgerError::Parse {
                line: 1,
                message: "no blocks".into(),
            });
        }
        let mut registry = BTreeMap::new();
        for rec in blocks
            .iter()
            .flat_map(|b| &b.transactions)
            .flat_map(|t| &t.events)
            .filter_map(SupplyChainEvent::signer_record)
        {
            registry.entry(rec.id.clone()).or_insert(rec);
        }
        Ok(Self {
            blocks,
            registry,
            scheme,
            monitor: Vec::new(),
        })
    }

    /// Mutable block access for tamper experiments; the result is generally
    /// no longer a valid chain.
    #[doc(hidden)]
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}

fn build_transaction(
    events: Vec<SupplyChainEvent>,
    required: BTreeSet<String>,
    threshold: usize,
) -> Transaction {
    let id = content_id(&events, &required, threshold);
    Transaction {
        events,
        id,
        required_signers: required,
        signatures: BTreeMap::new(),
        threshold,
    }
}

/// Walks genesis to tip recomputing hashes, roots and signatures against a
/// registry rebuilt from the blocks, and reports the first violation.
pub fn verify_chain(chain: &LedgerChain) -> VerificationReport {
    let scheme = chain.scheme();
    let mut registry: BTreeMap<String, SignerRecord> = BTreeMap::new();
    let mut prev: Option<&Block> = None;
    let violation = |height: u64, reason| VerificationReport::Violation { height, reason };
    for (i, block) in chain.blocks.iter().enumerate() {
        let h = i as u64;
        if block.height != h {
            return violation(
                h,
                ViolationReason::HeightMismatch {
                    found: block.height,
                },
            );
        }
        let expected_prev = prev.map_or(ZERO_HASH, |p| p.hash);
        if block.previous_hash != expected_prev {
            return violation(h, ViolationReason::PreviousHashMismatch);
        }
        if block.header_hash() != block.hash {
            return violation(h, ViolationReason::HeaderHashMismatch);
        }
        let ids: Vec<Hash> = block
            .transactions
            .iter()
            .map(Transaction::content_id)
            .collect();
        if transactions_root(ids.iter()) != block.transactions_root {
            return violation(h, ViolationReason::TransactionsRootMismatch);
        }
        if let Some(tx) = (0..ids.len()).find(|&t| block.transactions[t].id != ids[t]) {
            return violation(h, ViolationReason::TransactionIdMismatch { tx });
        }
        if h == 0 && !block.transactions.is_empty() {
            return violation(h, ViolationReason::GenesisNotEmpty);
        }
        let mut last_ts = prev.map_or(0, |p| p.timestamp);
        if block.timestamp < last_ts {
            return violation(h, ViolationReason::TimestampOrder);
        }
        for (t, tx) in block.transactions.iter().enumerate() {
            for e in &tx.events {
                if e.timestamp < last_ts || e.timestamp > block.timestamp {
                    return violation(h, ViolationReason::TimestampOrder);
                }
                last_ts = e.timestamp;
                if let Err(err) = e.validate() {
                    return violation(
                        h,
                        ViolationReason::MalformedEvent {
                            tx: t,
                            message: err.to_string(),
                        },
                    );
                }
                if let Some(rec) = e.signer_record() {
                    if registry.contains_key(&rec.id) {
                        return violation(h, ViolationReason::DuplicateSigner { id: rec.id });
                    }
                    registry.insert(rec.id.clone(), rec);
                }
            }
            if tx.check_threshold().is_err() {
                return violation(h, ViolationReason::InvalidThreshold { tx: t });
            }
            if let Some(id) = tx
                .required_signers
                .iter()
                .find(|s| !registry.contains_key(*s))
            {
                return violation(
                    h,
                    ViolationReason::UnknownSigner {
                        tx: t,
                        id: id.clone(),
                    },
                );
            }
            let valid = tx.valid_signers(&registry, scheme);
            if let Some(bad) = tx.signatures.keys().find(|s| !valid.contains(*s)) {
                return violation(
                    h,
                    ViolationReason::InvalidSignature {
                        tx: t,
                        signer: bad.clone(),
                    },
                );
            }
            if valid.len() < tx.threshold {
                return violation(
                    h,
                    ViolationReason::SignatureThreshold {
                        tx: t,
                        valid: valid.len(),
                        threshold: tx.threshold,
                    },
                );
            }
        }
        prev = Some(block);
    }
    VerificationReport::Ok {
        blocks: chain.blocks.len(),
    }
}

// ---------------------------------------------------------------------------
// Reorder contract

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReorderParams<T> {
    pub safety_stock: T,
    pub horizon_periods: u32,
}

/// Purchase order proposed by [`evaluate_reorder_contract`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReorderProposal<T> {
    pub quantity: u64,
    pub forecast_rate: T,
    pub order_up_to: T,
}

impl<T: Scalar> ReorderProposal<T> {
    pub fn to_event(&self, period: u64, validator: &str, timestamp: u64) -> SupplyChainEvent {
        SupplyChainEvent::new(
            EventKind::Reorder,
            [
                (
                    "forecast_rate",
                    format!("{:.16e}", self.forecast_rate.as_f64()),
                ),
                ("order_up_to", format!("{:.16e}", self.order_up_to.as_f64())),
                ("period", period.to_string()),
                ("quantity", self.quantity.to_string()),
                ("validator", validator.to_string()),
            ],
            timestamp,
        )
    }
}

/// Slack under which a fractional requirement is treated as the integer below it.
const INTEGER_SLACK: f64 = 1e-9;

/// Order-up-to rule: when stock is below `forecast × horizon + safety_stock`,
/// propose ordering the shortfall, rounded up to whole units.
pub fn evaluate_reorder_contract<T: Scalar>(
    inventory_on_hand: T,
    forecast_state: &DemandForecastState<T>,
    params: &ReorderParams<T>,
) -> Result<Option<ReorderProposal<T>>, LedgerError> {
    if !(params.safety_stock >= T::zero()) {
        return Err(LedgerError::InvalidParams(format!(
            "safety_stock must be >= 0, got {}",
            params.safety_stock
        )));
    }
    let rate = forecast_state.sba_forecast()?;
    let target = rate * T::lit(params.horizon_periods as f64) + params.safety_stock;
    if !(inventory_on_hand < target) {
        return Ok(None);
    }
    let shortfall = (target - inventory_on_hand).as_f64();
    let quantity = (shortfall - INTEGER_SLACK).ceil().max(1.0) as u64;
    Ok(Some(ReorderProposal {
        quantity,
        forecast_rate: rate,
        order_up_to: target,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stakeholders(n: usize) -> Vec<Stakeholder> {
        let roles = [
            Role::Supplier,
            Role::Producer,
            Role::Distributor,
            Role::Retailer,
            Role::Auditor,
        ];
        (0..n)
            .map(|i| {
                let id = format!("s{i}");
                Stakeholder::new(&id, roles[i % 5], SigningKey::derive(&id))
            })
            .collect()
    }

    fn chain_with(n: usize) -> (LedgerChain, Vec<Stakeholder>) {
        let mut chain = LedgerChain::new(1_000);
        let people = stakeholders(n);
        for p in &people {
            chain.register_signer(p).unwrap();
        }
        (chain, people)
    }

    fn reorder(qty: &str, ts: u64) -> SupplyChainEvent {
        SupplyChainEvent::new(
            EventKind::Reorder,
            [("period", "3"), ("quantity", qty), ("validator", "s0")],
            ts,
        )
    }

    fn ids(people: &[Stakeholder]) -> BTreeSet<String> {
        people.iter().map(|p| p.id.clone()).collect()
    }

    #[test]
    fn registers_signers() {
        let (mut chain, people) = chain_with(3);
        assert_eq!(chain.registry().len(), 3);
        assert_eq!(
            chain.register_signer(&people[1]),
            Err(LedgerError::DuplicateSigner("s1".into()))
        );
        assert_eq!(chain.count_events(EventKind::FarmRegistration), 3);
        assert!(verify_chain(&chain).is_ok());
    }

    #[test]
    fn registry_survives_round_trip() {
        let (chain, _) = chain_with(3);
        let text = chain.to_jsonl();
        let back = LedgerChain::from_jsonl(&text).unwrap();
        assert_eq!(back.registry(), chain.registry());
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn propose_validates() {
        let (chain, people) = chain_with(3);
        let tx = chain
            .propose_transaction(vec![reorder("4", 1_000)], ids(&people), 2)
            .unwrap();
        assert!(tx.signatures.is_empty());
        let again = chain
            .propose_transaction(vec![reorder("4", 1_000)], ids(&people), 2)
            .unwrap();
        assert_eq!(tx.id, again.id);
        assert!(matches!(
            chain.propose_transaction(vec![reorder("0", 1_000)], ids(&people), 2),
            Err(LedgerError::MalformedEvent { .. })
        ));
        assert!(matches!(
            chain.propose_transaction(vec![reorder("1", 1_000)], ids(&people), 4),
            Err(LedgerError::InvalidThreshold { .. })
        ));
        let mut outsiders = ids(&people);
        outsiders.insert("ghost".into());
        assert_eq!(
            chain.propose_transaction(vec![reorder("1", 1_000)], outsiders, 2),
            Err(LedgerError::UnknownSigner("ghost".into()))
        );
    }

    #[test]
    fn signatures_and_tampering() {
        let (chain, people) = chain_with(3);
        let mut tx = chain
            .propose_transaction(vec![reorder("4", 1_000)], ids(&people), 2)
            .unwrap();
        chain.sign(&mut tx, &people[0]).unwrap();
        assert_eq!(tx.signatures.len(), 1);
        assert!(matches!(
            chain.sign(&mut tx, &people[0]),
            Err(LedgerError::AlreadySigned { .. })
        ));
        let outsider = Stakeholder::new("x", Role::Auditor, SigningKey::derive("x"));
        assert!(matches!(
            chain.sign(&mut tx, &outsider),
            Err(LedgerError::NotRequiredSigner { .. })
        ));
        assert_eq!(tx.valid_signers(chain.registry(), chain.scheme()).len(), 1);
        tx.events[0].payload.insert("quantity".into(), "40".into());
        assert!(tx
            .valid_signers(chain.registry(), chain.scheme())
            .is_empty());
    }

    #[test]
    fn seal_enforces_threshold() {
        let (mut chain, people) = chain_with(3);
        let mut tx = chain
            .propose_transaction(vec![reorder("4", 2_000)], ids(&people), 2)
            .unwrap();
        chain.sign(&mut tx, &people[2]).unwrap();
        let before = chain.height();
        assert!(matches!(
            chain.seal_block(vec![tx.clone()]),
            Err(LedgerError::UnderSigned {
                valid: 1,
                threshold: 2,
                ..
            })
        ));
        chain.sign(&mut tx, &people[1]).unwrap();
        assert_eq!(chain.seal_block(vec![tx]).unwrap(), before + 1);
        assert!(verify_chain(&chain).is_ok());
        assert_eq!(
            chain.monitor().last().map(|m| m.kind.clone()),
            Some(MonitorKind::Sealed)
        );
    }

    #[test]
    fn seal_rejects_tampered_and_out_of_order() {
        let (mut chain, people) = chain_with(2);
        let mut tx = chain
            .propose_transaction(vec![reorder("4", 2_000)], ids(&people), 1)
            .unwrap();
        chain.sign(&mut tx, &people[0]).unwrap();
        let mut bad = tx.clone();
        bad.events[0].payload.insert("quantity".into(), "5".into());
        assert!(matches!(
            chain.seal_block(vec![bad]),
            Err(LedgerError::Tampered(_))
        ));
        let mut late = chain
            .propose_transaction(vec![reorder("4", 10)], ids(&people), 1)
            .unwrap();
        chain.sign(&mut late, &people[0]).unwrap();
        assert_eq!(
            chain.seal_block(vec![late]),
            Err(LedgerError::TimestampOrder)
        );
        assert!(chain.seal_block(vec![]).is_err());
    }

    #[test]
    fn flipped_payload_reports_root_mismatch() {
        let (mut chain, people) = chain_with(1);
        let mut tx = chain
            .propose_transaction(vec![reorder("4", 2_000)], ids(&people), 1)
            .unwrap();
        chain.sign(&mut tx, &people[0]).unwrap();
        chain.seal_block(vec![tx]).unwrap();
        assert_eq!(chain.height(), 2);
        chain.blocks_mut()[2].transactions[0].events[0]
            .payload
            .insert("quantity".into(), "5".into());
        assert_eq!(
            verify_chain(&chain),
            VerificationReport::Violation {
                height: 2,
                reason: ViolationReason::TransactionsRootMismatch
            }
        );
    }

    #[test]
    fn removed_signature_reports_threshold() {
        let (mut chain, people) = chain_with(2);
        let mut tx = chain
            .propose_transaction(vec![reorder("4", 2_000)], ids(&people), 2)
            .unwrap();
        chain.sign(&mut tx, &people[0]).unwrap();
        chain.sign(&mut tx, &people[1]).unwrap();
        let h = chain.seal_block(vec![tx]).unwrap();
        chain.blocks_mut()[h as usize].transactions[0]
            .signatures
            .remove("s0");
        match verify_chain(&chain) {
            VerificationReport::Violation { height, reason } => {
                assert_eq!(height, h);
                assert!(matches!(reason, ViolationReason::SignatureThreshold { .. }));
            }
            ok => panic!("tamper missed: {ok:?}"),
        }
    }

    #[test]
    fn json_lines_are_canonical() {
        let (chain, _) = chain_with(1);
        let line = chain.blocks()[1].to_json_line();
        assert!(line.starts_with("{\"hash\":\""));
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(serde_json::to_string(&value).unwrap(), line);
        let hash = value["hash"].as_str().unwrap();
        assert_eq!(hash, hash.to_lowercase());
        let bad = line.replacen("\"height\":1", "\"height\":\"x\"", 1);
        assert!(matches!(
            LedgerChain::from_jsonl(&bad),
            Err(LedgerError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn reorder_contract_cases() {
        let params = ReorderParams {
            safety_stock: 10.0,
            horizon_periods: 5,
        };
        // α = 0 makes the forecast exactly ẑ/p̂
        let unit = DemandForecastState::with_estimates(0.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(
            evaluate_reorder_contract(100.0, &unit, &params).unwrap(),
            None
        );
        let two = DemandForecastState::with_estimates(0.1, 2.0, 1.0, 1).unwrap();
        let p = ReorderParams {
            safety_stock: 1.0,
            horizon_periods: 5,
        };
        let proposal = evaluate_reorder_contract(0.0, &two, &p).unwrap().unwrap();
        assert_eq!(proposal.quantity, 11);
        let ev = proposal.to_event(4, "s0", 5);
        assert!(ev.validate().is_ok());
        let bad = DemandForecastState::with_estimates(0.1, 2.0, 0.05, 1).unwrap();
        assert!(matches!(
            evaluate_reorder_contract(0.0, &bad, &p),
            Err(LedgerError::Forecast(ForecastError::Domain(_)))
        ));
    }
}
