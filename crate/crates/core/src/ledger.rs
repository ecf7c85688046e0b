//! Append-only hash-chained ledger.
//!
//! Blocks are stored as their canonical byte encoding, which is also the line
//! format of a ledger dump. Verification always works from those stored bytes,
//! so any modification of a stored block, including one that leaves it
//! unparseable, is reported by [`Ledger::verify_chain`].

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::access::{AccessDecisionBody, AccessPolicy};
use crate::canonical::{canonicalize, Canonical, CanonicalError, Value};
use crate::crypto::{digest, digest_of, digest_value, Hash256};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("stale logical time {time}: must exceed {latest}")]
    Ordering { time: u64, latest: u64 },
    #[error("invalid transaction: {0}")]
    Validation(String),
    #[error("empty transaction list: empty blocks are reserved for genesis")]
    EmptyBlock,
    #[error("ledger dump line {line}: {message}")]
    Load { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKind {
    DataRegistration,
    ConsentUpdate,
    AccessDecision,
    ModelUpdate,
    DecisionRecord,
}

impl TxKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::DataRegistration => "data_registration",
            TxKind::ConsentUpdate => "consent_update",
            TxKind::AccessDecision => "access_decision",
            TxKind::ModelUpdate => "model_update",
            TxKind::DecisionRecord => "decision_record",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "data_registration" => TxKind::DataRegistration,
            "consent_update" => TxKind::ConsentUpdate,
            "access_decision" => TxKind::AccessDecision,
            "model_update" => TxKind::ModelUpdate,
            "decision_record" => TxKind::DecisionRecord,
            _ => return None,
        })
    }

    fn parse(s: &str, path: &str) -> Result<Self, CanonicalError> {
        Self::from_name(s).ok_or_else(|| CanonicalError::invalid(path, format!("unknown kind {s:?}")))
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A sealed record registered on-chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationBody {
    pub record_id: String,
    pub institution: String,
    pub key_id: String,
    pub commitment: Hash256,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdateBody {
    pub node_id: String,
    pub round: u64,
    pub delta_hash: Hash256,
}

/// Binds a prediction and its explanation to the model and input they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecordBody {
    pub record_ref: String,
    pub input_commitment: Hash256,
    pub model_hash: Hash256,
    pub prediction_hash: Hash256,
    pub explanation_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TxBody {
    DataRegistration(RegistrationBody),
    ConsentUpdate(AccessPolicy),
    AccessDecision(AccessDecisionBody),
    ModelUpdate(ModelUpdateBody),
    DecisionRecord(DecisionRecordBody),
}

impl TxBody {
    pub fn kind(&self) -> TxKind {
        match self {
            TxBody::DataRegistration(_) => TxKind::DataRegistration,
            TxBody::ConsentUpdate(_) => TxKind::ConsentUpdate,
            TxBody::AccessDecision(_) => TxKind::AccessDecision,
            TxBody::ModelUpdate(_) => TxKind::ModelUpdate,
            TxBody::DecisionRecord(_) => TxKind::DecisionRecord,
        }
    }

    /// Whether this body refers to `record_id`. Institution-wide consent
    /// scopes do not count as a reference to any single record.
    pub fn references(&self, record_id: &str) -> bool {
        match self {
            TxBody::DataRegistration(b) => b.record_id == record_id,
            TxBody::ConsentUpdate(p) => p.scope.record_id() == Some(record_id),
            TxBody::AccessDecision(b) => b.record_id == record_id,
            TxBody::ModelUpdate(_) => false,
            TxBody::DecisionRecord(b) => b.record_ref == record_id,
        }
    }

    fn validate(&self) -> Result<(), LedgerError> {
        let nonempty = |field: &str, s: &str| {
            if s.is_empty() {
                Err(LedgerError::Validation(format!("{field} must be non-empty")))
            } else {
                Ok(())
            }
        };
        match self {
            TxBody::DataRegistration(b) => {
                nonempty("record_id", &b.record_id)?;
                nonempty("institution", &b.institution)?;
                nonempty("key_id", &b.key_id)
            }
            TxBody::ConsentUpdate(p) => p.validate().map_err(|e| LedgerError::Validation(e.to_string())),
            TxBody::AccessDecision(b) => b.validate().map_err(|e| LedgerError::Validation(e.to_string())),
            TxBody::ModelUpdate(b) => nonempty("node_id", &b.node_id),
            TxBody::DecisionRecord(b) => nonempty("record_ref", &b.record_ref),
        }
    }

    fn to_value(&self) -> Value {
        match self {
            TxBody::DataRegistration(b) => Value::map()
                .with("commitment", b.commitment.to_value())
                .with("institution", b.institution.as_str())
                .with("key_id", b.key_id.as_str())
                .with("record_id", b.record_id.as_str())
                .build(),
            TxBody::ConsentUpdate(p) => p.to_value(),
            TxBody::AccessDecision(b) => b.to_value(),
            TxBody::ModelUpdate(b) => Value::map()
                .with("delta_hash", b.delta_hash.to_value())
                .with("node_id", b.node_id.as_str())
                .with("round", b.round)
                .build(),
            TxBody::DecisionRecord(b) => Value::map()
                .with("explanation_hash", b.explanation_hash.to_value())
                .with("input_commitment", b.input_commitment.to_value())
                .with("model_hash", b.model_hash.to_value())
                .with("prediction_hash", b.prediction_hash.to_value())
                .with("record_ref", b.record_ref.as_str())
                .build(),
        }
    }

    fn from_value(kind: TxKind, v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let text = |key: &str| -> Result<String, CanonicalError> {
            Ok(v.field(path, key)?.as_text(&format!("{path}.{key}"))?.to_string())
        };
        let hash = |key: &str| Hash256::from_value(v.field(path, key)?, &format!("{path}.{key}"));
        Ok(match kind {
            TxKind::DataRegistration => TxBody::DataRegistration(RegistrationBody {
                record_id: text("record_id")?,
                institution: text("institution")?,
                key_id: text("key_id")?,
                commitment: hash("commitment")?,
            }),
            TxKind::ConsentUpdate => TxBody::ConsentUpdate(AccessPolicy::from_value(v, path)?),
            TxKind::AccessDecision => TxBody::AccessDecision(AccessDecisionBody::from_value(v, path)?),
            TxKind::ModelUpdate => TxBody::ModelUpdate(ModelUpdateBody {
                node_id: text("node_id")?,
                round: v.field(path, "round")?.as_u64(&format!("{path}.round"))?,
                delta_hash: hash("delta_hash")?,
            }),
            TxKind::DecisionRecord => TxBody::DecisionRecord(DecisionRecordBody {
                record_ref: text("record_ref")?,
                input_commitment: hash("input_commitment")?,
                model_hash: hash("model_hash")?,
                prediction_hash: hash("prediction_hash")?,
                explanation_hash: hash("explanation_hash")?,
            }),
        })
    }
}

/// One auditable event.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub tx_id: Hash256,
    pub actor: String,
    pub logical_time: u64,
    pub body: TxBody,
}

impl Transaction {
    pub fn new(actor: impl Into<String>, logical_time: u64, body: TxBody) -> Result<Self, LedgerError> {
        body.validate()?;
        let actor = actor.into();
        let tx_id = Self::compute_id(&actor, logical_time, &body)?;
        Ok(Transaction {
            tx_id,
            actor,
            logical_time,
            body,
        })
    }

    pub fn kind(&self) -> TxKind {
        self.body.kind()
    }

    fn compute_id(actor: &str, logical_time: u64, body: &TxBody) -> Result<Hash256, CanonicalError> {
        digest_value(&Self::unsigned_value(actor, logical_time, body))
    }

    fn unsigned_value(actor: &str, logical_time: u64, body: &TxBody) -> Value {
        Value::map()
            .with("actor", actor)
            .with("body", body.to_value())
            .with("kind", body.kind().as_str())
            .with("logical_time", logical_time)
            .build()
    }

    /// Recompute the id from the content and compare.
    pub fn id_is_consistent(&self) -> bool {
        Self::compute_id(&self.actor, self.logical_time, &self.body)
            .map(|id| id == self.tx_id)
            .unwrap_or(false)
    }
}

impl Canonical for Transaction {
    fn to_value(&self) -> Value {
        let mut v = Self::unsigned_value(&self.actor, self.logical_time, &self.body);
        if let Value::Map(m) = &mut v {
            m.insert("tx_id".into(), self.tx_id.to_value());
        }
        v
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let kind = TxKind::parse(v.field(path, "kind")?.as_text(path)?, &format!("{path}.kind"))?;
        Ok(Transaction {
            tx_id: Hash256::from_value(v.field(path, "tx_id")?, &format!("{path}.tx_id"))?,
            actor: v.field(path, "actor")?.as_text(path)?.to_string(),
            logical_time: v.field(path, "logical_time")?.as_u64(&format!("{path}.logical_time"))?,
            body: TxBody::from_value(kind, v.field(path, "body")?, &format!("{path}.body"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Hash256,
    pub payload_hash: Hash256,
    pub block_hash: Hash256,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn payload_hash_of(txs: &[Transaction]) -> Result<Hash256, CanonicalError> {
        digest_value(&Value::List(txs.iter().map(Canonical::to_value).collect()))
    }

    pub fn header_hash(index: u64, prev_hash: &Hash256, payload_hash: &Hash256) -> Result<Hash256, CanonicalError> {
        digest_value(
            &Value::map()
                .with("index", index)
                .with("payload_hash", payload_hash.to_value())
                .with("prev_hash", prev_hash.to_value())
                .build(),
        )
    }

    fn build(index: u64, prev_hash: Hash256, transactions: Vec<Transaction>) -> Result<Self, CanonicalError> {
        let payload_hash = Self::payload_hash_of(&transactions)?;
        let block_hash = Self::header_hash(index, &prev_hash, &payload_hash)?;
        Ok(Block {
            index,
            prev_hash,
            payload_hash,
            block_hash,
            transactions,
        })
    }

    pub fn genesis() -> Self {
        Self::build(0, Hash256::ZERO, Vec::new()).expect("genesis encodes")
    }
}

impl Canonical for Block {
    fn to_value(&self) -> Value {
        Value::map()
            .with("block_hash", self.block_hash.to_value())
            .with("index", self.index)
            .with("payload_hash", self.payload_hash.to_value())
            .with("prev_hash", self.prev_hash.to_value())
            .with(
                "transactions",
                Value::List(self.transactions.iter().map(Canonical::to_value).collect()),
            )
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let txs_path = format!("{path}.transactions");
        Ok(Block {
            index: v.field(path, "index")?.as_u64(&format!("{path}.index"))?,
            prev_hash: Hash256::from_value(v.field(path, "prev_hash")?, &format!("{path}.prev_hash"))?,
            payload_hash: Hash256::from_value(v.field(path, "payload_hash")?, &format!("{path}.payload_hash"))?,
            block_hash: Hash256::from_value(v.field(path, "block_hash")?, &format!("{path}.block_hash"))?,
            transactions: v
                .field(path, "transactions")?
                .as_list(&txs_path)?
                .iter()
                .enumerate()
                .map(|(i, t)| Transaction::from_value(t, &format!("{txs_path}[{i}]")))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Valid,
    CorruptAt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingMismatch {
    Explanation,
    Prediction,
    UnknownTx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingStatus {
    Valid,
    Mismatch(BindingMismatch),
}

/// Shared handle for the single-appender, many-reader setting.
pub type SharedLedger = Arc<RwLock<Ledger>>;

#[derive(Debug, Clone)]
pub struct Ledger {
    stored: Vec<Vec<u8>>,
    decoded: Vec<Option<Block>>,
    tx_index: HashMap<Hash256, (usize, usize)>,
    pending: Vec<Transaction>,
    tip_hash: Hash256,
    latest_time: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// A ledger holding only the genesis block.
    pub fn new() -> Self {
        let genesis = Block::genesis();
        let bytes = genesis.canonical_bytes().expect("genesis encodes").into_bytes();
        Ledger {
            stored: vec![bytes],
            tip_hash: genesis.block_hash,
            decoded: vec![Some(genesis)],
            tx_index: HashMap::new(),
            pending: Vec::new(),
            latest_time: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.tip_hash
    }

    /// Largest logical time on-chain or staged.
    pub fn latest_time(&self) -> u64 {
        self.pending
            .last()
            .map_or(self.latest_time, |t| t.logical_time.max(self.latest_time))
    }

    pub fn next_time(&self) -> u64 {
        self.latest_time() + 1
    }

    /// Append a block holding `txs`. Every transaction must carry a consistent
    /// id and a logical time later than everything already on-chain, and the
    /// list itself must be in strictly increasing time order.
    pub fn append_block(&mut self, txs: Vec<Transaction>) -> Result<Block, LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBlock);
        }
        let mut latest = self.latest_time;
        for tx in &txs {
            tx.body.validate()?;
            if !tx.id_is_consistent() {
                return Err(LedgerError::Validation(format!(
                    "tx_id {} does not match content",
                    tx.tx_id
                )));
            }
            if tx.logical_time <= latest {
                return Err(LedgerError::Ordering {
                    time: tx.logical_time,
                    latest,
                });
            }
            latest = tx.logical_time;
        }
        let index = self.stored.len();
        let block = Block::build(index as u64, self.tip_hash, txs)?;
        let bytes = block.canonical_bytes()?.into_bytes();
        for (pos, tx) in block.transactions.iter().enumerate() {
            self.tx_index.insert(tx.tx_id, (index, pos));
        }
        self.stored.push(bytes);
        self.tip_hash = block.block_hash;
        self.latest_time = latest;
        self.decoded.push(Some(block.clone()));
        Ok(block)
    }

    /// Stage a transaction at the next logical time. Staged transactions reach
    /// the chain on [`Ledger::commit`].
    pub fn stage(&mut self, actor: &str, body: TxBody) -> Result<Transaction, LedgerError> {
        let tx = Transaction::new(actor, self.next_time(), body)?;
        self.pending.push(tx.clone());
        Ok(tx)
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    /// Append all staged transactions as one block. No-op when nothing is staged.
    pub fn commit(&mut self) -> Result<Option<Block>, LedgerError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let txs = std::mem::take(&mut self.pending);
        match self.append_block(txs.clone()) {
            Ok(b) => Ok(Some(b)),
            Err(e) => {
                self.pending = txs;
                Err(e)
            }
        }
    }

    /// Decoded view of block `index`, if its stored bytes still parse.
    pub fn block(&self, index: usize) -> Option<&Block> {
        self.decoded.get(index).and_then(Option::as_ref)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.decoded.iter().flatten()
    }

    pub fn stored_block(&self, index: usize) -> Option<&[u8]> {
        self.stored.get(index).map(Vec::as_slice)
    }

    /// All decodable on-chain transactions in chain order.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks().flat_map(|b| b.transactions.iter())
    }

    pub fn transaction(&self, tx_id: &Hash256) -> Option<&Transaction> {
        let (b, t) = *self.tx_index.get(tx_id)?;
        self.block(b)?.transactions.get(t).filter(|tx| tx.tx_id == *tx_id)
    }

    /// Index of the block holding `tx_id`.
    pub fn block_of(&self, tx_id: &Hash256) -> Option<usize> {
        self.transaction(tx_id)?;
        self.tx_index.get(tx_id).map(|(b, _)| *b)
    }

    pub fn count_kind(&self, kind: TxKind) -> usize {
        self.transactions().filter(|t| t.kind() == kind).count()
    }

    /// The registration transaction for `record_id`, if any.
    pub fn registration(&self, record_id: &str) -> Option<&RegistrationBody> {
        self.transactions().find_map(|t| match &t.body {
            TxBody::DataRegistration(b) if b.record_id == record_id => Some(b),
            _ => None,
        })
    }

    /// Every transaction referencing `record_id`, in logical time order.
    pub fn audit_trail(&self, record_id: &str) -> Vec<Transaction> {
        let mut trail: Vec<Transaction> = self
            .transactions()
            .filter(|t| t.body.references(record_id))
            .cloned()
            .collect();
        trail.sort_by_key(|t| t.logical_time);
        trail
    }

    /// Check every block from its stored bytes. Returns the first bad index.
    pub fn verify_chain(&self) -> ChainStatus {
        let mut prev: Option<Block> = None;
        for (i, bytes) in self.stored.iter().enumerate() {
            let block = match Value::parse_canonical::<Block>(bytes) {
                Ok(b) => b,
                Err(_) => return ChainStatus::CorruptAt(i),
            };
            if !block_is_sound(&block, i, prev.as_ref()) {
                return ChainStatus::CorruptAt(i);
            }
            prev = Some(block);
        }
        ChainStatus::Valid
    }

    /// Check that a decision record's stored hashes match `explanation` and
    /// `prediction`.
    pub fn verify_decision_binding<E: Canonical, P: Canonical>(
        &self,
        decision_tx_id: &Hash256,
        explanation: &E,
        prediction: &P,
    ) -> BindingStatus {
        let Some(TxBody::DecisionRecord(rec)) = self.transaction(decision_tx_id).map(|t| &t.body) else {
            return BindingStatus::Mismatch(BindingMismatch::UnknownTx);
        };
        if digest_of(explanation).ok() != Some(rec.explanation_hash) {
            return BindingStatus::Mismatch(BindingMismatch::Explanation);
        }
        if digest_of(prediction).ok() != Some(rec.prediction_hash) {
            return BindingStatus::Mismatch(BindingMismatch::Prediction);
        }
        BindingStatus::Valid
    }

    /// Line-delimited dump, one canonical block per line, genesis first.
    pub fn dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in &self.stored {
            out.extend_from_slice(b);
            out.push(b'\n');
        }
        out
    }

    /// Load a dump. Lines that no longer decode are kept verbatim so that
    /// [`Ledger::verify_chain`] can report them.
    pub fn load(dump: &[u8]) -> Result<Self, LedgerError> {
        let body = dump.strip_suffix(b"\n").ok_or(LedgerError::Load {
            line: 0,
            message: "dump must end with a newline".into(),
        })?;
        let stored: Vec<Vec<u8>> = body.split(|b| *b == b'\n').map(<[u8]>::to_vec).collect();
        Ok(Self::from_stored(stored))
    }

    /// Rebuild a ledger from raw stored blocks, without verifying them.
    pub fn from_stored(stored: Vec<Vec<u8>>) -> Self {
        let mut ledger = Ledger {
            decoded: Vec::with_capacity(stored.len()),
            stored,
            tx_index: HashMap::new(),
            pending: Vec::new(),
            tip_hash: Hash256::ZERO,
            latest_time: 0,
        };
        ledger.redecode();
        ledger
    }

    pub fn into_stored(self) -> Vec<Vec<u8>> {
        self.stored
    }

    /// XOR `mask` into one byte of a stored block. The chain hashes are not
    /// recomputed. Returns false when the location does not exist.
    pub fn flip_stored_byte(&mut self, index: usize, offset: usize, mask: u8) -> bool {
        let Some(byte) = self.stored.get_mut(index).and_then(|b| b.get_mut(offset)) else {
            return false;
        };
        *byte ^= mask;
        self.redecode();
        true
    }

    fn redecode(&mut self) {
        self.decoded = self
            .stored
            .iter()
            .map(|b| Value::parse_canonical::<Block>(b).ok())
            .collect();
        self.tx_index.clear();
        self.latest_time = 0;
        for (bi, block) in self.decoded.iter().enumerate() {
            if let Some(block) = block {
                for (ti, tx) in block.transactions.iter().enumerate() {
                    self.tx_index.insert(tx.tx_id, (bi, ti));
                    self.latest_time = self.latest_time.max(tx.logical_time);
                }
            }
        }
        self.tip_hash = self
            .decoded
            .last()
            .and_then(|b| b.as_ref())
            .map_or_else(|| digest(self.stored.last().map_or(&[][..], |v| v)), |b| b.block_hash);
    }

    /// Re-append every decodable non-genesis block's transactions to a fresh
    /// ledger.
    pub fn replay(&self) -> Result<Ledger, LedgerError> {
        let mut fresh = Ledger::new();
        for block in self.blocks().skip(1) {
            fresh.append_block(block.transactions.clone())?;
        }
        Ok(fresh)
    }
}

fn block_is_sound(block: &Block, index: usize, prev: Option<&Block>) -> bool {
    if block.index != index as u64 {
        return false;
    }
    match prev {
        None => {
            if block.prev_hash != Hash256::ZERO || !block.transactions.is_empty() {
                return false;
            }
        }
        Some(p) => {
            if block.prev_hash != p.block_hash || block.transactions.is_empty() {
                return false;
            }
            let mut last = p.transactions.last().map_or(0, |t| t.logical_time);
            // Earlier blocks may be empty only at genesis, so the previous
            // block's last tx carries the latest time so far.
            for tx in &block.transactions {
                if tx.logical_time <= last || !tx.id_is_consistent() {
                    return false;
                }
                last = tx.logical_time;
            }
        }
    }
    let Ok(payload) = Block::payload_hash_of(&block.transactions) else {
        return false;
    };
    if payload != block.payload_hash {
        return false;
    }
    Block::header_hash(block.index, &block.prev_hash, &block.payload_hash)
        .map(|h| h == block.block_hash)
        .unwrap_or(false)
}

/// Canonical bytes of a list of transactions, as hashed into a block.
pub fn payload_bytes(txs: &[Transaction]) -> Result<Vec<u8>, CanonicalError> {
    Ok(canonicalize(&Value::List(txs.iter().map(Canonical::to_value).collect()))?.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::digest;

    fn reg(record: &str) -> TxBody {
        TxBody::DataRegistration(RegistrationBody {
            record_id: record.into(),
            institution: "hosp-a".into(),
            key_id: "key-a".into(),
            commitment: digest(record.as_bytes()),
        })
    }

    fn ledger_with(n: usize) -> Ledger {
        let mut l = Ledger::new();
        for i in 1..n {
            l.stage("hosp-a", reg(&format!("r{i}"))).unwrap();
            l.stage("hosp-a", reg(&format!("r{i}-b"))).unwrap();
            l.commit().unwrap();
        }
        l
    }

    #[test]
    fn genesis_shape() {
        let l = Ledger::new();
        let g = l.block(0).unwrap();
        assert_eq!(g.index, 0);
        assert_eq!(g.prev_hash.to_hex(), "0".repeat(64));
        assert!(g.transactions.is_empty());
        assert_eq!(l.verify_chain(), ChainStatus::Valid);
    }

    #[test]
    fn first_append_links_to_genesis() {
        let mut l = Ledger::new();
        let genesis = l.tip_hash();
        let tx = Transaction::new("hosp-a", 1, reg("r1")).unwrap();
        let b = l.append_block(vec![tx]).unwrap();
        assert_eq!(b.index, 1);
        assert_eq!(b.prev_hash, genesis);
    }

    #[test]
    fn empty_append_rejected() {
        let mut l = Ledger::new();
        assert_eq!(l.append_block(vec![]), Err(LedgerError::EmptyBlock));
    }

    #[test]
    fn stale_time_rejected() {
        let mut l = Ledger::new();
        l.append_block(vec![Transaction::new("a", 5, reg("r1")).unwrap()])
            .unwrap();
        let err = l.append_block(vec![Transaction::new("a", 5, reg("r2")).unwrap()]);
        assert_eq!(err, Err(LedgerError::Ordering { time: 5, latest: 5 }));
    }

    #[test]
    fn same_txs_different_times_differ() {
        // Hand-chain the expected hashes with the raw digest.
        let mut l = Ledger::new();
        let t1 = Transaction::new("a", 1, reg("r1")).unwrap();
        let t2 = Transaction::new("a", 2, reg("r1")).unwrap();
        assert_ne!(t1.tx_id, t2.tx_id);
        let b1 = l.append_block(vec![t1.clone()]).unwrap();
        let b2 = l.append_block(vec![t2.clone()]).unwrap();
        assert_ne!(b1.block_hash, b2.block_hash);

        let payload = |t: &Transaction| digest(&payload_bytes(std::slice::from_ref(t)).unwrap());
        let header = |i: u64, prev: Hash256, payload: Hash256| {
            let text = format!(
                r#"{{"index":{i},"payload_hash":"{}","prev_hash":"{}"}}"#,
                payload.to_hex(),
                prev.to_hex()
            );
            digest(text.as_bytes())
        };
        let genesis = header(0, Hash256::ZERO, digest(b"[]"));
        assert_eq!(l.block(0).unwrap().block_hash, genesis);
        let h1 = header(1, genesis, payload(&t1));
        let h2 = header(2, h1, payload(&t2));
        assert_eq!(b1.block_hash, h1);
        assert_eq!(b2.block_hash, h2);
    }

    #[test]
    fn byte_flip_in_block_four() {
        let mut l = ledger_with(10);
        assert_eq!(l.verify_chain(), ChainStatus::Valid);
        let len = l.stored_block(4).unwrap().len();
        assert!(l.flip_stored_byte(4, len / 2, 0x01));
        assert_eq!(l.verify_chain(), ChainStatus::CorruptAt(4));
    }

    #[test]
    fn splice_out_block_five() {
        let l = ledger_with(10);
        let mut stored = l.into_stored();
        stored.remove(5);
        assert_eq!(Ledger::from_stored(stored).verify_chain(), ChainStatus::CorruptAt(5));
    }

    #[test]
    fn audit_trail_filters_and_orders() {
        let l = ledger_with(4);
        let trail = l.audit_trail("r2");
        assert_eq!(trail.len(), 1);
        assert!(l.audit_trail("nope").is_empty());
    }

    #[test]
    fn dump_load_round_trip_and_replay() {
        let l = ledger_with(6);
        let dump = l.dump();
        let loaded = Ledger::load(&dump).unwrap();
        assert_eq!(loaded.dump(), dump);
        assert_eq!(loaded.verify_chain(), ChainStatus::Valid);
        assert_eq!(loaded.replay().unwrap().tip_hash(), l.tip_hash());
    }

    #[test]
    fn commit_failure_keeps_staged() {
        let mut l = Ledger::new();
        l.stage("a", reg("r1")).unwrap();
        l.append_block(vec![Transaction::new("a", 9, reg("r0")).unwrap()])
            .unwrap();
        assert!(l.commit().is_err());
        assert_eq!(l.pending().len(), 1);
    }
}
