//! Consent policies and the authorization predicate.
//!
//! Evaluation is default-deny. When no policy grants access, the reported
//! reason is the nearest miss among the policies that matched user and scope,
//! with precedence `purpose_mismatch > expired > revoked > no_policy`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::canonical::{Canonical, CanonicalError, Value};
use crate::crypto::{CryptoError, Hash256, KeyTable};
use crate::ledger::{Ledger, LedgerError, Transaction, TxBody};
use crate::records::{PatientRecord, RecordVault};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccessError {
    #[error("policy {policy_id}: valid_from {from} is after valid_until {until}")]
    InvalidInterval { policy_id: String, from: u64, until: u64 },
    #[error("policy has empty {0}")]
    EmptyField(&'static str),
    #[error("decision outcome {outcome} is inconsistent with reason {reason}")]
    InconsistentDecision { outcome: Outcome, reason: Reason },
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("integrity alarm on record {record_id:?}: {detail}")]
    IntegrityAlarm {
        record_id: String,
        decision_tx: Hash256,
        detail: String,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Purpose {
    Treatment,
    Research,
    Audit,
}

impl Purpose {
    pub const ALL: [Purpose; 3] = [Purpose::Treatment, Purpose::Research, Purpose::Audit];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Treatment => "treatment",
            Purpose::Research => "research",
            Purpose::Audit => "audit",
        }
    }

    pub fn parse(s: &str) -> Option<Purpose> {
        Purpose::ALL.into_iter().find(|p| p.as_str() == s)
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let s = v.as_text(path)?;
        Purpose::parse(s).ok_or_else(|| CanonicalError::invalid(path, format!("unknown purpose {s:?}")))
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which records a policy covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RecordScope {
    Record(String),
    /// Every record held by the institution.
    Institution(String),
}

impl RecordScope {
    pub fn record_id(&self) -> Option<&str> {
        match self {
            RecordScope::Record(r) => Some(r),
            RecordScope::Institution(_) => None,
        }
    }

    pub fn covers(&self, record_id: &str, institution: &str) -> bool {
        match self {
            RecordScope::Record(r) => r == record_id,
            RecordScope::Institution(i) => i == institution,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            RecordScope::Record(r) => Value::map().with("record", r.as_str()).build(),
            RecordScope::Institution(i) => Value::map().with("institution", i.as_str()).build(),
        }
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let m = v.as_map(path)?;
        match (m.get("record"), m.get("institution"), m.len()) {
            (Some(r), None, 1) => Ok(RecordScope::Record(r.as_text(path)?.to_string())),
            (None, Some(i), 1) => Ok(RecordScope::Institution(i.as_text(path)?.to_string())),
            _ => Err(CanonicalError::invalid(path, "scope must be {record} or {institution}")),
        }
    }
}

/// One consent tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessPolicy {
    pub policy_id: String,
    pub user_id: String,
    pub scope: RecordScope,
    pub purpose: Purpose,
    pub valid_from: u64,
    pub valid_until: u64,
    pub granted: bool,
}

impl AccessPolicy {
    pub fn validate(&self) -> Result<(), AccessError> {
        if self.policy_id.is_empty() {
            return Err(AccessError::EmptyField("policy_id"));
        }
        if self.user_id.is_empty() {
            return Err(AccessError::EmptyField("user_id"));
        }
        if self.valid_from > self.valid_until {
            return Err(AccessError::InvalidInterval {
                policy_id: self.policy_id.clone(),
                from: self.valid_from,
                until: self.valid_until,
            });
        }
        Ok(())
    }

    /// Same policy with `granted = false`.
    pub fn revoked(&self) -> Self {
        AccessPolicy {
            granted: false,
            ..self.clone()
        }
    }

    pub fn is_active_at(&self, now: u64) -> bool {
        (self.valid_from..=self.valid_until).contains(&now)
    }
}

impl Canonical for AccessPolicy {
    fn to_value(&self) -> Value {
        Value::map()
            .with("granted", self.granted)
            .with("policy_id", self.policy_id.as_str())
            .with("purpose", self.purpose.as_str())
            .with("record_scope", self.scope.to_value())
            .with("user_id", self.user_id.as_str())
            .with("valid_from", self.valid_from)
            .with("valid_until", self.valid_until)
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let p = |k: &str| format!("{path}.{k}");
        let policy = AccessPolicy {
            policy_id: v.field(path, "policy_id")?.as_text(&p("policy_id"))?.to_string(),
            user_id: v.field(path, "user_id")?.as_text(&p("user_id"))?.to_string(),
            scope: RecordScope::from_value(v.field(path, "record_scope")?, &p("record_scope"))?,
            purpose: Purpose::from_value(v.field(path, "purpose")?, &p("purpose"))?,
            valid_from: v.field(path, "valid_from")?.as_u64(&p("valid_from"))?,
            valid_until: v.field(path, "valid_until")?.as_u64(&p("valid_until"))?,
            granted: v.field(path, "granted")?.as_bool(&p("granted"))?,
        };
        policy
            .validate()
            .map_err(|e| CanonicalError::invalid(path, e.to_string()))?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Permit,
    Deny,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Permit => "permit",
            Outcome::Deny => "deny",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a decision came out the way it did. Variant order is precedence,
/// lowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    NoPolicy,
    Revoked,
    Expired,
    PurposeMismatch,
    Granted,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::NoPolicy => "no_policy",
            Reason::Revoked => "revoked",
            Reason::Expired => "expired",
            Reason::PurposeMismatch => "purpose_mismatch",
            Reason::Granted => "granted",
        }
    }

    fn parse(s: &str) -> Option<Reason> {
        [
            Reason::NoPolicy,
            Reason::Revoked,
            Reason::Expired,
            Reason::PurposeMismatch,
            Reason::Granted,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of evaluating φ: `permitted` is φ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhiDecision {
    pub permitted: bool,
    pub reason: Reason,
}

impl PhiDecision {
    pub fn value(&self) -> u8 {
        u8::from(self.permitted)
    }

    pub fn outcome(&self) -> Outcome {
        if self.permitted {
            Outcome::Permit
        } else {
            Outcome::Deny
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessDecisionBody {
    pub user_id: String,
    pub record_id: String,
    pub purpose: Purpose,
    pub outcome: Outcome,
    pub reason: Reason,
    /// Logical time at which the policies were evaluated.
    pub evaluated_at: u64,
}

impl AccessDecisionBody {
    pub fn validate(&self) -> Result<(), AccessError> {
        if (self.outcome == Outcome::Permit) != (self.reason == Reason::Granted) {
            return Err(AccessError::InconsistentDecision {
                outcome: self.outcome,
                reason: self.reason,
            });
        }
        Ok(())
    }
}

impl Canonical for AccessDecisionBody {
    fn to_value(&self) -> Value {
        Value::map()
            .with("evaluated_at", self.evaluated_at)
            .with("outcome", self.outcome.as_str())
            .with("purpose", self.purpose.as_str())
            .with("reason", self.reason.as_str())
            .with("record_id", self.record_id.as_str())
            .with("user_id", self.user_id.as_str())
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let p = |k: &str| format!("{path}.{k}");
        let outcome = match v.field(path, "outcome")?.as_text(&p("outcome"))? {
            "permit" => Outcome::Permit,
            "deny" => Outcome::Deny,
            other => {
                return Err(CanonicalError::invalid(
                    p("outcome"),
                    format!("unknown outcome {other:?}"),
                ))
            }
        };
        let reason_text = v.field(path, "reason")?.as_text(&p("reason"))?;
        let reason = Reason::parse(reason_text)
            .ok_or_else(|| CanonicalError::invalid(p("reason"), format!("unknown reason {reason_text:?}")))?;
        let body = AccessDecisionBody {
            user_id: v.field(path, "user_id")?.as_text(&p("user_id"))?.to_string(),
            record_id: v.field(path, "record_id")?.as_text(&p("record_id"))?.to_string(),
            purpose: Purpose::from_value(v.field(path, "purpose")?, &p("purpose"))?,
            outcome,
            reason,
            evaluated_at: v.field(path, "evaluated_at")?.as_u64(&p("evaluated_at"))?,
        };
        body.validate()
            .map_err(|e| CanonicalError::invalid(path, e.to_string()))?;
        Ok(body)
    }
}

/// Evaluate φ(user, record) for a purpose at logical time `now`.
pub fn evaluate_phi<'a>(
    policies: impl IntoIterator<Item = &'a AccessPolicy>,
    user_id: &str,
    record_id: &str,
    institution: &str,
    purpose: Purpose,
    now: u64,
) -> PhiDecision {
    let mut nearest = Reason::NoPolicy;
    for policy in policies {
        if policy.user_id != user_id || !policy.scope.covers(record_id, institution) {
            continue;
        }
        let miss = if policy.purpose != purpose {
            Reason::PurposeMismatch
        } else if !policy.is_active_at(now) {
            Reason::Expired
        } else if !policy.granted {
            Reason::Revoked
        } else {
            return PhiDecision {
                permitted: true,
                reason: Reason::Granted,
            };
        };
        nearest = nearest.max(miss);
    }
    PhiDecision {
        permitted: false,
        reason: nearest,
    }
}

/// Current consent state: the latest version of each policy id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsentRegistry {
    policies: BTreeMap<String, AccessPolicy>,
}

impl ConsentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild consent state by replaying ConsentUpdate transactions.
    pub fn from_ledger(ledger: &Ledger) -> Self {
        let mut reg = Self::new();
        for tx in ledger.transactions() {
            if let TxBody::ConsentUpdate(p) = &tx.body {
                reg.apply(p.clone());
            }
        }
        reg
    }

    pub fn apply(&mut self, policy: AccessPolicy) {
        self.policies.insert(policy.policy_id.clone(), policy);
    }

    pub fn get(&self, policy_id: &str) -> Option<&AccessPolicy> {
        self.policies.get(policy_id)
    }

    pub fn policies(&self) -> impl Iterator<Item = &AccessPolicy> {
        self.policies.values()
    }

    pub fn evaluate(
        &self,
        user_id: &str,
        record_id: &str,
        institution: &str,
        purpose: Purpose,
        now: u64,
    ) -> PhiDecision {
        evaluate_phi(self.policies(), user_id, record_id, institution, purpose, now)
    }
}

impl Canonical for ConsentRegistry {
    fn to_value(&self) -> Value {
        Value::List(self.policies.values().map(Canonical::to_value).collect())
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let mut reg = ConsentRegistry::new();
        for (i, p) in v.as_list(path)?.iter().enumerate() {
            reg.apply(AccessPolicy::from_value(p, &format!("{path}[{i}]"))?);
        }
        Ok(reg)
    }
}

/// Record a consent change: stages a ConsentUpdate transaction and applies the
/// policy to the registry (latest version per policy id wins).
pub fn update_consent(
    ledger: &mut Ledger,
    registry: &mut ConsentRegistry,
    actor: &str,
    policy: AccessPolicy,
) -> Result<Transaction, AccessError> {
    policy.validate()?;
    let tx = ledger.stage(actor, TxBody::ConsentUpdate(policy.clone()))?;
    registry.apply(policy);
    Ok(tx)
}

/// A clinician's request to read one record for one purpose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessRequest {
    pub user_id: String,
    pub record_id: String,
    pub purpose: Purpose,
}

impl AccessRequest {
    pub fn new(user_id: &str, record_id: &str, purpose: Purpose) -> Self {
        AccessRequest {
            user_id: user_id.to_string(),
            record_id: record_id.to_string(),
            purpose,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FetchOutcome {
    Released {
        record: PatientRecord,
        decision_tx: Transaction,
    },
    Denied {
        reason: Reason,
        decision_tx: Transaction,
    },
}

impl FetchOutcome {
    pub fn decision_tx(&self) -> &Transaction {
        match self {
            FetchOutcome::Released { decision_tx, .. } | FetchOutcome::Denied { decision_tx, .. } => decision_tx,
        }
    }
}

/// Consent-gated read of a sealed record. Every call on a known record stages
/// exactly one AccessDecision transaction, whether it permits or denies.
pub fn gated_fetch(
    ledger: &mut Ledger,
    registry: &ConsentRegistry,
    vault: &RecordVault,
    keys: &KeyTable,
    request: &AccessRequest,
    now: u64,
) -> Result<FetchOutcome, AccessError> {
    let AccessRequest {
        user_id,
        record_id,
        purpose,
    } = request;
    let purpose = *purpose;
    let sealed = vault
        .get(record_id)
        .ok_or_else(|| AccessError::UnknownRecord(record_id.to_string()))?;
    let onchain = ledger.registration(record_id).map(|r| r.commitment);
    let decision = registry.evaluate(user_id, record_id, &sealed.institution, purpose, now);
    let decision_tx = ledger.stage(
        user_id,
        TxBody::AccessDecision(AccessDecisionBody {
            user_id: user_id.to_string(),
            record_id: record_id.to_string(),
            purpose,
            outcome: decision.outcome(),
            reason: decision.reason,
            evaluated_at: now,
        }),
    )?;
    if !decision.permitted {
        return Ok(FetchOutcome::Denied {
            reason: decision.reason,
            decision_tx,
        });
    }
    let alarm = |detail: String| AccessError::IntegrityAlarm {
        record_id: record_id.to_string(),
        decision_tx: decision_tx.tx_id,
        detail,
    };
    let commitment = onchain.ok_or_else(|| alarm("no registration on-chain".into()))?;
    let record = sealed
        .open(keys, &commitment)
        .map_err(|e: CryptoError| alarm(e.to_string()))?;
    Ok(FetchOutcome::Released { record, decision_tx })
}
